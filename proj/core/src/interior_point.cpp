#include "storegame/interior_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace sg::ipm {

int SparseRows::add_row(std::initializer_list<std::pair<int, double>> entries) {
  return add_row(std::vector<std::pair<int, double>>(entries));
}

int SparseRows::add_row(const std::vector<std::pair<int, double>>& entries) {
  auto sorted = entries;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& [c, v] : sorted) {
    col_.push_back(c);
    val_.push_back(v);
  }
  start_.push_back(static_cast<int>(col_.size()));
  return rows() - 1;
}

void SparseRows::multiply(const double* x, double* y) const noexcept {
  const int* cols = col_.data();
  const double* vals = val_.data();
  const int nr = rows();
  for (int r = 0; r < nr; ++r) {
    double acc = 0.0;
    for (int i = start_[static_cast<std::size_t>(r)]; i < start_[static_cast<std::size_t>(r) + 1]; ++i)
      acc += vals[i] * x[cols[i]];
    y[r] = acc;
  }
}

void SparseRows::multiply_transpose_add(const double* x, double* y) const noexcept {
  const int* cols = col_.data();
  const double* vals = val_.data();
  const int nr = rows();
  for (int r = 0; r < nr; ++r) {
    const double xr = x[r];
    for (int i = start_[static_cast<std::size_t>(r)]; i < start_[static_cast<std::size_t>(r) + 1]; ++i)
      y[cols[i]] += vals[i] * xr;
  }
}

BandCholesky::BandCholesky(int n, int bandwidth)
    : n_(n), bw_(bandwidth), data_(static_cast<std::size_t>(n) * (bandwidth + 1), 0.0) {}

void BandCholesky::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

int BandCholesky::factor() noexcept {
  int replaced = 0;
  const int w = bw_ + 1;
  double* d = data_.data();
  for (int i = 0; i < n_; ++i) {
    double* li = d + static_cast<std::ptrdiff_t>(i) * w + bw_ - i;  // li[j] is L(i, j)
    const int j0 = std::max(0, i - bw_);
    for (int j = j0; j <= i; ++j) {
      const double* lj = d + static_cast<std::ptrdiff_t>(j) * w + bw_ - j;
      double s = li[j];
      for (int k = j0; k < j; ++k) s -= li[k] * lj[k];
      if (i == j) {
        if (!(s > 1e-300)) {
          s = 1e128;
          ++replaced;
        }
        li[i] = std::sqrt(s);
      } else {
        li[j] = s / lj[j];
      }
    }
  }
  return replaced;
}

void BandCholesky::solve_in_place(double* x) const noexcept {
  const int w = bw_ + 1;
  const double* d = data_.data();
  for (int i = 0; i < n_; ++i) {
    const double* li = d + static_cast<std::ptrdiff_t>(i) * w + bw_ - i;
    double s = x[i];
    for (int k = std::max(0, i - bw_); k < i; ++k) s -= li[k] * x[k];
    x[i] = s / li[i];
  }
  for (int i = n_ - 1; i >= 0; --i) {
    double s = x[i];
    const int kmax = std::min(n_ - 1, i + bw_);
    for (int k = i + 1; k <= kmax; ++k) s -= d[static_cast<std::ptrdiff_t>(k) * w + bw_ - k + i] * x[k];
    x[i] = s / d[static_cast<std::ptrdiff_t>(i) * w + bw_];
  }
}

Structure::Structure(Problem problem) : p_(std::move(problem)) {
  for (const auto& e : p_.hessian) bw_ = std::max(bw_, std::abs(e.row - e.col));
  const auto& A = p_.A;
  for (int r = 0; r < A.rows(); ++r)
    if (A.end(r) > A.begin(r)) bw_ = std::max(bw_, A.col(A.end(r) - 1) - A.col(A.begin(r)));

  BandCholesky layout(p_.n, bw_);
  hessian_band_.assign(layout.storage_size(), 0.0);
  std::map<std::pair<int, int>, double> merged;
  for (const auto& e : p_.hessian) {
    const int i = std::max(e.row, e.col);
    const int j = std::min(e.row, e.col);
    hessian_band_[layout.offset(i, j)] += e.value;
    merged[{i, j}] += e.value;
  }
  for (const auto& [ij, v] : merged)
    if (v != 0.0) merged_.push_back({ij.first, ij.second, v});

  pair_start_.push_back(0);
  for (int r = 0; r < A.rows(); ++r) {
    for (int a = A.begin(r); a < A.end(r); ++a)
      for (int b = A.begin(r); b <= a; ++b) {
        pair_offset_.push_back(layout.offset(A.col(a), A.col(b)));
        pair_coef_.push_back(A.val(a) * A.val(b));
      }
    pair_start_.push_back(static_cast<int>(pair_offset_.size()));
  }
}

void Structure::form_normal(const double* w, BandCholesky& chol) const noexcept {
  double* d = chol.data();
  std::copy(hessian_band_.begin(), hessian_band_.end(), d);
  const int nr = p_.A.rows();
  const std::size_t* off = pair_offset_.data();
  const double* coef = pair_coef_.data();
  for (int r = 0; r < nr; ++r) {
    const double wr = w[r];
    for (int i = pair_start_[static_cast<std::size_t>(r)]; i < pair_start_[static_cast<std::size_t>(r) + 1]; ++i)
      d[off[i]] += wr * coef[i];
  }
}

namespace {

// Largest alpha in (0, 1] keeping v + alpha dv >= 0.
double max_step(const std::vector<double>& v, const std::vector<double>& dv) {
  double alpha = 1.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

double inf_norm(const std::vector<double>& v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Result Structure::solve(const Eigen::VectorXd& cvec, const Settings& settings) const {
  const int n = p_.n;
  const int m = p_.A.rows();
  const auto un = static_cast<std::size_t>(n);
  const auto um = static_cast<std::size_t>(m);
  const auto& A = p_.A;
  const double* c = cvec.data();
  const double* b = p_.b.data();

  BandCholesky chol(n, bw_);
  double bnorm = 1.0;
  for (int i = 0; i < m; ++i) bnorm = std::max(bnorm, 1.0 + std::abs(b[i]));
  double cnorm = 1.0;
  for (int i = 0; i < n; ++i) cnorm = std::max(cnorm, 1.0 + std::abs(c[i]));

  std::vector<double> z(un), s(um), lam(um, 1.0), w(um, 1.0);
  std::vector<double> rd(un), rp(um), rc(um), tmp_m(um);
  std::vector<double> dz(un), ds(um), dl(um), dz_aff(un), ds_aff(um), dl_aff(um);

  // Start from the minimizer of the objective plus a unit penalty on Az - b.
  form_normal(w.data(), chol);
  chol.factor();
  for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = -c[i];
  A.multiply_transpose_add(b, z.data());
  chol.solve_in_place(z.data());
  A.multiply(z.data(), tmp_m.data());
  const double floor = 1e-2 * bnorm;
  for (std::size_t i = 0; i < um; ++i) s[i] = std::max(b[i] - tmp_m[i], floor);

  auto residuals = [&] {
    for (std::size_t i = 0; i < un; ++i) rd[i] = c[i];
    for (const auto& e : merged_) {
      rd[static_cast<std::size_t>(e.row)] += e.value * z[static_cast<std::size_t>(e.col)];
      if (e.row != e.col) rd[static_cast<std::size_t>(e.col)] += e.value * z[static_cast<std::size_t>(e.row)];
    }
    A.multiply_transpose_add(lam.data(), rd.data());
    A.multiply(z.data(), rp.data());
    for (std::size_t i = 0; i < um; ++i) rp[i] += s[i] - b[i];
  };

  // Newton direction for the complementarity target rc = lambda o ds + s o dlambda.
  auto direction = [&](std::vector<double>& dzv, std::vector<double>& dsv, std::vector<double>& dlv) {
    for (std::size_t i = 0; i < um; ++i) tmp_m[i] = (rc[i] + lam[i] * rp[i]) / s[i];
    for (std::size_t i = 0; i < un; ++i) dzv[i] = -rd[i];
    for (std::size_t i = 0; i < um; ++i) tmp_m[i] = -tmp_m[i];
    A.multiply_transpose_add(tmp_m.data(), dzv.data());
    chol.solve_in_place(dzv.data());
    A.multiply(dzv.data(), dsv.data());
    for (std::size_t i = 0; i < um; ++i) {
      dsv[i] = -rp[i] - dsv[i];
      dlv[i] = (rc[i] - lam[i] * dsv[i]) / s[i];
    }
  };

  // Near the solution the normal equations lose accuracy and iterates can drift; keep the best.
  double best_score = std::numeric_limits<double>::infinity();
  int best_iter = -1;
  Result best;
  auto keep = [&](int it, double rpn, double rdn, double mu) {
    best_iter = it;
    best.z = to_eigen(z);
    best.slack = to_eigen(s);
    best.multipliers = to_eigen(lam);
    best.primal_residual = rpn;
    best.dual_residual = rdn;
    best.gap = mu;
    best.iterations = it;
  };

  int it = 0;
  for (;; ++it) {
    residuals();
    const double rpn = m > 0 ? inf_norm(rp) / bnorm : 0.0;
    const double rdn = inf_norm(rd) / cnorm;
    double mu = 0.0;
    for (std::size_t i = 0; i < um; ++i) mu += s[i] * lam[i];
    if (m > 0) mu /= m;
    if (!std::isfinite(rpn) || !std::isfinite(rdn) || !std::isfinite(mu)) break;
    const double sc =
        std::max({rpn / settings.primal_tol, rdn / settings.dual_tol, mu / settings.gap_tol});
    if (sc < best_score) {
      best_score = sc;
      keep(it, rpn, rdn, mu);
    }
    if (sc <= 1.0) {
      best.status = Status::converged;
      return best;
    }
    // The score can rise for a while as a poorly centred start moves towards feasibility.
    if (it >= settings.max_iterations || it - best_iter > 25) break;

    for (std::size_t i = 0; i < um; ++i) w[i] = lam[i] / s[i];
    form_normal(w.data(), chol);
    chol.factor();

    // Predictor.
    for (std::size_t i = 0; i < um; ++i) rc[i] = -s[i] * lam[i];
    direction(dz_aff, ds_aff, dl_aff);
    const double a_aff = std::min(max_step(s, ds_aff), max_step(lam, dl_aff));
    double mu_aff = 0.0;
    for (std::size_t i = 0; i < um; ++i) mu_aff += (s[i] + a_aff * ds_aff[i]) * (lam[i] + a_aff * dl_aff[i]);
    mu_aff /= std::max(1, m);
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    // Corrector.
    for (std::size_t i = 0; i < um; ++i) rc[i] = -s[i] * lam[i] - ds_aff[i] * dl_aff[i] + sigma * mu;
    direction(dz, ds, dl);
    double alpha = std::min(max_step(s, ds), max_step(lam, dl));
    alpha = std::min(1.0, settings.step_fraction * alpha);
    if (!(alpha > 1e-14)) break;
    for (std::size_t i = 0; i < un; ++i) z[i] += alpha * dz[i];
    for (std::size_t i = 0; i < um; ++i) {
      s[i] += alpha * ds[i];
      lam[i] += alpha * dl[i];
    }
  }

  if (best_iter < 0) {
    best.z = to_eigen(z);
    best.slack = to_eigen(s);
    best.multipliers = to_eigen(lam);
    best.iterations = it;
    best.status = Status::numerical_error;
    return best;
  }
  best.status = it >= settings.max_iterations ? Status::max_iterations : Status::numerical_error;
  return best;
}

Result Structure::solve_active(const Eigen::VectorXd& cvec, std::vector<char>& active,
                               const Eigen::VectorXd& lambda0, const Settings& settings,
                               int max_changes) const {
  const int n = p_.n;
  const int m = p_.A.rows();
  const auto un = static_cast<std::size_t>(n);
  const auto um = static_cast<std::size_t>(m);
  const auto& A = p_.A;
  const double* c = cvec.data();
  const double* b = p_.b.data();
  constexpr double rho = 1e4;

  double bnorm = 1.0;
  for (int i = 0; i < m; ++i) bnorm = std::max(bnorm, 1.0 + std::abs(b[i]));
  double cnorm = 1.0;
  for (int i = 0; i < n; ++i) cnorm = std::max(cnorm, 1.0 + std::abs(c[i]));

  Result res;
  res.status = Status::numerical_error;
  if (active.size() != um) return res;

  BandCholesky chol(n, bw_);
  std::vector<double> z(un, 0.0), lam(um, 0.0), w(um), rhs(un), r(un), dz(un), az(um), t(um);
  for (std::size_t i = 0; i < um; ++i)
    lam[i] = active[i] && static_cast<Eigen::Index>(i) < lambda0.size() ? lambda0(static_cast<Eigen::Index>(i)) : 0.0;

  // y = (G + A' diag(w) A) x
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (const auto& e : merged_) {
      y[static_cast<std::size_t>(e.row)] += e.value * x[static_cast<std::size_t>(e.col)];
      if (e.row != e.col) y[static_cast<std::size_t>(e.col)] += e.value * x[static_cast<std::size_t>(e.row)];
    }
    A.multiply(x.data(), t.data());
    for (std::size_t i = 0; i < um; ++i) t[i] *= w[i];
    A.multiply_transpose_add(t.data(), y.data());
  };

  for (int round = 0; round <= max_changes; ++round) {
    for (std::size_t i = 0; i < um; ++i) w[i] = active[i] ? rho : 0.0;
    form_normal(w.data(), chol);
    if (chol.factor() > 0) return res;

    // Method of multipliers; each linear solve is refined against the unfactored operator.
    double eq_violation = 0.0;
    for (int outer = 0; outer < 12; ++outer) {
      for (std::size_t i = 0; i < um; ++i) t[i] = active[i] ? rho * b[i] - lam[i] : 0.0;
      for (std::size_t i = 0; i < un; ++i) rhs[i] = -c[i];
      A.multiply_transpose_add(t.data(), rhs.data());
      const double rhs_norm = 1.0 + inf_norm(rhs);
      z = rhs;
      chol.solve_in_place(z.data());
      for (int refine = 0; refine < 8; ++refine) {
        apply(z, r);
        for (std::size_t i = 0; i < un; ++i) r[i] = rhs[i] - r[i];
        if (inf_norm(r) <= 1e-15 * rho * rhs_norm) break;
        chol.solve_in_place(r.data());
        for (std::size_t i = 0; i < un; ++i) z[i] += r[i];
      }
      A.multiply(z.data(), az.data());
      eq_violation = 0.0;
      for (std::size_t i = 0; i < um; ++i)
        if (active[i]) {
          const double v = az[i] - b[i];
          lam[i] += rho * v;
          eq_violation = std::max(eq_violation, std::abs(v));
        }
      if (eq_violation <= 1e-2 * settings.primal_tol * bnorm) break;
    }

    std::vector<double> rd(un);
    for (std::size_t i = 0; i < un; ++i) rd[i] = c[i];
    for (const auto& e : merged_) {
      rd[static_cast<std::size_t>(e.row)] += e.value * z[static_cast<std::size_t>(e.col)];
      if (e.row != e.col) rd[static_cast<std::size_t>(e.col)] += e.value * z[static_cast<std::size_t>(e.row)];
    }
    A.multiply_transpose_add(lam.data(), rd.data());
    const double rdn = inf_norm(rd) / cnorm;

    bool changed = false;
    for (std::size_t i = 0; i < um; ++i) {
      if (active[i]) {
        if (lam[i] < -settings.dual_tol * cnorm) {
          active[i] = 0;
          lam[i] = 0.0;
          changed = true;
        }
      } else if (az[i] - b[i] > settings.primal_tol * bnorm) {
        active[i] = 1;
        changed = true;
      }
    }
    res.iterations = round + 1;
    if (!changed) {
      if (rdn > settings.dual_tol || eq_violation > settings.primal_tol * bnorm) return res;
      res.status = Status::converged;
      res.z = to_eigen(z);
      Eigen::VectorXd slack(m);
      for (std::size_t i = 0; i < um; ++i) {
        slack(static_cast<Eigen::Index>(i)) = std::max(b[i] - az[i], 0.0);
        lam[i] = active[i] ? std::max(lam[i], 0.0) : 0.0;
      }
      res.slack = std::move(slack);
      res.multipliers = to_eigen(lam);
      res.primal_residual = eq_violation / bnorm;
      res.dual_residual = rdn;
      res.gap = 0.0;
      return res;
    }
  }
  return res;
}

}  // namespace sg::ipm
