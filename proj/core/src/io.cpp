#include "storegame/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "storegame/errors.hpp"

namespace sg {

std::string format_number(double value) {
  if (value == 0.0) value = 0.0;  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_cell(const std::string& cell, int row, std::string_view column) {
  auto fail = [&](std::string_view why) {
    std::ostringstream os;
    os << "profiles csv: row " << row << ", column " << column << ": " << why << " '" << cell << "'";
    throw InvalidInput(os.str());
  };
  if (cell.empty()) fail("empty cell");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    fail("not a number");
  }
  if (used != cell.size()) fail("not a number");
  if (!std::isfinite(v)) fail("non-finite value");
  return v;
}

}  // namespace

ProfileSeries parse_profiles_csv(std::string_view text, int expected_rows, double delta) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("profiles csv: empty input");
  const auto header = split(line);
  static constexpr std::string_view kColumns[] = {"hour", "demand_mw", "solar_mw"};
  int idx[3] = {-1, -1, -1};
  for (int c = 0; c < static_cast<int>(header.size()); ++c)
    for (int j = 0; j < 3; ++j)
      if (header[static_cast<std::size_t>(c)] == kColumns[j]) idx[j] = c;
  for (int j = 0; j < 3; ++j)
    if (idx[j] < 0)
      throw InvalidInput("profiles csv: header is missing column '" + std::string(kColumns[j]) + "'");

  ProfileSeries out;
  int row = 0;  // data rows, 1-based in messages
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << "profiles csv: row " << row << ": expected " << header.size() << " cells, found "
         << cells.size();
      throw InvalidInput(os.str());
    }
    parse_cell(cells[static_cast<std::size_t>(idx[0])], row, kColumns[0]);
    out.demand.push_back(parse_cell(cells[static_cast<std::size_t>(idx[1])], row, kColumns[1]));
    const double s = parse_cell(cells[static_cast<std::size_t>(idx[2])], row, kColumns[2]);
    if (s < 0.0) {
      std::ostringstream os;
      os << "profiles csv: row " << row << ", column solar_mw: negative value";
      throw InvalidInput(os.str());
    }
    out.solar.push_back(s);
  }
  if (expected_rows > 0 && row != expected_rows) {
    std::ostringstream os;
    os << "profiles csv: expected " << expected_rows << " data rows, found " << row;
    throw InvalidInput(os.str());
  }
  if (row < 2) throw InvalidInput("profiles csv: need at least two data rows");
  out.grid = TimeGrid(row, delta);
  return out;
}

ProfileSeries load_profiles_csv(const std::filesystem::path& path, int expected_rows, double delta) {
  return parse_profiles_csv(read_text_file(path), expected_rows, delta);
}

std::string profiles_csv(const ProfileSeries& series) {
  if (series.demand.size() != series.solar.size()) throw InvalidInput("profiles csv: length mismatch");
  std::string out = "hour,demand_mw,solar_mw\n";
  for (std::size_t k = 0; k < series.demand.size(); ++k)
    out += std::to_string(k) + ',' + format_number(series.demand[k]) + ',' +
           format_number(series.solar[k]) + '\n';
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InvalidInput("write failed for '" + path.string() + "'");
}

}  // namespace sg
