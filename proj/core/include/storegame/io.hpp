#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "storegame/model.hpp"

namespace sg {

/// Nine significant digits (printf %.9g), used by every export. Stable under re-import.
std::string format_number(double value);

struct ProfileSeries {
  std::vector<double> demand;  // MW
  std::vector<double> solar;   // MW
  TimeGrid grid;
};

/// Header `hour,demand_mw,solar_mw`, one row per interval. Exactly `expected_rows` rows are
/// required when it is positive. Errors name the offending row and column.
ProfileSeries parse_profiles_csv(std::string_view text, int expected_rows = 24, double delta = 1.0);
ProfileSeries load_profiles_csv(const std::filesystem::path& path, int expected_rows = 24,
                                double delta = 1.0);
std::string profiles_csv(const ProfileSeries& series);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace sg
