#pragma once

// Minimal static SVG charts.

#include <filesystem>
#include <string>
#include <vector>

namespace flowslm::cli {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::vector<Series>& series, bool log_y);

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series name
};

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<std::string>& series_names, const std::vector<BarGroup>& groups);

}  // namespace flowslm::cli
