#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace slicesec::svg {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// self-contained SVG line chart with axes, ticks and a legend
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

// scatter variant used for PCA projections
void write_scatter_chart(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series);

}  // namespace slicesec::svg
