#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cromo::plot {

struct Series {
    std::string label;
    std::vector<double> x, y;
};

struct PlotSpec {
    std::string title;
    std::string x_label, y_label;
    int width = 640;
    int height = 420;
    std::optional<double> y_min, y_max;  // auto range when unset
};

// Renders the series as polylines with point markers and a legend, and
// writes an RGB PNG. The file appears atomically.
void write_line_plot(const std::filesystem::path& path, const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace cromo::plot
