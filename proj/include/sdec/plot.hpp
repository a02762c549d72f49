#pragma once

#include <string>
#include <vector>

#include "sdec/metrics.hpp"

namespace sdec {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> band;  // optional symmetric half-width around y
};

/// Minimal SVG line chart (no external renderer).
std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title,
                       int width = 720, int height = 420);

/// Chart of one metrics column against the iteration index; NaN rows are
/// skipped.
std::string metrics_svg(const std::vector<MetricsRecord>& records,
                        const std::string& column);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace sdec
