#include "sdec/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sdec/errors.hpp"

namespace sdec {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

double nice_min(double lo, double hi) { return lo - 0.05 * (hi - lo + 1e-12); }
double nice_max(double lo, double hi) { return hi + 0.05 * (hi - lo + 1e-12); }

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title,
                       int width, int height) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            double b = s.band.empty() ? 0.0 : s.band[i];
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i] - b);
            ymax = std::max(ymax, s.y[i] + b);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    double y0 = nice_min(ymin, ymax), y1 = nice_max(ymin, ymax);
    double x0 = xmin, x1 = xmax > xmin ? xmax : xmin + 1;
    const int ml = 60, mr = 15, mt = 30, mb = 35;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (width - ml - mr); };
    auto py = [&](double y) {
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb);
    };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" + std::to_string(height) +
                      "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(width / 2) +
           "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
    // axes
    svg += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(height - mb) +
           "\" x2=\"" + std::to_string(width - mr) + "\" y2=\"" +
           std::to_string(height - mb) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(mt) +
           "\" x2=\"" + std::to_string(ml) + "\" y2=\"" + std::to_string(height - mb) +
           "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        double xv = x0 + k * (x1 - x0) / 4.0;
        double yv = y0 + k * (y1 - y0) / 4.0;
        svg += "<text x=\"" + std::to_string(px(xv)) + "\" y=\"" +
               std::to_string(height - mb + 16) +
               "\" text-anchor=\"middle\" font-size=\"10\">" + format_double(xv) +
               "</text>\n";
        svg += "<text x=\"" + std::to_string(ml - 6) + "\" y=\"" +
               std::to_string(py(yv) + 3) +
               "\" text-anchor=\"end\" font-size=\"10\">" + format_double(yv) +
               "</text>\n";
    }
    int color = 0;
    for (const auto& s : series) {
        const char* c = kColors[color++ % 5];
        if (!s.band.empty()) {
            std::string upper, lower;
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!std::isfinite(s.y[i])) continue;
                upper += std::to_string(px(s.x[i])) + "," +
                         std::to_string(py(s.y[i] + s.band[i])) + " ";
            }
            for (std::size_t i = s.x.size(); i-- > 0;) {
                if (!std::isfinite(s.y[i])) continue;
                lower += std::to_string(px(s.x[i])) + "," +
                         std::to_string(py(s.y[i] - s.band[i])) + " ";
            }
            svg += "<polygon points=\"" + upper + lower + "\" fill=\"" + c +
                   "\" opacity=\"0.15\" stroke=\"none\"/>\n";
        }
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            pts += std::to_string(px(s.x[i])) + "," + std::to_string(py(s.y[i])) + " ";
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + c +
               "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + std::to_string(width - mr - 4) + "\" y=\"" +
               std::to_string(mt + 14 * (color)) +
               "\" text-anchor=\"end\" font-size=\"11\" fill=\"" + c + "\">" + s.label +
               "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string metrics_svg(const std::vector<MetricsRecord>& records,
                        const std::string& column) {
    PlotSeries s;
    s.label = column;
    for (const auto& r : records) {
        double v;
        if (column == "objective_L_eta") v = r.objective_L_eta;
        else if (column == "first_term") v = r.first_term;
        else if (column == "second_term") v = r.second_term;
        else if (column == "dual_loss") v = r.dual_loss;
        else if (column == "grad_norm_V") v = r.grad_norm_V;
        else if (column == "grad_norm_pi") v = r.grad_norm_pi;
        else if (column == "avg_return") v = r.avg_return;
        else if (column == "consistency_residual") v = r.consistency_residual;
        else throw InvalidValue("unknown metrics column '" + column + "'");
        if (!std::isfinite(v)) continue;
        s.x.push_back(static_cast<double>(r.iteration));
        s.y.push_back(v);
    }
    return render_svg({s}, column + " per iteration");
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace sdec
