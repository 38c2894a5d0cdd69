#pragma once

// Minimal static SVG line plots. Polyline points are written in data
// coordinates at full precision; a group transform maps them to the canvas.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "agma/util/csv.hpp"
#include "agma/util/errors.hpp"

namespace agma::util {

struct Polyline {
    std::string label;
    std::string color = "#1f77b4";
    double width = 1.0;
    double opacity = 1.0;
    std::vector<std::pair<double, double>> points;
};

struct SvgPlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    double width = 640.0;
    double height = 480.0;
    bool equal_aspect = false;
    std::vector<Polyline> lines;
};

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string render_svg(const SvgPlot& plot) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& l : plot.lines)
        for (const auto& [x, y] : l.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double margin = 50.0;
    const double pw = plot.width - 2 * margin;
    const double ph = plot.height - 2 * margin;
    double sx = pw / (x1 - x0);
    double sy = ph / (y1 - y0);
    if (plot.equal_aspect) sx = sy = std::min(sx, sy);
    const double tx = margin - sx * x0;
    const double ty = plot.height - margin + sy * y0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << plot.width << "\" height=\"" << plot.height << "\" viewBox=\"0 0 "
        << plot.width << ' ' << plot.height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << plot.width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(plot.title) << "</text>\n";
    svg << "<text x=\"" << plot.width / 2 << "\" y=\"" << plot.height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
        << xml_escape(plot.x_label) << "</text>\n";
    svg << "<text x=\"14\" y=\"" << plot.height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
        << plot.height / 2 << ")\">" << xml_escape(plot.y_label) << "</text>\n";
    svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#999\"/>\n";
    svg << "<text x=\"" << margin << "\" y=\"" << plot.height - margin + 14 << "\" font-size=\"10\">" << fmt_double(x0) << "</text>\n";
    svg << "<text x=\"" << plot.width - margin << "\" y=\"" << plot.height - margin + 14 << "\" font-size=\"10\" text-anchor=\"end\">"
        << fmt_double(x1) << "</text>\n";
    svg << "<text x=\"" << margin - 4 << "\" y=\"" << plot.height - margin << "\" font-size=\"10\" text-anchor=\"end\">" << fmt_double(y0)
        << "</text>\n";
    svg << "<text x=\"" << margin - 4 << "\" y=\"" << margin + 10 << "\" font-size=\"10\" text-anchor=\"end\">" << fmt_double(y1)
        << "</text>\n";
    svg << "<g transform=\"matrix(" << fmt_double(sx) << " 0 0 " << fmt_double(-sy) << ' ' << fmt_double(tx) << ' ' << fmt_double(ty)
        << ")\">\n";
    for (const auto& l : plot.lines) {
        svg << "<polyline data-label=\"" << xml_escape(l.label) << "\" fill=\"none\" stroke=\"" << l.color << "\" stroke-opacity=\""
            << l.opacity << "\" stroke-width=\"" << l.width << "\" vector-effect=\"non-scaling-stroke\" points=\"";
        for (std::size_t i = 0; i < l.points.size(); ++i)
            svg << (i ? " " : "") << fmt_double(l.points[i].first) << ',' << fmt_double(l.points[i].second);
        svg << "\"/>\n";
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

/// Writes `<stem>.svg` and `<stem>.csv` (label, index, x, y for every point).
inline void write_plot(const std::string& stem, const SvgPlot& plot) {
    std::ofstream svg(stem + ".svg");
    std::ofstream csv(stem + ".csv");
    if (!svg || !csv) throw Error("cannot write plot " + stem);
    svg << render_svg(plot);
    csv << "label,index,x,y\n";
    for (const auto& l : plot.lines)
        for (std::size_t i = 0; i < l.points.size(); ++i)
            csv << l.label << ',' << i << ',' << fmt_double(l.points[i].first) << ',' << fmt_double(l.points[i].second) << '\n';
}

}  // namespace agma::util
