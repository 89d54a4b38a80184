#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace peace {

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
    std::string color = "#1f77b4";
};

namespace svgdetail {

inline std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace svgdetail

// Self-contained line chart; points with non-finite coordinates are dropped.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label,
                                  const std::string& y_label, const std::vector<SvgSeries>& series,
                                  int width = 720, int height = 440) {
    if (series.empty()) throw std::invalid_argument("svg chart: no series");
    const double ml = 70, mr = 24, mt = 44, mb = 54;
    const double pw = width - ml - mr, ph = height - mt - mb;
    if (pw <= 0 || ph <= 0) throw std::invalid_argument("svg chart: canvas too small");

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    bool any = false;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            any = true;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!any) throw std::invalid_argument("svg chart: no finite points");
    if (xmax == xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymax == ymin) {
        ymin -= 1.0;
        ymax += 1.0;
    } else {
        const double pad = 0.05 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;
    }

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    using svgdetail::escape;
    using svgdetail::num;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"15\" fill=\"#222\">"
       << escape(title) << "</text>\n";

    const int ticks = 5;
    for (int i = 0; i < ticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / (ticks - 1);
        const double fy = ymin + (ymax - ymin) * i / (ticks - 1);
        const double gx = px(fx), gy = py(fy);
        os << "<line x1=\"" << num(gx) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(gx) << "\" y2=\""
           << num(mt + ph) << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        os << "<line x1=\"" << num(ml) << "\" y1=\"" << num(gy) << "\" x2=\"" << num(ml + pw)
           << "\" y2=\"" << num(gy) << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        os << "<text x=\"" << num(gx) << "\" y=\"" << num(mt + ph + 18)
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">"
           << num(fx) << "</text>\n";
        os << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(gy + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">"
           << num(fy) << "</text>\n";
    }
    os << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw) << "\" height=\""
       << num(ph) << "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(static_cast<double>(height) - 12)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">"
       << escape(x_label) << "</text>\n";
    os << "<text x=\"18\" y=\"" << num(mt + ph / 2)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\" "
          "transform=\"rotate(-90 18 "
       << num(mt + ph / 2) << ")\">" << escape(y_label) << "</text>\n";

    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\" points=\"";
        bool first = true;
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (!first) os << ' ';
            os << num(px(x)) << ',' << num(py(y));
            first = false;
        }
        os << "\"/>\n";
    }

    double ly = mt + 10;
    for (const auto& s : series) {
        const double lx = ml + pw - 150;
        os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(lx + 22)
           << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << num(lx + 28) << "\" y=\"" << num(ly)
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">" << escape(s.label)
           << "</text>\n";
        ly += 18;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace peace
