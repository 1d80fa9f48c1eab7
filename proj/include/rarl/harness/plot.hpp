#pragma once

#include "rarl/types.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace rarl::harness {

struct Series {
    std::string label;
    numvec x, y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct Band {
    numvec x, lo, hi;
    std::string color = "#1f77b4";
};

/// Minimal self-contained SVG line chart
struct LinePlot {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<Band> bands;
    std::vector<Series> series;
    int width = 720;
    int height = 440;
    /// at most this many points are emitted per polyline
    std::size_t max_points = 1500;

    std::string render() const;
};

namespace detail {
inline std::string fmt(prec_t v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::vector<std::size_t> thin(std::size_t n, std::size_t max_points) {
    std::vector<std::size_t> idx;
    if (n == 0) return idx;
    const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / max_points);
    for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
    if (idx.back() != n - 1) idx.push_back(n - 1);
    return idx;
}
} // namespace detail

inline std::string LinePlot::render() const {
    const prec_t left = 70, right = 20, top = 40, bottom = 50;
    prec_t xmin = std::numeric_limits<prec_t>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto extend = [&](const numvec& xs, const numvec& ys) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
            xmin = std::min(xmin, xs[i]);
            xmax = std::max(xmax, xs[i]);
            ymin = std::min(ymin, ys[i]);
            ymax = std::max(ymax, ys[i]);
        }
    };
    for (const auto& b : bands) {
        extend(b.x, b.lo);
        extend(b.x, b.hi);
    }
    for (const auto& s : series) extend(s.x, s.y);
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
    const prec_t pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    const prec_t pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](prec_t x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](prec_t y) { return top + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
       << detail::escape(title) << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const prec_t yv = ymin + (ymax - ymin) * t / 4.0, xv = xmin + (xmax - xmin) * t / 4.0;
        os << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << detail::fmt(yv)
           << "</text>\n";
        os << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
           << detail::fmt(xv) << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
       << detail::escape(xlabel) << "</text>\n";
    os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << top + ph / 2 << ")\">" << detail::escape(ylabel) << "</text>\n";

    for (const auto& b : bands) {
        const auto idx = detail::thin(b.x.size(), max_points);
        os << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
        for (std::size_t i : idx) os << sx(b.x[i]) << ',' << sy(b.hi[i]) << ' ';
        for (auto it = idx.rbegin(); it != idx.rend(); ++it) os << sx(b.x[*it]) << ',' << sy(b.lo[*it]) << ' ';
        os << "\"/>\n";
    }
    int legend_y = int(top) + 16;
    for (const auto& s : series) {
        const auto idx = detail::thin(s.x.size(), max_points);
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\"";
        if (s.dashed) os << " stroke-dasharray=\"6,4\"";
        os << " points=\"";
        for (std::size_t i : idx) os << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
        os << "\"/>\n";
        os << "<line x1=\"" << left + pw - 150 << "\" y1=\"" << legend_y - 4 << "\" x2=\"" << left + pw - 125
           << "\" y2=\"" << legend_y - 4 << "\" stroke=\"" << s.color << "\" stroke-width=\"2\""
           << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
        os << "<text x=\"" << left + pw - 120 << "\" y=\"" << legend_y << "\">" << detail::escape(s.label)
           << "</text>\n";
        legend_y += 16;
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

} // namespace rarl::harness
