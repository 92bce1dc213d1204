#include "leaky/plots.hpp"

#include <algorithm>
#include <cmath>

#include "leaky/common.hpp"
#include "leaky/csv.hpp"

namespace leaky::plots {

namespace {

constexpr int kW = 640, kH = 440;
constexpr int kMargin = 56;

struct Range {
    double lo = 0.0, hi = 1.0;
    double px(double v, int size, int margin) const {
        const double t = (v - lo) / (hi - lo);
        return margin + t * (size - 2 * margin);
    }
};

Range span(const std::vector<double>& values) {
    Range r;
    if (values.empty()) return r;
    r.lo = *std::min_element(values.begin(), values.end());
    r.hi = *std::max_element(values.begin(), values.end());
    if (r.hi - r.lo < 1e-12) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

std::string svg_open(const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    fmt_int(kW) + "\" height=\"" + fmt_int(kH) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt_int(kW / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" + title + "</text>\n";
    return s;
}

std::string axis_box() {
    return "<rect x=\"" + fmt_int(kMargin) + "\" y=\"" + fmt_int(kMargin) +
           "\" width=\"" + fmt_int(kW - 2 * kMargin) + "\" height=\"" +
           fmt_int(kH - 2 * kMargin) +
           "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
}

const char* kColors[] = {"#3465a4", "#cc0000", "#4e9a06", "#f57900", "#75507b"};

}  // namespace

Histogram histogram(const std::vector<double>& values, int bins) {
    require(bins >= 1, ErrorKind::validation, "histogram: bins must be >= 1");
    Histogram h;
    h.counts.assign(bins, 0);
    h.total = static_cast<int>(values.size());
    const Range r = span(values);
    h.edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i)
        h.edges[i] = r.lo + (r.hi - r.lo) * i / static_cast<double>(bins);
    for (double v : values) {
        int bin = static_cast<int>((v - r.lo) / (r.hi - r.lo) * bins);
        bin = std::clamp(bin, 0, bins - 1);
        ++h.counts[bin];
    }
    return h;
}

std::string histogram_svg(
    const std::string& title,
    const std::vector<std::pair<std::string, Histogram>>& series) {
    std::string s = svg_open(title) + axis_box();
    double max_count = 1.0;
    Range xr{1e300, -1e300};
    for (const auto& [label, h] : series) {
        for (int c : h.counts) max_count = std::max(max_count, static_cast<double>(c));
        if (!h.edges.empty()) {
            xr.lo = std::min(xr.lo, h.edges.front());
            xr.hi = std::max(xr.hi, h.edges.back());
        }
    }
    if (xr.hi <= xr.lo) xr = {0.0, 1.0};
    int si = 0;
    for (const auto& [label, h] : series) {
        const char* color = kColors[si % 5];
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double x0 = xr.px(h.edges[b], kW, kMargin);
            const double x1 = xr.px(h.edges[b + 1], kW, kMargin);
            const double frac = h.counts[b] / max_count;
            const double bar_h = frac * (kH - 2 * kMargin);
            s += "<rect x=\"" + fmt_double(x0, 6) + "\" y=\"" +
                 fmt_double(kH - kMargin - bar_h, 6) + "\" width=\"" +
                 fmt_double(std::max(0.5, x1 - x0 - 1.0), 6) + "\" height=\"" +
                 fmt_double(bar_h, 6) + "\" fill=\"" + color +
                 "\" fill-opacity=\"0.45\"/>\n";
        }
        s += "<text x=\"" + fmt_int(kMargin + 8) + "\" y=\"" +
             fmt_int(kMargin + 18 + 16 * si) + "\" font-family=\"sans-serif\" "
             "font-size=\"12\" fill=\"" + std::string(color) + "\">" + label +
             " (n=" + fmt_int(h.total) + ")</text>\n";
        ++si;
    }
    return s + "</svg>\n";
}

std::string scatter_svg(const std::string& title, const Series& points,
                        double fit_alpha, double fit_beta, bool with_fit) {
    std::string s = svg_open(title) + axis_box();
    const Range xr = span(points.x), yr = span(points.y);
    for (std::size_t i = 0; i < points.x.size(); ++i) {
        s += "<circle cx=\"" + fmt_double(xr.px(points.x[i], kW, kMargin), 6) +
             "\" cy=\"" + fmt_double(kH - yr.px(points.y[i], kH, kMargin), 6) +
             "\" r=\"3\" fill=\"#3465a4\" fill-opacity=\"0.7\"/>\n";
    }
    if (with_fit) {
        const double y0 = fit_alpha + fit_beta * xr.lo;
        const double y1 = fit_alpha + fit_beta * xr.hi;
        s += "<line x1=\"" + fmt_double(xr.px(xr.lo, kW, kMargin), 6) + "\" y1=\"" +
             fmt_double(kH - yr.px(y0, kH, kMargin), 6) + "\" x2=\"" +
             fmt_double(xr.px(xr.hi, kW, kMargin), 6) + "\" y2=\"" +
             fmt_double(kH - yr.px(y1, kH, kMargin), 6) +
             "\" stroke=\"#cc0000\" stroke-width=\"2\"/>\n";
    }
    return s + "</svg>\n";
}

std::string curve_svg(const std::string& title, const std::vector<Series>& lines) {
    std::string s = svg_open(title) + axis_box();
    Range xr{1e300, -1e300}, yr{1e300, -1e300};
    for (const auto& line : lines) {
        for (double v : line.x) {
            xr.lo = std::min(xr.lo, v);
            xr.hi = std::max(xr.hi, v);
        }
        for (double v : line.y) {
            yr.lo = std::min(yr.lo, v);
            yr.hi = std::max(yr.hi, v);
        }
    }
    if (xr.hi <= xr.lo) xr = {0.0, 1.0};
    if (yr.hi <= yr.lo) yr = {yr.lo - 0.5, yr.lo + 0.5};
    int si = 0;
    for (const auto& line : lines) {
        const char* color = kColors[si % 5];
        std::string path = "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                           "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < line.x.size(); ++i) {
            path += fmt_double(xr.px(line.x[i], kW, kMargin), 6) + "," +
                    fmt_double(kH - yr.px(line.y[i], kH, kMargin), 6) + " ";
        }
        s += path + "\"/>\n";
        s += "<text x=\"" + fmt_int(kMargin + 8) + "\" y=\"" +
             fmt_int(kMargin + 18 + 16 * si) + "\" font-family=\"sans-serif\" "
             "font-size=\"12\" fill=\"" + std::string(color) + "\">" + line.label +
             "</text>\n";
        ++si;
    }
    return s + "</svg>\n";
}

}  // namespace leaky::plots
