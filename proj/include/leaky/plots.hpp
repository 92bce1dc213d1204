#pragma once

#include <string>
#include <vector>

namespace leaky::plots {

struct Histogram {
    std::vector<double> edges;  // bins + 1 entries
    std::vector<int> counts;
    int total = 0;
};

Histogram histogram(const std::vector<double>& values, int bins);

struct Series {
    std::string label;
    std::vector<double> x, y;
};

// All emitters produce standalone SVG text; output bytes are a pure function
// of the inputs.
std::string histogram_svg(const std::string& title,
                          const std::vector<std::pair<std::string, Histogram>>& series);
std::string scatter_svg(const std::string& title, const Series& points,
                        double fit_alpha, double fit_beta, bool with_fit);
std::string curve_svg(const std::string& title, const std::vector<Series>& lines);

}  // namespace leaky::plots
