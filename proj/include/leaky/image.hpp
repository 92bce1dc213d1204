#pragma once

#include <cstddef>
#include <vector>

#include "leaky/common.hpp"

namespace leaky {

// Dense image, channel-planar (CHW) doubles. Pixel values live in [0,1]
// for corpus images; intermediate buffers may hold anything.
struct Image {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> data;  // size h*w*c, plane-major: [c][h][w]

    Image() = default;
    Image(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

    double& at(int ch, int y, int x) {
        return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    double at(int ch, int y, int x) const {
        return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

void clamp01(Image& img);
bool in_unit_range(const Image& img, double slack = 0.0);

// Round every value to the nearest 1/255 step. Corpus images are quantized
// at generation time so in-memory data matches the PNG round trip exactly.
void quantize8(Image& img);

double mse(const Image& a, const Image& b);
double linf_distance(const Image& a, const Image& b);

Image resize_bilinear(const Image& src, int out_h, int out_w);
Image crop(const Image& src, int y0, int x0, int h, int w);
Image hflip(const Image& src);

}  // namespace leaky
