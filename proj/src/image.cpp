#include "leaky/image.hpp"

#include <algorithm>
#include <cmath>

namespace leaky {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

void clamp01(Image& img) {
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

bool in_unit_range(const Image& img, double slack) {
    for (double v : img.data)
        if (v < -slack || v > 1.0 + slack) return false;
    return true;
}

void quantize8(Image& img) {
    for (double& v : img.data) {
        const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        v = q / 255.0;
    }
}

double mse(const Image& a, const Image& b) {
    require(a.same_shape(b), ErrorKind::validation, "mse: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

double linf_distance(const Image& a, const Image& b) {
    require(a.same_shape(b), ErrorKind::validation, "linf: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    require(out_h >= 1 && out_w >= 1, ErrorKind::validation, "resize: bad size");
    Image dst(out_h, out_w, src.c);
    const double sy = static_cast<double>(src.h) / out_h;
    const double sx = static_cast<double>(src.w) / out_w;
    for (int ch = 0; ch < src.c; ++ch) {
        for (int y = 0; y < out_h; ++y) {
            // Align sample centers.
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::clamp(fy, 0.0, static_cast<double>(src.h - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, src.h - 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                fx = std::clamp(fx, 0.0, static_cast<double>(src.w - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, src.w - 1);
                const double wx = fx - x0;
                const double v00 = src.at(ch, y0, x0), v01 = src.at(ch, y0, x1);
                const double v10 = src.at(ch, y1, x0), v11 = src.at(ch, y1, x1);
                dst.at(ch, y, x) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                   wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return dst;
}

Image crop(const Image& src, int y0, int x0, int h, int w) {
    require(y0 >= 0 && x0 >= 0 && y0 + h <= src.h && x0 + w <= src.w,
            ErrorKind::validation, "crop: window out of bounds");
    Image dst(h, w, src.c);
    for (int ch = 0; ch < src.c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) dst.at(ch, y, x) = src.at(ch, y0 + y, x0 + x);
    return dst;
}

Image hflip(const Image& src) {
    Image dst(src.h, src.w, src.c);
    for (int ch = 0; ch < src.c; ++ch)
        for (int y = 0; y < src.h; ++y)
            for (int x = 0; x < src.w; ++x)
                dst.at(ch, y, x) = src.at(ch, y, src.w - 1 - x);
    return dst;
}

}  // namespace leaky
