#pragma once

#include <string>

#include "leaky/image.hpp"

namespace leaky {

// 8-bit RGB PNG, non-interlaced. Values are mapped [0,1] <-> [0,255].
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// In-memory variants for the external-refiner adapter contract.
std::string encode_png(const Image& img);
Image decode_png(const std::string& bytes);

}  // namespace leaky
