#include "leaky/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

namespace leaky {

namespace {

struct MemReader {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos;
};

void mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->size) png_error(png, "png: truncated stream");
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

void mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

void mem_flush(png_structp) {}

std::vector<unsigned char> to_rgb8(const Image& img) {
    require(img.c == 3, ErrorKind::validation, "png: expected 3-channel image");
    std::vector<unsigned char> rows(static_cast<std::size_t>(img.h) * img.w * 3);
    std::size_t k = 0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(img.at(ch, y, x), 0.0, 1.0);
                rows[k++] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    return rows;
}

void encode_impl(png_structp png, png_infop info, const Image& img) {
    if (setjmp(png_jmpbuf(png))) fail(ErrorKind::ingest, "png: encode failed");
    png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const auto rgb = to_rgb8(img);
    std::vector<png_bytep> rows(img.h);
    for (int y = 0; y < img.h; ++y)
        rows[y] = const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * img.w * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
}

Image decode_impl(png_structp png, png_infop info) {
    if (setjmp(png_jmpbuf(png))) fail(ErrorKind::ingest, "png: decode failed");
    png_read_info(png, info);
    const int w = png_get_image_width(png, info);
    const int h = png_get_image_height(png, info);
    // Normalize every supported layout to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    require(png_get_channels(png, info) == 3, ErrorKind::ingest,
            "png: unsupported channel layout");
    std::vector<unsigned char> rgb(static_cast<std::size_t>(h) * w * 3);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y)
        rows[y] = rgb.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    Image img(h, w, 3);
    std::size_t k = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = rgb[k++] / 255.0;
    return img;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    require(fp != nullptr, ErrorKind::ingest, "png: cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    try {
        encode_impl(png, info, img);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    require(fp != nullptr, ErrorKind::ingest, "png: cannot open for read: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    Image img;
    try {
        img = decode_impl(png, info);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

std::string encode_png(const Image& img) {
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_set_write_fn(png, &out, mem_write, mem_flush);
    try {
        encode_impl(png, info, img);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(const std::string& bytes) {
    MemReader reader{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_set_read_fn(png, &reader, mem_read);
    Image img;
    try {
        img = decode_impl(png, info);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace leaky
