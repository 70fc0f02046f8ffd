#include "fusionbench/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "fusionbench/errors.hpp"

namespace fusionbench {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw DataError("png: " + path + ": " + what);
}

}  // namespace

Image make_image(int width, int height, int channels, int bit_depth) {
    Image img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.bit_depth = bit_depth;
    img.pixels.assign(static_cast<std::size_t>(width) * height * channels, 0);
    return img;
}

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) fail(path, "unsupported channel count");
    if (img.bit_depth != 8 && img.bit_depth != 16) fail(path, "unsupported bit depth");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "encode error");
    }
    png_init_io(png, fp.get());
    const int color_type = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), img.bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t row_values = static_cast<std::size_t>(img.width) * img.channels;
    if (img.bit_depth == 8) {
        std::vector<png_byte> row(row_values);
        for (int y = 0; y < img.height; ++y) {
            const std::uint16_t* src = img.pixels.data() + static_cast<std::size_t>(y) * row_values;
            for (std::size_t i = 0; i < row_values; ++i) row[i] = static_cast<png_byte>(src[i]);
            png_write_row(png, row.data());
        }
    } else {
        png_set_swap(png);  // native little-endian rows
        for (int y = 0; y < img.height; ++y) {
            const std::uint16_t* src = img.pixels.data() + static_cast<std::size_t>(y) * row_values;
            png_write_row(png, reinterpret_cast<png_const_bytep>(src));
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open");
    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        fail(path, "not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "decode error");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    // Normalize to 8/16-bit gray or RGB.
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    bit_depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) fail(path, "unsupported channel count after decode");

    Image img = make_image(static_cast<int>(width), static_cast<int>(height), channels, bit_depth);
    const std::size_t row_values = static_cast<std::size_t>(img.width) * channels;
    if (bit_depth == 8) {
        std::vector<png_byte> row(row_values);
        for (int y = 0; y < img.height; ++y) {
            png_read_row(png, row.data(), nullptr);
            std::uint16_t* dst = img.pixels.data() + static_cast<std::size_t>(y) * row_values;
            for (std::size_t i = 0; i < row_values; ++i) dst[i] = row[i];
        }
    } else {
        for (int y = 0; y < img.height; ++y) {
            std::uint16_t* dst = img.pixels.data() + static_cast<std::size_t>(y) * row_values;
            png_read_row(png, reinterpret_cast<png_bytep>(dst), nullptr);
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

std::pair<int, int> read_png_dims(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open");
    // 8-byte signature, IHDR length+type, then big-endian width/height.
    unsigned char buf[24];
    if (std::fread(buf, 1, 24, fp.get()) != 24) fail(path, "truncated header");
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(buf, sig, 8) != 0 || std::memcmp(buf + 12, "IHDR", 4) != 0)
        fail(path, "not a PNG file");
    auto be32 = [&](int off) {
        return (static_cast<int>(buf[off]) << 24) | (buf[off + 1] << 16) | (buf[off + 2] << 8) |
               buf[off + 3];
    };
    return {be32(16), be32(20)};
}

Tensor<float> resize_bilinear(const Image& img, int out_size, double scale) {
    const int ow = out_size, oh = out_size;
    Tensor<float> out({static_cast<std::size_t>(oh), static_cast<std::size_t>(ow),
                       static_cast<std::size_t>(img.channels)});
    const double sx = static_cast<double>(img.width) / ow;
    const double sy = static_cast<double>(img.height) / oh;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double v00 = img.at(y0, x0, c), v01 = img.at(y0, x1, c);
                const double v10 = img.at(y1, x0, c), v11 = img.at(y1, x1, c);
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                const double v = (top + (bot - top) * wy) * scale;
                out[(static_cast<std::size_t>(y) * ow + x) * img.channels + c] =
                    static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

}  // namespace fusionbench
