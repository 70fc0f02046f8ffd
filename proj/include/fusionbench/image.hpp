#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusionbench/tensor.hpp"

namespace fusionbench {

// Interleaved row-major raster. 8-bit RGB for color sensors, 16-bit
// grayscale for depth; pixel values always live in the low bits of u16.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;   // 1 or 3
    int bit_depth = 8;  // 8 or 16
    std::vector<std::uint16_t> pixels;

    int maxval() const { return bit_depth == 8 ? 255 : 65535; }
    std::uint16_t& at(int y, int x, int c) { return pixels[(y * width + x) * channels + c]; }
    std::uint16_t at(int y, int x, int c) const { return pixels[(y * width + x) * channels + c]; }
};

Image make_image(int width, int height, int channels, int bit_depth);

// PNG codec (8-bit RGB / 8-bit gray / 16-bit gray). Decode failures carry
// the path in the error message.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Width/height from the PNG header alone; cheap enough to run over a whole
// dataset during scanning.
std::pair<int, int> read_png_dims(const std::string& path);

// Bilinear resample with half-pixel-centre sampling, then scale raw values
// by `scale` into [0,1]-ish floats (clamped to [0,1]). Output is HWC.
Tensor<float> resize_bilinear(const Image& img, int out_size, double scale);

}  // namespace fusionbench
