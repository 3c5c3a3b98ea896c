#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace nmfg {

// Interleaved 8-bit RGB, row-major.
struct ImageU8 {
    int64_t h = 0, w = 0;
    std::vector<uint8_t> pixels;

    uint8_t at(int64_t y, int64_t x, int64_t c) const {
        return pixels[size_t((y * w + x) * 3 + c)];
    }
    uint8_t& at(int64_t y, int64_t x, int64_t c) {
        return pixels[size_t((y * w + x) * 3 + c)];
    }
};

ImageU8 load_png_rgb8(const std::string& path);
void save_png_rgb8(const std::string& path, const ImageU8& img);

// Planar [3,H,W] double tensor on the 0-255 scale; conversion is lossless.
Tensor image_to_tensor(const ImageU8& img);
// Clips to [0,255] and rounds half up.
ImageU8 tensor_to_image(const Tensor& t);

uint8_t quantize_pixel(double v);

} // namespace nmfg
