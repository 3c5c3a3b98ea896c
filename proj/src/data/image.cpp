#include "data/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "core/error.hpp"

namespace nmfg {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

} // namespace

ImageU8 load_png_rgb8(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw not_found("image file not found: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw format_error("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw format_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw format_error("libpng init failed");
    }
    std::vector<png_bytep> rows;
    ImageU8 img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("PNG decode failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (depth != 8 || color != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("image must be 8-bit RGB PNG: " + path);
    }

    img.h = int64_t(h);
    img.w = int64_t(w);
    img.pixels.resize(size_t(img.h * img.w * 3));
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.pixels.data() + size_t(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png_rgb8(const std::string& path, const ImageU8& img) {
    if (img.h <= 0 || img.w <= 0 || int64_t(img.pixels.size()) != img.h * img.w * 3)
        throw validation_error("save_png_rgb8: malformed image buffer");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw validation_error("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw format_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw format_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw format_error("PNG encode failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(size_t(img.h));
    for (int64_t y = 0; y < img.h; ++y)
        rows[size_t(y)] = const_cast<png_bytep>(img.pixels.data() + y * img.w * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor image_to_tensor(const ImageU8& img) {
    std::vector<double> v(size_t(3 * img.h * img.w));
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < img.h; ++y)
            for (int64_t x = 0; x < img.w; ++x)
                v[size_t((c * img.h + y) * img.w + x)] = double(img.at(y, x, c));
    return Tensor::from_data({3, img.h, img.w}, std::move(v));
}

uint8_t quantize_pixel(double v) {
    if (!(v == v)) throw numerical_error("quantize_pixel: NaN pixel value");
    double clipped = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
    return uint8_t(std::floor(clipped + 0.5));
}

ImageU8 tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw validation_error("tensor_to_image expects a [3,H,W] tensor");
    ImageU8 img;
    img.h = t.dim(1);
    img.w = t.dim(2);
    img.pixels.resize(size_t(img.h * img.w * 3));
    const double* p = t.data();
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < img.h; ++y)
            for (int64_t x = 0; x < img.w; ++x)
                img.at(y, x, c) = quantize_pixel(p[(c * img.h + y) * img.w + x]);
    return img;
}

} // namespace nmfg
