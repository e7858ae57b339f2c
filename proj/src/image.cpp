#include "corrstyle/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace corrstyle {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open image " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng: failed to decode " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buffer(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(3, h, w);
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) img(c, y, x) = rows[y][3 * x + c] / 255.0;
        }
    }
    return img;
}

void save_png(const Image& image, const std::filesystem::path& path) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw DimensionError("save_png: expected 1 or 3 channels, got " +
                             std::to_string(image.channels()));
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        FilePtr file(std::fopen(tmp.c_str(), "wb"));
        if (!file) throw IoError("cannot write image " + tmp.string());
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            png_destroy_write_struct(&png, &info);
            throw IoError("libpng: write struct allocation failed");
        }
        const Index w = image.width, h = image.height;
        std::vector<png_byte> buffer(static_cast<std::size_t>(3 * w * h));
        for (Index y = 0; y < h; ++y) {
            for (Index x = 0; x < w; ++x) {
                for (Index c = 0; c < 3; ++c) {
                    const double v = image(image.channels() == 3 ? c : 0, y, x);
                    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
                    buffer[std::size_t(3 * (y * w + x) + c)] = static_cast<png_byte>(q);
                }
            }
        }
        std::vector<png_bytep> rows(static_cast<std::size_t>(h));
        for (Index y = 0; y < h; ++y) rows[std::size_t(y)] = buffer.data() + 3 * y * w;
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw IoError("libpng: failed to encode " + path.string());
        }
        png_init_io(png, file.get());
        png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, path);
}

Image luminance(const Image& rgb) {
    if (rgb.channels() == 1) return rgb;
    require_rgb(rgb, "luminance");
    Image y(1, rgb.height, rgb.width);
    y.data.row(0) = 0.299 * rgb.data.row(0) + 0.587 * rgb.data.row(1) + 0.114 * rgb.data.row(2);
    return y;
}

void require_rgb(const Image& image, const char* what) {
    if (image.channels() != 3) {
        throw DimensionError(std::string(what) + ": expected an RGB image, got " +
                             shape_string(image));
    }
}

bool in_unit_range(const Image& image) {
    return image.all_finite() && image.data.minCoeff() >= 0.0 && image.data.maxCoeff() <= 1.0;
}

}  // namespace corrstyle
