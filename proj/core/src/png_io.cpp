#include "pathssl/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace pathssl {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void write_png(const std::string& path, const Patch& patch) {
    validate_patch(patch, "write_png");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("write_png: cannot open '" + path + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("write_png: png_create_info_struct failed");
    }
    std::vector<unsigned char> buf(static_cast<std::size_t>(patch.height) * patch.width * 3);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        float v = patch.pixels[i];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    std::vector<png_bytep> rows(patch.height);
    for (int y = 0; y < patch.height; ++y)
        rows[y] = buf.data() + static_cast<std::size_t>(y) * patch.width * 3;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("write_png: libpng failure writing '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, patch.width, patch.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Patch read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("read_png: cannot open '" + path + "'");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("read_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("read_png: libpng failure reading '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize anything libpng can hand us to 8-bit RGB.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    Patch patch(h, w);
    std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    for (std::size_t i = 0; i < buf.size(); ++i)
        patch.pixels[i] = static_cast<float>(buf[i]) / 255.0f;
    return patch;
}

} // namespace pathssl
