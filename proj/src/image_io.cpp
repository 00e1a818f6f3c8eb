// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/image_io.hpp"

#include "dift/binary_io.hpp"
#include "dift/common.hpp"

#include <png.h>

#include <cstring>

namespace dift {

namespace {

void on_png_error(png_structp png, png_const_charp msg)
{
    auto *text = static_cast<std::string *>(png_get_error_ptr(png));
    *text = msg;
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t length)
{
    auto *out = static_cast<std::vector<std::uint8_t> *>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_nothing(png_structp) {}

struct ReadCursor {
    const std::vector<std::uint8_t> *bytes;
    std::size_t offset;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length)
{
    auto *cur = static_cast<ReadCursor *>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes->size()) png_error(png, "unexpected end of PNG data");
    std::memcpy(data, cur->bytes->data() + cur->offset, length);
    cur->offset += length;
}

} // namespace

void write_png(const std::filesystem::path &path, const RgbImage &image)
{
    if (image.width < 1 || image.height < 1 ||
        image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
        throw InputError("image buffer does not match its dimensions");
    std::string error;
    std::vector<std::uint8_t> encoded;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (!png) throw IoError("cannot initialize PNG encoder");
    png_infop info = png_create_info_struct(png);
    std::vector<png_const_bytep> rows(static_cast<std::size_t>(image.height));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path.string() + ": PNG encode failed: " + error);
    }
    png_set_write_fn(png, &encoded, append_bytes, flush_nothing);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_write_info(png, info);
    for (int r = 0; r < image.height; ++r) rows[r] = image.at(0, r);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    write_file(path, encoded);
}

RgbImage read_png(const std::filesystem::path &path)
{
    const auto bytes = read_file(path);
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8)) throw DataError(path.string() + ": not a PNG file");
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (!png) throw IoError("cannot initialize PNG decoder");
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{&bytes, 0};
    RgbImage image;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(path.string() + ": PNG decode failed: " + error);
    }
    png_set_read_fn(png, &cursor, read_bytes);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    image = RgbImage(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)));
    rows.resize(static_cast<std::size_t>(image.height));
    for (int r = 0; r < image.height; ++r) rows[r] = image.at(0, r);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

} // namespace dift
