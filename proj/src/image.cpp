/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/image.cpp
 *
 * Copyright 2026 The facefit authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "facefit/image.hpp"

#include "facefit/error.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace facefit {

namespace {

struct FileCloser
{
    void operator()(std::FILE* f) const
    {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f)
    {
        throw IoError("cannot open file: " + path.string());
    }
    return f;
}

struct PngWriter
{
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngWriter()
    {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
        if (!png || !info)
        {
            throw IoError("libpng: failed to allocate write structures");
        }
    }
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

struct PngReader
{
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngReader()
    {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
        if (!png || !info)
        {
            throw IoError("libpng: failed to allocate read structures");
        }
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

} // namespace

void write_png(const std::filesystem::path& path, const ImageRGB8& image)
{
    auto file = open_file(path, "wb");
    PngWriter w;
    if (setjmp(png_jmpbuf(w.png)))
    {
        throw IoError("libpng: write failed: " + path.string());
    }
    png_init_io(w.png, file.get());
    png_set_IHDR(w.png, w.info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (int y = 0; y < image.height; ++y)
    {
        png_write_row(w.png, const_cast<png_bytep>(&image.data[static_cast<std::size_t>(y) * image.width * 3]));
    }
    png_write_end(w.png, nullptr);
}

void write_png(const std::filesystem::path& path, const ImageGray16& image)
{
    auto file = open_file(path, "wb");
    PngWriter w;
    if (setjmp(png_jmpbuf(w.png)))
    {
        throw IoError("libpng: write failed: " + path.string());
    }
    png_init_io(w.png, file.get());
    png_set_IHDR(w.png, w.info, image.width, image.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    // PNG stores 16-bit samples big-endian; the in-memory buffer is host order.
    png_set_swap(w.png);
    for (int y = 0; y < image.height; ++y)
    {
        png_write_row(w.png,
                      reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(
                          &image.data[static_cast<std::size_t>(y) * image.width])));
    }
    png_write_end(w.png, nullptr);
}

ImageRGB8 read_png_rgb8(const std::filesystem::path& path)
{
    auto file = open_file(path, "rb");
    PngReader r;
    if (setjmp(png_jmpbuf(r.png)))
    {
        throw IoError("libpng: read failed: " + path.string());
    }
    png_init_io(r.png, file.get());
    png_read_info(r.png, r.info);
    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_RGB)
    {
        throw IoError("expected 8-bit RGB PNG: " + path.string());
    }
    ImageRGB8 image(static_cast<int>(png_get_image_width(r.png, r.info)),
                    static_cast<int>(png_get_image_height(r.png, r.info)));
    for (int y = 0; y < image.height; ++y)
    {
        png_read_row(r.png, &image.data[static_cast<std::size_t>(y) * image.width * 3], nullptr);
    }
    return image;
}

ImageGray16 read_png_gray16(const std::filesystem::path& path)
{
    auto file = open_file(path, "rb");
    PngReader r;
    if (setjmp(png_jmpbuf(r.png)))
    {
        throw IoError("libpng: read failed: " + path.string());
    }
    png_init_io(r.png, file.get());
    png_read_info(r.png, r.info);
    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY)
    {
        throw IoError("expected 16-bit grayscale PNG: " + path.string());
    }
    png_set_swap(r.png);
    ImageGray16 image(static_cast<int>(png_get_image_width(r.png, r.info)),
                      static_cast<int>(png_get_image_height(r.png, r.info)));
    for (int y = 0; y < image.height; ++y)
    {
        png_read_row(r.png,
                     reinterpret_cast<png_bytep>(&image.data[static_cast<std::size_t>(y) * image.width]),
                     nullptr);
    }
    return image;
}

} // namespace facefit
