/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/image.hpp
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
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace facefit {

/** 8-bit RGB image, row-major, 3 bytes per pixel. */
struct ImageRGB8
{
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    ImageRGB8() = default;
    ImageRGB8(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t& at(int x, int y, int c)
    {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const
    {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

/** 16-bit single-channel image; depth images store millimeters, 0 = invalid. */
struct ImageGray16
{
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> data;

    ImageGray16() = default;
    ImageGray16(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

    std::uint16_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint16_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

void write_png(const std::filesystem::path& path, const ImageRGB8& image);
void write_png(const std::filesystem::path& path, const ImageGray16& image);

/** Throws IoError if the file is missing, unreadable, or has the wrong pixel format. */
ImageRGB8 read_png_rgb8(const std::filesystem::path& path);
ImageGray16 read_png_gray16(const std::filesystem::path& path);

} // namespace facefit
