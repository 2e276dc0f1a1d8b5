// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace compogen {

/// Integer pixel rectangle, half-open: [x, x + width) x [y, y + height).
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool empty() const noexcept { return width <= 0 || height <= 0; }
    long long area() const noexcept { return empty() ? 0 : static_cast<long long>(width) * height; }
    bool operator==(const PixelRect&) const = default;
};

/// Interleaved image with 1 (mask), 3 (RGB) or 4 (RGBA) channels. Samples are
/// doubles in [0, 1]; 8-bit storage is handled at the codec boundary only, so
/// in-memory compositing math is exact in double precision.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0);

    int width() const noexcept { return m_width; }
    int height() const noexcept { return m_height; }
    int channels() const noexcept { return m_channels; }
    bool empty() const noexcept { return m_width == 0 || m_height == 0; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(m_width) * static_cast<std::size_t>(m_height);
    }

    double& at(int x, int y, int c = 0) noexcept {
        return m_data[(static_cast<std::size_t>(y) * m_width + x) * m_channels + c];
    }
    double at(int x, int y, int c = 0) const noexcept {
        return m_data[(static_cast<std::size_t>(y) * m_width + x) * m_channels + c];
    }

    std::span<double> data() noexcept { return m_data; }
    std::span<const double> data() const noexcept { return m_data; }

    bool same_size(const Image& other) const noexcept {
        return m_width == other.m_width && m_height == other.m_height;
    }

    bool operator==(const Image&) const = default;

private:
    int m_width = 0;
    int m_height = 0;
    int m_channels = 0;
    std::vector<double> m_data;
};

/// Extracts one channel as a single-channel image.
Image extract_channel(const Image& image, int channel);

/// Drops the alpha channel of an RGBA image (RGB and gray are returned as RGB).
Image to_rgb(const Image& image);

/// Sub-image; the rect is clipped to the image bounds.
Image crop(const Image& image, PixelRect rect);

/// Area resampling when shrinking, bilinear when enlarging.
Image resize(const Image& image, int width, int height);

/// Rounds every sample to the nearest multiple of 1/255, i.e. what a PNG round
/// trip produces.
Image quantize_8bit(const Image& image);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_image(std::span<const std::uint8_t> bytes);

Image load_image(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);

}  // namespace compogen
