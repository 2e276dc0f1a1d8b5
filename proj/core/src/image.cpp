// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "compogen/error.hpp"

namespace compogen {

namespace {

cv::Mat to_mat(const Image& image) {
    const int type = CV_MAKETYPE(CV_64F, image.channels());
    cv::Mat mat(image.height(), image.width(), type);
    std::copy(image.data().begin(), image.data().end(), mat.ptr<double>());
    return mat;
}

Image from_mat(const cv::Mat& mat) {
    cv::Mat dense = mat.isContinuous() ? mat : mat.clone();
    Image image(dense.cols, dense.rows, dense.channels());
    const auto* src = dense.ptr<double>();
    std::copy(src, src + image.data().size(), image.data().begin());
    return image;
}

// OpenCV stores colour as BGR(A); Image is RGB(A).
void swap_red_blue(cv::Mat& mat) {
    if (mat.channels() == 3) {
        cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    } else if (mat.channels() == 4) {
        cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGBA);
    }
}

cv::Mat to_8bit_mat(const Image& image) {
    if (image.empty()) {
        throw Error(Errc::Precondition, "cannot encode an empty image");
    }
    const int type = CV_MAKETYPE(CV_8U, image.channels());
    cv::Mat mat(image.height(), image.width(), type);
    auto* dst = mat.ptr<std::uint8_t>();
    const auto src = image.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = std::clamp(src[i], 0.0, 1.0);
        dst[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    if (image.channels() == 3) {
        cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
    } else if (image.channels() == 4) {
        cv::cvtColor(mat, mat, cv::COLOR_RGBA2BGRA);
    }
    return mat;
}

Image from_decoded(cv::Mat mat) {
    if (mat.empty()) {
        throw Error(Errc::Parse, "image bytes could not be decoded");
    }
    double max_level = 255.0;
    if (mat.depth() == CV_16U) {
        max_level = 65535.0;
    } else if (mat.depth() != CV_8U) {
        throw Error(Errc::Parse, "unsupported image bit depth");
    }
    swap_red_blue(mat);
    cv::Mat as_double;
    mat.convertTo(as_double, CV_MAKETYPE(CV_64F, mat.channels()));
    // Divide rather than multiply by the reciprocal so a decoded level k is
    // bit-identical to k / 255.0 as produced by quantize_8bit.
    Image out = from_mat(as_double);
    for (double& v : out.data()) {
        v /= max_level;
    }
    return out;
}

}  // namespace

Image::Image(int width, int height, int channels, double fill)
    : m_width(width), m_height(height), m_channels(channels) {
    if (width < 0 || height < 0 || channels < 1 || channels > 4) {
        throw Error(Errc::Precondition, "invalid image geometry");
    }
    m_data.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image extract_channel(const Image& image, int channel) {
    if (channel < 0 || channel >= image.channels()) {
        throw Error(Errc::Precondition, "channel index out of range");
    }
    Image out(image.width(), image.height(), 1);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            out.at(x, y) = image.at(x, y, channel);
        }
    }
    return out;
}

Image to_rgb(const Image& image) {
    Image out(image.width(), image.height(), 3);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = image.at(x, y, image.channels() >= 3 ? c : 0);
            }
        }
    }
    return out;
}

Image crop(const Image& image, PixelRect rect) {
    const int x0 = std::clamp(rect.x, 0, image.width());
    const int y0 = std::clamp(rect.y, 0, image.height());
    const int x1 = std::clamp(rect.x + rect.width, 0, image.width());
    const int y1 = std::clamp(rect.y + rect.height, 0, image.height());
    Image out(std::max(0, x1 - x0), std::max(0, y1 - y0), image.channels());
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                out.at(x - x0, y - y0, c) = image.at(x, y, c);
            }
        }
    }
    return out;
}

Image resize(const Image& image, int width, int height) {
    if (width <= 0 || height <= 0 || image.empty()) {
        throw Error(Errc::Precondition, "resize needs a non-empty source and positive target");
    }
    if (width == image.width() && height == image.height()) {
        return image;
    }
    const bool shrinking = width <= image.width() && height <= image.height();
    cv::Mat out;
    cv::resize(to_mat(image), out, cv::Size(width, height), 0, 0,
               shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    Image result = from_mat(out);
    for (double& v : result.data()) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return result;
}

Image quantize_8bit(const Image& image) {
    Image out = image;
    for (double& v : out.data()) {
        v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    std::vector<std::uint8_t> bytes;
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
    if (!cv::imencode(".png", to_8bit_mat(image), bytes, params)) {
        throw Error(Errc::Io, "PNG encoding failed");
    }
    return bytes;
}

Image decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) {
        throw Error(Errc::Parse, "empty image payload");
    }
    const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
    return from_decoded(cv::imdecode(raw, cv::IMREAD_UNCHANGED));
}

Image load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::Io, "cannot read image " + path.string());
    }
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return decode_image(bytes);
    } catch (const Error& e) {
        throw Error(Errc::Parse, path.string() + ": " + e.what());
    }
}

void save_png(const Image& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(Errc::Io, "cannot write " + path.string());
    }
}

}  // namespace compogen
