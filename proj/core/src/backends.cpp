// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/backends.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "compogen/error.hpp"

namespace compogen {

void check_backend_config(const BackendConfig& config) {
    if (!(config.timeout_seconds > 0.0)) {
        throw Error(Errc::Config, "backend '" + config.name + "': timeout must be > 0");
    }
    if (config.max_retries < 0) {
        throw Error(Errc::Config, "backend '" + config.name + "': max_retries must be >= 0");
    }
    if (config.max_in_flight < 1) {
        throw Error(Errc::Config, "backend '" + config.name + "': max_in_flight must be >= 1");
    }
    if (!config.mock && config.endpoint.empty()) {
        throw Error(Errc::Config, "backend '" + config.name + "': endpoint is required for remote backends");
    }
}

PixelRect crop_rect(const DetectionBox& box, int image_width, int image_height) {
    const int x0 = std::clamp(static_cast<int>(std::floor(box.x)), 0, image_width);
    const int y0 = std::clamp(static_cast<int>(std::floor(box.y)), 0, image_height);
    const int x1 = std::clamp(static_cast<int>(std::ceil(box.x + box.w)), 0, image_width);
    const int y1 = std::clamp(static_cast<int>(std::ceil(box.y + box.h)), 0, image_height);
    return PixelRect{x0, y0, x1 - x0, y1 - y0};
}

EmbeddingVector EmbeddingVector::unit(std::vector<double> values) {
    double sq = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(Errc::Protocol, "embedding contains a non-finite value");
        }
        sq += v * v;
    }
    if (values.empty() || sq == 0.0) {
        throw Error(Errc::Protocol, "embedding is empty or zero");
    }
    const double n = std::sqrt(sq);
    for (double& v : values) {
        v /= n;
    }
    return EmbeddingVector{std::move(values), true};
}

double EmbeddingVector::norm() const noexcept {
    double sq = 0.0;
    for (double v : values) {
        sq += v * v;
    }
    return std::sqrt(sq);
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size()) {
        throw Error(Errc::Precondition, "embedding dimensions differ");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        s += a.values[i] * b.values[i];
    }
    return s;
}

Backend::Backend(int max_in_flight) : m_in_flight(std::max(1, max_in_flight)) {}

namespace {

void require_image(const Image& image, std::string_view what) {
    if (image.empty()) {
        throw Error(Errc::Precondition, std::string(what) + " is empty");
    }
}

bool unit_interval(const Image& image) {
    return std::ranges::all_of(image.data(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

bool blank(std::string_view text) {
    return std::ranges::all_of(text, [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

Image Segmenter::segment_foreground(const Image& image) const {
    require_image(image, "segmentation input");
    auto slot = acquire_slot();
    Image mask = do_segment(image);
    if (!mask.same_size(image) || mask.channels() != 1) {
        throw Error(Errc::Protocol, "segmentation mask size/channels do not match the input image");
    }
    if (!unit_interval(mask)) {
        throw Error(Errc::Protocol, "segmentation mask values outside [0,1]");
    }
    return mask;
}

Image Inpainter::inpaint(const Image& fg_image, const Image& fg_mask, const Image& bg_image, std::string_view prompt,
                         std::uint64_t seed) const {
    require_image(fg_image, "foreground image");
    if (!fg_image.same_size(fg_mask) || !fg_image.same_size(bg_image)) {
        throw Error(Errc::Precondition, "inpaint inputs must share dimensions");
    }
    if (fg_mask.channels() != 1 || !unit_interval(fg_mask)) {
        throw Error(Errc::Precondition, "inpaint mask must be single-channel in [0,1]");
    }
    auto slot = acquire_slot();
    Image out = do_inpaint(fg_image, fg_mask, bg_image, prompt, seed);
    if (!out.same_size(fg_image)) {
        throw Error(Errc::Protocol, "inpainted image has the wrong size");
    }
    return out;
}

std::string TextCompleter::complete_text(std::string_view system_prompt, std::string_view few_shot_block,
                                         std::string_view user_query) const {
    if (blank(system_prompt) || blank(user_query)) {
        throw Error(Errc::Precondition, "system prompt and user query must be non-empty");
    }
    auto slot = acquire_slot();
    std::string text = do_complete(system_prompt, few_shot_block, user_query);
    if (blank(text)) {
        throw Error(Errc::EmptyCompletion, "text backend returned an empty completion");
    }
    return text;
}

std::string Captioner::caption_image(const Image& image, std::string_view instruction) const {
    require_image(image, "caption input");
    if (blank(instruction)) {
        throw Error(Errc::Precondition, "caption instruction is empty");
    }
    auto slot = acquire_slot();
    std::string text = do_caption(image, instruction);
    if (blank(text)) {
        throw Error(Errc::EmptyCompletion, "caption backend returned an empty caption");
    }
    return text;
}

std::vector<DetectionBox> Detector::detect_objects(const Image& image, std::span<const std::string> labels) const {
    require_image(image, "detection input");
    if (labels.empty()) {
        throw Error(Errc::Precondition, "detection needs at least one label");
    }
    std::vector<DetectionBox> raw;
    {
        auto slot = acquire_slot();
        raw = do_detect(image, labels);
    }
    const std::set<std::string_view> allowed(labels.begin(), labels.end());
    const double width = image.width();
    const double height = image.height();
    std::vector<DetectionBox> out;
    out.reserve(raw.size());
    for (auto& box : raw) {
        if (!allowed.contains(box.label)) {
            throw Error(Errc::Protocol, "detector returned unqueried label '" + box.label + "'");
        }
        if (!(box.confidence >= 0.0 && box.confidence <= 1.0)) {
            throw Error(Errc::Protocol, "detector confidence outside [0,1]");
        }
        const double x0 = std::clamp(box.x, 0.0, width);
        const double y0 = std::clamp(box.y, 0.0, height);
        const double x1 = std::clamp(box.x + box.w, 0.0, width);
        const double y1 = std::clamp(box.y + box.h, 0.0, height);
        if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) {
            continue;
        }
        box.x = x0;
        box.y = y0;
        box.w = x1 - x0;
        box.h = y1 - y0;
        out.push_back(std::move(box));
    }
    return out;
}

EmbeddingVector Embedder::embed_image(const Image& image) const {
    require_image(image, "embedding input");
    auto slot = acquire_slot();
    return EmbeddingVector::unit(do_embed_image(image));
}

EmbeddingVector Embedder::embed_text(std::string_view text) const {
    if (blank(text)) {
        throw Error(Errc::Precondition, "embedding text is empty");
    }
    auto slot = acquire_slot();
    return EmbeddingVector::unit(do_embed_text(text));
}

int Embedder::count_text_tokens(std::string_view text) const {
    if (text.empty()) {
        throw Error(Errc::Precondition, "token count input is empty");
    }
    auto slot = acquire_slot();
    const int n = do_count_tokens(text);
    if (n < 0) {
        throw Error(Errc::Protocol, "negative token count");
    }
    return n;
}

std::map<std::string, std::string> BackendSet::versions() const {
    std::map<std::string, std::string> out;
    auto put = [&out](std::string_view name, const auto& backend) {
        if (backend) {
            out[std::string(name)] = backend->model_id();
        }
    };
    put(kSegmentBackend, segmenter);
    put(kInpaintBackend, inpainter);
    put(kTextBackend, text);
    put(kCaptionBackend, captioner);
    put(kDetectBackend, detector);
    put(kEmbedBackend, embedder);
    return out;
}

}  // namespace compogen
