// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/mock_backends.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "compogen/digest.hpp"
#include "compogen/error.hpp"

namespace compogen {

std::uint64_t image_fingerprint(const Image& image) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(12 + image.data().size());
    for (int v : {image.width(), image.height(), image.channels()}) {
        for (int shift = 0; shift < 32; shift += 8) {
            bytes.push_back(static_cast<std::uint8_t>((static_cast<unsigned>(v) >> shift) & 0xFF));
        }
    }
    for (double v : image.data()) {
        bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    return fnv1a64(bytes);
}

// ---------------------------------------------------------------------------
// FixtureRegistry

void FixtureRegistry::plant_labels(const Image& image, std::vector<std::string> labels) {
    std::scoped_lock lock(m_mutex);
    m_labels[image_fingerprint(image)] = std::move(labels);
}

void FixtureRegistry::plant_boxes(const Image& image, std::vector<DetectionBox> boxes) {
    std::scoped_lock lock(m_mutex);
    m_boxes[image_fingerprint(image)] = std::move(boxes);
}

void FixtureRegistry::plant_image_embedding(const Image& image, std::vector<double> values) {
    std::scoped_lock lock(m_mutex);
    m_image_embeddings[image_fingerprint(image)] = std::move(values);
}

void FixtureRegistry::plant_text_embedding(std::string text, std::vector<double> values) {
    std::scoped_lock lock(m_mutex);
    m_text_embeddings[std::move(text)] = std::move(values);
}

void FixtureRegistry::plant_completion(std::string user_query, std::string completion) {
    std::scoped_lock lock(m_mutex);
    m_completions[std::move(user_query)] = std::move(completion);
}

namespace {

template <typename Map, typename Key>
auto lookup(std::mutex& mutex, const Map& map, const Key& key) -> std::optional<typename Map::mapped_type> {
    std::scoped_lock lock(mutex);
    auto it = map.find(key);
    if (it == map.end()) {
        return std::nullopt;
    }
    return it->second;
}

}  // namespace

std::optional<std::vector<std::string>> FixtureRegistry::labels(const Image& image) const {
    return lookup(m_mutex, m_labels, image_fingerprint(image));
}

std::optional<std::vector<DetectionBox>> FixtureRegistry::boxes(const Image& image) const {
    return lookup(m_mutex, m_boxes, image_fingerprint(image));
}

std::optional<std::vector<double>> FixtureRegistry::image_embedding(const Image& image) const {
    return lookup(m_mutex, m_image_embeddings, image_fingerprint(image));
}

std::optional<std::vector<double>> FixtureRegistry::text_embedding(std::string_view text) const {
    return lookup(m_mutex, m_text_embeddings, text);
}

std::optional<std::string> FixtureRegistry::completion(std::string_view user_query) const {
    return lookup(m_mutex, m_completions, user_query);
}

// ---------------------------------------------------------------------------
// Segmenter / inpainter

Image MockSegmenter::do_segment(const Image& image) const {
    Image mask(image.width(), image.height(), 1, 1.0);
    if (image.channels() != 4) {
        return mask;
    }
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            mask.at(x, y) = image.at(x, y, 3) >= 0.5 ? 1.0 : 0.0;
        }
    }
    return mask;
}

Image MockInpainter::do_inpaint(const Image& fg_image, const Image& fg_mask, const Image& bg_image,
                                std::string_view /*prompt*/, std::uint64_t /*seed*/) const {
    const Image fg = fg_image.channels() == 3 ? fg_image : to_rgb(fg_image);
    const Image bg = bg_image.channels() == 3 ? bg_image : to_rgb(bg_image);
    Image out(fg.width(), fg.height(), 3);
    for (int y = 0; y < fg.height(); ++y) {
        for (int x = 0; x < fg.width(); ++x) {
            const double m = fg_mask.at(x, y);
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = m * fg.at(x, y, c) + (1.0 - m) * bg.at(x, y, c);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text completer

namespace {

enum class TemplateKind { Layout, Background, Scale, Unknown };

TemplateKind classify(std::string_view system_prompt) {
    if (system_prompt.find("bounding box generator") != std::string_view::npos) {
        return TemplateKind::Layout;
    }
    if (system_prompt.find("scene generator") != std::string_view::npos) {
        return TemplateKind::Background;
    }
    if (system_prompt.find("scale ratio") != std::string_view::npos) {
        return TemplateKind::Scale;
    }
    return TemplateKind::Unknown;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n.");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n.");
    return std::string(s.substr(b, e - b + 1));
}

// "one car, one cat and one dog" or "car, sheep" -> labels.
std::vector<std::string> query_labels(std::string_view query) {
    if (auto colon = query.rfind(':'); colon != std::string_view::npos) {
        query.remove_prefix(colon + 1);
    }
    std::string text(query);
    for (auto pos = text.find(" and "); pos != std::string::npos; pos = text.find(" and ")) {
        text.replace(pos, 5, ",");
    }
    std::vector<std::string> labels;
    std::istringstream parts(text);
    for (std::string part; std::getline(parts, part, ',');) {
        std::string label = trim(part);
        if (label.rfind("one ", 0) == 0) {
            label.erase(0, 4);
        }
        if (!label.empty()) {
            labels.push_back(label);
        }
    }
    return labels;
}

std::pair<int, int> canvas_from(std::string_view system_prompt) {
    static const std::regex size_re(R"(size (\d+)x(\d+))");
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(system_prompt.begin(), system_prompt.end(), m, size_re)) {
        return {std::stoi(m[1].str()), std::stoi(m[2].str())};
    }
    return {512, 512};
}

std::string grid_layout(const std::vector<std::string>& labels, int width, int height, std::uint64_t seed) {
    const int k = std::max<int>(1, static_cast<int>(labels.size()));
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
    const int rows = (k + cols - 1) / cols;
    const int cell_w = width / cols;
    const int cell_h = height / rows;
    Rng rng(seed);
    std::string out = "[";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int col = static_cast<int>(i) % cols;
        const int row = static_cast<int>(i) / cols;
        const int w = cell_w * 8 / 10;
        const int h = cell_h * 8 / 10;
        const int jx = static_cast<int>(rng.uniform_int(-cell_w / 20, cell_w / 20));
        const int jy = static_cast<int>(rng.uniform_int(-cell_h / 20, cell_h / 20));
        const int x = col * cell_w + (cell_w - w) / 2 + jx;
        const int y = row * cell_h + (cell_h - h) / 2 + jy;
        out += fmt::format("{}('{}', [{}, {}, {}, {}])", i == 0 ? "" : ", ", labels[i], x, y, w, h);
    }
    out += "]";
    return out;
}

std::string scale_reply(const std::vector<std::string>& labels) {
    std::vector<std::string> unique;
    for (const auto& l : labels) {
        if (std::ranges::find(unique, l) == unique.end()) {
            unique.push_back(l);
        }
    }
    std::vector<double> raw;
    for (const auto& l : unique) {
        raw.push_back(0.25 + 0.75 * static_cast<double>(fnv1a64(l) % 1000) / 999.0);
    }
    const double top = raw.empty() ? 1.0 : *std::ranges::max_element(raw);
    std::string out;
    for (std::size_t i = 0; i < unique.size(); ++i) {
        const bool is_top = raw[i] == top;
        out += fmt::format("{}{}: {:.2f}", i == 0 ? "" : ", ", unique[i], is_top ? 1.0 : raw[i] / top);
    }
    return out;
}

std::string background_reply(std::string_view query) {
    static constexpr std::array<std::string_view, 8> kScenes = {
        "in the garden", "on the street",  "in the park",      "in the living room",
        "on the beach",  "in the forest",  "in the countryside", "on the grass"};
    Rng rng(fnv1a64(query));
    std::vector<std::string_view> pool(kScenes.begin(), kScenes.end());
    std::string out;
    for (int i = 0; i < 3; ++i) {
        const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(pool.size()) - 1));
        out += (i == 0 ? "" : ",") + std::string(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

}  // namespace

MockTextCompleter::MockTextCompleter(std::shared_ptr<const FixtureRegistry> fixtures)
    : m_fixtures(std::move(fixtures)) {}

std::string MockTextCompleter::do_complete(std::string_view system_prompt, std::string_view /*few_shot_block*/,
                                           std::string_view user_query) const {
    if (m_fixtures) {
        if (auto planted = m_fixtures->completion(user_query)) {
            return *planted;
        }
    }
    const TemplateKind kind = classify(system_prompt);
    const bool reference = trim(user_query) == kReferenceLayoutQuery;
    switch (kind) {
        case TemplateKind::Background:
            return reference ? std::string(kReferenceBackgroundCompletion) : background_reply(user_query);
        case TemplateKind::Scale:
            return scale_reply(query_labels(user_query));
        case TemplateKind::Layout:
            if (reference) {
                return std::string(kReferenceLayoutCompletion);
            }
            [[fallthrough]];
        case TemplateKind::Unknown:
            break;
    }
    const auto [w, h] = canvas_from(system_prompt);
    return grid_layout(query_labels(user_query), w, h, fnv1a64(user_query));
}

// ---------------------------------------------------------------------------
// Captioner

MockCaptioner::MockCaptioner(std::shared_ptr<const FixtureRegistry> fixtures) : m_fixtures(std::move(fixtures)) {}

std::string MockCaptioner::do_caption(const Image& image, std::string_view /*instruction*/) const {
    if (m_fixtures) {
        if (auto labels = m_fixtures->labels(image)) {
            std::string out = "a photo of";
            for (const auto& l : *labels) {
                out += " " + l;
            }
            return out;
        }
    }
    static constexpr std::array<std::string_view, 24> kWords = {
        "a",      "the",     "small",   "bright",  "wooden", "green",   "soft",     "light",
        "near",   "beside",  "sitting", "resting", "on",     "under",   "scene",    "with",
        "object", "colorful", "sunny",  "shadow",  "grass",  "table",   "together", "calm"};
    Rng rng(image_fingerprint(image));
    const auto n = rng.uniform_int(12, 36);
    std::string out = "an image showing";
    for (long long i = 0; i < n; ++i) {
        out += " " + std::string(kWords[static_cast<std::size_t>(rng.uniform_int(0, kWords.size() - 1))]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Detector

MockDetector::MockDetector(std::shared_ptr<const FixtureRegistry> fixtures) : m_fixtures(std::move(fixtures)) {}

std::vector<DetectionBox> MockDetector::do_detect(const Image& image, std::span<const std::string> labels) const {
    if (m_fixtures) {
        if (auto planted = m_fixtures->boxes(image)) {
            std::vector<DetectionBox> out;
            for (const auto& box : *planted) {
                if (std::ranges::find(labels, box.label) != labels.end()) {
                    out.push_back(box);
                }
            }
            return out;
        }
    }
    std::vector<std::string> unique;
    for (const auto& l : labels) {
        if (std::ranges::find(unique, l) == unique.end()) {
            unique.push_back(l);
        }
    }
    const int k = static_cast<int>(unique.size());
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
    const int rows = (k + cols - 1) / cols;
    const double cw = static_cast<double>(image.width()) / cols;
    const double ch = static_cast<double>(image.height()) / rows;
    Rng rng(image_fingerprint(image));
    std::vector<DetectionBox> out;
    for (int i = 0; i < k; ++i) {
        const double x = (i % cols) * cw + 0.1 * cw;
        const double y = (i / cols) * ch + 0.1 * ch;
        out.push_back(DetectionBox{unique[static_cast<std::size_t>(i)], x, y, 0.8 * cw, 0.8 * ch,
                                   0.3 + 0.7 * rng.uniform()});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedder

MockEmbedder::MockEmbedder(std::shared_ptr<const FixtureRegistry> fixtures, std::uint64_t seed)
    : m_fixtures(std::move(fixtures)), m_seed(seed) {}

namespace {

std::vector<double> pseudo_random_vector(std::uint64_t seed, std::size_t dim) {
    Rng rng(seed);
    std::vector<double> v(dim);
    for (double& x : v) {
        x = 2.0 * rng.uniform() - 1.0;
    }
    return v;
}

}  // namespace

std::vector<double> MockEmbedder::do_embed_image(const Image& image) const {
    if (m_fixtures) {
        if (auto planted = m_fixtures->image_embedding(image)) {
            return *planted;
        }
    }
    return pseudo_random_vector(derive_seed(derive_seed(m_seed, "image"), image_fingerprint(image)), kDimension);
}

std::vector<double> MockEmbedder::do_embed_text(std::string_view text) const {
    if (m_fixtures) {
        if (auto planted = m_fixtures->text_embedding(text)) {
            return *planted;
        }
    }
    return pseudo_random_vector(derive_seed(derive_seed(m_seed, "text"), fnv1a64(text)), kDimension);
}

int MockEmbedder::do_count_tokens(std::string_view text) const {
    std::istringstream words{std::string(text)};
    int n = 0;
    for (std::string w; words >> w;) {
        ++n;
    }
    return n + 2;
}

BackendSet make_mock_backends(std::shared_ptr<const FixtureRegistry> fixtures, std::uint64_t seed) {
    BackendSet set;
    set.segmenter = std::make_shared<MockSegmenter>();
    set.inpainter = std::make_shared<MockInpainter>();
    set.text = std::make_shared<MockTextCompleter>(fixtures);
    set.captioner = std::make_shared<MockCaptioner>(fixtures);
    set.detector = std::make_shared<MockDetector>(fixtures);
    set.embedder = std::make_shared<MockEmbedder>(fixtures, seed);
    return set;
}

}  // namespace compogen
