// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/compositor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "compogen/error.hpp"

namespace compogen {

PixelRect tight_bbox(const Image& mask) {
    int x0 = mask.width();
    int y0 = mask.height();
    int x1 = -1;
    int y1 = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) > 0.0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        return {};
    }
    return PixelRect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

ForegroundAsset extract_asset(const Image& concept_image, const Segmenter& segmenter, std::string concept_id,
                              std::string source_image_ref) {
    if (concept_image.empty()) {
        throw Error(Errc::Precondition, "concept image is empty");
    }
    const Image soft = segmenter.segment_foreground(concept_image);
    ForegroundAsset asset;
    asset.concept_id = std::move(concept_id);
    asset.source_image_ref = std::move(source_image_ref);
    asset.mask = Image(soft.width(), soft.height(), 1);
    for (std::size_t i = 0; i < soft.data().size(); ++i) {
        asset.mask.data()[i] = soft.data()[i] >= 0.5 ? 1.0 : 0.0;
    }
    asset.tight_bbox = tight_bbox(asset.mask);
    if (asset.tight_bbox.empty()) {
        spdlog::warn("segmentation of {} ({}) is empty; asset rejected", asset.source_image_ref, asset.concept_id);
        throw Error(Errc::EmptySegmentation, "no foreground in " +
                                                 (asset.source_image_ref.empty() ? std::string("image")
                                                                                 : asset.source_image_ref));
    }
    const Image rgb = to_rgb(concept_image);
    asset.cutout = Image(rgb.width(), rgb.height(), 4);
    for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                asset.cutout.at(x, y, c) = rgb.at(x, y, c);
            }
            asset.cutout.at(x, y, 3) = asset.mask.at(x, y);
        }
    }
    return asset;
}

PixelRect inner_rect(const BoundingBox& box, Canvas canvas) {
    const int x0 = std::max(0, static_cast<int>(std::ceil(box.x - 1e-9)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(box.y - 1e-9)));
    const int x1 = std::min(canvas.width, static_cast<int>(std::floor(box.x + box.w + 1e-9)));
    const int y1 = std::min(canvas.height, static_cast<int>(std::floor(box.y + box.h + 1e-9)));
    if (x1 <= x0 || y1 <= y0) {
        return {};
    }
    return PixelRect{x0, y0, x1 - x0, y1 - y0};
}

CompositeCanvas place_foregrounds(std::span<const ForegroundAsset> assets, const Layout& layout) {
    if (assets.size() != layout.boxes.size()) {
        throw Error(Errc::Precondition, std::to_string(assets.size()) + " assets for " +
                                            std::to_string(layout.boxes.size()) + " layout boxes");
    }
    const Canvas canvas = layout.canvas;
    CompositeCanvas out;
    out.fg_image = Image(canvas.width, canvas.height, 3);
    out.fg_mask = Image(canvas.width, canvas.height, 1);

    for (std::size_t i = 0; i < assets.size(); ++i) {
        const ForegroundAsset& asset = assets[i];
        const BoundingBox& box = layout.boxes[i];
        if (asset.concept_id != box.concept_id) {
            throw Error(Errc::Precondition,
                        "asset " + asset.concept_id + " does not match layout box " + box.concept_id);
        }
        if (asset.tight_bbox.empty() || asset.cutout.channels() != 4 || !asset.cutout.same_size(asset.mask)) {
            throw Error(Errc::Precondition, "malformed asset for " + asset.concept_id);
        }
        const PixelRect target = inner_rect(box, canvas);
        if (target.empty()) {
            spdlog::debug("box for {} covers no whole pixel; skipped", box.concept_id);
            continue;
        }
        const PixelRect src = asset.tight_bbox;
        const double scale = std::min(static_cast<double>(target.width) / src.width,
                                      static_cast<double>(target.height) / src.height);
        const int tw = std::clamp(static_cast<int>(std::floor(src.width * scale + 1e-9)), 1, target.width);
        const int th = std::clamp(static_cast<int>(std::floor(src.height * scale + 1e-9)), 1, target.height);
        const int ox = target.x + (target.width - tw) / 2;
        const int oy = target.y + (target.height - th) / 2;

        Image color = crop(asset.cutout, src);
        Image mask = crop(asset.mask, src);
        if (tw != src.width || th != src.height) {
            color = resize(color, tw, th);
            mask = resize(mask, tw, th);
        }
        for (int y = 0; y < th; ++y) {
            for (int x = 0; x < tw; ++x) {
                // Placed masks stay binary so the unsmoothed composite is a
                // true cut-and-paste.
                if (mask.at(x, y) < 0.5) {
                    continue;
                }
                for (int c = 0; c < 3; ++c) {
                    out.fg_image.at(ox + x, oy + y, c) = color.at(x, y, c);
                }
                out.fg_mask.at(ox + x, oy + y) = 1.0;
            }
        }
    }
    return out;
}

SoftMask smooth_mask(const Image& mask, int window) {
    if (window < 1 || window % 2 == 0) {
        throw Error(Errc::Precondition, "smoothing window must be odd and positive, got " + std::to_string(window));
    }
    if (mask.channels() != 1) {
        throw Error(Errc::Precondition, "smooth_mask expects a single-channel mask");
    }
    for (double v : mask.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw Error(Errc::Precondition, "mask values must lie in [0, 1]");
        }
    }
    const int w = mask.width();
    const int h = mask.height();
    const int r = window / 2;
    const double inv = 1.0 / window;

    // Separable: horizontal pass then vertical pass, both replicate-padded.
    Image rows(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (int d = -r; d <= r; ++d) {
                sum += mask.at(std::clamp(x + d, 0, w - 1), y);
            }
            rows.at(x, y) = sum * inv;
        }
    }
    SoftMask out{Image(w, h, 1), window};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (int d = -r; d <= r; ++d) {
                sum += rows.at(x, std::clamp(y + d, 0, h - 1));
            }
            out.values.at(x, y) = std::clamp(sum * inv, 0.0, 1.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Background library

namespace {

std::vector<std::string> lower_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

}  // namespace

BackgroundLibrary load_background_library(const std::filesystem::path& index_file) {
    std::ifstream in(index_file);
    if (!in) {
        throw Error(Errc::Io, "cannot open background index " + index_file.string());
    }
    BackgroundLibrary library;
    try {
        const auto j = nlohmann::json::parse(in);
        const auto base = index_file.parent_path();
        for (const auto& e : j.at("entries")) {
            BackgroundEntry entry;
            entry.id = e.at("id").get<std::string>();
            entry.path = base / e.at("path").get<std::string>();
            entry.tags = e.value("tags", std::vector<std::string>{});
            library.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Config, "background index " + index_file.string() + ": " + e.what());
    }
    return library;
}

int keyword_overlap(std::string_view prompt, std::span<const std::string> tags) {
    const auto words = lower_words(prompt);
    const std::set<std::string> vocabulary(words.begin(), words.end());
    int score = 0;
    for (const auto& tag : tags) {
        const auto tag_words = lower_words(tag);
        if (!tag_words.empty() &&
            std::ranges::all_of(tag_words, [&](const std::string& w) { return vocabulary.contains(w); })) {
            ++score;
        }
    }
    return score;
}

const BackgroundEntry& select_background(std::string_view prompt, const BackgroundLibrary& library) {
    if (library.entries.empty()) {
        throw Error(Errc::NoBackgroundAvailable, "background library is empty");
    }
    const BackgroundEntry* best = nullptr;
    int best_score = -1;
    for (const auto& entry : library.entries) {
        const int score = keyword_overlap(prompt, entry.tags);
        if (score > best_score || (score == best_score && entry.id < best->id)) {
            best = &entry;
            best_score = score;
        }
    }
    return *best;
}

Image fit_background(const Image& background, Canvas canvas) {
    if (background.empty()) {
        throw Error(Errc::Precondition, "background image is empty");
    }
    Image rgb = to_rgb(background);
    if (rgb.width() == canvas.width && rgb.height() == canvas.height) {
        return rgb;
    }
    return resize(rgb, canvas.width, canvas.height);
}

Image repaint(const CompositeCanvas& canvas, const SoftMask& soft_mask, const Image& bg_image,
              std::string_view prompt, const Inpainter& inpainter, std::uint64_t seed) {
    if (!canvas.fg_image.same_size(canvas.fg_mask) || !canvas.fg_image.same_size(soft_mask.values) ||
        !canvas.fg_image.same_size(bg_image)) {
        throw Error(Errc::Precondition, "repaint inputs must share the canvas size");
    }
    return inpainter.inpaint(canvas.fg_image, soft_mask.values, bg_image, prompt, seed);
}

}  // namespace compogen
