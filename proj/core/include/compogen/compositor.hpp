// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compogen/backends.hpp"
#include "compogen/dataset.hpp"
#include "compogen/image.hpp"
#include "compogen/layout.hpp"

namespace compogen {

/// A segmented object ready for placement.
struct ForegroundAsset {
    std::string concept_id;
    std::string source_image_ref;
    Image cutout;  // RGBA, alpha = mask
    Image mask;    // single channel, binary
    PixelRect tight_bbox;
};

/// Runs the segmenter, thresholds its mask at 0.5 and cuts the object out.
/// Throws EmptySegmentation when nothing survives the threshold.
ForegroundAsset extract_asset(const Image& concept_image, const Segmenter& segmenter, std::string concept_id = {},
                              std::string source_image_ref = {});

/// Smallest rect holding every mask pixel > 0 (empty rect for an all-zero mask).
PixelRect tight_bbox(const Image& mask);

struct CompositeCanvas {
    Image fg_image;  // RGB
    Image fg_mask;   // single channel
    std::string layout_ref;
};

/// Pixel rect a box may paint into: the integer pixels fully covered by the
/// box, clipped to the canvas.
PixelRect inner_rect(const BoundingBox& box, Canvas canvas);

/// Scales each asset (tight crop, aspect preserved) to fit inside its box,
/// centers it and pastes in layout order, later over earlier. Assets are
/// matched to boxes by position and must carry the box's concept id.
CompositeCanvas place_foregrounds(std::span<const ForegroundAsset> assets, const Layout& layout);

struct SoftMask {
    Image values;
    int window = 5;
};

/// window x window box filter with replicate-edge padding. Even or
/// non-positive windows throw PreconditionError.
SoftMask smooth_mask(const Image& mask, int window = 5);

// ---------------------------------------------------------------------------
// Background library

struct BackgroundEntry {
    std::string id;
    std::filesystem::path path;  // absolute, resolved against the index
    std::vector<std::string> tags;
};

struct BackgroundLibrary {
    std::vector<BackgroundEntry> entries;
};

/// Reads {"entries": [{"id", "path", "tags"}]}; paths are relative to the
/// index file.
BackgroundLibrary load_background_library(const std::filesystem::path& index_file);

/// Number of tags whose words all occur in the prompt (case-insensitive).
int keyword_overlap(std::string_view prompt, std::span<const std::string> tags);

/// Highest overlap, ties to the smaller id. Throws NoBackgroundAvailable for
/// an empty library.
const BackgroundEntry& select_background(std::string_view prompt, const BackgroundLibrary& library);

/// Resizes a background to the canvas and drops alpha.
Image fit_background(const Image& background, Canvas canvas);

/// One inpainting call: I = f(I_fg, M, I_bg). All inputs must share the
/// canvas size.
Image repaint(const CompositeCanvas& canvas, const SoftMask& soft_mask, const Image& bg_image,
              std::string_view prompt, const Inpainter& inpainter, std::uint64_t seed);

}  // namespace compogen
