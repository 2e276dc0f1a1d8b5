// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compogen/backends.hpp"
#include "compogen/dataset.hpp"

namespace compogen {

struct BoundingBox {
    std::string concept_id;
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double center_x() const noexcept { return x + w / 2.0; }
    double center_y() const noexcept { return y + h / 2.0; }
    double area() const noexcept { return w > 0.0 && h > 0.0 ? w * h : 0.0; }
    bool operator==(const BoundingBox&) const = default;
};

/// Intersection over union of two boxes (0 when either is degenerate).
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

enum class LayoutSource { Llm, Fallback, Repaired };
std::string_view to_string(LayoutSource source) noexcept;

struct Layout {
    std::string composition_id;
    Canvas canvas;
    std::vector<BoundingBox> boxes;
    LayoutSource source = LayoutSource::Llm;
    bool operator==(const Layout&) const = default;
};

/// A concept as the layout stage sees it, in composition order.
struct LabeledConcept {
    std::string id;
    std::string label;
};

std::vector<LabeledConcept> labeled_concepts(const Manifest& manifest, const Composition& composition);

/// The three parts sent to the chat model.
struct LlmPrompt {
    std::string system_prompt;
    std::string few_shot_block;
    std::string user_query;
};

/// "one car, one cat, one dog and one house".
std::string object_query(std::span<const LabeledConcept> concepts);

LlmPrompt build_layout_prompt(std::span<const LabeledConcept> concepts, Canvas canvas);

/// Parses the "[('name', [x, y, w, h]), ...]" tuple list (double-quoted and
/// bracketed tuples are accepted too), ignoring surrounding prose. Names map to
/// the first unmatched concept with that label, in composition order; surplus
/// tuples for a fully matched label are dropped.
/// Throws LayoutParseError (with offset), UnknownObject, IncompleteLayout.
Layout parse_layout_response(std::string_view text, std::string_view composition_id,
                             std::span<const LabeledConcept> concepts, Canvas canvas);

struct RepairOptions {
    double iou_threshold = 0.05;
    /// Smallest uniform shrink factor tried before giving up on the LLM layout.
    double min_shrink = 0.1;
    int max_iterations = 60;
    double min_box_side = 1.0;
    std::uint64_t fallback_seed = 0;
};

/// True when every box is non-degenerate, inside the canvas, and all pairs have
/// IoU <= threshold.
bool layout_is_valid(const Layout& layout, double iou_threshold);

/// Rescales the whole layout uniformly when its coordinates exceed the canvas
/// (the model's coordinate frame is taken as the largest coordinate it used).
/// Relative geometry is preserved.
Layout normalize_coordinate_frame(const Layout& layout);

/// Always returns a valid layout: frame normalization, per-box clamping
/// (aspect-preserving), then the largest uniform shrink about box centers that
/// satisfies the IoU bound. Falls back to the grid layout when that fails.
Layout validate_and_repair_layout(const Layout& layout, const RepairOptions& options = {});

/// k boxes on a ceil(sqrt(k))-column grid, each 80% of its cell, with seeded
/// jitter of at most 5% of the cell size. Pure function of its arguments.
Layout fallback_layout(std::string_view composition_id, std::span<const std::string> concept_ids, Canvas canvas,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Scale correction

struct ScaleRatioSet {
    std::map<std::string, double> ratios;  // concept id -> (0, 1]
};

LlmPrompt build_scale_prompt(std::span<const LabeledConcept> concepts);

/// Parses "car: 1.0, sheep: 0.2". The result is normalized so the largest
/// ratio is exactly 1.0. Throws IncompleteScales or ScaleOutOfRange.
ScaleRatioSet parse_scale_response(std::string_view text, std::span<const LabeledConcept> concepts);

/// Scales every box about its center so its largest side becomes
/// ratio * (largest side in the layout). Aspect ratios are kept. No repair.
Layout rescale_to_ratios(const Layout& layout, const ScaleRatioSet& ratios);

/// rescale_to_ratios followed by validate_and_repair_layout.
Layout apply_scale_ratios(const Layout& layout, const ScaleRatioSet& ratios, const RepairOptions& options = {});

// ---------------------------------------------------------------------------
// Background prompts

struct BackgroundPromptSet {
    std::string composition_id;
    std::vector<std::string> prompts;
};

LlmPrompt build_background_prompt(std::span<const LabeledConcept> concepts);

/// Splits the comma-separated background line. Entries that do not start with
/// a locative preposition are dropped. Throws BackgroundParseError when
/// nothing usable remains.
BackgroundPromptSet parse_background_response(std::string_view text, std::string_view composition_id = {});

// ---------------------------------------------------------------------------
// Persistence

std::string serialize_layout(const Layout& layout);
Layout parse_layout_json(std::string_view text);

std::string_view prompt_template_version() noexcept;

}  // namespace compogen
