// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compogen/backends.hpp"
#include "compogen/image.hpp"

namespace compogen {

/// A concept as the metric sees it: detector label plus embeddings of its
/// reference images (unit norm).
struct EvalConcept {
    std::string id;
    std::string label;
    std::vector<EmbeddingVector> references;
};

struct EvalRequest {
    Image generated_image;
    std::vector<EvalConcept> concepts;  // composition order
    std::string eval_prompt;
    std::string background_prompt;
};

struct MetricOptions {
    double detector_threshold = 0.1;
    /// Only let a box be assigned to concepts sharing its detector label.
    bool restrict_to_label = false;
    /// Also score the image against the full evaluation prompt.
    bool score_full_prompt = false;
};

/// CP-CLIP at or above this is read as a good personalization score.
inline constexpr double kGoodCpClip = 0.5;

struct ObjectAssignment {
    DetectionBox box;
    std::size_t box_index = 0;
    std::string assigned_concept;
    double score = 0.0;  // S_i
    std::map<std::string, double> per_concept_scores;  // S_{i,j}
};

struct MetricReport {
    double cp_clip = 0.0;
    double ti_clip = 0.0;
    std::optional<double> ti_clip_full_prompt;
    std::vector<ObjectAssignment> assignments;  // after dedup, ordered by box index
    std::vector<std::string> missing_concepts;
    std::size_t boxes_raw_count = 0;
    std::size_t object_count = 0;
    bool good_personalization = false;
};

/// Queries the detector with the concept labels (deduplicated, in order) and
/// drops boxes below the threshold.
std::vector<DetectionBox> detect_boxes(const Image& image, std::span<const EvalConcept> concepts,
                                       const Detector& detector, double threshold);

/// Mean dot product of a crop embedding with the concept's references.
/// Throws PreconditionError for an empty reference set.
double score_box(const EmbeddingVector& crop, std::span<const EmbeddingVector> references);

/// scores[i][j] = S_{i,j} for box i and concept j. `allowed`, when given, has
/// the same shape and masks out pairs; a box with no allowed concept stays
/// unassigned. Each box goes to its argmax concept (ties to the earlier
/// concept); per concept only the best box survives (ties to the lower index).
std::vector<ObjectAssignment> assign_and_dedup(std::span<const DetectionBox> boxes,
                                               const std::vector<std::vector<double>>& scores,
                                               std::span<const std::string> concept_ids,
                                               const std::vector<std::vector<bool>>* allowed = nullptr);

/// Sum of surviving S_i divided by the number of concepts in the composition.
double cp_clip(std::span<const ObjectAssignment> assignments, std::size_t object_count);

double ti_clip(const Image& image, std::string_view prompt, const Embedder& embedder);

MetricReport evaluate_sample(const EvalRequest& request, const Detector& detector, const Embedder& embedder,
                             const MetricOptions& options = {});

// ---------------------------------------------------------------------------
// Aggregation

/// "<=3", "4", "5", ... by number of concepts.
std::string object_count_group(std::size_t object_count);

struct TaggedReport {
    std::string method;
    std::string composition_id;
    MetricReport report;
};

struct GroupStats {
    double mean_cp_clip = 0.0;
    double mean_ti_clip = 0.0;
    std::size_t count = 0;
};

struct AggregateTable {
    std::vector<std::string> groups;  // ordered: "<=3", "4", "5", ...
    struct Row {
        std::string method;
        std::map<std::string, GroupStats> cells;
    };
    std::vector<Row> rows;  // in order of first appearance
};

/// Throws EmptyReportSet for no input.
AggregateTable aggregate_reports(std::span<const TaggedReport> reports);

std::string report_to_json(std::span<const TaggedReport> reports, const AggregateTable& table);
std::string table_to_csv(const AggregateTable& table);

}  // namespace compogen
