// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/metrics.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "compogen/error.hpp"

namespace compogen {

std::vector<DetectionBox> detect_boxes(const Image& image, std::span<const EvalConcept> concepts,
                                       const Detector& detector, double threshold) {
    std::vector<std::string> labels;
    for (const auto& c : concepts) {
        if (std::ranges::find(labels, c.label) == labels.end()) {
            labels.push_back(c.label);
        }
    }
    std::vector<DetectionBox> boxes = detector.detect_objects(image, labels);
    std::erase_if(boxes, [threshold](const DetectionBox& b) { return b.confidence < threshold; });
    return boxes;
}

double score_box(const EmbeddingVector& crop, std::span<const EmbeddingVector> references) {
    if (references.empty()) {
        throw Error(Errc::Precondition, "concept has no reference embeddings");
    }
    double sum = 0.0;
    for (const auto& ref : references) {
        sum += dot(crop, ref);
    }
    return sum / static_cast<double>(references.size());
}

std::vector<ObjectAssignment> assign_and_dedup(std::span<const DetectionBox> boxes,
                                               const std::vector<std::vector<double>>& scores,
                                               std::span<const std::string> concept_ids,
                                               const std::vector<std::vector<bool>>* allowed) {
    if (scores.size() != boxes.size()) {
        throw Error(Errc::Precondition, "one score row per box is required");
    }
    std::map<std::string, ObjectAssignment> best;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (scores[i].size() != concept_ids.size()) {
            throw Error(Errc::Precondition, "score row size differs from the concept count");
        }
        std::optional<std::size_t> arg;
        for (std::size_t j = 0; j < concept_ids.size(); ++j) {
            if (allowed && !(*allowed)[i][j]) {
                continue;
            }
            if (!arg || scores[i][j] > scores[i][*arg]) {
                arg = j;
            }
        }
        if (!arg) {
            continue;
        }
        ObjectAssignment a;
        a.box = boxes[i];
        a.box_index = i;
        a.assigned_concept = concept_ids[*arg];
        a.score = scores[i][*arg];
        for (std::size_t j = 0; j < concept_ids.size(); ++j) {
            a.per_concept_scores[concept_ids[j]] = scores[i][j];
        }
        auto it = best.find(a.assigned_concept);
        // Boxes arrive in index order, so a strict comparison keeps the lower
        // index on ties.
        if (it == best.end()) {
            best.emplace(a.assigned_concept, std::move(a));
        } else if (a.score > it->second.score) {
            it->second = std::move(a);
        }
    }
    std::vector<ObjectAssignment> out;
    for (auto& [id, a] : best) {
        out.push_back(std::move(a));
    }
    std::ranges::sort(out, {}, &ObjectAssignment::box_index);
    return out;
}

double cp_clip(std::span<const ObjectAssignment> assignments, std::size_t object_count) {
    if (object_count == 0) {
        throw Error(Errc::Precondition, "composition has no objects");
    }
    double sum = 0.0;
    for (const auto& a : assignments) {
        sum += a.score;
    }
    return sum / static_cast<double>(object_count);
}

double ti_clip(const Image& image, std::string_view prompt, const Embedder& embedder) {
    return dot(embedder.embed_image(image), embedder.embed_text(prompt));
}

MetricReport evaluate_sample(const EvalRequest& request, const Detector& detector, const Embedder& embedder,
                             const MetricOptions& options) {
    if (request.concepts.empty()) {
        throw Error(Errc::Precondition, "evaluation request has no concepts");
    }
    if (request.eval_prompt.empty() && request.background_prompt.empty()) {
        throw Error(Errc::Precondition, "evaluation request has no prompt");
    }
    MetricReport report;
    report.object_count = request.concepts.size();

    const auto boxes = detect_boxes(request.generated_image, request.concepts, detector, options.detector_threshold);
    report.boxes_raw_count = boxes.size();

    std::vector<std::string> ids;
    for (const auto& c : request.concepts) {
        ids.push_back(c.id);
    }
    std::vector<DetectionBox> kept;
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<bool>> allowed;
    for (const auto& box : boxes) {
        const PixelRect rect = crop_rect(box, request.generated_image.width(), request.generated_image.height());
        if (rect.empty()) {
            continue;
        }
        const EmbeddingVector crop_embedding = embedder.embed_image(crop(request.generated_image, rect));
        std::vector<double> row;
        std::vector<bool> mask;
        for (const auto& c : request.concepts) {
            row.push_back(score_box(crop_embedding, c.references));
            mask.push_back(c.label == box.label);
        }
        kept.push_back(box);
        scores.push_back(std::move(row));
        allowed.push_back(std::move(mask));
    }
    report.assignments = assign_and_dedup(kept, scores, ids, options.restrict_to_label ? &allowed : nullptr);
    report.cp_clip = cp_clip(report.assignments, report.object_count);

    std::set<std::string> seen;
    for (const auto& a : report.assignments) {
        seen.insert(a.assigned_concept);
    }
    for (const auto& id : ids) {
        if (!seen.contains(id)) {
            report.missing_concepts.push_back(id);
        }
    }

    const std::string& bg_prompt = request.background_prompt.empty() ? request.eval_prompt : request.background_prompt;
    report.ti_clip = ti_clip(request.generated_image, bg_prompt, embedder);
    if (options.score_full_prompt && !request.eval_prompt.empty()) {
        report.ti_clip_full_prompt = ti_clip(request.generated_image, request.eval_prompt, embedder);
    }
    report.good_personalization = report.cp_clip >= kGoodCpClip;
    return report;
}

// ---------------------------------------------------------------------------
// Aggregation

std::string object_count_group(std::size_t object_count) {
    return object_count <= 3 ? std::string("<=3") : std::to_string(object_count);
}

namespace {

// "<=3" sorts first, then numeric groups by value.
int group_order(const std::string& g) { return g == "<=3" ? 0 : std::stoi(g); }

}  // namespace

AggregateTable aggregate_reports(std::span<const TaggedReport> reports) {
    if (reports.empty()) {
        throw Error(Errc::EmptyReportSet, "no metric reports to aggregate");
    }
    AggregateTable table;
    std::set<std::string> groups;
    struct Sum {
        double cp = 0.0;
        double ti = 0.0;
        std::size_t n = 0;
    };
    std::vector<std::map<std::string, Sum>> sums;
    for (const auto& r : reports) {
        const std::string group = object_count_group(r.report.object_count);
        groups.insert(group);
        auto row = std::ranges::find(table.rows, r.method, &AggregateTable::Row::method);
        if (row == table.rows.end()) {
            table.rows.push_back({r.method, {}});
            sums.emplace_back();
            row = table.rows.end() - 1;
        }
        Sum& s = sums[static_cast<std::size_t>(row - table.rows.begin())][group];
        s.cp += r.report.cp_clip;
        s.ti += r.report.ti_clip;
        ++s.n;
    }
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (const auto& [group, s] : sums[i]) {
            table.rows[i].cells[group] = GroupStats{s.cp / static_cast<double>(s.n), s.ti / static_cast<double>(s.n), s.n};
        }
    }
    table.groups.assign(groups.begin(), groups.end());
    std::ranges::sort(table.groups, {}, group_order);
    return table;
}

std::string report_to_json(std::span<const TaggedReport> reports, const AggregateTable& table) {
    nlohmann::ordered_json j;
    j["groups"] = table.groups;
    j["good_cp_clip_threshold"] = kGoodCpClip;
    j["table"] = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json r;
        r["method"] = row.method;
        for (const auto& g : table.groups) {
            auto it = row.cells.find(g);
            if (it == row.cells.end()) {
                r[g] = nullptr;
            } else {
                r[g] = {{"cp_clip", it->second.mean_cp_clip},
                        {"ti_clip", it->second.mean_ti_clip},
                        {"count", it->second.count}};
            }
        }
        j["table"].push_back(std::move(r));
    }
    j["samples"] = nlohmann::ordered_json::array();
    for (const auto& t : reports) {
        nlohmann::ordered_json s;
        s["method"] = t.method;
        s["composition_id"] = t.composition_id;
        s["object_count"] = t.report.object_count;
        s["cp_clip"] = t.report.cp_clip;
        s["ti_clip"] = t.report.ti_clip;
        if (t.report.ti_clip_full_prompt) {
            s["ti_clip_full_prompt"] = *t.report.ti_clip_full_prompt;
        }
        s["good_personalization"] = t.report.good_personalization;
        s["boxes_raw_count"] = t.report.boxes_raw_count;
        s["missing_concepts"] = t.report.missing_concepts;
        s["assignments"] = nlohmann::ordered_json::array();
        for (const auto& a : t.report.assignments) {
            s["assignments"].push_back({{"box_index", a.box_index},
                                        {"label", a.box.label},
                                        {"box", {a.box.x, a.box.y, a.box.w, a.box.h}},
                                        {"confidence", a.box.confidence},
                                        {"concept_id", a.assigned_concept},
                                        {"score", a.score},
                                        {"per_concept_scores", a.per_concept_scores}});
        }
        j["samples"].push_back(std::move(s));
    }
    return j.dump(2) + "\n";
}

std::string table_to_csv(const AggregateTable& table) {
    std::string out = "method";
    for (const auto& g : table.groups) {
        out += fmt::format(",{0} cp_clip,{0} ti_clip,{0} n", g);
    }
    out += "\n";
    for (const auto& row : table.rows) {
        out += row.method;
        for (const auto& g : table.groups) {
            auto it = row.cells.find(g);
            if (it == row.cells.end()) {
                out += ",,,0";
            } else {
                out += fmt::format(",{:.4f},{:.4f},{}", it->second.mean_cp_clip, it->second.mean_ti_clip,
                                   it->second.count);
            }
        }
        out += "\n";
    }
    return out;
}

}  // namespace compogen
