// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>

#include <json.hpp>

#include "compogen/error.hpp"
#include "compogen/metrics.hpp"
#include "compogen/mock_backends.hpp"
#include "metric_fixtures.hpp"
#include "oracles.hpp"

using namespace compogen;

namespace {

ObjectAssignment assignment(const std::string& concept_id, double score, std::size_t index = 0) {
    ObjectAssignment a;
    a.assigned_concept = concept_id;
    a.score = score;
    a.box_index = index;
    return a;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(CpClip, DividesByTheCompositionSize) {
    const std::vector<ObjectAssignment> one{assignment("a", 0.6)};
    EXPECT_EQ(cp_clip(one, 2), 0.3);
    EXPECT_EQ(cp_clip({}, 3), 0.0);
    const std::vector<ObjectAssignment> two{assignment("a", 0.5), assignment("b", 0.7, 1)};
    EXPECT_DOUBLE_EQ(cp_clip(two, 2), 0.6);
    EXPECT_THROW(cp_clip(one, 0), Error);
}

TEST(ScoreBox, IsTheMeanDotProductOverReferences) {
    const auto crop = EmbeddingVector::unit({1.0, 0.0});
    const std::vector<EmbeddingVector> refs{EmbeddingVector::unit({1.0, 0.0}), EmbeddingVector::unit({0.0, 1.0})};
    EXPECT_DOUBLE_EQ(score_box(crop, refs), 0.5);
    EXPECT_THROW(score_box(crop, {}), Error);
}

TEST(AssignAndDedup, KeepsTheBestBoxPerConcept) {
    const std::vector<DetectionBox> boxes(4);
    const std::vector<std::vector<double>> scores{{0.2, 0.1}, {0.5, 0.4}, {0.3, 0.9}, {0.5, 0.0}};
    const std::vector<std::string> ids{"a", "b"};
    const auto out = assign_and_dedup(boxes, scores, ids);
    ASSERT_EQ(out.size(), 2u);
    // Box 1 and box 3 tie for "a" at 0.5: the lower index is kept.
    EXPECT_EQ(out[0].box_index, 1u);
    EXPECT_EQ(out[0].assigned_concept, "a");
    EXPECT_EQ(out[1].box_index, 2u);
    EXPECT_DOUBLE_EQ(out[1].score, 0.9);
    EXPECT_DOUBLE_EQ(out[1].per_concept_scores.at("a"), 0.3);
}

TEST(AssignAndDedup, ArgmaxTiesGoToTheFirstConcept) {
    const std::vector<DetectionBox> boxes(1);
    const std::vector<std::vector<double>> scores{{0.4, 0.4}};
    const std::vector<std::string> ids{"a", "b"};
    EXPECT_EQ(assign_and_dedup(boxes, scores, ids)[0].assigned_concept, "a");
}

TEST(AssignAndDedup, LabelRestrictionLimitsCandidates) {
    const std::vector<DetectionBox> boxes(2);
    const std::vector<std::vector<double>> scores{{0.9, 0.1}, {0.2, 0.3}};
    const std::vector<std::vector<bool>> allowed{{false, true}, {false, false}};
    const std::vector<std::string> ids{"a", "b"};
    const auto out = assign_and_dedup(boxes, scores, ids, &allowed);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].assigned_concept, "b");
    EXPECT_DOUBLE_EQ(out[0].score, 0.1);
    EXPECT_THROW(assign_and_dedup(boxes, {{0.1, 0.2}}, ids), Error);
}

TEST(EvaluateSample, MatchesTheBruteForceOracleOnRandomFixtures) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto f = fixtures::make_metric_fixture(seed);
        const auto backends = make_mock_backends(f.registry, 3);
        MetricOptions options;
        options.detector_threshold = f.threshold;
        const MetricReport r = evaluate_sample(f.request, *backends.detector, *backends.embedder, options);
        const double expected = oracle::cp_clip(f.box_embeddings, f.concept_refs);
        ASSERT_NEAR(r.cp_clip, expected, 1e-9) << "seed " << seed;
        EXPECT_EQ(r.boxes_raw_count, f.box_embeddings.size());
        EXPECT_EQ(r.object_count, f.request.concepts.size());
        EXPECT_EQ(r.assignments.size() + r.missing_concepts.size(), f.request.concepts.size());
        EXPECT_EQ(r.good_personalization, r.cp_clip >= kGoodCpClip);
    }
}

TEST(EvaluateSample, AddingAWeakerDuplicateBoxChangesNothing) {
    int trials = 0;
    for (std::uint64_t seed = 100; seed < 160; ++seed) {
        auto f = fixtures::make_metric_fixture(seed);
        const auto backends = make_mock_backends(f.registry, 3);
        const MetricReport before = evaluate_sample(f.request, *backends.detector, *backends.embedder);
        if (before.assignments.empty()) {
            continue;
        }
        const ObjectAssignment& top = before.assignments.front();
        const auto j = static_cast<std::size_t>(std::stoi(top.assigned_concept.substr(1)));
        ASSERT_TRUE(fixtures::plant_weaker_duplicate(f, j, top.score, f.box_embeddings[top.box_index], seed));
        const MetricReport after = evaluate_sample(f.request, *backends.detector, *backends.embedder);
        EXPECT_EQ(after.boxes_raw_count, before.boxes_raw_count + 1);
        EXPECT_TRUE(bit_equal(before.cp_clip, after.cp_clip)) << "seed " << seed;
        ++trials;
    }
    EXPECT_GT(trials, 30);
}

TEST(EvaluateSample, ThresholdAndEmptyDetections) {
    auto registry = std::make_shared<FixtureRegistry>();
    const Image img(32, 32, 3, 0.5);
    registry->plant_boxes(img, {{"cat", 0, 0, 8, 8, 0.05}});
    auto backends = make_mock_backends(registry);
    EvalRequest req;
    req.generated_image = img;
    req.concepts = {{"c", "cat", {EmbeddingVector::unit({1.0, 0.0})}}, {"d", "dog", {EmbeddingVector::unit({0.0, 1.0})}}};
    req.eval_prompt = "a photo of <new1> cat and <new2> dog in the park";
    req.background_prompt = "in the park";
    MetricOptions options;
    options.score_full_prompt = true;
    const MetricReport r = evaluate_sample(req, *backends.detector, *backends.embedder, options);
    EXPECT_EQ(r.cp_clip, 0.0);
    EXPECT_EQ(r.boxes_raw_count, 0u);
    EXPECT_EQ(r.missing_concepts, (std::vector<std::string>{"c", "d"}));
    ASSERT_TRUE(r.ti_clip_full_prompt.has_value());
    EXPECT_DOUBLE_EQ(r.ti_clip, ti_clip(img, "in the park", *backends.embedder));
    EXPECT_DOUBLE_EQ(*r.ti_clip_full_prompt, ti_clip(img, req.eval_prompt, *backends.embedder));
    EXPECT_FALSE(r.good_personalization);
}

TEST(Aggregate, GroupsByObjectCountAndAveragesPerMethod) {
    const auto tagged = [](std::string method, std::size_t objects, double cp, double ti) {
        TaggedReport t;
        t.method = std::move(method);
        t.composition_id = "c";
        t.report.object_count = objects;
        t.report.cp_clip = cp;
        t.report.ti_clip = ti;
        return t;
    };
    const std::vector<TaggedReport> reports{tagged("base", 2, 0.4, 0.2), tagged("base", 3, 0.6, 0.4),
                                            tagged("ours", 5, 0.5, 0.3), tagged("base", 4, 0.1, 0.1),
                                            tagged("ours", 2, 0.7, 0.2)};
    const AggregateTable t = aggregate_reports(reports);
    EXPECT_EQ(t.groups, (std::vector<std::string>{"<=3", "4", "5"}));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].method, "base");
    EXPECT_DOUBLE_EQ(t.rows[0].cells.at("<=3").mean_cp_clip, 0.5);
    EXPECT_DOUBLE_EQ(t.rows[0].cells.at("<=3").mean_ti_clip, 0.3);
    EXPECT_EQ(t.rows[0].cells.at("<=3").count, 2u);
    EXPECT_FALSE(t.rows[0].cells.contains("5"));
    const std::string csv = table_to_csv(t);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "method,<=3 cp_clip,<=3 ti_clip,<=3 n,4 cp_clip,4 ti_clip,4 n,5 cp_clip,5 ti_clip,5 n");
    EXPECT_NE(csv.find("base,0.5000,0.3000,2,0.1000,0.1000,1,,,0"), std::string::npos) << csv;
    const auto j = nlohmann::json::parse(report_to_json(reports, t));
    EXPECT_EQ(j.at("samples").size(), 5u);
    EXPECT_TRUE(j.at("table")[0].at("5").is_null());
    EXPECT_THROW(aggregate_reports({}), Error);
    EXPECT_EQ(object_count_group(1), "<=3");
    EXPECT_EQ(object_count_group(6), "6");
}
