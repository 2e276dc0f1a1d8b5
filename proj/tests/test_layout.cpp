// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "compogen/error.hpp"
#include "compogen/layout.hpp"
#include "compogen/mock_backends.hpp"
#include "oracles.hpp"

using namespace compogen;

namespace {

const std::vector<LabeledConcept> kStreet{{"car", "car"}, {"cat", "cat"}, {"dog", "dog"}, {"house", "house"}};

// Point-sampling IoU has O(1/n) error; 64x64 keeps it well under this slack.
constexpr double kRasterIouSlack = 0.02;

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no compogen::Error thrown";
    return Errc::Precondition;
}

oracle::Rect rect(const BoundingBox& b) { return {b.x, b.y, b.w, b.h}; }

void expect_valid_by_oracle(const Layout& layout, double threshold) {
    for (const auto& b : layout.boxes) {
        EXPECT_GT(b.w, 0.0);
        EXPECT_GT(b.h, 0.0);
        EXPECT_GE(b.x, 0.0) << b.concept_id;
        EXPECT_GE(b.y, 0.0) << b.concept_id;
        EXPECT_LE(b.x + b.w, layout.canvas.width) << b.concept_id;
        EXPECT_LE(b.y + b.h, layout.canvas.height) << b.concept_id;
    }
    for (std::size_t i = 0; i < layout.boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < layout.boxes.size(); ++j) {
            EXPECT_LE(oracle::raster_iou(rect(layout.boxes[i]), rect(layout.boxes[j])), threshold + kRasterIouSlack)
                << layout.boxes[i].concept_id << " vs " << layout.boxes[j].concept_id;
        }
    }
}

}  // namespace

TEST(Iou, MatchesAnalyticValuesAndRasterOracle) {
    const BoundingBox a{"a", 0, 0, 10, 10};
    const BoundingBox b{"b", 5, 0, 10, 10};
    EXPECT_DOUBLE_EQ(iou(a, b), 50.0 / 150.0);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, BoundingBox{"c", 10, 0, 5, 5}), 0.0);
    EXPECT_DOUBLE_EQ(iou(a, BoundingBox{"d", 0, 0, 0, 0}), 0.0);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(0, 100);
    std::uniform_real_distribution<double> size(1, 60);
    for (int t = 0; t < 200; ++t) {
        const BoundingBox p{"p", pos(rng), pos(rng), size(rng), size(rng)};
        const BoundingBox q{"q", pos(rng), pos(rng), size(rng), size(rng)};
        EXPECT_NEAR(iou(p, q), oracle::raster_iou(rect(p), rect(q), 256), 0.02);
        EXPECT_DOUBLE_EQ(iou(p, q), iou(q, p));
    }
}

TEST(LayoutPrompt, CarriesCanvasAndObjectQuery) {
    const LlmPrompt p = build_layout_prompt(kStreet, Canvas{640, 480});
    EXPECT_EQ(p.user_query, kReferenceLayoutQuery);
    EXPECT_NE(p.system_prompt.find("640x480"), std::string::npos) << p.system_prompt;
    EXPECT_EQ(p.system_prompt.find("{WIDTH}"), std::string::npos);
    EXPECT_NE(p.system_prompt.find("bounding box generator"), std::string::npos);
    EXPECT_FALSE(p.few_shot_block.empty());
    EXPECT_FALSE(prompt_template_version().empty());
    const std::vector<LabeledConcept> two{{"a", "cup"}, {"b", "lamp"}};
    EXPECT_EQ(object_query(two), "one cup and one lamp");
}

TEST(LayoutParse, ReferenceCompletionYieldsTheFourDocumentedBoxes) {
    const Layout l = parse_layout_response(kReferenceLayoutCompletion, "street", kStreet, Canvas{512, 512});
    ASSERT_EQ(l.boxes.size(), 4u);
    EXPECT_EQ(l.boxes[0], (BoundingBox{"car", 0, 960, 836, 1408}));
    EXPECT_EQ(l.boxes[1], (BoundingBox{"cat", 1364, 1476, 1856, 1864}));
    EXPECT_EQ(l.boxes[2], (BoundingBox{"dog", 280, 1460, 880, 2048}));
    EXPECT_EQ(l.boxes[3], (BoundingBox{"house", 960, 772, 2048, 2016}));
    EXPECT_EQ(l.source, LayoutSource::Llm);
    EXPECT_EQ(l.composition_id, "street");
}

TEST(LayoutParse, AcceptsJsonStyleListsInAnyOrderAndCase) {
    const std::string text =
        "Sure! Objects: [[\"House\", [1, 2, 3, 4]], [\"dog\", [5, 6, 7, 8.5]], [\"cat\", [0,0,1,1]], "
        "[\"car\", [ 9 , 9 , 9 , 9 ]]]";
    const Layout l = parse_layout_response(text, "street", kStreet, Canvas{512, 512});
    ASSERT_EQ(l.boxes.size(), 4u);
    EXPECT_EQ(l.boxes[0].concept_id, "car");
    EXPECT_EQ(l.boxes[3], (BoundingBox{"house", 1, 2, 3, 4}));
    EXPECT_DOUBLE_EQ(l.boxes[2].h, 8.5);
}

TEST(LayoutParse, RepeatedLabelsFillConceptsInOrderAndSurplusIsDropped) {
    const std::vector<LabeledConcept> two_cats{{"tom", "cat"}, {"kit", "cat"}};
    const Layout l = parse_layout_response("[('cat', [0,0,1,1]), ('cat', [2,2,1,1]), ('cat', [4,4,1,1])]", "c",
                                           two_cats, Canvas{8, 8});
    ASSERT_EQ(l.boxes.size(), 2u);
    EXPECT_EQ(l.boxes[0], (BoundingBox{"tom", 0, 0, 1, 1}));
    EXPECT_EQ(l.boxes[1], (BoundingBox{"kit", 2, 2, 1, 1}));
}

TEST(LayoutParse, ErrorsAreTyped) {
    const Canvas c{512, 512};
    EXPECT_EQ(code_of([&] { parse_layout_response("", "s", kStreet, c); }), Errc::LayoutParse);
    EXPECT_EQ(code_of([&] { parse_layout_response("I cannot help with that.", "s", kStreet, c); }),
              Errc::LayoutParse);
    EXPECT_EQ(code_of([&] { parse_layout_response("[('car', [1, 2, 3])]", "s", kStreet, c); }), Errc::LayoutParse);
    EXPECT_EQ(code_of([&] { parse_layout_response("[('car', [1, x, 3, 4])]", "s", kStreet, c); }),
              Errc::LayoutParse);
    EXPECT_EQ(code_of([&] { parse_layout_response("[('sheep', [1, 2, 3, 4])]", "s", kStreet, c); }),
              Errc::UnknownObject);
    EXPECT_EQ(code_of([&] { parse_layout_response("[('car', [1, 2, 3, 4])]", "s", kStreet, c); }),
              Errc::IncompleteLayout);
}

TEST(LayoutRepair, ValidLayoutIsReturnedUnchanged) {
    Layout l{"c", {100, 100}, {{"a", 0, 0, 40, 40}, {"b", 50, 50, 40, 40}}, LayoutSource::Llm};
    EXPECT_EQ(validate_and_repair_layout(l), l);
    EXPECT_TRUE(layout_is_valid(l, 0.05));
}

TEST(LayoutRepair, NormalizesALargerCoordinateFrame) {
    const Layout l = parse_layout_response(kReferenceLayoutCompletion, "street", kStreet, Canvas{512, 512});
    const Layout n = normalize_coordinate_frame(l);
    // Largest coordinate or side is 2048, so everything scales by 512/2048.
    for (std::size_t i = 0; i < l.boxes.size(); ++i) {
        EXPECT_DOUBLE_EQ(n.boxes[i].x, l.boxes[i].x * 0.25);
        EXPECT_DOUBLE_EQ(n.boxes[i].h, l.boxes[i].h * 0.25);
    }
    const Layout small{"c", {100, 100}, {{"a", 10, 10, 20, 20}}, LayoutSource::Llm};
    EXPECT_EQ(normalize_coordinate_frame(small), small);
}

TEST(LayoutRepair, ReferenceLayoutIsRepairedOnA512Canvas) {
    const Layout l = parse_layout_response(kReferenceLayoutCompletion, "street", kStreet, Canvas{512, 512});
    const Layout r = validate_and_repair_layout(l, RepairOptions{});
    EXPECT_EQ(r.source, LayoutSource::Repaired);
    ASSERT_EQ(r.boxes.size(), 4u);
    EXPECT_TRUE(layout_is_valid(r, 0.05));
    expect_valid_by_oracle(r, 0.05);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(r.boxes[i].concept_id, l.boxes[i].concept_id);
        // Shrinking and clamping keep each box's aspect ratio.
        EXPECT_NEAR(r.boxes[i].w / r.boxes[i].h, l.boxes[i].w / l.boxes[i].h, 1e-9);
        // Relative geometry: every center is scaled by the same factor, the one
        // that brings the furthest edge (dog, y + h = 3508) onto the border.
        EXPECT_NEAR(r.boxes[i].center_x(), l.boxes[i].center_x() * 512.0 / 3508.0, 1e-9);
        EXPECT_NEAR(r.boxes[i].center_y(), l.boxes[i].center_y() * 512.0 / 3508.0, 1e-9);
    }
}

TEST(LayoutRepair, RandomLayoutsAlwaysComeOutValid) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> count(1, 6);
    std::uniform_real_distribution<double> pos(-200, 900);
    std::uniform_real_distribution<double> size(-20, 700);
    int repaired = 0;
    int fallback = 0;
    for (int t = 0; t < 300; ++t) {
        Layout l{"c", {512, 384}, {}, LayoutSource::Llm};
        const int k = count(rng);
        for (int i = 0; i < k; ++i) {
            l.boxes.push_back({"o" + std::to_string(i), pos(rng), pos(rng), size(rng), size(rng)});
        }
        RepairOptions options;
        options.fallback_seed = static_cast<std::uint64_t>(t);
        const Layout r = validate_and_repair_layout(l, options);
        ASSERT_EQ(r.boxes.size(), l.boxes.size());
        EXPECT_TRUE(layout_is_valid(r, options.iou_threshold));
        expect_valid_by_oracle(r, options.iou_threshold);
        for (std::size_t i = 0; i < r.boxes.size(); ++i) {
            EXPECT_EQ(r.boxes[i].concept_id, l.boxes[i].concept_id);
        }
        repaired += r.source == LayoutSource::Repaired ? 1 : 0;
        fallback += r.source == LayoutSource::Fallback ? 1 : 0;
    }
    EXPECT_GT(repaired, 0);
    EXPECT_GT(fallback, 0);
}

TEST(LayoutRepair, DegenerateBoxesFallBack) {
    const Layout l{"c", {512, 512}, {{"a", 0, 0, 0, 10}, {"b", 10, 10, 10, 10}}, LayoutSource::Llm};
    EXPECT_EQ(validate_and_repair_layout(l).source, LayoutSource::Fallback);
    EXPECT_EQ(code_of([] { validate_and_repair_layout(Layout{"c", {0, 5}, {}, LayoutSource::Llm}); }),
              Errc::Precondition);
}

TEST(LayoutRepair, IdenticalBoxesCannotBeSeparatedByShrinking) {
    const Layout l{"c", {512, 512}, {{"a", 100, 100, 200, 200}, {"b", 100, 100, 200, 200}}, LayoutSource::Llm};
    const Layout r = validate_and_repair_layout(l);
    EXPECT_EQ(r.source, LayoutSource::Fallback);
    EXPECT_TRUE(layout_is_valid(r, 0.05));
}

TEST(FallbackLayout, GridCellsForFourConcepts) {
    const std::vector<std::string> ids{"a", "b", "c", "d"};
    const Layout l = fallback_layout("comp", ids, Canvas{512, 512}, 7);
    ASSERT_EQ(l.boxes.size(), 4u);
    EXPECT_EQ(l.source, LayoutSource::Fallback);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& b = l.boxes[i];
        EXPECT_EQ(b.concept_id, ids[i]);
        EXPECT_EQ(b.w, 204.0);
        EXPECT_EQ(b.h, 204.0);
        // Centered in its 256-px cell up to a jitter of 256/20 = 12 px.
        const double cell_x = static_cast<double>(i % 2) * 256.0 + 26.0;
        const double cell_y = static_cast<double>(i / 2) * 256.0 + 26.0;
        EXPECT_LE(std::abs(b.x - cell_x), 12.0);
        EXPECT_LE(std::abs(b.y - cell_y), 12.0);
    }
    EXPECT_TRUE(layout_is_valid(l, 0.0));
    EXPECT_EQ(l, fallback_layout("comp", ids, Canvas{512, 512}, 7));
}

TEST(FallbackLayout, SingleConceptIsCentredWithoutJitter) {
    const std::vector<std::string> ids{"a"};
    const Layout l = fallback_layout("comp", ids, Canvas{512, 512}, 99);
    ASSERT_EQ(l.boxes.size(), 1u);
    EXPECT_EQ(l.boxes[0], (BoundingBox{"a", 51, 51, 409, 409}));
}

TEST(ScaleRatios, ParseNormalizesToTheLargest) {
    const std::vector<LabeledConcept> c{{"x", "cup"}, {"y", "lamp"}, {"z", "teddy bear"}};
    const auto s = parse_scale_response("Scale ratios -> cup: 0.5, lamp = 0.25, Teddy Bear: 0.4", c);
    EXPECT_DOUBLE_EQ(s.ratios.at("x"), 1.0);
    EXPECT_DOUBLE_EQ(s.ratios.at("y"), 0.5);
    EXPECT_DOUBLE_EQ(s.ratios.at("z"), 0.8);
    EXPECT_EQ(code_of([&] { parse_scale_response("cup: 0.5, lamp: 0.25", c); }), Errc::IncompleteScales);
    EXPECT_EQ(code_of([&] { parse_scale_response("cup: 1.5, lamp: 0.25, teddy bear: 1", c); }),
              Errc::ScaleOutOfRange);
    const std::vector<LabeledConcept> one{{"x", "cup"}};
    EXPECT_DOUBLE_EQ(parse_scale_response("whatever", one).ratios.at("x"), 1.0);
    const LlmPrompt p = build_scale_prompt(c);
    EXPECT_NE(p.system_prompt.find("scale ratio"), std::string::npos);
    EXPECT_NE(p.user_query.find("teddy bear"), std::string::npos);
}

TEST(ScaleRatios, RescalePreservesAspectAndMatchesRatios) {
    const Layout l{"c",
                   {512, 512},
                   {{"a", 10, 10, 100, 50}, {"b", 200, 200, 60, 120}, {"c", 300, 20, 80, 80}},
                   LayoutSource::Llm};
    ScaleRatioSet s;
    s.ratios = {{"a", 1.0}, {"b", 0.5}, {"c", 0.25}};
    const Layout r = rescale_to_ratios(l, s);
    double largest = 0.0;
    for (const auto& b : r.boxes) {
        largest = std::max({largest, b.w, b.h});
    }
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& before = l.boxes[i];
        const auto& after = r.boxes[i];
        EXPECT_NEAR(after.w / after.h, before.w / before.h, 1e-9);
        EXPECT_NEAR(after.center_x(), before.center_x(), 1e-9);
        EXPECT_NEAR(std::max(after.w, after.h) / largest, s.ratios.at(after.concept_id), 1e-9);
    }
    EXPECT_EQ(code_of([&] { rescale_to_ratios(l, ScaleRatioSet{{{"a", 1.0}}}); }), Errc::IncompleteScales);
}

TEST(BackgroundPrompts, ReferenceCompletionGivesThreeScenes) {
    const auto s = parse_background_response(kReferenceBackgroundCompletion, "street");
    EXPECT_EQ(s.prompts,
              (std::vector<std::string>{"on the street", "in the suburban neighborhood", "in the countryside"}));
    EXPECT_EQ(s.composition_id, "street");
}

TEST(BackgroundPrompts, PicksTheBackgroundLineDropsNonLocativesAndDuplicates) {
    const auto s = parse_background_response(
        "Here you go.\nBackgrounds: \"in the park\", a sunny day, in the park, on the beach.\n", "c");
    EXPECT_EQ(s.prompts, (std::vector<std::string>{"in the park", "on the beach"}));
    EXPECT_EQ(code_of([] { parse_background_response("sunny, bright"); }), Errc::BackgroundParse);
    EXPECT_EQ(code_of([] { parse_background_response("  \n "); }), Errc::BackgroundParse);
    const std::vector<LabeledConcept> two{{"a", "cup"}, {"b", "lamp"}};
    EXPECT_NE(build_background_prompt(two).system_prompt.find("scene generator"), std::string::npos);
}

TEST(LayoutJson, RoundTrip) {
    const Layout l{"c", {640, 480}, {{"a", 1.25, 2, 3, 4}, {"b", 5, 6, 7, 8}}, LayoutSource::Repaired};
    EXPECT_EQ(parse_layout_json(serialize_layout(l)), l);
    EXPECT_EQ(code_of([] { parse_layout_json("{}"); }), Errc::Parse);
}
