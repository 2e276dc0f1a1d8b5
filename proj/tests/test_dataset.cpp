// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "compogen/dataset.hpp"
#include "compogen/error.hpp"
#include "compogen/image.hpp"
#include "oracles.hpp"

using namespace compogen;

namespace {

Manifest small_manifest() {
    Manifest m;
    m.concepts = {
        {"cat", "cat", "<new1>", {"cat/0.png"}},
        {"dog", "dog", "<new2>", {"dog/0.png", "dog/1.png"}},
    };
    m.compositions = {{"pets", {"cat", "dog"}, {"in the garden"}, {512, 512}, "<pets1>"}};
    return m;
}

bool has_violation(const std::vector<Violation>& vs, ViolationKind kind, const std::string& id) {
    return std::ranges::any_of(vs, [&](const Violation& v) { return v.kind == kind && v.entity_id == id; });
}

}  // namespace

TEST(Manifest, ValidManifestHasNoViolations) {
    EXPECT_TRUE(validate_manifest(small_manifest()).empty());
}

TEST(Manifest, DetectsStructuralViolations) {
    Manifest m = small_manifest();
    m.concepts.push_back({"cat", "cat", "<new3>", {"x.png"}});
    m.concepts.push_back({"cow", "cow", "<new1>", {}});
    m.compositions.push_back({"solo", {"cat"}, {}, {0, 10}, "<new2>"});
    m.compositions.push_back({"twice", {"dog", "dog", "emu"}, {"on a hill"}, {64, 64}, "<twice>"});
    const auto vs = validate_manifest(m);
    EXPECT_TRUE(has_violation(vs, ViolationKind::DuplicateId, "cat"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::NoImages, "cow"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::TooFewConcepts, "solo"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::NoBackgroundPrompts, "solo"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::InvalidCanvas, "solo"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::GlobalTokenCollision, "solo"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::RepeatedConcept, "twice"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::DanglingReference, "twice"));
    EXPECT_TRUE(std::ranges::any_of(vs, [](const Violation& v) { return v.kind == ViolationKind::DuplicateRareToken; }));
    EXPECT_TRUE(std::ranges::is_sorted(vs));
}

TEST(Manifest, DetectsSampleInconsistencies) {
    Manifest m = small_manifest();
    Sample a;
    a.id = "a";
    a.composition_id = "pets";
    a.fg_image_ref = "fg.png";
    a.rank = 6;
    Sample b;
    b.id = "b";
    b.composition_id = "ghost";
    b.short_caption = "";
    m.samples = {a, b};
    const auto vs = validate_manifest(m);
    EXPECT_TRUE(has_violation(vs, ViolationKind::StageInconsistency, "a"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::RankOutOfRange, "a"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::DanglingReference, "b"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::EmptyCaption, "b"));
    EXPECT_TRUE(has_violation(vs, ViolationKind::UnpairedCaption, "b"));
}

TEST(Manifest, ChecksImagesUnderRoot) {
    const auto root = oracle::scratch_dir("dataset-root");
    save_png(Image(4, 4, 4, 1.0), root / "cat/0.png");
    save_png(Image(4, 4, 4, 1.0), root / "dog/0.png");
    std::ofstream(root / "dog/1.png") << "not a png";
    const auto vs = validate_manifest(small_manifest(), root);
    ASSERT_EQ(vs.size(), 1u);
    EXPECT_EQ(vs[0].kind, ViolationKind::UnreadableImage);
    EXPECT_EQ(vs[0].entity_id, "dog");
}

TEST(Manifest, JsonRoundTripPreservesEverything) {
    Manifest m = small_manifest();
    Sample s;
    s.id = "pets-s0000";
    s.composition_id = "pets";
    s.layout_ref = "objects/ab.json";
    s.source_image_refs = {{"cat", "cat/0.png"}, {"dog", "dog/1.png"}};
    s.short_caption = "<new1> cat and <new2> dog in the garden";
    s.short_token_count = 12;
    s.seed = 0xfedcba9876543210ULL;
    s.rank = 4;
    s.backend_versions = {{"segmenter", "mock-1"}};
    s.warnings = {"LayoutFallback: nope"};
    m.samples.push_back(s);
    const Manifest back = parse_manifest(serialize_manifest(m));
    EXPECT_EQ(back, m);
    EXPECT_EQ(serialize_manifest(back), serialize_manifest(m));
}

TEST(Manifest, ParseErrorsNameTheField) {
    try {
        parse_manifest(R"({"schema_version": 1, "concepts": [{"id": "a"}], "compositions": [], "samples": []})");
        FAIL() << "expected a parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::Parse);
        EXPECT_NE(std::string(e.what()).find("category_label"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_manifest("{not json"), Error);
    EXPECT_THROW(parse_manifest(R"({"schema_version": 99, "concepts": [], "compositions": [], "samples": []})"),
                 Error);
}

TEST(Manifest, SaveAndLoad) {
    const auto dir = oracle::scratch_dir("dataset-io");
    save_manifest(small_manifest(), dir / "m.json");
    EXPECT_EQ(load_manifest(dir / "m.json"), small_manifest());
    try {
        load_manifest(dir / "missing.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::Io);
    }
}

TEST(CaptionStats, WordCountSkipsPlaceholderTokens) {
    const std::set<std::string, std::less<>> excluded{"<new1>", "<pets1>"};
    EXPECT_EQ(count_words("a <new1> cat, and <new1>.", excluded), 3);
    EXPECT_EQ(count_words("  <pets1>  ", excluded), 0);
    EXPECT_EQ(count_words("", excluded), 0);
}

TEST(CaptionStats, HistogramMeanAndLongFraction) {
    const auto words = [](int n) {
        std::string s;
        for (int i = 0; i < n; ++i) {
            s += "w ";
        }
        return s;
    };
    const std::vector<std::string> captions{words(1), words(21), words(2), words(25)};
    const StatsReport r = compute_caption_stats(captions);
    EXPECT_EQ(r.caption_count, 4u);
    EXPECT_DOUBLE_EQ(r.mean_words, (1 + 21 + 2 + 25) / 4.0);
    EXPECT_DOUBLE_EQ(r.fraction_over_20, 0.5);
    EXPECT_EQ(r.word_count_histogram.at(21), 1);
    EXPECT_THROW(compute_caption_stats(std::vector<std::string>{}), Error);
}

TEST(CaptionStats, ManifestStatsCountLabelsAndBackgrounds) {
    Manifest m = small_manifest();
    for (int i = 0; i < 3; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.composition_id = "pets";
        s.short_caption = "<new1> cat and <new2> dog " + std::string(i == 2 ? "on the sofa" : "in the garden");
        s.background_prompt_used = i == 2 ? "on the sofa" : "in the garden";
        m.samples.push_back(s);
    }
    const StatsReport r = compute_caption_stats(m);
    EXPECT_EQ(r.caption_count, 3u);
    EXPECT_DOUBLE_EQ(r.mean_words, 6.0);
    ASSERT_EQ(r.background_frequency.size(), 2u);
    EXPECT_EQ(r.background_frequency[0], (std::pair<std::string, int>{"in the garden", 2}));
    EXPECT_EQ(r.label_frequency.size(), 2u);
    EXPECT_EQ(r.label_frequency[0].second, 3);
}
