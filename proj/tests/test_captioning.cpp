// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>

#include "compogen/captioning.hpp"
#include "compogen/error.hpp"
#include "compogen/mock_backends.hpp"

using namespace compogen;

namespace {

// Replies with the scripted captions in order, repeating the last one.
class ScriptedCaptioner final : public Captioner {
public:
    explicit ScriptedCaptioner(std::vector<std::string> replies) : m_replies(std::move(replies)) {}
    std::string model_id() const override { return "scripted"; }
    mutable std::atomic<int> calls{0};
    mutable std::string last_instruction;

protected:
    std::string do_caption(const Image&, std::string_view instruction) const override {
        last_instruction = std::string(instruction);
        const auto i = static_cast<std::size_t>(calls++);
        return m_replies[std::min(i, m_replies.size() - 1)];
    }

private:
    std::vector<std::string> m_replies;
};

std::string words(int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
        s += (i ? " w" : "w") + std::to_string(i);
    }
    return s;
}

}  // namespace

TEST(ShortCaption, JoinsLabelsNaturally) {
    const std::vector<std::string> one{"cat"};
    const std::vector<std::string> three{"car", "cat", "dog"};
    EXPECT_EQ(join_with_and(one), "cat");
    EXPECT_EQ(join_with_and(three), "car, cat and dog");
    EXPECT_EQ(compose_short_caption(three, "on the street"), "a photo of car, cat and dog on the street");
    EXPECT_EQ(compose_short_caption(one, ""), "a photo of cat");
}

TEST(ShortCaption, UsesManifestLabelsInCompositionOrder) {
    Manifest m;
    m.concepts = {{"c1", "cat", "<new1>", {"a.png"}}, {"d1", "dog", "<new2>", {"b.png"}}};
    m.compositions = {{"pets", {"d1", "c1"}, {"in the garden"}, {}, "<pets1>"}};
    EXPECT_EQ(compose_short_caption(m, m.compositions[0], "in the garden"), "a photo of dog and cat in the garden");
    const auto tc = training_concepts(m, m.compositions[0]);
    ASSERT_EQ(tc.size(), 2u);
    EXPECT_EQ(tc[0].rare_token, "<new2>");
}

TEST(TrainingPrompt, GlobalTokenAndRepetitions) {
    const std::vector<TrainingConcept> c{{"<new1>", "cat"}, {"<new2>", "dog"}};
    const auto p = build_training_prompt("<pets1>", c, "in the garden", 2);
    EXPECT_EQ(p.text,
              "a photo of <pets1> scene with <new1> cat, <new2> dog, <new1> cat and <new2> dog in the garden");
    EXPECT_TRUE(p.uses_global_token);
    EXPECT_EQ(p.concept_repetitions, 2);
    const auto q = build_training_prompt("", c, "", 1, false);
    EXPECT_EQ(q.text, "a photo of <new1> cat and <new2> dog");
    EXPECT_THROW(build_training_prompt("<g>", c, "", 0), Error);
    EXPECT_THROW(build_training_prompt("", c, "", 1, true), Error);
}

TEST(TrainingPrompt, ParseInvertsBuild) {
    const std::vector<TrainingConcept> c{{"<new1>", "cat"}, {"<new2>", "dog"}, {"<new3>", "teddy bear"}};
    for (bool global : {true, false}) {
        for (int reps : {1, 2, 3}) {
            for (std::string bg : {"", "on the sofa", "in the park and the garden"}) {
                const auto p = build_training_prompt("<mix>", c, bg, reps, global);
                const auto parsed = parse_training_prompt(p.text, c);
                EXPECT_EQ(parsed.global_token, global ? "<mix>" : "") << p.text;
                EXPECT_EQ(parsed.rare_tokens.size(), 3u * static_cast<std::size_t>(reps)) << p.text;
                EXPECT_EQ(parsed.rare_tokens.front(), "<new1>");
                EXPECT_EQ(parsed.rare_tokens.back(), "<new3>");
                EXPECT_EQ(parsed.background_clause, bg) << p.text;
            }
        }
    }
    EXPECT_THROW(parse_training_prompt("an image of a cat", c), Error);
    EXPECT_THROW(parse_training_prompt("a photo of <zzz> cat", c), Error);
}

TEST(Recaption, AcceptsAnInBudgetCaptionFirstTime) {
    ScriptedCaptioner cap({words(10)});
    MockEmbedder emb;
    const auto r = recaption_detailed(Image(2, 2, 3), cap, emb);
    EXPECT_EQ(r.attempts, 1);
    EXPECT_FALSE(r.truncated);
    EXPECT_EQ(r.token_count, 12);
    EXPECT_EQ(cap.last_instruction, recaption_instruction());
    EXPECT_FALSE(recaption_instruction().empty());
}

TEST(Recaption, RetriesThenAcceptsShorterCaption) {
    ScriptedCaptioner cap({words(90), words(80), words(20)});
    MockEmbedder emb;
    const auto r = recaption_detailed(Image(2, 2, 3), cap, emb);
    EXPECT_EQ(r.attempts, 3);
    EXPECT_FALSE(r.truncated);
    EXPECT_EQ(r.text, words(20));
}

TEST(Recaption, TruncatesWhenRetriesRunOut) {
    ScriptedCaptioner cap({words(100)});
    MockEmbedder emb;
    RecaptionOptions options;
    options.max_retries = 1;
    const auto r = recaption_detailed(Image(2, 2, 3), cap, emb, options);
    EXPECT_EQ(r.attempts, 2);
    EXPECT_TRUE(r.truncated);
    // Mock token count is words + 2, so 75 words fill a 77-token budget exactly.
    EXPECT_EQ(r.token_count, 77);
    EXPECT_EQ(r.text, words(75));
    EXPECT_EQ(cap.calls.load(), 2);
}

TEST(Recaption, TruncateIsTheLongestFittingPrefix) {
    MockEmbedder emb;
    for (int budget : {3, 10, 50}) {
        const std::string t = truncate_to_budget(words(60), emb, budget);
        EXPECT_EQ(t, words(budget - 2));
        EXPECT_LE(count_tokens(emb, t), budget);
    }
    EXPECT_EQ(truncate_to_budget(words(60), emb, 2), "");
    EXPECT_EQ(count_tokens(emb, ""), 0);
    RecaptionOptions bad;
    bad.token_budget = 0;
    ScriptedCaptioner cap({"x"});
    EXPECT_THROW(recaption_detailed(Image(2, 2, 3), cap, emb, bad), Error);
}
