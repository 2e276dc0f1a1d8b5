// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "compogen/curation.hpp"
#include "compogen/error.hpp"
#include "oracles.hpp"

using namespace compogen;

namespace {

Manifest review_manifest(int samples) {
    Manifest m;
    m.concepts = {{"cat", "cat", "<new1>", {"cat.png"}},
                  {"dog", "dog", "<new2>", {"dog.png"}},
                  {"car", "car", "<new3>", {"car.png"}},
                  {"house", "house", "<new4>", {"house.png"}}};
    m.compositions = {{"pets", {"cat", "dog"}, {"in the garden"}, {}, "<pets1>"},
                      {"street", {"car", "cat", "dog", "house"}, {"on the street"}, {}, "<street1>"}};
    for (int i = 0; i < samples; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.composition_id = i % 2 ? "street" : "pets";
        s.fg_image_ref = "fg.png";
        s.fg_mask_ref = "mask.png";
        s.bg_image_ref = "bg.png";
        s.final_image_ref = "final/" + s.id + ".png";
        s.short_caption = "a photo";
        m.samples.push_back(s);
    }
    Sample unfinished;
    unfinished.id = "unfinished";
    unfinished.composition_id = "pets";
    m.samples.push_back(unfinished);
    return m;
}

RankRecord rank(const std::string& sample, int r, const std::string& reviewer = "alice") {
    RankRecord rec;
    rec.sample_id = sample;
    rec.rank = r;
    rec.reviewer_id = reviewer;
    return rec;
}

struct FakeClock {
    std::chrono::system_clock::time_point now{std::chrono::seconds(1'700'000'000)};
    CurationStore::Clock fn() {
        return [this] { return now; };
    }
};

}  // namespace

TEST(EffectiveRank, MatchesCountingOracle) {
    EXPECT_FALSE(effective_rank({}).has_value());
    const std::vector<int> two{4, 5};
    EXPECT_EQ(effective_rank(two), 4);
    const std::vector<int> three{1, 5, 3};
    EXPECT_EQ(effective_rank(three), 3);
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> len(1, 9);
    std::uniform_int_distribution<int> r(1, 5);
    for (int t = 0; t < 500; ++t) {
        std::vector<int> ranks(static_cast<std::size_t>(len(rng)));
        for (auto& x : ranks) {
            x = r(rng);
        }
        EXPECT_EQ(effective_rank(ranks), oracle::median_rank(ranks));
    }
}

TEST(CurationStore, OnlySamplesWithFinalImagesAreQueued) {
    CurationStore store(review_manifest(3));
    EXPECT_EQ(store.item_count(), 3u);
    const auto item = store.item("s1");
    ASSERT_TRUE(item);
    EXPECT_EQ(item->labels, (std::vector<std::string>{"car", "cat", "dog", "house"}));
    EXPECT_EQ(item->concept_count, 4u);
    EXPECT_EQ(item->image_ref, "final/s1.png");
    EXPECT_FALSE(store.item("unfinished"));
}

TEST(CurationStore, QueueHandsOutDistinctItemsAndHonoursLeases) {
    FakeClock clock;
    CurationStore store(review_manifest(3), std::nullopt, std::chrono::seconds(60), clock.fn());
    const auto a = store.next_item("alice");
    const auto b = store.next_item("bob");
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->sample_id, "s0");
    EXPECT_EQ(b->sample_id, "s1");
    // Asking again returns the same leased item.
    EXPECT_EQ(store.next_item("alice")->sample_id, "s0");
    store.submit_rank(rank("s0", 5, "alice"));
    EXPECT_EQ(store.next_item("alice")->sample_id, "s2");
    // Bob's lease on s1 expires, so alice may take it once s2 is done.
    store.submit_rank(rank("s2", 3, "alice"));
    EXPECT_FALSE(store.next_item("alice").has_value());
    clock.now += std::chrono::seconds(61);
    EXPECT_EQ(store.next_item("alice")->sample_id, "s1");
    EXPECT_THROW(store.next_item(""), Error);
}

TEST(CurationStore, SecondReviewerGetsItemsTheyHaveNotRanked) {
    CurationStore store(review_manifest(2));
    store.submit_rank(rank("s0", 2, "alice"));
    store.submit_rank(rank("s1", 4, "alice"));
    EXPECT_FALSE(store.next_item("alice"));
    const auto item = store.next_item("bob");
    ASSERT_TRUE(item);
    EXPECT_EQ(item->status, ReviewStatus::Ranked);
    store.submit_rank(rank("s0", 5, "bob"));
    EXPECT_EQ(store.effective_rank_of("s0"), 3);  // floor((2 + 5) / 2)
    EXPECT_EQ(store.records().size(), 3u);
    EXPECT_EQ(store.ranked_count(), 2u);
}

TEST(CurationStore, RejectsInvalidSubmissions) {
    CurationStore store(review_manifest(1));
    try {
        store.submit_rank(rank("s0", 6));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::Validation);
    }
    try {
        store.submit_rank(rank("nope", 3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NotFound);
    }
    EXPECT_THROW(store.submit_rank(rank("s0", 3, "")), Error);
    EXPECT_EQ(store.ranked_count(), 0u);
}

TEST(CurationStore, JournalIsReplayedOnRestart) {
    const auto dir = oracle::scratch_dir("curation-journal");
    const auto journal = dir / "ranks.jsonl";
    {
        CurationStore store(review_manifest(3), journal);
        RankRecord r = rank("s0", 5);
        r.criteria = {true, true, false};
        store.submit_rank(r);
        store.submit_rank(rank("s1", 2));
        store.submit_rank(rank("s1", 4));  // a reviewer's later rank replaces the earlier one
    }
    CurationStore again(review_manifest(3), journal);
    EXPECT_EQ(again.effective_rank_of("s0"), 5);
    EXPECT_EQ(again.effective_rank_of("s1"), 4);
    EXPECT_FALSE(again.effective_rank_of("s2"));
    const auto records = again.records();
    ASSERT_EQ(records.size(), 2u);
    EXPECT_EQ(records[0].criteria, (ReviewCriteria{true, true, false}));
    EXPECT_FALSE(records[0].timestamp.empty());

    std::ofstream(journal, std::ios::app) << "{broken\n";
    EXPECT_THROW(CurationStore(review_manifest(3), journal), Error);
}

TEST(Finalize, KeepsOnlyHighRanks) {
    Manifest m = review_manifest(5);
    CurationStore store(m);
    const int ranks[] = {1, 4, 5, 3, 4};
    for (int i = 0; i < 5; ++i) {
        store.submit_rank(rank("s" + std::to_string(i), ranks[i]));
    }
    store.apply_ranks(m);
    EXPECT_EQ(m.samples[2].rank, 5);
    FinalizeSummary summary;
    try {
        finalize_dataset(m, false, &summary);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::IncompleteReview);  // "unfinished" has no rank
    }
    const Manifest out = finalize_dataset(m, true, &summary);
    EXPECT_TRUE(out.finalized);
    std::vector<std::string> kept;
    for (const auto& s : out.samples) {
        kept.push_back(s.id);
    }
    EXPECT_EQ(kept, (std::vector<std::string>{"s1", "s2", "s4"}));
    EXPECT_EQ(summary.input_samples, 6u);
    EXPECT_EQ(summary.kept, 3u);
    EXPECT_EQ(summary.dropped, 3u);
    EXPECT_EQ(summary.unranked, 1u);
}

TEST(RankDistribution, ReproducesKnownRows) {
    // Reference rows: counts per rank 1..5 for
    // compositions of <=3, 4 and 5 concepts.
    const auto build = [](std::size_t concepts, std::array<int, 5> counts) {
        std::vector<RankedSample> out;
        for (int r = 0; r < 5; ++r) {
            for (int i = 0; i < counts[static_cast<std::size_t>(r)]; ++i) {
                out.push_back({concepts, r + 1});
            }
        }
        return out;
    };
    auto samples = build(3, {9, 43, 72, 84, 56});
    const auto four = build(4, {16, 53, 112, 54, 32});
    const auto five = build(5, {19, 63, 127, 42, 18});
    samples.insert(samples.end(), four.begin(), four.end());
    samples.insert(samples.end(), five.begin(), five.end());
    const auto rows = rank_distribution(samples);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].group, "<=3");
    EXPECT_EQ(rows[0].counts, (std::array<int, 5>{9, 43, 72, 84, 56}));
    EXPECT_EQ(rows[0].total, 264);
    EXPECT_EQ(rows[0].percentages, (std::array<double, 5>{3.4, 16.3, 27.3, 31.8, 21.2}));
    EXPECT_EQ(rows[2].group, "5");
    EXPECT_EQ(rows[2].percentages, (std::array<double, 5>{7.1, 23.4, 47.2, 15.6, 6.7}));
    // 4 concepts: percentages recomputed from the counts, one decimal, half up.
    EXPECT_EQ(rows[1].total, 267);
    for (std::size_t r = 0; r < 5; ++r) {
        const double exact = 100.0 * rows[1].counts[r] / 267.0;
        EXPECT_NEAR(rows[1].percentages[r], exact, 0.05 + 1e-12);
    }
    const auto j = nlohmann::json::parse(rank_table_to_json(rows));
    EXPECT_EQ(j.at("rows")[0].at("total"), 264);
    EXPECT_THROW(rank_distribution({}), Error);
    const std::vector<RankedSample> bad{{2, 9}};
    EXPECT_THROW(rank_distribution(bad), Error);
}

TEST(RankDistribution, FromStoreUsesEffectiveRanks) {
    CurationStore store(review_manifest(4));
    store.submit_rank(rank("s0", 5));
    store.submit_rank(rank("s1", 2));
    store.submit_rank(rank("s1", 4, "bob"));
    const auto samples = ranked_samples(store);
    ASSERT_EQ(samples.size(), 2u);
    const auto rows = rank_distribution(samples);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].counts[4], 1);
    EXPECT_EQ(rows[1].group, "4");
    EXPECT_EQ(rows[1].counts[2], 1);  // floor((2 + 4) / 2) = 3
}
