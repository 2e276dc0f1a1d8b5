// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compogen/dataset.hpp"

namespace compogen {

enum class ReviewStatus { Pending, Ranked };
std::string_view to_string(ReviewStatus status) noexcept;

struct ReviewItem {
    std::string sample_id;
    std::string image_ref;
    std::string short_caption;
    std::vector<std::string> labels;
    std::size_t concept_count = 0;
    ReviewStatus status = ReviewStatus::Pending;
};

struct ReviewCriteria {
    bool concepts_present = false;
    bool placement_reasonable = false;
    bool artifact_free = false;
    bool operator==(const ReviewCriteria&) const = default;
};

struct RankRecord {
    std::string sample_id;
    int rank = 0;
    ReviewCriteria criteria;
    std::string reviewer_id;
    std::string timestamp;  // ISO-8601 UTC
    bool operator==(const RankRecord&) const = default;
};

inline constexpr int kMinRank = 1;
inline constexpr int kMaxRank = 5;
/// Samples at or above this effective rank enter the final dataset.
inline constexpr int kKeepRank = 4;

/// Median of the ranks; with an even count the lower middle pair is averaged
/// and rounded down. Empty input has no effective rank.
std::optional<int> effective_rank(std::span<const int> ranks);

/// Thread-safe review queue over a manifest snapshot. Records are appended to
/// a JSONL journal (when a path is given) and replayed on construction.
class CurationStore {
public:
    using Clock = std::function<std::chrono::system_clock::time_point()>;

    CurationStore(const Manifest& manifest, std::optional<std::filesystem::path> journal = std::nullopt,
                  std::chrono::seconds lease_timeout = std::chrono::seconds(300), Clock clock = {});

    /// Next item for this reviewer: one it already leases, else the first
    /// unranked item nobody else leases, else an item other reviewers ranked
    /// but this reviewer has not. Leases the returned item.
    std::optional<ReviewItem> next_item(const std::string& reviewer_id);

    /// Throws ValidationError for a rank outside 1..5 or an empty reviewer,
    /// NotFound for an unknown sample. The latest record per reviewer wins.
    void submit_rank(RankRecord record);

    std::optional<int> effective_rank_of(const std::string& sample_id) const;
    std::map<std::string, int> effective_ranks() const;
    std::vector<RankRecord> records() const;
    std::size_t item_count() const;
    std::size_t ranked_count() const;
    std::optional<ReviewItem> item(const std::string& sample_id) const;

    /// Writes effective ranks into the manifest's samples.
    void apply_ranks(Manifest& manifest) const;

private:
    void record_locked(RankRecord record, bool persist);
    ReviewItem snapshot_locked(std::size_t index) const;

    struct Lease {
        std::string reviewer_id;
        std::chrono::system_clock::time_point expires;
    };

    mutable std::mutex m_mutex;
    std::vector<ReviewItem> m_items;
    std::map<std::string, std::size_t> m_index;
    std::map<std::string, std::map<std::string, RankRecord>> m_records;  // sample -> reviewer -> record
    std::map<std::string, Lease> m_leases;
    std::optional<std::filesystem::path> m_journal;
    std::chrono::seconds m_lease_timeout;
    Clock m_clock;
};

struct FinalizeSummary {
    std::size_t input_samples = 0;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::size_t unranked = 0;
};

/// Keeps the samples whose rank is 4 or 5 and marks the manifest finalized.
/// Unranked samples raise IncompleteReview unless `force`, which drops them.
Manifest finalize_dataset(const Manifest& manifest, bool force = false, FinalizeSummary* summary = nullptr);

struct RankedSample {
    std::size_t concept_count = 0;
    int rank = 0;
};

struct RankRow {
    std::string group;
    std::array<int, 5> counts{};
    int total = 0;
    std::array<double, 5> percentages{};  // one decimal
};

/// Rows "<=3", "4", "5", ... with rank counts and percentages rounded to one
/// decimal. Throws EmptyReportSet for no input.
std::vector<RankRow> rank_distribution(std::span<const RankedSample> samples);

/// Effective ranks of the store's items grouped by concept count.
std::vector<RankedSample> ranked_samples(const CurationStore& store);

std::string rank_table_to_json(std::span<const RankRow> rows);

}  // namespace compogen
