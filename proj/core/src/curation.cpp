// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/curation.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "compogen/error.hpp"
#include "compogen/metrics.hpp"

namespace compogen {

using json = nlohmann::ordered_json;

std::string_view to_string(ReviewStatus status) noexcept {
    return status == ReviewStatus::Ranked ? "ranked" : "pending";
}

std::optional<int> effective_rank(std::span<const int> ranks) {
    if (ranks.empty()) {
        return std::nullopt;
    }
    std::vector<int> sorted(ranks.begin(), ranks.end());
    std::ranges::sort(sorted);
    const std::size_t n = sorted.size();
    if (n % 2 == 1) {
        return sorted[n / 2];
    }
    return (sorted[n / 2 - 1] + sorted[n / 2]) / 2;  // non-negative, so this floors
}

namespace {

json record_to_json(const RankRecord& r) {
    return json{{"sample_id", r.sample_id},
                {"rank", r.rank},
                {"criteria",
                 {{"concepts_present", r.criteria.concepts_present},
                  {"placement_reasonable", r.criteria.placement_reasonable},
                  {"artifact_free", r.criteria.artifact_free}}},
                {"reviewer_id", r.reviewer_id},
                {"timestamp", r.timestamp}};
}

RankRecord record_from_json(const nlohmann::json& j) {
    RankRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.rank = j.at("rank").get<int>();
    if (j.contains("criteria")) {
        const auto& c = j.at("criteria");
        r.criteria.concepts_present = c.value("concepts_present", false);
        r.criteria.placement_reasonable = c.value("placement_reasonable", false);
        r.criteria.artifact_free = c.value("artifact_free", false);
    }
    r.reviewer_id = j.at("reviewer_id").get<std::string>();
    r.timestamp = j.value("timestamp", std::string{});
    return r;
}

std::string iso_utc(std::chrono::system_clock::time_point t) {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(t)));
}

}  // namespace

CurationStore::CurationStore(const Manifest& manifest, std::optional<std::filesystem::path> journal,
                             std::chrono::seconds lease_timeout, Clock clock)
    : m_journal(std::move(journal)), m_lease_timeout(lease_timeout),
      m_clock(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); })) {
    for (const auto& s : manifest.samples) {
        if (!s.final_image_ref) {
            continue;
        }
        ReviewItem item;
        item.sample_id = s.id;
        item.image_ref = *s.final_image_ref;
        item.short_caption = s.short_caption.value_or("");
        if (const Composition* comp = manifest.find_composition(s.composition_id)) {
            item.concept_count = comp->concept_ids.size();
            for (const auto& cid : comp->concept_ids) {
                const Concept* c = manifest.find_concept(cid);
                item.labels.push_back(c ? c->category_label : cid);
            }
        }
        m_index[item.sample_id] = m_items.size();
        m_items.push_back(std::move(item));
    }
    if (m_journal && std::filesystem::exists(*m_journal)) {
        std::ifstream in(*m_journal);
        int line_no = 0;
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            try {
                RankRecord r = record_from_json(nlohmann::json::parse(line));
                if (m_index.contains(r.sample_id) && r.rank >= kMinRank && r.rank <= kMaxRank) {
                    record_locked(std::move(r), false);
                }
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::Parse, fmt::format("{}:{}: {}", m_journal->string(), line_no, e.what()));
            }
        }
    }
}

ReviewItem CurationStore::snapshot_locked(std::size_t index) const {
    ReviewItem item = m_items[index];
    item.status = m_records.contains(item.sample_id) ? ReviewStatus::Ranked : ReviewStatus::Pending;
    return item;
}

std::optional<ReviewItem> CurationStore::next_item(const std::string& reviewer_id) {
    if (reviewer_id.empty()) {
        throw Error(Errc::Validation, "reviewer id is required");
    }
    std::scoped_lock lock(m_mutex);
    const auto now = m_clock();
    std::erase_if(m_leases, [now](const auto& kv) { return kv.second.expires <= now; });

    const auto ranked_by_me = [&](const std::string& sample) {
        auto it = m_records.find(sample);
        return it != m_records.end() && it->second.contains(reviewer_id);
    };
    const auto leased_by_other = [&](const std::string& sample) {
        auto it = m_leases.find(sample);
        return it != m_leases.end() && it->second.reviewer_id != reviewer_id;
    };
    const auto lease = [&](std::size_t i) {
        m_leases[m_items[i].sample_id] = Lease{reviewer_id, now + m_lease_timeout};
        return snapshot_locked(i);
    };

    for (std::size_t i = 0; i < m_items.size(); ++i) {
        auto it = m_leases.find(m_items[i].sample_id);
        if (it != m_leases.end() && it->second.reviewer_id == reviewer_id && !ranked_by_me(m_items[i].sample_id)) {
            return lease(i);
        }
    }
    for (std::size_t i = 0; i < m_items.size(); ++i) {
        const auto& id = m_items[i].sample_id;
        if (!m_records.contains(id) && !leased_by_other(id)) {
            return lease(i);
        }
    }
    for (std::size_t i = 0; i < m_items.size(); ++i) {
        const auto& id = m_items[i].sample_id;
        if (!ranked_by_me(id) && !leased_by_other(id)) {
            return lease(i);
        }
    }
    return std::nullopt;
}

void CurationStore::submit_rank(RankRecord record) {
    if (record.rank < kMinRank || record.rank > kMaxRank) {
        throw Error(Errc::Validation, "rank must be between 1 and 5, got " + std::to_string(record.rank));
    }
    if (record.reviewer_id.empty()) {
        throw Error(Errc::Validation, "reviewer id is required");
    }
    std::scoped_lock lock(m_mutex);
    if (!m_index.contains(record.sample_id)) {
        throw Error(Errc::NotFound, "unknown sample '" + record.sample_id + "'");
    }
    if (record.timestamp.empty()) {
        record.timestamp = iso_utc(m_clock());
    }
    record_locked(std::move(record), true);
}

void CurationStore::record_locked(RankRecord record, bool persist) {
    if (persist && m_journal) {
        std::ofstream out(*m_journal, std::ios::app);
        if (!out) {
            throw Error(Errc::Io, "cannot append to rank journal " + m_journal->string());
        }
        out << record_to_json(record).dump() << '\n';
        out.flush();
    }
    if (auto it = m_leases.find(record.sample_id); it != m_leases.end() && it->second.reviewer_id == record.reviewer_id) {
        m_leases.erase(it);
    }
    const std::string sample = record.sample_id;
    const std::string reviewer = record.reviewer_id;
    m_records[sample][reviewer] = std::move(record);
}

std::optional<int> CurationStore::effective_rank_of(const std::string& sample_id) const {
    std::scoped_lock lock(m_mutex);
    auto it = m_records.find(sample_id);
    if (it == m_records.end()) {
        return std::nullopt;
    }
    std::vector<int> ranks;
    for (const auto& [reviewer, r] : it->second) {
        ranks.push_back(r.rank);
    }
    return effective_rank(ranks);
}

std::map<std::string, int> CurationStore::effective_ranks() const {
    std::map<std::string, int> out;
    for (const auto& item : m_items) {
        if (auto r = effective_rank_of(item.sample_id)) {
            out[item.sample_id] = *r;
        }
    }
    return out;
}

std::vector<RankRecord> CurationStore::records() const {
    std::scoped_lock lock(m_mutex);
    std::vector<RankRecord> out;
    for (const auto& [sample, by_reviewer] : m_records) {
        for (const auto& [reviewer, r] : by_reviewer) {
            out.push_back(r);
        }
    }
    return out;
}

std::size_t CurationStore::item_count() const {
    std::scoped_lock lock(m_mutex);
    return m_items.size();
}

std::size_t CurationStore::ranked_count() const {
    std::scoped_lock lock(m_mutex);
    return m_records.size();
}

std::optional<ReviewItem> CurationStore::item(const std::string& sample_id) const {
    std::scoped_lock lock(m_mutex);
    auto it = m_index.find(sample_id);
    if (it == m_index.end()) {
        return std::nullopt;
    }
    return snapshot_locked(it->second);
}

void CurationStore::apply_ranks(Manifest& manifest) const {
    const auto ranks = effective_ranks();
    for (auto& s : manifest.samples) {
        if (auto it = ranks.find(s.id); it != ranks.end()) {
            s.rank = it->second;
        }
    }
}

Manifest finalize_dataset(const Manifest& manifest, bool force, FinalizeSummary* summary) {
    FinalizeSummary local;
    local.input_samples = manifest.samples.size();
    for (const auto& s : manifest.samples) {
        if (!s.rank) {
            ++local.unranked;
        }
    }
    if (local.unranked > 0 && !force) {
        throw Error(Errc::IncompleteReview,
                    std::to_string(local.unranked) + " sample(s) have no rank; review them or pass force");
    }
    Manifest out = manifest;
    out.samples.clear();
    for (const auto& s : manifest.samples) {
        if (s.rank && *s.rank >= kKeepRank) {
            out.samples.push_back(s);
        }
    }
    out.finalized = true;
    local.kept = out.samples.size();
    local.dropped = local.input_samples - local.kept;
    spdlog::info("finalize: kept {} of {} samples ({} dropped, {} unranked)", local.kept, local.input_samples,
                 local.dropped, local.unranked);
    if (summary) {
        *summary = local;
    }
    return out;
}

std::vector<RankRow> rank_distribution(std::span<const RankedSample> samples) {
    if (samples.empty()) {
        throw Error(Errc::EmptyReportSet, "no ranked samples");
    }
    std::map<std::string, RankRow> rows;
    for (const auto& s : samples) {
        if (s.rank < kMinRank || s.rank > kMaxRank) {
            throw Error(Errc::Validation, "rank outside 1..5: " + std::to_string(s.rank));
        }
        const std::string group = object_count_group(s.concept_count);
        RankRow& row = rows[group];
        row.group = group;
        ++row.counts[static_cast<std::size_t>(s.rank - 1)];
        ++row.total;
    }
    std::vector<RankRow> out;
    for (auto& [group, row] : rows) {
        for (std::size_t r = 0; r < 5; ++r) {
            row.percentages[r] = std::round(1000.0 * row.counts[r] / row.total) / 10.0;
        }
        out.push_back(row);
    }
    std::ranges::sort(out, {}, [](const RankRow& r) { return r.group == "<=3" ? 0 : std::stoi(r.group); });
    return out;
}

std::vector<RankedSample> ranked_samples(const CurationStore& store) {
    std::vector<RankedSample> out;
    for (const auto& [sample, rank] : store.effective_ranks()) {
        out.push_back(RankedSample{store.item(sample)->concept_count, rank});
    }
    return out;
}

std::string rank_table_to_json(std::span<const RankRow> rows) {
    json j = json::array();
    for (const auto& row : rows) {
        j.push_back({{"group", row.group},
                     {"counts", row.counts},
                     {"total", row.total},
                     {"percentages", row.percentages}});
    }
    return json{{"rows", j}}.dump(2) + "\n";
}

}  // namespace compogen
