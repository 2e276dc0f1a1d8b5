// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace compogen {

inline constexpr int kManifestSchemaVersion = 1;

struct Canvas {
    int width = 512;
    int height = 512;
    bool operator==(const Canvas&) const = default;
};

/// A personalized object: its category noun, the placeholder token used in
/// prompts, and its source images (relative refs, at least one).
struct Concept {
    std::string id;
    std::string category_label;
    std::string rare_token;
    std::vector<std::string> image_refs;
    bool operator==(const Concept&) const = default;
};

/// A set of concepts plausible in one scene, plus the scene prompts it may be
/// placed in.
struct Composition {
    std::string id;
    std::vector<std::string> concept_ids;
    std::vector<std::string> background_prompts;
    Canvas canvas;
    std::string global_token;
    bool operator==(const Composition&) const = default;
};

/// One composed datapoint. Optional refs are filled in stage by stage; a
/// present ref means the producing stage completed for this sample.
struct Sample {
    std::string id;
    std::string composition_id;
    std::optional<std::string> layout_ref;
    std::map<std::string, std::string> source_image_refs;  // concept id -> chosen image
    std::optional<std::string> fg_image_ref;
    std::optional<std::string> fg_mask_ref;
    std::optional<std::string> soft_mask_ref;
    std::optional<std::string> bg_image_ref;
    std::optional<std::string> final_image_ref;
    std::optional<std::string> short_caption;
    std::optional<std::string> detailed_caption;
    std::optional<int> short_token_count;
    std::optional<int> detailed_token_count;
    std::string background_prompt_used;
    std::uint64_t seed = 0;
    std::optional<int> rank;
    std::map<std::string, std::string> backend_versions;
    std::vector<std::string> warnings;
    bool operator==(const Sample&) const = default;
};

struct Manifest {
    int schema_version = kManifestSchemaVersion;
    bool finalized = false;
    std::vector<Concept> concepts;
    std::vector<Composition> compositions;
    std::vector<Sample> samples;

    const Concept* find_concept(std::string_view id) const;
    const Composition* find_composition(std::string_view id) const;
    const Sample* find_sample(std::string_view id) const;
    Sample* find_sample(std::string_view id);

    /// Concepts of a composition in composition order. Throws NotFound on a
    /// dangling id.
    std::vector<const Concept*> concepts_of(const Composition& composition) const;

    bool operator==(const Manifest&) const = default;
};

enum class ViolationKind {
    DuplicateId,
    DuplicateRareToken,
    DanglingReference,
    EmptyField,
    NoImages,
    UnreadableImage,
    TooFewConcepts,
    RepeatedConcept,
    NoBackgroundPrompts,
    InvalidCanvas,
    GlobalTokenCollision,
    RankOutOfRange,
    EmptyCaption,
    UnpairedCaption,
    StageInconsistency,
};

std::string_view to_string(ViolationKind kind) noexcept;

struct Violation {
    ViolationKind kind;
    std::string entity_id;
    std::string detail;

    auto operator<=>(const Violation&) const = default;
};

/// Checks every type invariant and referential integrity. Violations are data:
/// the result is sorted, so it is identical for any permutation of the
/// manifest's lists. When `image_root` is given, image refs must resolve to
/// readable files under it.
std::vector<Violation> validate_manifest(const Manifest& manifest,
                                         const std::optional<std::filesystem::path>& image_root = std::nullopt);

std::string serialize_manifest(const Manifest& manifest);
/// Throws Error(Errc::Parse) naming the line (for syntax errors) or the field.
Manifest parse_manifest(std::string_view text);

Manifest load_manifest(const std::filesystem::path& path);
/// Atomic replace (write temp file, then rename).
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Caption statistics

/// Whitespace word count after removing every excluded token. A caption made
/// only of tokens counts 0 words.
int count_words(std::string_view caption, const std::set<std::string, std::less<>>& excluded_tokens);

struct StatsReport {
    std::size_t caption_count = 0;
    std::map<int, int> word_count_histogram;  // words -> captions
    double mean_words = 0.0;
    double fraction_over_20 = 0.0;
    // Frequency tables (most frequent first, ties alphabetical).
    std::vector<std::pair<std::string, int>> label_frequency;
    std::vector<std::pair<std::string, int>> background_frequency;
};

/// Throws Error(Errc::EmptyCorpus) when `captions` is empty.
StatsReport compute_caption_stats(std::span<const std::string> captions,
                                  const std::set<std::string, std::less<>>& excluded_tokens = {});

/// Uses each sample's detailed caption when present, else its short caption.
/// Rare tokens and global tokens of the manifest are excluded from counts.
StatsReport compute_caption_stats(const Manifest& manifest);

}  // namespace compogen
