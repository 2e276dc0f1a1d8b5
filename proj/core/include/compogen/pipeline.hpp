// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compogen/backends.hpp"
#include "compogen/curation.hpp"
#include "compogen/dataset.hpp"
#include "compogen/image.hpp"
#include "compogen/metrics.hpp"

namespace compogen {

struct TrainingExportOptions {
    bool use_global_token = true;
    /// How often each concept phrase is repeated in a training prompt.
    int repetitions = 2;
};

/// Everything a run needs. Relative paths are resolved against the directory
/// of the config file.
struct PipelineConfig {
    std::filesystem::path manifest;
    std::filesystem::path workspace;
    std::optional<std::filesystem::path> background_library;
    Canvas canvas;
    int smoothing_window = 5;
    int samples_per_composition = 4;
    std::uint64_t seed = 0;
    std::map<std::string, std::uint64_t> stage_seeds;
    int workers = 1;
    double detector_threshold = 0.1;
    double iou_threshold = 0.05;
    /// Compositions to recaption in detail; empty means all.
    std::vector<std::string> recaption_compositions;
    int token_budget = 77;
    int caption_retries = 2;
    TrainingExportOptions training;
    bool restrict_to_label = false;
    bool score_full_prompt = false;
    std::map<std::string, BackendConfig> backends;
    bool mock_backends = false;
};

/// Throws ConfigError for unknown keys, wrong types or out-of-range values.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const PipelineConfig& config);

enum class Stage { Segment, Layout, Compose, Repaint, Caption };
std::string_view to_string(Stage stage) noexcept;
/// Throws ConfigError for an unknown name.
Stage parse_stage(std::string_view name);
inline constexpr Stage kAllStages[] = {Stage::Segment, Stage::Layout, Stage::Compose, Stage::Repaint,
                                       Stage::Caption};

struct StageReport {
    Stage stage = Stage::Segment;
    std::vector<std::string> produced;
    std::vector<std::string> skipped;
    std::vector<std::string> failed;
};

/// "<composition>-s0003".
std::string sample_id(std::string_view composition_id, int index);

/// Content-addressed image store under <workspace>/objects.
class ObjectStore {
public:
    ObjectStore(std::filesystem::path root, std::filesystem::path ref_base);

    /// Writes the PNG (if new) and returns its ref relative to ref_base.
    std::string put_png(const Image& image) const;
    std::string put_text(std::string_view text, std::string_view extension) const;
    std::filesystem::path resolve(std::string_view ref) const;
    Image load(std::string_view ref) const;
    std::string read_text(std::string_view ref) const;

private:
    std::string put_bytes(std::span<const std::uint8_t> bytes, std::string_view extension) const;

    std::filesystem::path m_root;
    std::filesystem::path m_ref_base;
};

/// Orchestrates the generation stages over the manifest named in the config.
/// Each stage loads, updates and atomically saves the manifest; samples that
/// already carry a stage's output are skipped.
class Pipeline {
public:
    Pipeline(PipelineConfig config, BackendSet backends);

    StageReport run_stage(Stage stage);
    std::vector<StageReport> run_all();

    const Manifest& manifest() const noexcept { return m_manifest; }
    const PipelineConfig& config() const noexcept { return m_config; }
    const ObjectStore& objects() const noexcept { return m_objects; }
    std::filesystem::path image_root() const;

private:
    StageReport run_segment();
    StageReport run_layout();
    StageReport run_compose();
    StageReport run_repaint();
    StageReport run_caption();
    std::uint64_t stage_seed(const Sample& sample, Stage stage) const;
    void save();

    PipelineConfig m_config;
    BackendSet m_backends;
    Manifest m_manifest;
    ObjectStore m_objects;
};

/// Where the finalized manifest lives inside the workspace.
std::filesystem::path finalized_manifest_path(const PipelineConfig& config);
/// Rank journal used by the review server.
std::filesystem::path rank_journal_path(const PipelineConfig& config);

/// Applies the journal's effective ranks to the working manifest and writes
/// the finalized manifest. Returns the summary.
FinalizeSummary finalize_workspace(const PipelineConfig& config, bool force);

struct ExportSummary {
    std::size_t images = 0;
    std::size_t compositions = 0;
};

/// Per composition: images/<sample>.png, images/<sample>.txt (training
/// prompt), metadata.jsonl and categories.txt. Throws NotFinalized (unless
/// allowed) and EmptyBundle.
ExportSummary export_training_bundle(const Manifest& manifest, const std::filesystem::path& image_root,
                                     const std::filesystem::path& out_dir, const TrainingExportOptions& options,
                                     bool allow_unfinalized = false);

struct EvalEntry {
    std::string method;
    std::string composition_id;
    std::string prompt;
    std::string background_prompt;
    std::vector<std::filesystem::path> images;
};

/// {"entries": [{"method", "composition_id", "prompt", "background_prompt",
/// "images": [...]}]}; image paths relative to the file.
std::vector<EvalEntry> load_eval_file(const std::filesystem::path& path);

/// Scores every listed image and writes report.json and report.csv into
/// out_dir. Returns the per-image reports.
std::vector<TaggedReport> export_metrics_report(const Manifest& manifest, const std::filesystem::path& image_root,
                                                std::span<const EvalEntry> entries, const BackendSet& backends,
                                                const MetricOptions& options, const std::filesystem::path& out_dir);

/// Writes a small self-contained project: concept images, background library,
/// manifest and config (mock backends). Returns the config path.
std::filesystem::path write_demo_project(const std::filesystem::path& dir, std::uint64_t seed);

std::string stats_to_json(const StatsReport& stats);

}  // namespace compogen
