// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

// compogen: command-line driver for the composition data pipeline.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "compogen/curation.hpp"
#include "compogen/curation_server.hpp"
#include "compogen/dataset.hpp"
#include "compogen/error.hpp"
#include "compogen/mock_backends.hpp"
#include "compogen/pipeline.hpp"
#include "compogen/remote_backends.hpp"

namespace fs = std::filesystem;
using namespace compogen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUnexpected = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitValidation = 4;

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::Config:
            return kExitConfig;
        case Errc::BackendUnavailable:
        case Errc::Protocol:
        case Errc::EmptyCompletion:
            return kExitBackend;
        case Errc::Io:
            return kExitUnexpected;
        default:
            return kExitValidation;
    }
}

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool mock_backends = false;
    std::string log_level = "info";
};

PipelineConfig load_effective_config(const GlobalOptions& g) {
    if (g.config_path.empty()) {
        throw Error(Errc::Config, "this command needs --config");
    }
    PipelineConfig config = load_config(g.config_path);
    if (g.seed) {
        config.seed = *g.seed;
    }
    if (g.workers) {
        if (*g.workers < 1) {
            throw Error(Errc::Config, "--workers must be >= 1");
        }
        config.workers = *g.workers;
    }
    config.mock_backends = config.mock_backends || g.mock_backends;
    return config;
}

BackendSet backends_for(const PipelineConfig& config) {
    return make_backends(config.backends, config.mock_backends, std::make_shared<FixtureRegistry>(), config.seed);
}

void print_report(const StageReport& r) {
    fmt::print("{}: produced {}, skipped {}, failed {}\n", to_string(r.stage), r.produced.size(), r.skipped.size(),
               r.failed.size());
    for (const auto& id : r.failed) {
        fmt::print("  failed: {}\n", id);
    }
}

CurationServer* g_server = nullptr;

void handle_signal(int) {
    if (g_server) {
        g_server->stop();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compogen: build multi-concept composition datasets and score them"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config_path, "Pipeline config (JSON)");
    app.add_option("--seed", g.seed, "Override the global seed");
    app.add_option("--workers", g.workers, "Parallel workers per stage");
    app.add_flag("--mock-backends", g.mock_backends, "Use deterministic in-process backends");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error")->capture_default_str();

    auto* init = app.add_subcommand("init", "Check the manifest and prepare the workspace");
    std::optional<std::string> demo_dir;
    init->add_option("--demo", demo_dir, "Write a self-contained demo project into this directory");

    std::map<std::string, CLI::App*> stage_commands;
    for (Stage s : kAllStages) {
        const std::string name(to_string(s));
        stage_commands[name] = app.add_subcommand(name, "Run the " + name + " stage");
    }
    auto* run = app.add_subcommand("run", "Run every generation stage in order");

    auto* serve = app.add_subcommand("serve-review", "Serve the review queue over HTTP");
    std::string host = "127.0.0.1";
    int port = 8088;
    std::optional<std::string> ui_dir;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--ui", ui_dir, "Directory with a built review UI to serve at /");

    auto* finalize = app.add_subcommand("finalize", "Keep samples ranked 4 or 5");
    bool force = false;
    finalize->add_flag("--force", force, "Drop unranked samples instead of failing");

    auto* export_train = app.add_subcommand("export-train", "Write a training bundle from the finalized manifest");
    std::string export_out;
    std::optional<std::string> export_manifest;
    bool allow_unfinalized = false;
    export_train->add_option("--out", export_out, "Output directory")->required();
    export_train->add_option("--manifest", export_manifest, "Manifest to export (default: finalized manifest)");
    export_train->add_flag("--allow-unfinalized", allow_unfinalized);

    auto* evaluate = app.add_subcommand("evaluate", "Score generated images with CP-CLIP and TI-CLIP");
    std::string eval_file;
    std::string eval_out;
    evaluate->add_option("--eval", eval_file, "Evaluation entries (JSON)")->required();
    evaluate->add_option("--out", eval_out, "Report directory")->required();

    auto* stats = app.add_subcommand("stats", "Caption statistics and rank distribution");
    bool stats_final = false;
    stats->add_flag("--final", stats_final, "Use the finalized manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(g.log_level));
        spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

        if (init->parsed()) {
            if (demo_dir) {
                const fs::path config = write_demo_project(*demo_dir, g.seed.value_or(0));
                fmt::print("{}\n", config.string());
                return kExitOk;
            }
            const PipelineConfig config = load_effective_config(g);
            Pipeline pipeline(config, backends_for(config));
            fmt::print("manifest ok: {} concepts, {} compositions, {} samples\n", pipeline.manifest().concepts.size(),
                       pipeline.manifest().compositions.size(), pipeline.manifest().samples.size());
            return kExitOk;
        }

        for (const auto& [name, cmd] : stage_commands) {
            if (cmd->parsed()) {
                const PipelineConfig config = load_effective_config(g);
                Pipeline pipeline(config, backends_for(config));
                const StageReport report = pipeline.run_stage(parse_stage(name));
                print_report(report);
                return report.failed.empty() ? kExitOk : kExitValidation;
            }
        }

        if (run->parsed()) {
            const PipelineConfig config = load_effective_config(g);
            Pipeline pipeline(config, backends_for(config));
            bool failures = false;
            for (const auto& report : pipeline.run_all()) {
                print_report(report);
                failures = failures || !report.failed.empty();
            }
            return failures ? kExitValidation : kExitOk;
        }

        if (serve->parsed()) {
            const PipelineConfig config = load_effective_config(g);
            const Manifest manifest = load_manifest(config.manifest);
            CurationStore store(manifest, rank_journal_path(config));
            CurationServer::Options options;
            const fs::path root = config.manifest.parent_path();
            options.resolve_image = [root](const std::string& ref) { return root / ref; };
            options.finalize = [config](bool f) { return finalize_workspace(config, f); };
            if (ui_dir) {
                options.static_dir = fs::path(*ui_dir);
            }
            CurationServer server(store, options);
            g_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            spdlog::info("review server on http://{}:{} ({} items)", host, port, store.item_count());
            server.listen(host, port);
            return kExitOk;
        }

        if (finalize->parsed()) {
            const PipelineConfig config = load_effective_config(g);
            const FinalizeSummary s = finalize_workspace(config, force);
            fmt::print("kept {} of {} samples ({} dropped, {} unranked) -> {}\n", s.kept, s.input_samples, s.dropped,
                       s.unranked, finalized_manifest_path(config).string());
            return kExitOk;
        }

        if (export_train->parsed()) {
            const PipelineConfig config = load_effective_config(g);
            const fs::path manifest_path = export_manifest ? fs::path(*export_manifest) : finalized_manifest_path(config);
            if (!fs::exists(manifest_path)) {
                throw Error(Errc::NotFinalized, manifest_path.string() + " does not exist; run 'finalize' first");
            }
            const Manifest manifest = load_manifest(manifest_path);
            const ExportSummary s = export_training_bundle(manifest, manifest_path.parent_path(), export_out,
                                                           config.training, allow_unfinalized);
            fmt::print("exported {} images across {} compositions to {}\n", s.images, s.compositions, export_out);
            return kExitOk;
        }

        if (evaluate->parsed()) {
            const PipelineConfig config = load_effective_config(g);
            const Manifest manifest = load_manifest(config.manifest);
            MetricOptions options;
            options.detector_threshold = config.detector_threshold;
            options.restrict_to_label = config.restrict_to_label;
            options.score_full_prompt = config.score_full_prompt;
            const auto entries = load_eval_file(eval_file);
            const auto reports = export_metrics_report(manifest, config.manifest.parent_path(), entries,
                                                       backends_for(config), options, eval_out);
            std::cout << table_to_csv(aggregate_reports(reports));
            return kExitOk;
        }

        if (stats->parsed()) {
            const PipelineConfig config = load_effective_config(g);
            const fs::path path = stats_final ? finalized_manifest_path(config) : config.manifest;
            const Manifest manifest = load_manifest(path);
            std::cout << stats_to_json(compute_caption_stats(manifest));
            const CurationStore store(load_manifest(config.manifest), rank_journal_path(config));
            const auto ranked = ranked_samples(store);
            if (!ranked.empty()) {
                std::cout << rank_table_to_json(rank_distribution(ranked));
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        spdlog::error("unexpected failure: {}", e.what());
        return kExitUnexpected;
    }
    return kExitOk;
}
