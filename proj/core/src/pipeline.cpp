// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "compogen/captioning.hpp"
#include "compogen/compositor.hpp"
#include "compogen/digest.hpp"
#include "compogen/error.hpp"
#include "compogen/layout.hpp"

namespace compogen {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Small helpers

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::Io, "cannot read " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Writes via a temporary sibling and rename, so readers never see a torn file.
void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    static std::atomic<unsigned> counter{0};
    fs::path tmp = path;
    tmp += fmt::format(".tmp{}", counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(Errc::Io, "cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error(Errc::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

bool is_backend_failure(Errc code) {
    return code == Errc::BackendUnavailable || code == Errc::Protocol || code == Errc::EmptyCompletion;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Returns one captured
/// exception slot per index so callers can merge results in order.
template <typename F>
std::vector<std::exception_ptr> parallel_for(std::size_t n, int workers, F&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || n <= 1) {
        worker();
        return errors;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }
    return errors;
}

/// Rethrows backend failures (they abort the stage); other library errors are
/// returned as a message so the sample can be marked failed.
std::optional<std::string> triage(const std::exception_ptr& error) {
    if (!error) {
        return std::nullopt;
    }
    try {
        std::rethrow_exception(error);
    } catch (const Error& e) {
        if (is_backend_failure(e.code())) {
            throw;
        }
        return std::string(e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

namespace {

const std::set<std::string, std::less<>> kConfigKeys = {
    "manifest",         "workspace",     "background_library", "canvas",          "smoothing_window",
    "samples_per_composition", "seed",  "stage_seeds",        "workers",         "detector_threshold",
    "iou_threshold",    "recaption_compositions", "token_budget", "caption_retries", "training",
    "metrics",          "backends",      "mock_backends"};
const std::set<std::string, std::less<>> kBackendKeys = {"endpoint", "timeout_seconds", "max_retries",
                                                         "auth_token_env", "model", "max_in_flight", "mock"};

void reject_unknown(const json& object, const std::set<std::string, std::less<>>& allowed, std::string_view where) {
    if (!object.is_object()) {
        throw Error(Errc::Config, std::string(where) + " must be an object");
    }
    for (const auto& [key, value] : object.items()) {
        if (!allowed.contains(key)) {
            throw Error(Errc::Config, fmt::format("unknown key '{}' in {}", key, where));
        }
    }
}

template <typename T>
T get_as(const json& object, std::string_view key, T fallback, std::string_view where) {
    auto it = object.find(key);
    if (it == object.end()) {
        return fallback;
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(Errc::Config, fmt::format("{}.{} has the wrong type", where, key));
    }
}

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw Error(Errc::Config, message);
    }
}

fs::path resolve_path(const fs::path& base, const std::string& value) {
    const fs::path p(value);
    return (p.is_absolute() || base.empty()) ? p : (base / p).lexically_normal();
}

}  // namespace

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::Config, std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, kConfigKeys, "config");

    PipelineConfig c;
    require(j.contains("manifest"), "config: 'manifest' is required");
    c.manifest = resolve_path(base_dir, get_as<std::string>(j, "manifest", "", "config"));
    c.workspace = resolve_path(base_dir, get_as<std::string>(j, "workspace", "workspace", "config"));
    if (j.contains("background_library")) {
        c.background_library = resolve_path(base_dir, get_as<std::string>(j, "background_library", "", "config"));
    }
    if (j.contains("canvas")) {
        const auto& cv = j.at("canvas");
        reject_unknown(cv, {"width", "height"}, "canvas");
        c.canvas.width = get_as<int>(cv, "width", 512, "canvas");
        c.canvas.height = get_as<int>(cv, "height", 512, "canvas");
    }
    c.smoothing_window = get_as<int>(j, "smoothing_window", c.smoothing_window, "config");
    c.samples_per_composition = get_as<int>(j, "samples_per_composition", c.samples_per_composition, "config");
    c.seed = get_as<std::uint64_t>(j, "seed", c.seed, "config");
    if (j.contains("stage_seeds")) {
        reject_unknown(j.at("stage_seeds"), {"segment", "layout", "compose", "repaint", "caption"}, "stage_seeds");
        c.stage_seeds = get_as<std::map<std::string, std::uint64_t>>(j, "stage_seeds", {}, "config");
    }
    c.workers = get_as<int>(j, "workers", c.workers, "config");
    c.detector_threshold = get_as<double>(j, "detector_threshold", c.detector_threshold, "config");
    c.iou_threshold = get_as<double>(j, "iou_threshold", c.iou_threshold, "config");
    c.recaption_compositions =
        get_as<std::vector<std::string>>(j, "recaption_compositions", c.recaption_compositions, "config");
    c.token_budget = get_as<int>(j, "token_budget", c.token_budget, "config");
    c.caption_retries = get_as<int>(j, "caption_retries", c.caption_retries, "config");
    if (j.contains("training")) {
        const auto& t = j.at("training");
        reject_unknown(t, {"use_global_token", "repetitions"}, "training");
        c.training.use_global_token = get_as<bool>(t, "use_global_token", true, "training");
        c.training.repetitions = get_as<int>(t, "repetitions", 2, "training");
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        reject_unknown(m, {"restrict_to_label", "score_full_prompt"}, "metrics");
        c.restrict_to_label = get_as<bool>(m, "restrict_to_label", false, "metrics");
        c.score_full_prompt = get_as<bool>(m, "score_full_prompt", false, "metrics");
    }
    if (j.contains("backends")) {
        const std::set<std::string, std::less<>> names = {
            std::string(kSegmentBackend), std::string(kInpaintBackend), std::string(kTextBackend),
            std::string(kCaptionBackend), std::string(kDetectBackend),  std::string(kEmbedBackend)};
        reject_unknown(j.at("backends"), names, "backends");
        for (const auto& [name, b] : j.at("backends").items()) {
            const std::string where = "backends." + name;
            reject_unknown(b, kBackendKeys, where);
            BackendConfig bc;
            bc.name = name;
            bc.endpoint = get_as<std::string>(b, "endpoint", "", where);
            bc.timeout_seconds = get_as<double>(b, "timeout_seconds", bc.timeout_seconds, where);
            bc.max_retries = get_as<int>(b, "max_retries", bc.max_retries, where);
            bc.model = get_as<std::string>(b, "model", "", where);
            bc.max_in_flight = get_as<int>(b, "max_in_flight", bc.max_in_flight, where);
            bc.mock = get_as<bool>(b, "mock", false, where);
            if (const auto env = get_as<std::string>(b, "auth_token_env", "", where); !env.empty()) {
                if (const char* token = std::getenv(env.c_str())) {
                    bc.auth_token = std::string(token);
                }
            }
            check_backend_config(bc);
            c.backends[name] = std::move(bc);
        }
    }
    c.mock_backends = get_as<bool>(j, "mock_backends", false, "config");

    require(c.canvas.width > 0 && c.canvas.height > 0, "canvas width and height must be positive");
    require(c.smoothing_window >= 1 && c.smoothing_window % 2 == 1, "smoothing_window must be odd and >= 1");
    require(c.samples_per_composition >= 1, "samples_per_composition must be >= 1");
    require(c.workers >= 1, "workers must be >= 1");
    require(c.detector_threshold >= 0.0 && c.detector_threshold <= 1.0, "detector_threshold must lie in [0, 1]");
    require(c.iou_threshold >= 0.0 && c.iou_threshold < 1.0, "iou_threshold must lie in [0, 1)");
    require(c.token_budget >= 1, "token_budget must be >= 1");
    require(c.caption_retries >= 0, "caption_retries must be >= 0");
    require(c.training.repetitions >= 1, "training.repetitions must be >= 1");
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Config, "cannot open config " + path.string());
    }
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text, fs::absolute(path).parent_path());
}

std::string serialize_config(const PipelineConfig& c) {
    ojson j;
    j["manifest"] = c.manifest.generic_string();
    j["workspace"] = c.workspace.generic_string();
    if (c.background_library) {
        j["background_library"] = c.background_library->generic_string();
    }
    j["canvas"] = {{"width", c.canvas.width}, {"height", c.canvas.height}};
    j["smoothing_window"] = c.smoothing_window;
    j["samples_per_composition"] = c.samples_per_composition;
    j["seed"] = c.seed;
    if (!c.stage_seeds.empty()) {
        j["stage_seeds"] = c.stage_seeds;
    }
    j["workers"] = c.workers;
    j["detector_threshold"] = c.detector_threshold;
    j["iou_threshold"] = c.iou_threshold;
    j["recaption_compositions"] = c.recaption_compositions;
    j["token_budget"] = c.token_budget;
    j["caption_retries"] = c.caption_retries;
    j["training"] = {{"use_global_token", c.training.use_global_token}, {"repetitions", c.training.repetitions}};
    j["metrics"] = {{"restrict_to_label", c.restrict_to_label}, {"score_full_prompt", c.score_full_prompt}};
    if (!c.backends.empty()) {
        ojson b = ojson::object();
        for (const auto& [name, bc] : c.backends) {
            b[name] = {{"endpoint", bc.endpoint},
                       {"timeout_seconds", bc.timeout_seconds},
                       {"max_retries", bc.max_retries},
                       {"model", bc.model},
                       {"max_in_flight", bc.max_in_flight},
                       {"mock", bc.mock}};
        }
        j["backends"] = b;
    }
    j["mock_backends"] = c.mock_backends;
    return j.dump(2) + "\n";
}

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::Segment: return "segment";
        case Stage::Layout: return "layout";
        case Stage::Compose: return "compose";
        case Stage::Repaint: return "repaint";
        case Stage::Caption: return "caption";
    }
    return "segment";
}

Stage parse_stage(std::string_view name) {
    for (Stage s : kAllStages) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw Error(Errc::Config, "unknown stage '" + std::string(name) + "'");
}

std::string sample_id(std::string_view composition_id, int index) {
    return fmt::format("{}-s{:04d}", composition_id, index);
}

// ---------------------------------------------------------------------------
// Object store

ObjectStore::ObjectStore(fs::path root, fs::path ref_base) : m_root(std::move(root)), m_ref_base(std::move(ref_base)) {}

std::string ObjectStore::put_bytes(std::span<const std::uint8_t> bytes, std::string_view extension) const {
    const fs::path path = m_root / (sha256_hex(bytes) + "." + std::string(extension));
    if (!fs::exists(path)) {
        write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    }
    return path.lexically_relative(m_ref_base).generic_string();
}

std::string ObjectStore::put_png(const Image& image) const { return put_bytes(encode_png(image), "png"); }

std::string ObjectStore::put_text(std::string_view text, std::string_view extension) const {
    return put_bytes(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), extension);
}

fs::path ObjectStore::resolve(std::string_view ref) const { return (m_ref_base / fs::path(ref)).lexically_normal(); }

Image ObjectStore::load(std::string_view ref) const { return load_image(resolve(ref)); }

std::string ObjectStore::read_text(std::string_view ref) const { return read_file(resolve(ref)); }

// ---------------------------------------------------------------------------
// Asset index (segmentation output)

namespace {

struct AssetRecord {
    std::string cutout_ref;
    std::string mask_ref;
    PixelRect bbox;
    std::optional<std::string> rejected;
};

using AssetIndex = std::map<std::string, std::map<std::string, AssetRecord>>;  // concept -> image ref -> record

fs::path asset_index_path(const PipelineConfig& c) { return c.workspace / "assets.json"; }

AssetIndex load_asset_index(const fs::path& path) {
    AssetIndex index;
    const auto j = json::parse(read_file(path));
    for (const auto& [concept_id, images] : j.at("concepts").items()) {
        for (const auto& [ref, r] : images.items()) {
            AssetRecord rec;
            if (r.contains("rejected")) {
                rec.rejected = r.at("rejected").get<std::string>();
            } else {
                rec.cutout_ref = r.at("cutout").get<std::string>();
                rec.mask_ref = r.at("mask").get<std::string>();
                const auto b = r.at("bbox").get<std::vector<int>>();
                rec.bbox = PixelRect{b.at(0), b.at(1), b.at(2), b.at(3)};
            }
            index[concept_id][ref] = std::move(rec);
        }
    }
    return index;
}

void save_asset_index(const AssetIndex& index, const std::string& model, const fs::path& path) {
    ojson j;
    j["segment_model"] = model;
    j["concepts"] = ojson::object();
    for (const auto& [concept_id, images] : index) {
        ojson entry = ojson::object();
        for (const auto& [ref, rec] : images) {
            if (rec.rejected) {
                entry[ref] = {{"rejected", *rec.rejected}};
            } else {
                entry[ref] = {{"cutout", rec.cutout_ref},
                              {"mask", rec.mask_ref},
                              {"bbox", {rec.bbox.x, rec.bbox.y, rec.bbox.width, rec.bbox.height}}};
            }
        }
        j["concepts"][concept_id] = entry;
    }
    write_file_atomic(path, j.dump(2) + "\n");
}

std::string format_violations(const std::vector<Violation>& violations) {
    std::string out;
    for (std::size_t i = 0; i < violations.size() && i < 10; ++i) {
        out += fmt::format("\n  {} {}: {}", to_string(violations[i].kind), violations[i].entity_id,
                           violations[i].detail);
    }
    if (violations.size() > 10) {
        out += fmt::format("\n  ... and {} more", violations.size() - 10);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig config, BackendSet backends)
    : m_config(std::move(config)), m_backends(std::move(backends)),
      m_objects(m_config.workspace / "objects", m_config.manifest.parent_path()) {
    if (!fs::exists(m_config.manifest)) {
        throw Error(Errc::Config, "manifest " + m_config.manifest.string() + " does not exist");
    }
    m_manifest = load_manifest(m_config.manifest);
    const auto violations = validate_manifest(m_manifest, image_root());
    if (!violations.empty()) {
        throw Error(Errc::Validation, fmt::format("manifest has {} violation(s):{}", violations.size(),
                                                  format_violations(violations)));
    }
    fs::create_directories(m_config.workspace / "objects");
}

fs::path Pipeline::image_root() const { return m_config.manifest.parent_path(); }

std::uint64_t Pipeline::stage_seed(const Sample& sample, Stage stage) const {
    std::uint64_t seed = derive_seed(sample.seed, to_string(stage));
    if (auto it = m_config.stage_seeds.find(std::string(to_string(stage))); it != m_config.stage_seeds.end()) {
        seed = derive_seed(seed, it->second);
    }
    return seed;
}

void Pipeline::save() { save_manifest(m_manifest, m_config.manifest); }

StageReport Pipeline::run_stage(Stage stage) {
    spdlog::info("stage {}: starting", to_string(stage));
    StageReport report;
    switch (stage) {
        case Stage::Segment: report = run_segment(); break;
        case Stage::Layout: report = run_layout(); break;
        case Stage::Compose: report = run_compose(); break;
        case Stage::Repaint: report = run_repaint(); break;
        case Stage::Caption: report = run_caption(); break;
    }
    report.stage = stage;
    spdlog::info("stage {}: {} produced, {} skipped, {} failed", to_string(stage), report.produced.size(),
                 report.skipped.size(), report.failed.size());
    return report;
}

std::vector<StageReport> Pipeline::run_all() {
    std::vector<StageReport> reports;
    for (Stage s : kAllStages) {
        reports.push_back(run_stage(s));
    }
    return reports;
}

StageReport Pipeline::run_segment() {
    StageReport report;
    AssetIndex index;
    if (fs::exists(asset_index_path(m_config))) {
        index = load_asset_index(asset_index_path(m_config));
    }
    struct Job {
        std::string concept_id;
        std::string ref;
        AssetRecord result;
    };
    std::vector<Job> jobs;
    for (const auto& c : m_manifest.concepts) {
        for (const auto& ref : c.image_refs) {
            const std::string key = c.id + ":" + ref;
            if (index.contains(c.id) && index[c.id].contains(ref)) {
                report.skipped.push_back(key);
            } else {
                jobs.push_back({c.id, ref, {}});
            }
        }
    }
    const auto errors = parallel_for(jobs.size(), m_config.workers, [&](std::size_t i) {
        Job& job = jobs[i];
        const Image image = load_image(image_root() / job.ref);
        const ForegroundAsset asset = extract_asset(image, *m_backends.segmenter, job.concept_id, job.ref);
        job.result.cutout_ref = m_objects.put_png(asset.cutout);
        job.result.mask_ref = m_objects.put_png(asset.mask);
        job.result.bbox = asset.tight_bbox;
    });
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const std::string key = jobs[i].concept_id + ":" + jobs[i].ref;
        if (auto failure = triage(errors[i])) {
            jobs[i].result = AssetRecord{};
            jobs[i].result.rejected = *failure;
            report.failed.push_back(key);
        } else {
            report.produced.push_back(key);
        }
        index[jobs[i].concept_id][jobs[i].ref] = jobs[i].result;
    }
    save_asset_index(index, m_backends.segmenter->model_id(), asset_index_path(m_config));
    return report;
}

StageReport Pipeline::run_layout() {
    if (!fs::exists(asset_index_path(m_config))) {
        throw Error(Errc::StageOrder, "layout needs segmentation output; run 'segment' first");
    }
    const AssetIndex assets = load_asset_index(asset_index_path(m_config));
    StageReport report;

    // Create missing samples; ids and seeds depend only on (seed, composition, index).
    for (const auto& comp : m_manifest.compositions) {
        for (int i = 0; i < m_config.samples_per_composition; ++i) {
            const std::string id = sample_id(comp.id, i);
            if (!m_manifest.find_sample(id)) {
                Sample s;
                s.id = id;
                s.composition_id = comp.id;
                s.seed = derive_seed(derive_seed(m_config.seed, comp.id), static_cast<std::uint64_t>(i));
                m_manifest.samples.push_back(std::move(s));
            }
        }
    }

    // Composition-level queries, only for compositions that still need layouts.
    struct CompositionPlan {
        std::vector<LabeledConcept> concepts;
        std::optional<ScaleRatioSet> ratios;
    };
    std::map<std::string, CompositionPlan> plans;
    std::map<std::string, std::vector<std::string>> comp_warnings;
    for (auto& comp : m_manifest.compositions) {
        const bool pending = std::ranges::any_of(m_manifest.samples, [&](const Sample& s) {
            return s.composition_id == comp.id && !s.layout_ref;
        });
        if (!pending) {
            continue;
        }
        CompositionPlan plan;
        plan.concepts = labeled_concepts(m_manifest, comp);

        const LlmPrompt bg_prompt = build_background_prompt(plan.concepts);
        const std::string bg_reply =
            m_backends.text->complete_text(bg_prompt.system_prompt, bg_prompt.few_shot_block, bg_prompt.user_query);
        try {
            for (auto& p : parse_background_response(bg_reply, comp.id).prompts) {
                if (std::ranges::find(comp.background_prompts, p) == comp.background_prompts.end()) {
                    comp.background_prompts.push_back(std::move(p));
                }
            }
        } catch (const Error& e) {
            spdlog::warn("composition {}: background prompts unusable ({}); keeping the manifest's", comp.id, e.what());
        }

        const LlmPrompt scale_prompt = build_scale_prompt(plan.concepts);
        const std::string scale_reply = m_backends.text->complete_text(
            scale_prompt.system_prompt, scale_prompt.few_shot_block, scale_prompt.user_query);
        try {
            plan.ratios = parse_scale_response(scale_reply, plan.concepts);
        } catch (const Error& e) {
            comp_warnings[comp.id].push_back(std::string("ScaleRatiosIgnored: ") + e.what());
        }
        plans[comp.id] = std::move(plan);
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < m_manifest.samples.size(); ++i) {
        if (m_manifest.samples[i].layout_ref) {
            report.skipped.push_back(m_manifest.samples[i].id);
        } else {
            todo.push_back(i);
        }
    }
    std::vector<Sample> results(todo.size());
    const auto errors = parallel_for(todo.size(), m_config.workers, [&](std::size_t t) {
        Sample s = m_manifest.samples[todo[t]];
        const Composition& comp = *m_manifest.find_composition(s.composition_id);
        const CompositionPlan& plan = plans.at(comp.id);
        Rng rng(stage_seed(s, Stage::Layout));

        s.source_image_refs.clear();
        for (const auto& cid : comp.concept_ids) {
            std::vector<std::string> usable;
            if (auto it = assets.find(cid); it != assets.end()) {
                for (const auto& ref : m_manifest.find_concept(cid)->image_refs) {
                    auto rec = it->second.find(ref);
                    if (rec != it->second.end() && !rec->second.rejected) {
                        usable.push_back(ref);
                    }
                }
            }
            if (usable.empty()) {
                throw Error(Errc::EmptySegmentation, "concept " + cid + " has no usable segmented image");
            }
            s.source_image_refs[cid] =
                usable[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(usable.size()) - 1))];
        }
        if (comp.background_prompts.empty()) {
            throw Error(Errc::BackgroundParse, "composition " + comp.id + " has no background prompt");
        }
        s.background_prompt_used = comp.background_prompts[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<long long>(comp.background_prompts.size()) - 1))];

        RepairOptions repair;
        repair.iou_threshold = m_config.iou_threshold;
        repair.fallback_seed = stage_seed(s, Stage::Layout);
        const LlmPrompt prompt = build_layout_prompt(plan.concepts, comp.canvas);
        const std::string reply =
            m_backends.text->complete_text(prompt.system_prompt, prompt.few_shot_block, prompt.user_query);
        Layout layout;
        try {
            layout = parse_layout_response(reply, comp.id, plan.concepts, comp.canvas);
            layout = plan.ratios ? apply_scale_ratios(layout, *plan.ratios, repair)
                                 : validate_and_repair_layout(layout, repair);
        } catch (const Error& e) {
            if (e.code() != Errc::LayoutParse && e.code() != Errc::UnknownObject &&
                e.code() != Errc::IncompleteLayout) {
                throw;
            }
            s.warnings.push_back(std::string("LayoutFallback: ") + e.what());
            std::vector<std::string> ids(comp.concept_ids.begin(), comp.concept_ids.end());
            layout = fallback_layout(comp.id, ids, comp.canvas, repair.fallback_seed);
        }
        if (auto it = comp_warnings.find(comp.id); it != comp_warnings.end()) {
            s.warnings.insert(s.warnings.end(), it->second.begin(), it->second.end());
        }
        s.layout_ref = m_objects.put_text(serialize_layout(layout), "json");
        s.backend_versions[std::string(kTextBackend)] = m_backends.text->model_id();
        s.backend_versions[std::string(kSegmentBackend)] = m_backends.segmenter->model_id();
        results[t] = std::move(s);
    });
    for (std::size_t t = 0; t < todo.size(); ++t) {
        Sample& target = m_manifest.samples[todo[t]];
        if (auto failure = triage(errors[t])) {
            spdlog::warn("sample {}: layout failed: {}", target.id, *failure);
            report.failed.push_back(target.id);
            continue;
        }
        target = std::move(results[t]);
        report.produced.push_back(target.id);
    }
    save();
    return report;
}

namespace {

/// Splits samples into (needs work, skipped) and enforces that the previous
/// stage ran: if no sample has the prerequisite, the stage is out of order.
template <typename Has, typename Done>
std::vector<std::size_t> plan_samples(const Manifest& m, StageReport& report, std::string_view stage,
                                      std::string_view prerequisite, Has has_input, Done done) {
    if (m.samples.empty() || std::ranges::none_of(m.samples, has_input)) {
        throw Error(Errc::StageOrder,
                    fmt::format("'{}' needs the output of '{}'; run that stage first", stage, prerequisite));
    }
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        const Sample& s = m.samples[i];
        if (done(s)) {
            report.skipped.push_back(s.id);
        } else if (!has_input(s)) {
            report.failed.push_back(s.id);
        } else {
            todo.push_back(i);
        }
    }
    return todo;
}

}  // namespace

StageReport Pipeline::run_compose() {
    StageReport report;
    const auto todo = plan_samples(
        m_manifest, report, "compose", "layout", [](const Sample& s) { return s.layout_ref.has_value(); },
        [](const Sample& s) { return s.fg_image_ref && s.fg_mask_ref && s.soft_mask_ref; });
    const AssetIndex assets = load_asset_index(asset_index_path(m_config));

    std::vector<Sample> results(todo.size());
    const auto errors = parallel_for(todo.size(), m_config.workers, [&](std::size_t t) {
        Sample s = m_manifest.samples[todo[t]];
        const Layout layout = parse_layout_json(m_objects.read_text(*s.layout_ref));
        std::vector<ForegroundAsset> placed;
        for (const auto& box : layout.boxes) {
            const std::string& ref = s.source_image_refs.at(box.concept_id);
            const AssetRecord& rec = assets.at(box.concept_id).at(ref);
            ForegroundAsset a;
            a.concept_id = box.concept_id;
            a.source_image_ref = ref;
            a.cutout = m_objects.load(rec.cutout_ref);
            a.mask = m_objects.load(rec.mask_ref);
            a.tight_bbox = rec.bbox;
            placed.push_back(std::move(a));
        }
        CompositeCanvas canvas = place_foregrounds(placed, layout);
        const SoftMask soft = smooth_mask(canvas.fg_mask, m_config.smoothing_window);
        s.fg_image_ref = m_objects.put_png(canvas.fg_image);
        s.fg_mask_ref = m_objects.put_png(canvas.fg_mask);
        s.soft_mask_ref = m_objects.put_png(soft.values);
        results[t] = std::move(s);
    });
    for (std::size_t t = 0; t < todo.size(); ++t) {
        Sample& target = m_manifest.samples[todo[t]];
        if (auto failure = triage(errors[t])) {
            spdlog::warn("sample {}: compose failed: {}", target.id, *failure);
            report.failed.push_back(target.id);
            continue;
        }
        target = std::move(results[t]);
        report.produced.push_back(target.id);
    }
    save();
    return report;
}

StageReport Pipeline::run_repaint() {
    StageReport report;
    const auto todo = plan_samples(
        m_manifest, report, "repaint", "compose",
        [](const Sample& s) { return s.fg_image_ref && s.soft_mask_ref; },
        [](const Sample& s) { return s.final_image_ref.has_value(); });
    if (!todo.empty() && !m_config.background_library) {
        throw Error(Errc::Config, "repaint needs 'background_library' in the config");
    }
    const BackgroundLibrary library =
        todo.empty() ? BackgroundLibrary{} : load_background_library(*m_config.background_library);

    std::vector<Sample> results(todo.size());
    const auto errors = parallel_for(todo.size(), m_config.workers, [&](std::size_t t) {
        Sample s = m_manifest.samples[todo[t]];
        const Composition& comp = *m_manifest.find_composition(s.composition_id);
        const BackgroundEntry& entry = select_background(s.background_prompt_used, library);
        const Image bg = fit_background(load_image(entry.path), comp.canvas);
        CompositeCanvas canvas{m_objects.load(*s.fg_image_ref), m_objects.load(*s.fg_mask_ref),
                               s.layout_ref.value_or("")};
        canvas.fg_image = to_rgb(canvas.fg_image);
        const SoftMask soft{m_objects.load(*s.soft_mask_ref), m_config.smoothing_window};
        const Image final_image = repaint(canvas, soft, bg, s.background_prompt_used, *m_backends.inpainter,
                                          stage_seed(s, Stage::Repaint));
        s.bg_image_ref = m_objects.put_png(bg);
        s.final_image_ref = m_objects.put_png(final_image);
        s.backend_versions[std::string(kInpaintBackend)] = m_backends.inpainter->model_id();
        results[t] = std::move(s);
    });
    for (std::size_t t = 0; t < todo.size(); ++t) {
        Sample& target = m_manifest.samples[todo[t]];
        if (auto failure = triage(errors[t])) {
            spdlog::warn("sample {}: repaint failed: {}", target.id, *failure);
            report.failed.push_back(target.id);
            continue;
        }
        target = std::move(results[t]);
        report.produced.push_back(target.id);
    }
    save();
    return report;
}

StageReport Pipeline::run_caption() {
    StageReport report;
    const auto wants_detail = [this](const Sample& s) {
        return m_config.recaption_compositions.empty() ||
               std::ranges::find(m_config.recaption_compositions, s.composition_id) !=
                   m_config.recaption_compositions.end();
    };
    const auto todo = plan_samples(
        m_manifest, report, "caption", "repaint", [](const Sample& s) { return s.final_image_ref.has_value(); },
        [&](const Sample& s) { return s.short_caption && (s.detailed_caption || !wants_detail(s)); });

    RecaptionOptions options;
    options.token_budget = m_config.token_budget;
    options.max_retries = m_config.caption_retries;

    std::vector<Sample> results(todo.size());
    const auto errors = parallel_for(todo.size(), m_config.workers, [&](std::size_t t) {
        Sample s = m_manifest.samples[todo[t]];
        const Composition& comp = *m_manifest.find_composition(s.composition_id);
        s.short_caption = compose_short_caption(m_manifest, comp, s.background_prompt_used);
        s.short_token_count = count_tokens(*m_backends.embedder, *s.short_caption);
        if (wants_detail(s)) {
            const RecaptionResult r =
                recaption_detailed(m_objects.load(*s.final_image_ref), *m_backends.captioner, *m_backends.embedder,
                                   options);
            s.detailed_caption = r.text;
            s.detailed_token_count = r.token_count;
            if (r.truncated &&
                std::ranges::find(s.warnings, std::string(kTruncatedCaptionWarning)) == s.warnings.end()) {
                s.warnings.emplace_back(kTruncatedCaptionWarning);
            }
            s.backend_versions[std::string(kCaptionBackend)] = m_backends.captioner->model_id();
        }
        s.backend_versions[std::string(kEmbedBackend)] = m_backends.embedder->model_id();
        results[t] = std::move(s);
    });
    for (std::size_t t = 0; t < todo.size(); ++t) {
        Sample& target = m_manifest.samples[todo[t]];
        if (auto failure = triage(errors[t])) {
            spdlog::warn("sample {}: caption failed: {}", target.id, *failure);
            report.failed.push_back(target.id);
            continue;
        }
        target = std::move(results[t]);
        report.produced.push_back(target.id);
    }
    save();
    return report;
}

// ---------------------------------------------------------------------------
// Finalization and export

fs::path finalized_manifest_path(const PipelineConfig& config) { return config.workspace / "manifest.final.json"; }

fs::path rank_journal_path(const PipelineConfig& config) { return config.workspace / "ranks.jsonl"; }

FinalizeSummary finalize_workspace(const PipelineConfig& config, bool force) {
    Manifest manifest = load_manifest(config.manifest);
    const CurationStore store(manifest, rank_journal_path(config));
    store.apply_ranks(manifest);
    FinalizeSummary summary;
    const Manifest final_manifest = finalize_dataset(manifest, force, &summary);
    // Refs are relative to the manifest's directory; the finalized manifest
    // lives in the workspace, so rebase every ref onto that directory.
    Manifest rebased = final_manifest;
    const fs::path from = config.manifest.parent_path();
    const fs::path to = finalized_manifest_path(config).parent_path();
    const auto rebase = [&](std::string& ref) {
        ref = (from / ref).lexically_normal().lexically_relative(to).generic_string();
    };
    for (auto& c : rebased.concepts) {
        std::ranges::for_each(c.image_refs, rebase);
    }
    for (auto& s : rebased.samples) {
        for (auto* ref : {&s.layout_ref, &s.fg_image_ref, &s.fg_mask_ref, &s.soft_mask_ref, &s.bg_image_ref,
                          &s.final_image_ref}) {
            if (*ref) {
                rebase(**ref);
            }
        }
        for (auto& [cid, ref] : s.source_image_refs) {
            rebase(ref);
        }
    }
    save_manifest(rebased, finalized_manifest_path(config));
    return summary;
}

ExportSummary export_training_bundle(const Manifest& manifest, const fs::path& image_root, const fs::path& out_dir,
                                     const TrainingExportOptions& options, bool allow_unfinalized) {
    if (!manifest.finalized && !allow_unfinalized) {
        throw Error(Errc::NotFinalized, "manifest is not finalized; run 'finalize' first");
    }
    std::vector<const Sample*> usable;
    for (const auto& s : manifest.samples) {
        if (s.final_image_ref) {
            usable.push_back(&s);
        }
    }
    if (usable.empty()) {
        throw Error(Errc::EmptyBundle, "no samples with final images to export");
    }
    ExportSummary summary;
    for (const auto& comp : manifest.compositions) {
        std::vector<const Sample*> mine;
        std::ranges::copy_if(usable, std::back_inserter(mine),
                             [&](const Sample* s) { return s->composition_id == comp.id; });
        if (mine.empty()) {
            continue;
        }
        ++summary.compositions;
        const fs::path dir = out_dir / comp.id;
        fs::create_directories(dir / "images");
        const auto concepts = training_concepts(manifest, comp);
        const bool global = options.use_global_token && !comp.global_token.empty();
        std::string metadata;
        for (const Sample* s : mine) {
            const TrainingPrompt prompt =
                build_training_prompt(comp.global_token, concepts, s->background_prompt_used, options.repetitions,
                                      global);
            const std::string file = s->id + ".png";
            fs::copy_file(image_root / *s->final_image_ref, dir / "images" / file,
                          fs::copy_options::overwrite_existing);
            write_file_atomic(dir / "images" / (s->id + ".txt"), prompt.text + "\n");
            metadata += json{{"file_name", "images/" + file}, {"text", prompt.text}}.dump() + "\n";
            ++summary.images;
        }
        write_file_atomic(dir / "metadata.jsonl", metadata);
        std::set<std::string> categories;
        std::string category_list;
        for (const auto& c : concepts) {
            if (categories.insert(c.label).second) {
                category_list += c.label + "\n";
            }
        }
        write_file_atomic(dir / "categories.txt", category_list);
        ojson concept_json = ojson::array();
        for (const auto& c : concepts) {
            concept_json.push_back({{"rare_token", c.rare_token}, {"label", c.label}});
        }
        write_file_atomic(dir / "concepts.json",
                          ojson{{"composition_id", comp.id},
                                {"global_token", global ? comp.global_token : ""},
                                {"repetitions", options.repetitions},
                                {"concepts", concept_json}}
                                  .dump(2) +
                              "\n");
    }
    spdlog::info("exported {} image/prompt pairs across {} composition(s) to {}", summary.images,
                 summary.compositions, out_dir.string());
    return summary;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<EvalEntry> load_eval_file(const fs::path& path) {
    std::vector<EvalEntry> entries;
    try {
        const auto j = json::parse(read_file(path));
        const fs::path base = fs::absolute(path).parent_path();
        for (const auto& e : j.at("entries")) {
            EvalEntry entry;
            entry.method = e.at("method").get<std::string>();
            entry.composition_id = e.at("composition_id").get<std::string>();
            entry.prompt = e.value("prompt", std::string{});
            entry.background_prompt = e.value("background_prompt", std::string{});
            for (const auto& img : e.at("images")) {
                entry.images.push_back(resolve_path(base, img.get<std::string>()));
            }
            entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::Config, "eval file " + path.string() + ": " + e.what());
    }
    return entries;
}

std::vector<TaggedReport> export_metrics_report(const Manifest& manifest, const fs::path& image_root,
                                                std::span<const EvalEntry> entries, const BackendSet& backends,
                                                const MetricOptions& options, const fs::path& out_dir) {
    // Reference embeddings are computed once per concept.
    std::map<std::string, std::vector<EmbeddingVector>> references;
    struct Job {
        std::string method;
        std::string composition_id;
        const EvalEntry* entry;
        fs::path image;
    };
    std::vector<Job> jobs;
    for (const auto& e : entries) {
        const Composition* comp = manifest.find_composition(e.composition_id);
        if (!comp) {
            throw Error(Errc::NotFound, "eval entry names unknown composition '" + e.composition_id + "'");
        }
        for (const Concept* c : manifest.concepts_of(*comp)) {
            if (!references.contains(c->id)) {
                auto& refs = references[c->id];
                for (const auto& ref : c->image_refs) {
                    refs.push_back(backends.embedder->embed_image(to_rgb(load_image(image_root / ref))));
                }
            }
        }
        for (const auto& img : e.images) {
            jobs.push_back({e.method, e.composition_id, &e, img});
        }
    }
    std::vector<TaggedReport> reports;
    for (const auto& job : jobs) {
        const Composition& comp = *manifest.find_composition(job.composition_id);
        EvalRequest request;
        request.generated_image = to_rgb(load_image(job.image));
        for (const Concept* c : manifest.concepts_of(comp)) {
            request.concepts.push_back({c->id, c->category_label, references.at(c->id)});
        }
        request.eval_prompt = job.entry->prompt;
        request.background_prompt = job.entry->background_prompt;
        reports.push_back(
            {job.method, job.composition_id, evaluate_sample(request, *backends.detector, *backends.embedder, options)});
    }
    const AggregateTable table = aggregate_reports(reports);
    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "report.json", report_to_json(reports, table));
    write_file_atomic(out_dir / "report.csv", table_to_csv(table));
    return reports;
}

// ---------------------------------------------------------------------------
// Statistics

std::string stats_to_json(const StatsReport& stats) {
    ojson j;
    j["caption_count"] = stats.caption_count;
    j["mean_words"] = stats.mean_words;
    j["fraction_over_20"] = stats.fraction_over_20;
    ojson histogram = ojson::object();
    for (const auto& [words, count] : stats.word_count_histogram) {
        histogram[std::to_string(words)] = count;
    }
    j["word_count_histogram"] = histogram;
    const auto table = [](const std::vector<std::pair<std::string, int>>& rows) {
        ojson out = ojson::array();
        for (const auto& [name, count] : rows) {
            out.push_back({{"term", name}, {"count", count}});
        }
        return out;
    };
    j["label_frequency"] = table(stats.label_frequency);
    j["background_frequency"] = table(stats.background_frequency);
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Demo project

namespace {

struct DemoConcept {
    const char* id;
    const char* label;
    const char* token;
    std::array<double, 3> color;
};

Image demo_object(int size, int shape, std::array<double, 3> color, double shrink) {
    Image img(size, size, 4, 0.0);
    const double c = (size - 1) / 2.0;
    const double r = size * 0.45 * shrink;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x - c;
            const double dy = y - c;
            bool inside = false;
            switch (shape % 3) {
                case 0: inside = dx * dx + dy * dy <= r * r; break;
                case 1: inside = std::abs(dx) <= r && std::abs(dy) <= r * 0.7; break;
                default: inside = std::abs(dx) + std::abs(dy) <= r; break;
            }
            if (inside) {
                // A soft shading term keeps the object from being a flat fill.
                const double shade = 0.75 + 0.25 * (1.0 - (dy + r) / (2.0 * r + 1e-9));
                for (int k = 0; k < 3; ++k) {
                    img.at(x, y, k) = std::clamp(color[static_cast<std::size_t>(k)] * shade, 0.0, 1.0);
                }
                img.at(x, y, 3) = 1.0;
            }
        }
    }
    return img;
}

Image demo_background(int w, int h, std::array<double, 3> top, std::array<double, 3> bottom) {
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y) {
        const double t = static_cast<double>(y) / (h - 1);
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < 3; ++k) {
                const auto i = static_cast<std::size_t>(k);
                img.at(x, y, k) = top[i] * (1.0 - t) + bottom[i] * t;
            }
        }
    }
    return img;
}

}  // namespace

fs::path write_demo_project(const fs::path& dir, std::uint64_t seed) {
    static const DemoConcept kConcepts[] = {
        {"car", "car", "<car1>", {0.80, 0.10, 0.10}},     {"cat", "cat", "<cat1>", {0.95, 0.60, 0.20}},
        {"dog", "dog", "<dog1>", {0.55, 0.35, 0.20}},     {"house", "house", "<house1>", {0.30, 0.40, 0.85}},
        {"cup", "cup", "<cup1>", {0.90, 0.90, 0.30}},     {"teapot", "teapot", "<teapot1>", {0.20, 0.70, 0.60}},
        {"plant", "plant", "<plant1>", {0.15, 0.65, 0.20}}, {"lamp", "lamp", "<lamp1>", {0.95, 0.85, 0.60}},
        {"book", "book", "<book1>", {0.50, 0.20, 0.60}},
    };
    fs::create_directories(dir / "concepts");
    fs::create_directories(dir / "backgrounds");

    Manifest m;
    Rng rng(derive_seed(seed, "demo"));
    for (std::size_t i = 0; i < std::size(kConcepts); ++i) {
        const auto& dc = kConcepts[i];
        Concept c;
        c.id = dc.id;
        c.category_label = dc.label;
        c.rare_token = dc.token;
        for (int k = 0; k < 2; ++k) {
            const double shrink = 0.75 + 0.25 * rng.uniform();
            const std::string ref = fmt::format("concepts/{}_{}.png", dc.id, k);
            save_png(demo_object(96, static_cast<int>(i), dc.color, shrink), dir / ref);
            c.image_refs.push_back(ref);
        }
        m.concepts.push_back(std::move(c));
    }
    m.compositions.push_back({"pets", {"cat", "dog"}, {"in the garden"}, Canvas{}, "<pets1>"});
    m.compositions.push_back({"street", {"car", "cat", "dog", "house"}, {"on the street"}, Canvas{}, "<street1>"});
    m.compositions.push_back(
        {"desk", {"cup", "teapot", "plant", "lamp", "book"}, {"on the table", "in the living room"}, Canvas{}, "<desk1>"});
    save_manifest(m, dir / "manifest.json");

    struct Bg {
        const char* id;
        std::vector<std::string> tags;
        std::array<double, 3> top;
        std::array<double, 3> bottom;
    };
    const std::vector<Bg> backgrounds = {
        {"street", {"street", "suburban neighborhood", "city"}, {0.60, 0.75, 0.95}, {0.35, 0.35, 0.38}},
        {"garden", {"garden", "grass", "park"}, {0.65, 0.85, 1.00}, {0.20, 0.55, 0.20}},
        {"room", {"living room", "table", "kitchen"}, {0.90, 0.88, 0.80}, {0.55, 0.40, 0.25}},
        {"outdoors", {"countryside", "forest", "beach"}, {0.55, 0.80, 0.95}, {0.45, 0.60, 0.30}},
    };
    ojson index;
    index["entries"] = ojson::array();
    for (const auto& bg : backgrounds) {
        const std::string file = std::string(bg.id) + ".png";
        save_png(demo_background(640, 480, bg.top, bg.bottom), dir / "backgrounds" / file);
        index["entries"].push_back({{"id", bg.id}, {"path", file}, {"tags", bg.tags}});
    }
    write_file_atomic(dir / "backgrounds" / "index.json", index.dump(2) + "\n");

    ojson config;
    config["manifest"] = "manifest.json";
    config["workspace"] = "work";
    config["background_library"] = "backgrounds/index.json";
    config["canvas"] = {{"width", 512}, {"height", 512}};
    config["samples_per_composition"] = 4;
    config["seed"] = seed;
    config["workers"] = 1;
    config["mock_backends"] = true;
    const fs::path config_path = dir / "config.json";
    write_file_atomic(config_path, config.dump(2) + "\n");
    return config_path;
}

}  // namespace compogen
