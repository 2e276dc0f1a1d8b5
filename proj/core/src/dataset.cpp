// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "compogen/error.hpp"
#include "compogen/image.hpp"

namespace compogen {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Lookup helpers

const Concept* Manifest::find_concept(std::string_view id) const {
    auto it = std::ranges::find(concepts, id, &Concept::id);
    return it == concepts.end() ? nullptr : &*it;
}

const Composition* Manifest::find_composition(std::string_view id) const {
    auto it = std::ranges::find(compositions, id, &Composition::id);
    return it == compositions.end() ? nullptr : &*it;
}

const Sample* Manifest::find_sample(std::string_view id) const {
    auto it = std::ranges::find(samples, id, &Sample::id);
    return it == samples.end() ? nullptr : &*it;
}

Sample* Manifest::find_sample(std::string_view id) {
    auto it = std::ranges::find(samples, id, &Sample::id);
    return it == samples.end() ? nullptr : &*it;
}

std::vector<const Concept*> Manifest::concepts_of(const Composition& composition) const {
    std::vector<const Concept*> out;
    out.reserve(composition.concept_ids.size());
    for (const auto& id : composition.concept_ids) {
        const Concept* c = find_concept(id);
        if (c == nullptr) {
            throw Error(Errc::NotFound, "composition " + composition.id + " references unknown concept " + id);
        }
        out.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(ViolationKind kind) noexcept {
    switch (kind) {
        case ViolationKind::DuplicateId: return "DuplicateId";
        case ViolationKind::DuplicateRareToken: return "DuplicateRareToken";
        case ViolationKind::DanglingReference: return "DanglingReference";
        case ViolationKind::EmptyField: return "EmptyField";
        case ViolationKind::NoImages: return "NoImages";
        case ViolationKind::UnreadableImage: return "UnreadableImage";
        case ViolationKind::TooFewConcepts: return "TooFewConcepts";
        case ViolationKind::RepeatedConcept: return "RepeatedConcept";
        case ViolationKind::NoBackgroundPrompts: return "NoBackgroundPrompts";
        case ViolationKind::InvalidCanvas: return "InvalidCanvas";
        case ViolationKind::GlobalTokenCollision: return "GlobalTokenCollision";
        case ViolationKind::RankOutOfRange: return "RankOutOfRange";
        case ViolationKind::EmptyCaption: return "EmptyCaption";
        case ViolationKind::UnpairedCaption: return "UnpairedCaption";
        case ViolationKind::StageInconsistency: return "StageInconsistency";
    }
    return "Violation";
}

namespace {

template <typename Range, typename Key>
void check_duplicate_ids(const Range& items, Key key, std::string_view what, std::vector<Violation>& out) {
    std::map<std::string, int> counts;
    for (const auto& item : items) {
        ++counts[std::invoke(key, item)];
    }
    for (const auto& [id, n] : counts) {
        if (n > 1) {
            out.push_back({ViolationKind::DuplicateId, id,
                           std::string(what) + " id used " + std::to_string(n) + " times"});
        }
    }
}

bool readable(const std::filesystem::path& p) {
    try {
        return !load_image(p).empty();
    } catch (const Error&) {
        return false;
    }
}

}  // namespace

std::vector<Violation> validate_manifest(const Manifest& manifest,
                                         const std::optional<std::filesystem::path>& image_root) {
    std::vector<Violation> out;

    check_duplicate_ids(manifest.concepts, &Concept::id, "concept", out);
    check_duplicate_ids(manifest.compositions, &Composition::id, "composition", out);
    check_duplicate_ids(manifest.samples, &Sample::id, "sample", out);

    std::map<std::string, std::vector<std::string>> token_owners;
    std::set<std::string, std::less<>> concept_ids;
    for (const auto& c : manifest.concepts) {
        concept_ids.insert(c.id);
        if (c.id.empty()) {
            out.push_back({ViolationKind::EmptyField, c.id, "concept id is empty"});
        }
        if (c.category_label.empty()) {
            out.push_back({ViolationKind::EmptyField, c.id, "category_label is empty"});
        }
        if (c.rare_token.empty()) {
            out.push_back({ViolationKind::EmptyField, c.id, "rare_token is empty"});
        } else {
            token_owners[c.rare_token].push_back(c.id);
        }
        if (c.image_refs.empty()) {
            out.push_back({ViolationKind::NoImages, c.id, "concept has no source images"});
        }
        if (image_root) {
            for (const auto& ref : c.image_refs) {
                if (!readable(*image_root / ref)) {
                    out.push_back({ViolationKind::UnreadableImage, c.id, "cannot read " + ref});
                }
            }
        }
    }
    for (auto& [token, owners] : token_owners) {
        if (owners.size() > 1) {
            std::ranges::sort(owners);
            std::string detail = "rare token " + token + " shared by";
            for (const auto& o : owners) {
                detail += " " + o;
            }
            out.push_back({ViolationKind::DuplicateRareToken, owners.front(), detail});
        }
    }

    std::set<std::string, std::less<>> composition_ids;
    for (const auto& comp : manifest.compositions) {
        composition_ids.insert(comp.id);
        if (comp.concept_ids.size() < 2) {
            out.push_back({ViolationKind::TooFewConcepts, comp.id, "a composition needs at least two concepts"});
        }
        std::set<std::string> seen;
        for (const auto& cid : comp.concept_ids) {
            if (!seen.insert(cid).second) {
                out.push_back({ViolationKind::RepeatedConcept, comp.id, "concept " + cid + " listed twice"});
            }
            if (!concept_ids.contains(cid)) {
                out.push_back({ViolationKind::DanglingReference, comp.id, "unknown concept " + cid});
            }
        }
        if (comp.background_prompts.empty()) {
            out.push_back({ViolationKind::NoBackgroundPrompts, comp.id, "background prompt set is empty"});
        }
        for (const auto& p : comp.background_prompts) {
            if (p.empty()) {
                out.push_back({ViolationKind::EmptyField, comp.id, "empty background prompt"});
            }
        }
        if (comp.canvas.width <= 0 || comp.canvas.height <= 0) {
            out.push_back({ViolationKind::InvalidCanvas, comp.id, "canvas dimensions must be positive"});
        }
        if (comp.global_token.empty()) {
            out.push_back({ViolationKind::EmptyField, comp.id, "global_token is empty"});
        } else if (token_owners.contains(comp.global_token)) {
            out.push_back({ViolationKind::GlobalTokenCollision, comp.id,
                           "global token " + comp.global_token + " equals a rare token"});
        }
    }

    for (const auto& s : manifest.samples) {
        if (!composition_ids.contains(s.composition_id)) {
            out.push_back({ViolationKind::DanglingReference, s.id, "unknown composition " + s.composition_id});
        }
        for (const auto& [cid, ref] : s.source_image_refs) {
            if (!concept_ids.contains(cid)) {
                out.push_back({ViolationKind::DanglingReference, s.id, "unknown concept " + cid});
            }
        }
        if (s.rank && (*s.rank < 1 || *s.rank > 5)) {
            out.push_back({ViolationKind::RankOutOfRange, s.id, "rank " + std::to_string(*s.rank)});
        }
        const bool composed = s.fg_image_ref && s.fg_mask_ref;
        if (s.fg_image_ref.has_value() != s.fg_mask_ref.has_value()) {
            out.push_back({ViolationKind::StageInconsistency, s.id, "foreground image and mask must come together"});
        }
        if (s.final_image_ref && (!composed || !s.bg_image_ref)) {
            out.push_back({ViolationKind::StageInconsistency, s.id, "final image without composite or background"});
        }
        if (s.short_caption && s.short_caption->empty()) {
            out.push_back({ViolationKind::EmptyCaption, s.id, "short caption is empty"});
        }
        if (s.detailed_caption && s.detailed_caption->empty()) {
            out.push_back({ViolationKind::EmptyCaption, s.id, "detailed caption is empty"});
        }
        // Every caption must describe an image that exists.
        if ((s.short_caption || s.detailed_caption) && !s.final_image_ref) {
            out.push_back({ViolationKind::UnpairedCaption, s.id, "caption without a final image"});
        }
    }

    std::ranges::sort(out);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
void put_optional(ojson& j, const char* key, const std::optional<T>& value) {
    if (value) {
        j[key] = *value;
    }
}

ojson to_json(const Concept& c) {
    return ojson{{"id", c.id}, {"category_label", c.category_label}, {"rare_token", c.rare_token},
                 {"image_refs", c.image_refs}};
}

ojson to_json(const Composition& c) {
    return ojson{{"id", c.id},
                 {"concept_ids", c.concept_ids},
                 {"background_prompts", c.background_prompts},
                 {"canvas", ojson{{"width", c.canvas.width}, {"height", c.canvas.height}}},
                 {"global_token", c.global_token}};
}

ojson to_json(const Sample& s) {
    ojson j{{"id", s.id}, {"composition_id", s.composition_id}};
    put_optional(j, "layout_ref", s.layout_ref);
    if (!s.source_image_refs.empty()) {
        j["source_image_refs"] = s.source_image_refs;
    }
    put_optional(j, "fg_image_ref", s.fg_image_ref);
    put_optional(j, "fg_mask_ref", s.fg_mask_ref);
    put_optional(j, "soft_mask_ref", s.soft_mask_ref);
    put_optional(j, "bg_image_ref", s.bg_image_ref);
    put_optional(j, "final_image_ref", s.final_image_ref);
    put_optional(j, "short_caption", s.short_caption);
    put_optional(j, "detailed_caption", s.detailed_caption);
    put_optional(j, "short_token_count", s.short_token_count);
    put_optional(j, "detailed_token_count", s.detailed_token_count);
    j["background_prompt_used"] = s.background_prompt_used;
    j["seed"] = s.seed;
    put_optional(j, "rank", s.rank);
    if (!s.backend_versions.empty()) {
        j["backend_versions"] = s.backend_versions;
    }
    if (!s.warnings.empty()) {
        j["warnings"] = s.warnings;
    }
    return j;
}

// Field access with a path for error messages.
class Reader {
public:
    Reader(const ojson& node, std::string path) : m_node(node), m_path(std::move(path)) {
        if (!m_node.is_object()) {
            throw Error(Errc::Parse, "field '" + m_path + "' must be an object");
        }
    }

    template <typename T>
    T required(const char* key) const {
        auto it = m_node.find(key);
        if (it == m_node.end()) {
            throw Error(Errc::Parse, "missing field '" + join(key) + "'");
        }
        return convert<T>(*it, key);
    }

    template <typename T>
    std::optional<T> optional(const char* key) const {
        auto it = m_node.find(key);
        if (it == m_node.end() || it->is_null()) {
            return std::nullopt;
        }
        return convert<T>(*it, key);
    }

    template <typename T>
    T optional_or(const char* key, T fallback) const {
        auto v = optional<T>(key);
        return v ? std::move(*v) : std::move(fallback);
    }

    const ojson& child(const char* key) const {
        auto it = m_node.find(key);
        if (it == m_node.end()) {
            throw Error(Errc::Parse, "missing field '" + join(key) + "'");
        }
        return *it;
    }

    std::string join(std::string_view key) const {
        return m_path.empty() ? std::string(key) : m_path + "." + std::string(key);
    }

private:
    template <typename T>
    T convert(const ojson& value, const char* key) const {
        try {
            return value.get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(Errc::Parse, "field '" + join(key) + "' has the wrong type");
        }
    }

    const ojson& m_node;
    std::string m_path;
};

std::string indexed(std::string_view base, std::size_t i) {
    return std::string(base) + "[" + std::to_string(i) + "]";
}

Concept concept_from(const ojson& j, const std::string& path) {
    Reader r(j, path);
    return Concept{r.required<std::string>("id"), r.required<std::string>("category_label"),
                   r.required<std::string>("rare_token"), r.required<std::vector<std::string>>("image_refs")};
}

Composition composition_from(const ojson& j, const std::string& path) {
    Reader r(j, path);
    Composition c;
    c.id = r.required<std::string>("id");
    c.concept_ids = r.required<std::vector<std::string>>("concept_ids");
    c.background_prompts = r.required<std::vector<std::string>>("background_prompts");
    Reader canvas(r.child("canvas"), r.join("canvas"));
    c.canvas = Canvas{canvas.required<int>("width"), canvas.required<int>("height")};
    c.global_token = r.required<std::string>("global_token");
    return c;
}

Sample sample_from(const ojson& j, const std::string& path) {
    Reader r(j, path);
    Sample s;
    s.id = r.required<std::string>("id");
    s.composition_id = r.required<std::string>("composition_id");
    s.layout_ref = r.optional<std::string>("layout_ref");
    s.source_image_refs = r.optional_or<std::map<std::string, std::string>>("source_image_refs", {});
    s.fg_image_ref = r.optional<std::string>("fg_image_ref");
    s.fg_mask_ref = r.optional<std::string>("fg_mask_ref");
    s.soft_mask_ref = r.optional<std::string>("soft_mask_ref");
    s.bg_image_ref = r.optional<std::string>("bg_image_ref");
    s.final_image_ref = r.optional<std::string>("final_image_ref");
    s.short_caption = r.optional<std::string>("short_caption");
    s.detailed_caption = r.optional<std::string>("detailed_caption");
    s.short_token_count = r.optional<int>("short_token_count");
    s.detailed_token_count = r.optional<int>("detailed_token_count");
    s.background_prompt_used = r.required<std::string>("background_prompt_used");
    s.seed = r.required<std::uint64_t>("seed");
    s.rank = r.optional<int>("rank");
    s.backend_versions = r.optional_or<std::map<std::string, std::string>>("backend_versions", {});
    s.warnings = r.optional_or<std::vector<std::string>>("warnings", {});
    return s;
}

template <typename T, typename F>
std::vector<T> list_from(const Reader& r, const char* key, F convert) {
    const ojson& arr = r.child(key);
    if (!arr.is_array()) {
        throw Error(Errc::Parse, "field '" + r.join(key) + "' must be a list");
    }
    std::vector<T> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back(convert(arr[i], indexed(r.join(key), i)));
    }
    return out;
}

int line_of(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

std::string serialize_manifest(const Manifest& manifest) {
    ojson j;
    j["schema_version"] = manifest.schema_version;
    j["finalized"] = manifest.finalized;
    j["concepts"] = ojson::array();
    for (const auto& c : manifest.concepts) {
        j["concepts"].push_back(to_json(c));
    }
    j["compositions"] = ojson::array();
    for (const auto& c : manifest.compositions) {
        j["compositions"].push_back(to_json(c));
    }
    j["samples"] = ojson::array();
    for (const auto& s : manifest.samples) {
        j["samples"].push_back(to_json(s));
    }
    return j.dump(2) + "\n";
}

Manifest parse_manifest(std::string_view text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::Parse, "line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    Reader r(j, "");
    Manifest m;
    m.schema_version = r.required<int>("schema_version");
    if (m.schema_version != kManifestSchemaVersion) {
        throw Error(Errc::Parse, "field 'schema_version': unsupported version " + std::to_string(m.schema_version));
    }
    m.finalized = r.optional_or<bool>("finalized", false);
    m.concepts = list_from<Concept>(r, "concepts", concept_from);
    m.compositions = list_from<Composition>(r, "compositions", composition_from);
    m.samples = list_from<Sample>(r, "samples", sample_from);
    return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot read manifest " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_manifest(buffer.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    const std::string text = serialize_manifest(manifest);
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << text;
        if (!out) {
            throw Error(Errc::Io, "cannot write manifest " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error(Errc::Io, "cannot replace manifest " + path.string() + ": " + ec.message());
    }
}

// ---------------------------------------------------------------------------
// Caption statistics

int count_words(std::string_view caption, const std::set<std::string, std::less<>>& excluded_tokens) {
    // Whole words only; trailing punctuation ("<new1>,") still matches.
    static constexpr std::string_view kTrailing = ",.;:!?\"')";
    std::istringstream words{std::string(caption)};
    int n = 0;
    for (std::string w; words >> w;) {
        std::string_view core = w;
        while (!core.empty() && kTrailing.find(core.back()) != std::string_view::npos) {
            core.remove_suffix(1);
        }
        if (excluded_tokens.contains(w) || (!core.empty() && excluded_tokens.contains(core))) {
            continue;
        }
        ++n;
    }
    return n;
}

namespace {

std::vector<std::pair<std::string, int>> ranked(const std::map<std::string, int>& counts) {
    std::vector<std::pair<std::string, int>> out(counts.begin(), counts.end());
    std::ranges::stable_sort(out, [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

}  // namespace

StatsReport compute_caption_stats(std::span<const std::string> captions,
                                  const std::set<std::string, std::less<>>& excluded_tokens) {
    if (captions.empty()) {
        throw Error(Errc::EmptyCorpus, "no captions to summarize");
    }
    StatsReport report;
    report.caption_count = captions.size();
    long long total = 0;
    std::size_t over = 0;
    for (const auto& caption : captions) {
        const int n = count_words(caption, excluded_tokens);
        ++report.word_count_histogram[n];
        total += n;
        if (n > 20) {
            ++over;
        }
    }
    report.mean_words = static_cast<double>(total) / static_cast<double>(captions.size());
    report.fraction_over_20 = static_cast<double>(over) / static_cast<double>(captions.size());
    return report;
}

StatsReport compute_caption_stats(const Manifest& manifest) {
    std::set<std::string, std::less<>> excluded;
    for (const auto& c : manifest.concepts) {
        excluded.insert(c.rare_token);
    }
    for (const auto& c : manifest.compositions) {
        excluded.insert(c.global_token);
    }
    std::vector<std::string> captions;
    std::map<std::string, int> labels;
    std::map<std::string, int> backgrounds;
    for (const auto& s : manifest.samples) {
        const auto& caption = s.detailed_caption ? s.detailed_caption : s.short_caption;
        if (!caption) {
            continue;
        }
        captions.push_back(*caption);
        if (!s.background_prompt_used.empty()) {
            ++backgrounds[s.background_prompt_used];
        }
        if (const Composition* comp = manifest.find_composition(s.composition_id)) {
            for (const auto& cid : comp->concept_ids) {
                if (const Concept* c = manifest.find_concept(cid)) {
                    ++labels[c->category_label];
                }
            }
        }
    }
    StatsReport report = compute_caption_stats(captions, excluded);
    report.label_frequency = ranked(labels);
    report.background_frequency = ranked(backgrounds);
    return report;
}

}  // namespace compogen
