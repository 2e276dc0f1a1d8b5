// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/layout.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "compogen/digest.hpp"
#include "compogen/error.hpp"
#include "compogen/prompt_assets.hpp"

namespace compogen {

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const double ia = a.area();
    const double ib = b.area();
    if (ia <= 0.0 || ib <= 0.0) {
        return 0.0;
    }
    const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (ix <= 0.0 || iy <= 0.0) {
        return 0.0;
    }
    const double inter = ix * iy;
    return inter / (ia + ib - inter);
}

std::string_view to_string(LayoutSource source) noexcept {
    switch (source) {
        case LayoutSource::Llm: return "llm";
        case LayoutSource::Fallback: return "fallback";
        case LayoutSource::Repaired: return "repaired";
    }
    return "llm";
}

std::vector<LabeledConcept> labeled_concepts(const Manifest& manifest, const Composition& composition) {
    std::vector<LabeledConcept> out;
    for (const Concept* c : manifest.concepts_of(composition)) {
        out.push_back({c->id, c->category_label});
    }
    return out;
}

std::string_view prompt_template_version() noexcept { return assets::kPromptTemplateVersion; }

namespace {

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
        text.replace(pos, from.size(), to);
    }
    return text;
}

std::string lower_trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(b, e - b + 1));
    std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s, std::string_view junk = " \t\r\n") {
    const auto b = s.find_first_not_of(junk);
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(junk);
    return std::string(s.substr(b, e - b + 1));
}

std::string join_objects(std::span<const LabeledConcept> concepts, std::string_view prefix) {
    std::string out;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (i > 0) {
            out += (i + 1 == concepts.size()) ? " and " : ", ";
        }
        out += std::string(prefix) + concepts[i].label;
    }
    return out;
}

}  // namespace

std::string object_query(std::span<const LabeledConcept> concepts) { return join_objects(concepts, "one "); }

LlmPrompt build_layout_prompt(std::span<const LabeledConcept> concepts, Canvas canvas) {
    std::string system = replace_all(std::string(assets::kLayoutSystem), "{WIDTH}", std::to_string(canvas.width));
    system = replace_all(std::move(system), "{HEIGHT}", std::to_string(canvas.height));
    return LlmPrompt{std::move(system), std::string(assets::kLayoutExamples), object_query(concepts)};
}

// ---------------------------------------------------------------------------
// Layout response parsing

namespace {

class TupleScanner {
public:
    explicit TupleScanner(std::string_view text) : m_text(text) {}

    struct Tuple {
        std::string name;
        std::array<double, 4> xywh{};
    };

    std::vector<Tuple> scan() {
        const auto start = find_tuple_start(0);
        if (!start) {
            fail(m_text.size(), "no (name, [x, y, w, h]) tuple found");
        }
        m_pos = *start;
        std::vector<Tuple> out;
        out.push_back(parse_tuple());
        for (;;) {
            skip_ws();
            if (m_pos >= m_text.size() || m_text[m_pos] != ',') {
                break;
            }
            ++m_pos;
            skip_ws();
            if (!tuple_starts_at(m_pos)) {
                break;
            }
            out.push_back(parse_tuple());
        }
        return out;
    }

private:
    [[noreturn]] void fail(std::size_t offset, std::string_view what) const {
        throw Error(Errc::LayoutParse, "offset " + std::to_string(offset) + ": " + std::string(what));
    }

    bool tuple_starts_at(std::size_t i) const {
        if (i >= m_text.size() || (m_text[i] != '(' && m_text[i] != '[')) {
            return false;
        }
        std::size_t j = i + 1;
        while (j < m_text.size() && std::isspace(static_cast<unsigned char>(m_text[j]))) {
            ++j;
        }
        return j < m_text.size() && (m_text[j] == '\'' || m_text[j] == '"');
    }

    std::optional<std::size_t> find_tuple_start(std::size_t from) const {
        for (std::size_t i = from; i < m_text.size(); ++i) {
            if (tuple_starts_at(i)) {
                return i;
            }
        }
        return std::nullopt;
    }

    void skip_ws() {
        while (m_pos < m_text.size() && std::isspace(static_cast<unsigned char>(m_text[m_pos]))) {
            ++m_pos;
        }
    }

    void expect(char c) {
        skip_ws();
        if (m_pos >= m_text.size() || m_text[m_pos] != c) {
            fail(m_pos, std::string("expected '") + c + "'");
        }
        ++m_pos;
    }

    double number() {
        skip_ws();
        const char* begin = m_text.data() + m_pos;
        const char* end = m_text.data() + m_text.size();
        if (begin < end && *begin == '+') {
            ++begin;
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc{} || !std::isfinite(value)) {
            fail(m_pos, "expected a number");
        }
        m_pos = static_cast<std::size_t>(ptr - m_text.data());
        return value;
    }

    Tuple parse_tuple() {
        const char open = m_text[m_pos];
        const char close = open == '(' ? ')' : ']';
        ++m_pos;
        skip_ws();
        const char quote = m_text[m_pos];
        ++m_pos;
        const auto name_end = m_text.find(quote, m_pos);
        if (name_end == std::string_view::npos) {
            fail(m_pos, "unterminated object name");
        }
        Tuple t;
        t.name = std::string(m_text.substr(m_pos, name_end - m_pos));
        m_pos = name_end + 1;
        expect(',');
        expect('[');
        for (int i = 0; i < 4; ++i) {
            if (i > 0) {
                expect(',');
            }
            t.xywh[static_cast<std::size_t>(i)] = number();
        }
        expect(']');
        expect(close);
        return t;
    }

    std::string_view m_text;
    std::size_t m_pos = 0;
};

}  // namespace

Layout parse_layout_response(std::string_view text, std::string_view composition_id,
                             std::span<const LabeledConcept> concepts, Canvas canvas) {
    if (text.empty()) {
        throw Error(Errc::LayoutParse, "offset 0: empty response");
    }
    const auto tuples = TupleScanner(text).scan();

    Layout layout;
    layout.composition_id = std::string(composition_id);
    layout.canvas = canvas;
    layout.source = LayoutSource::Llm;

    std::vector<bool> taken(concepts.size(), false);
    std::vector<std::optional<BoundingBox>> assigned(concepts.size());
    for (const auto& t : tuples) {
        const std::string name = lower_trim(t.name);
        bool known = false;
        bool placed = false;
        for (std::size_t i = 0; i < concepts.size(); ++i) {
            if (lower_trim(concepts[i].label) != name) {
                continue;
            }
            known = true;
            if (!taken[i]) {
                taken[i] = true;
                assigned[i] = BoundingBox{concepts[i].id, t.xywh[0], t.xywh[1], t.xywh[2], t.xywh[3]};
                placed = true;
                break;
            }
        }
        if (!known) {
            throw Error(Errc::UnknownObject, "'" + t.name + "' is not part of composition " + layout.composition_id);
        }
        if (!placed) {
            spdlog::debug("layout for {}: dropping surplus '{}' box", layout.composition_id, t.name);
        }
    }
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (!assigned[i]) {
            throw Error(Errc::IncompleteLayout, "no box for concept " + concepts[i].id + " ('" + concepts[i].label + "')");
        }
        layout.boxes.push_back(*assigned[i]);
    }
    return layout;
}

// ---------------------------------------------------------------------------
// Validation and repair

namespace {

bool box_ok(const BoundingBox& b) {
    return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) && std::isfinite(b.h) && b.w > 0.0 &&
           b.h > 0.0;
}

bool contained(const BoundingBox& b, Canvas canvas) {
    return b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= canvas.width && b.y + b.h <= canvas.height;
}

double max_pairwise_iou(std::span<const BoundingBox> boxes) {
    double worst = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < boxes.size(); ++j) {
            worst = std::max(worst, iou(boxes[i], boxes[j]));
        }
    }
    return worst;
}

BoundingBox scaled_about_center(const BoundingBox& b, double factor) {
    const double cx = b.center_x();
    const double cy = b.center_y();
    BoundingBox out = b;
    out.w = b.w * factor;
    out.h = b.h * factor;
    out.x = cx - out.w / 2.0;
    out.y = cy - out.h / 2.0;
    return out;
}

// Shrinks oversized boxes (keeping aspect), then shifts them inside the canvas.
BoundingBox clamp_into(BoundingBox b, Canvas canvas) {
    const double fit = std::min({1.0, canvas.width / b.w, canvas.height / b.h});
    if (fit < 1.0) {
        b = scaled_about_center(b, fit);
        // Guard against rounding pushing a side past the canvas.
        b.w = std::min(b.w, static_cast<double>(canvas.width));
        b.h = std::min(b.h, static_cast<double>(canvas.height));
    }
    b.x = std::clamp(b.x, 0.0, canvas.width - b.w);
    b.y = std::clamp(b.y, 0.0, canvas.height - b.h);
    return b;
}

/// Uniformly scales a layout whose boxes start inside the canvas but reach
/// past its right or bottom edge, so the furthest edge lands on the border.
/// Relative geometry is kept; boxes with negative corners are left to clamping.
void fit_extent(Layout& layout) {
    double right = 0.0;
    double bottom = 0.0;
    for (const auto& b : layout.boxes) {
        if (b.x < 0.0 || b.y < 0.0) {
            return;
        }
        right = std::max(right, b.x + b.w);
        bottom = std::max(bottom, b.y + b.h);
    }
    const double s = std::min({1.0, layout.canvas.width / right, layout.canvas.height / bottom});
    if (s >= 1.0) {
        return;
    }
    for (auto& b : layout.boxes) {
        b.x *= s;
        b.y *= s;
        b.w *= s;
        b.h *= s;
    }
}

std::vector<BoundingBox> shrink_all(std::span<const BoundingBox> boxes, double factor) {
    std::vector<BoundingBox> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
        out.push_back(scaled_about_center(b, factor));
    }
    return out;
}

Layout fallback_for(const Layout& layout, const RepairOptions& options) {
    std::vector<std::string> ids;
    for (const auto& b : layout.boxes) {
        ids.push_back(b.concept_id);
    }
    return fallback_layout(layout.composition_id, ids, layout.canvas, options.fallback_seed);
}

}  // namespace

bool layout_is_valid(const Layout& layout, double iou_threshold) {
    for (const auto& b : layout.boxes) {
        if (!box_ok(b) || !contained(b, layout.canvas)) {
            return false;
        }
    }
    return max_pairwise_iou(layout.boxes) <= iou_threshold;
}

Layout normalize_coordinate_frame(const Layout& layout) {
    double frame_x = 0.0;
    double frame_y = 0.0;
    for (const auto& b : layout.boxes) {
        frame_x = std::max({frame_x, b.x, b.w});
        frame_y = std::max({frame_y, b.y, b.h});
    }
    double s = 1.0;
    if (frame_x > layout.canvas.width) {
        s = std::min(s, layout.canvas.width / frame_x);
    }
    if (frame_y > layout.canvas.height) {
        s = std::min(s, layout.canvas.height / frame_y);
    }
    if (s >= 1.0) {
        return layout;
    }
    Layout out = layout;
    for (auto& b : out.boxes) {
        b.x *= s;
        b.y *= s;
        b.w *= s;
        b.h *= s;
    }
    return out;
}

Layout validate_and_repair_layout(const Layout& layout, const RepairOptions& options) {
    if (layout.canvas.width <= 0 || layout.canvas.height <= 0) {
        throw Error(Errc::Precondition, "layout canvas must be positive");
    }
    if (layout_is_valid(layout, options.iou_threshold)) {
        return layout;
    }
    if (!std::ranges::all_of(layout.boxes, box_ok)) {
        spdlog::debug("layout {}: degenerate box, using fallback", layout.composition_id);
        return fallback_for(layout, options);
    }

    Layout repaired = normalize_coordinate_frame(layout);
    fit_extent(repaired);
    for (auto& b : repaired.boxes) {
        b = clamp_into(b, repaired.canvas);
    }
    repaired.source = LayoutSource::Repaired;

    if (max_pairwise_iou(repaired.boxes) > options.iou_threshold) {
        // IoU of boxes shrunk about fixed centers is monotone in the factor,
        // so bisection finds the largest admissible factor.
        const auto too_much = [&](double f) {
            return max_pairwise_iou(shrink_all(repaired.boxes, f)) > options.iou_threshold;
        };
        double lo = options.min_shrink;
        double hi = 1.0;
        if (too_much(lo)) {
            spdlog::debug("layout {}: overlap not resolvable by shrinking, using fallback", layout.composition_id);
            return fallback_for(layout, options);
        }
        for (int i = 0; i < options.max_iterations; ++i) {
            const double mid = 0.5 * (lo + hi);
            (too_much(mid) ? hi : lo) = mid;
        }
        repaired.boxes = shrink_all(repaired.boxes, lo);
    }

    const bool tiny = std::ranges::any_of(repaired.boxes, [&](const BoundingBox& b) {
        return b.w < options.min_box_side || b.h < options.min_box_side;
    });
    if (tiny || !layout_is_valid(repaired, options.iou_threshold)) {
        return fallback_for(layout, options);
    }
    return repaired;
}

Layout fallback_layout(std::string_view composition_id, std::span<const std::string> concept_ids, Canvas canvas,
                       std::uint64_t seed) {
    Layout layout;
    layout.composition_id = std::string(composition_id);
    layout.canvas = canvas;
    layout.source = LayoutSource::Fallback;
    const int k = static_cast<int>(concept_ids.size());
    if (k == 0) {
        return layout;
    }
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
    const int rows = (k + cols - 1) / cols;
    const int cell_w = canvas.width / cols;
    const int cell_h = canvas.height / rows;
    const int box_w = std::max(1, cell_w * 8 / 10);
    const int box_h = std::max(1, cell_h * 8 / 10);
    const int jitter_x = k > 1 ? cell_w / 20 : 0;
    const int jitter_y = k > 1 ? cell_h / 20 : 0;
    Rng rng(derive_seed(seed, composition_id));
    for (int i = 0; i < k; ++i) {
        const int col = i % cols;
        const int row = i / cols;
        const auto jx = static_cast<int>(rng.uniform_int(-jitter_x, jitter_x));
        const auto jy = static_cast<int>(rng.uniform_int(-jitter_y, jitter_y));
        layout.boxes.push_back(BoundingBox{concept_ids[static_cast<std::size_t>(i)],
                                           static_cast<double>(col * cell_w + (cell_w - box_w) / 2 + jx),
                                           static_cast<double>(row * cell_h + (cell_h - box_h) / 2 + jy),
                                           static_cast<double>(box_w), static_cast<double>(box_h)});
    }
    return layout;
}

// ---------------------------------------------------------------------------
// Scale correction

LlmPrompt build_scale_prompt(std::span<const LabeledConcept> concepts) {
    std::vector<std::string> unique;
    for (const auto& c : concepts) {
        if (std::ranges::find(unique, c.label) == unique.end()) {
            unique.push_back(c.label);
        }
    }
    std::string query = "Objects: ";
    for (std::size_t i = 0; i < unique.size(); ++i) {
        query += (i == 0 ? "" : ", ") + unique[i];
    }
    return LlmPrompt{std::string(assets::kScaleSystem), std::string{}, std::move(query)};
}

ScaleRatioSet parse_scale_response(std::string_view text, std::span<const LabeledConcept> concepts) {
    ScaleRatioSet set;
    if (concepts.size() == 1) {
        set.ratios[concepts.front().id] = 1.0;
        return set;
    }
    static const std::regex entry_re(R"(([A-Za-z][A-Za-z0-9 _'\-]*?)\s*[:=]\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))");
    std::map<std::string, double> by_label;
    const std::string owned(text);
    for (auto it = std::sregex_iterator(owned.begin(), owned.end(), entry_re); it != std::sregex_iterator(); ++it) {
        by_label[lower_trim((*it)[1].str())] = std::stod((*it)[2].str());
    }
    for (const auto& c : concepts) {
        auto it = by_label.find(lower_trim(c.label));
        if (it == by_label.end()) {
            throw Error(Errc::IncompleteScales, "no scale ratio for '" + c.label + "'");
        }
        if (!(it->second > 0.0 && it->second <= 1.0)) {
            throw Error(Errc::ScaleOutOfRange, "ratio for '" + c.label + "' is " + std::to_string(it->second));
        }
        set.ratios[c.id] = it->second;
    }
    double top = 0.0;
    for (const auto& [id, r] : set.ratios) {
        top = std::max(top, r);
    }
    for (auto& [id, r] : set.ratios) {
        r = (r == top) ? 1.0 : r / top;
    }
    return set;
}

Layout rescale_to_ratios(const Layout& layout, const ScaleRatioSet& ratios) {
    double top = 0.0;
    for (const auto& b : layout.boxes) {
        auto it = ratios.ratios.find(b.concept_id);
        if (it == ratios.ratios.end()) {
            throw Error(Errc::IncompleteScales, "no scale ratio for concept " + b.concept_id);
        }
        if (!(it->second > 0.0 && it->second <= 1.0)) {
            throw Error(Errc::ScaleOutOfRange, "ratio for concept " + b.concept_id + " outside (0, 1]");
        }
        top = std::max(top, it->second);
    }
    double largest = 0.0;
    for (const auto& b : layout.boxes) {
        largest = std::max({largest, b.w, b.h});
    }
    if (layout.boxes.empty() || largest <= 0.0) {
        return layout;
    }
    Layout out = layout;
    for (auto& b : out.boxes) {
        const double ratio = ratios.ratios.at(b.concept_id) / top;
        const double implied = std::max(b.w, b.h) / largest;
        b = scaled_about_center(b, ratio / implied);
    }
    return out;
}

Layout apply_scale_ratios(const Layout& layout, const ScaleRatioSet& ratios, const RepairOptions& options) {
    return validate_and_repair_layout(rescale_to_ratios(layout, ratios), options);
}

// ---------------------------------------------------------------------------
// Background prompts

LlmPrompt build_background_prompt(std::span<const LabeledConcept> concepts) {
    return LlmPrompt{std::string(assets::kBackgroundSystem), std::string(assets::kBackgroundExamples),
                     object_query(concepts)};
}

namespace {

bool locative(std::string_view phrase) {
    static const std::set<std::string, std::less<>> kPrepositions = {
        "in",      "on",      "at",     "by",      "near",   "under",   "inside",     "beside", "behind",
        "along",   "across",  "over",   "next",    "outside", "around", "among",      "underneath",
        "atop",    "within",  "against", "above",  "below",  "amid",    "in front of", "onto", "upon"};
    std::istringstream words{lower_trim(phrase)};
    std::string first;
    words >> first;
    return kPrepositions.contains(first);
}

}  // namespace

BackgroundPromptSet parse_background_response(std::string_view text, std::string_view composition_id) {
    std::vector<std::string> lines;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        if (!trim(line).empty()) {
            lines.push_back(line);
        }
    }
    if (lines.empty()) {
        throw Error(Errc::BackgroundParse, "empty background response");
    }
    std::string chosen = lines.front();
    for (const auto& line : lines) {
        if (lower_trim(line).find("background") != std::string::npos) {
            chosen = line;
            break;
        }
    }
    if (auto colon = chosen.rfind(':'); colon != std::string::npos) {
        chosen = chosen.substr(colon + 1);
    }
    BackgroundPromptSet set;
    set.composition_id = std::string(composition_id);
    std::istringstream parts(chosen);
    for (std::string part; std::getline(parts, part, ',');) {
        std::string prompt = trim(part, " \t\r\n.\"'");
        if (prompt.empty()) {
            continue;
        }
        if (!locative(prompt)) {
            spdlog::debug("dropping background prompt without locative phrase: '{}'", prompt);
            continue;
        }
        if (std::ranges::find(set.prompts, prompt) == set.prompts.end()) {
            set.prompts.push_back(std::move(prompt));
        }
    }
    if (set.prompts.empty()) {
        throw Error(Errc::BackgroundParse, "no usable background prompt in: " + trim(text).substr(0, 120));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Persistence

std::string serialize_layout(const Layout& layout) {
    nlohmann::ordered_json j;
    j["composition_id"] = layout.composition_id;
    j["canvas"] = {{"width", layout.canvas.width}, {"height", layout.canvas.height}};
    j["source"] = std::string(to_string(layout.source));
    j["boxes"] = nlohmann::ordered_json::array();
    for (const auto& b : layout.boxes) {
        j["boxes"].push_back({{"concept_id", b.concept_id}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
    }
    return j.dump(2) + "\n";
}

Layout parse_layout_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        Layout layout;
        layout.composition_id = j.at("composition_id").get<std::string>();
        layout.canvas = Canvas{j.at("canvas").at("width").get<int>(), j.at("canvas").at("height").get<int>()};
        const auto source = j.at("source").get<std::string>();
        layout.source = source == "fallback" ? LayoutSource::Fallback
                        : source == "repaired" ? LayoutSource::Repaired
                                               : LayoutSource::Llm;
        for (const auto& b : j.at("boxes")) {
            layout.boxes.push_back(BoundingBox{b.at("concept_id").get<std::string>(), b.at("x").get<double>(),
                                               b.at("y").get<double>(), b.at("w").get<double>(),
                                               b.at("h").get<double>()});
        }
        return layout;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Parse, std::string("layout file: ") + e.what());
    }
}

}  // namespace compogen
