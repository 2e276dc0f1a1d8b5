// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/captioning.hpp"

#include <algorithm>
#include <sstream>

#include <spdlog/spdlog.h>

#include "compogen/error.hpp"
#include "compogen/prompt_assets.hpp"

namespace compogen {

std::string join_with_and(std::span<const std::string> items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) {
            out += (i + 1 == items.size()) ? " and " : ", ";
        }
        out += items[i];
    }
    return out;
}

std::string compose_short_caption(std::span<const std::string> labels, std::string_view background_prompt) {
    std::string out = "a photo of " + join_with_and(labels);
    if (!background_prompt.empty()) {
        out += " ";
        out += background_prompt;
    }
    return out;
}

std::string compose_short_caption(const Manifest& manifest, const Composition& composition,
                                  std::string_view background_prompt) {
    std::vector<std::string> labels;
    for (const Concept* c : manifest.concepts_of(composition)) {
        labels.push_back(c->category_label);
    }
    return compose_short_caption(labels, background_prompt);
}

std::vector<TrainingConcept> training_concepts(const Manifest& manifest, const Composition& composition) {
    std::vector<TrainingConcept> out;
    for (const Concept* c : manifest.concepts_of(composition)) {
        out.push_back({c->rare_token, c->category_label});
    }
    return out;
}

TrainingPrompt build_training_prompt(std::string_view global_token, std::span<const TrainingConcept> concepts,
                                     std::string_view background_prompt, int repetitions, bool use_global_token) {
    if (repetitions < 1) {
        throw Error(Errc::Precondition, "concept repetitions must be >= 1, got " + std::to_string(repetitions));
    }
    if (use_global_token && global_token.empty()) {
        throw Error(Errc::Precondition, "global token requested but the composition has none");
    }
    std::vector<std::string> phrases;
    for (int r = 0; r < repetitions; ++r) {
        for (const auto& c : concepts) {
            phrases.push_back(c.rare_token + " " + c.label);
        }
    }
    TrainingPrompt prompt;
    prompt.uses_global_token = use_global_token;
    prompt.concept_repetitions = repetitions;
    prompt.background_clause = std::string(background_prompt);
    prompt.text = "a photo of ";
    if (use_global_token) {
        prompt.text += std::string(global_token) + " scene with ";
    }
    prompt.text += join_with_and(phrases);
    if (!background_prompt.empty()) {
        prompt.text += " " + prompt.background_clause;
    }
    return prompt;
}

ParsedTrainingPrompt parse_training_prompt(std::string_view text, std::span<const TrainingConcept> concepts) {
    constexpr std::string_view kPrefix = "a photo of ";
    if (!text.starts_with(kPrefix)) {
        throw Error(Errc::Parse, "training prompt does not start with '" + std::string(kPrefix) + "'");
    }
    ParsedTrainingPrompt parsed;
    std::string_view rest = text.substr(kPrefix.size());
    constexpr std::string_view kScene = " scene with ";
    if (const auto scene = rest.find(kScene); scene != std::string_view::npos && rest.starts_with('<')) {
        const auto close = rest.find('>');
        if (close != std::string_view::npos && close < scene) {
            parsed.global_token = std::string(rest.substr(0, scene));
            rest = rest.substr(scene + kScene.size());
        }
    }
    // Walk the phrase list: each item is one "rare label" phrase from the
    // concept set, separated by ", " or " and ".
    for (;;) {
        const TrainingConcept* match = nullptr;
        std::size_t match_len = 0;
        for (const auto& c : concepts) {
            const std::string phrase = c.rare_token + " " + c.label;
            if (rest.starts_with(phrase) && phrase.size() > match_len) {
                match = &c;
                match_len = phrase.size();
            }
        }
        if (!match) {
            throw Error(Errc::Parse, "unrecognized concept phrase at '" + std::string(rest.substr(0, 40)) + "'");
        }
        parsed.rare_tokens.push_back(match->rare_token);
        rest = rest.substr(match_len);
        if (rest.starts_with(", ")) {
            rest = rest.substr(2);
        } else if (rest.starts_with(" and ")) {
            // " and " also ends the list; what follows must be a phrase, else
            // it is the background clause.
            std::string_view after = rest.substr(5);
            const bool phrase_follows = std::ranges::any_of(
                concepts, [&](const TrainingConcept& c) { return after.starts_with(c.rare_token + " "); });
            if (!phrase_follows) {
                break;
            }
            rest = after;
        } else {
            break;
        }
    }
    if (rest.starts_with(' ')) {
        rest.remove_prefix(1);
    }
    parsed.background_clause = std::string(rest);
    return parsed;
}

std::string_view recaption_instruction() noexcept { return assets::kRecaptionInstruction; }

int count_tokens(const Embedder& embedder, std::string_view text) {
    if (text.empty()) {
        return 0;
    }
    return embedder.count_text_tokens(text);
}

std::string truncate_to_budget(std::string_view text, const Embedder& embedder, int token_budget) {
    std::vector<std::string> words;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) {
        words.push_back(w);
    }
    const auto prefix = [&](std::size_t n) {
        std::string out;
        for (std::size_t i = 0; i < n; ++i) {
            out += (i ? " " : "") + words[i];
        }
        return out;
    };
    // Token counts grow with the number of words, so bisect on the prefix length.
    std::size_t lo = 0;
    std::size_t hi = words.size();
    while (lo < hi) {
        const std::size_t mid = (lo + hi + 1) / 2;
        if (count_tokens(embedder, prefix(mid)) <= token_budget) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    return prefix(lo);
}

RecaptionResult recaption_detailed(const Image& image, const Captioner& captioner, const Embedder& embedder,
                                   const RecaptionOptions& options) {
    if (options.token_budget < 1 || options.max_retries < 0) {
        throw Error(Errc::Precondition, "token budget must be >= 1 and retries >= 0");
    }
    const std::string instruction =
        options.instruction.empty() ? std::string(recaption_instruction()) : options.instruction;
    RecaptionResult result;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        result.text = captioner.caption_image(image, instruction);
        result.attempts = attempt + 1;
        result.token_count = count_tokens(embedder, result.text);
        if (result.token_count <= options.token_budget) {
            return result;
        }
        spdlog::debug("detailed caption has {} tokens (budget {}), attempt {}", result.token_count,
                      options.token_budget, result.attempts);
    }
    result.text = truncate_to_budget(result.text, embedder, options.token_budget);
    result.token_count = count_tokens(embedder, result.text);
    result.truncated = true;
    return result;
}

}  // namespace compogen
