// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compogen/backends.hpp"
#include "compogen/dataset.hpp"
#include "compogen/image.hpp"

namespace compogen {

/// Token budget of the text encoder used downstream.
inline constexpr int kTokenBudget = 77;

/// Warning tag recorded on a sample whose detailed caption had to be cut.
inline constexpr std::string_view kTruncatedCaptionWarning = "TruncatedCaption";

/// "cat, dog and bird" (single label unchanged).
std::string join_with_and(std::span<const std::string> items);

/// "a photo of {labels joined} {background}".
std::string compose_short_caption(std::span<const std::string> labels, std::string_view background_prompt);
std::string compose_short_caption(const Manifest& manifest, const Composition& composition,
                                  std::string_view background_prompt);

struct TrainingConcept {
    std::string rare_token;
    std::string label;
};

std::vector<TrainingConcept> training_concepts(const Manifest& manifest, const Composition& composition);

struct TrainingPrompt {
    std::string text;
    bool uses_global_token = true;
    int concept_repetitions = 1;
    std::string background_clause;
};

/// "a photo of {global} scene with {rare label} phrases {background}". Each
/// concept phrase appears `repetitions` times, concepts interleaved
/// round-robin. Without the global token the "{global} scene with" part is
/// left out. Throws PreconditionError when repetitions < 1.
TrainingPrompt build_training_prompt(std::string_view global_token, std::span<const TrainingConcept> concepts,
                                     std::string_view background_prompt, int repetitions,
                                     bool use_global_token = true);

/// Inverse of build_training_prompt given the concept labels.
struct ParsedTrainingPrompt {
    std::string global_token;  // empty when absent
    std::vector<std::string> rare_tokens;  // in order of appearance, with repeats
    std::string background_clause;
};
ParsedTrainingPrompt parse_training_prompt(std::string_view text, std::span<const TrainingConcept> concepts);

struct RecaptionOptions {
    std::string instruction;  // defaults to the packaged instruction when empty
    int token_budget = kTokenBudget;
    int max_retries = 2;
};

struct RecaptionResult {
    std::string text;
    int token_count = 0;
    int attempts = 0;
    bool truncated = false;
};

/// The packaged recaptioning instruction.
std::string_view recaption_instruction() noexcept;

/// Token count through the embedder's own tokenizer.
int count_tokens(const Embedder& embedder, std::string_view text);

/// Longest whole-word prefix whose token count is within the budget.
std::string truncate_to_budget(std::string_view text, const Embedder& embedder, int token_budget);

/// Asks the captioner for a detailed caption, retrying while it exceeds the
/// budget; the last attempt is truncated if it still does not fit.
RecaptionResult recaption_detailed(const Image& image, const Captioner& captioner, const Embedder& embedder,
                                   const RecaptionOptions& options = {});

}  // namespace compogen
