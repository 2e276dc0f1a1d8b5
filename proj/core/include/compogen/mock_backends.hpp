// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "compogen/backends.hpp"

namespace compogen {

/// Stable key of an image's 8-bit content, so a planted fixture still matches
/// after a PNG round trip.
std::uint64_t image_fingerprint(const Image& image);

/// Ground truth planted by tests and demos for the deterministic mocks.
class FixtureRegistry {
public:
    void plant_labels(const Image& image, std::vector<std::string> labels);
    void plant_boxes(const Image& image, std::vector<DetectionBox> boxes);
    void plant_image_embedding(const Image& image, std::vector<double> values);
    void plant_text_embedding(std::string text, std::vector<double> values);
    void plant_completion(std::string user_query, std::string completion);

    std::optional<std::vector<std::string>> labels(const Image& image) const;
    std::optional<std::vector<DetectionBox>> boxes(const Image& image) const;
    std::optional<std::vector<double>> image_embedding(const Image& image) const;
    std::optional<std::vector<double>> text_embedding(std::string_view text) const;
    std::optional<std::string> completion(std::string_view user_query) const;

private:
    mutable std::mutex m_mutex;
    std::map<std::uint64_t, std::vector<std::string>> m_labels;
    std::map<std::uint64_t, std::vector<DetectionBox>> m_boxes;
    std::map<std::uint64_t, std::vector<double>> m_image_embeddings;
    std::map<std::string, std::vector<double>, std::less<>> m_text_embeddings;
    std::map<std::string, std::string, std::less<>> m_completions;
};

/// The layout completion the mock text backend returns for the composition
/// "one car, one cat, one dog and one house".
inline constexpr std::string_view kReferenceLayoutQuery = "one car, one cat, one dog and one house";
inline constexpr std::string_view kReferenceLayoutCompletion =
    "([('car', [0, 960, 836, 1408]), ('cat', [1364, 1476, 1856, 1864]), "
    "('dog', [280, 1460, 880, 2048]), ('house', [960, 772, 2048, 2016])])";
inline constexpr std::string_view kReferenceBackgroundCompletion =
    "on the street,in the suburban neighborhood,in the countryside";

/// Threshold-on-alpha: mask = 1 where alpha >= 0.5, else 0. Images without an
/// alpha channel are treated as fully opaque.
class MockSegmenter final : public Segmenter {
public:
    MockSegmenter() = default;
    std::string model_id() const override { return "mock-segmenter/1"; }

protected:
    Image do_segment(const Image& image) const override;
};

/// Alpha compositing: out = m * fg + (1 - m) * bg per pixel and channel.
class MockInpainter final : public Inpainter {
public:
    MockInpainter() = default;
    std::string model_id() const override { return "mock-inpainter/1"; }

protected:
    Image do_inpaint(const Image& fg_image, const Image& fg_mask, const Image& bg_image, std::string_view prompt,
                     std::uint64_t seed) const override;
};

/// Planted completions first, then canned replies for the scale and scene
/// templates, and a deterministic grid layout for anything else.
class MockTextCompleter final : public TextCompleter {
public:
    explicit MockTextCompleter(std::shared_ptr<const FixtureRegistry> fixtures = nullptr);
    std::string model_id() const override { return "mock-llm/1"; }

protected:
    std::string do_complete(std::string_view system_prompt, std::string_view few_shot_block,
                            std::string_view user_query) const override;

private:
    std::shared_ptr<const FixtureRegistry> m_fixtures;
};

/// "a photo of " + planted labels, or a pseudo-random description keyed on the
/// image content.
class MockCaptioner final : public Captioner {
public:
    explicit MockCaptioner(std::shared_ptr<const FixtureRegistry> fixtures = nullptr);
    std::string model_id() const override { return "mock-captioner/1"; }

protected:
    std::string do_caption(const Image& image, std::string_view instruction) const override;

private:
    std::shared_ptr<const FixtureRegistry> m_fixtures;
};

/// Planted boxes with their confidences, or one grid box per queried label.
class MockDetector final : public Detector {
public:
    explicit MockDetector(std::shared_ptr<const FixtureRegistry> fixtures = nullptr);
    std::string model_id() const override { return "mock-detector/1"; }

protected:
    std::vector<DetectionBox> do_detect(const Image& image, std::span<const std::string> labels) const override;

private:
    std::shared_ptr<const FixtureRegistry> m_fixtures;
};

/// Seeded hash of the input -> pseudo-random vector (normalized by the
/// contract). Tokens = whitespace words + 2.
class MockEmbedder final : public Embedder {
public:
    static constexpr std::size_t kDimension = 512;

    explicit MockEmbedder(std::shared_ptr<const FixtureRegistry> fixtures = nullptr, std::uint64_t seed = 0);
    std::string model_id() const override { return "mock-embedder/1"; }

protected:
    std::vector<double> do_embed_image(const Image& image) const override;
    std::vector<double> do_embed_text(std::string_view text) const override;
    int do_count_tokens(std::string_view text) const override;

private:
    std::shared_ptr<const FixtureRegistry> m_fixtures;
    std::uint64_t m_seed;
};

/// All six mocks sharing one registry.
BackendSet make_mock_backends(std::shared_ptr<const FixtureRegistry> fixtures = nullptr, std::uint64_t seed = 0);

}  // namespace compogen
