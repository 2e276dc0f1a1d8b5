// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compogen/image.hpp"

namespace compogen {

/// Connection settings for one model service.
struct BackendConfig {
    std::string name;
    std::string endpoint;  // e.g. "http://127.0.0.1:8090"
    double timeout_seconds = 60.0;
    int max_retries = 2;
    std::optional<std::string> auth_token;
    std::string model;
    int max_in_flight = 4;
    bool mock = false;
};

/// Throws Error(Errc::Config) when timeout <= 0, retries < 0 or in-flight < 1.
void check_backend_config(const BackendConfig& config);

/// Axis-aligned box in pixels (x, y = top-left).
struct DetectionBox {
    std::string label;
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;
    double confidence = 0.0;
    bool operator==(const DetectionBox&) const = default;
};

/// Pixel rect covered by a detection box (0-pixel margin), clipped to the image.
PixelRect crop_rect(const DetectionBox& box, int image_width, int image_height);

struct EmbeddingVector {
    std::vector<double> values;
    bool normalized = false;

    /// L2-normalizes; throws Error(Errc::Protocol) for a zero vector.
    static EmbeddingVector unit(std::vector<double> values);
    double norm() const noexcept;
};

double dot(const EmbeddingVector& a, const EmbeddingVector& b);

/// Shared base: a model identifier echoed into sample provenance and a bound on
/// concurrent in-flight requests.
class Backend {
public:
    explicit Backend(int max_in_flight = 4);
    virtual ~Backend() = default;
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    virtual std::string model_id() const = 0;

protected:
    class Slot {
    public:
        explicit Slot(std::counting_semaphore<>& sem) : m_sem(sem) { m_sem.acquire(); }
        ~Slot() { m_sem.release(); }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        std::counting_semaphore<>& m_sem;
    };

    Slot acquire_slot() const { return Slot(m_in_flight); }

private:
    mutable std::counting_semaphore<> m_in_flight;
};

// Each capability validates its own pre/post-conditions in the public call and
// delegates to a protected hook, so remote and mock implementations share one
// contract.

class Segmenter : public Backend {
public:
    using Backend::Backend;
    /// Soft single-channel mask in [0,1], same size as the image.
    Image segment_foreground(const Image& image) const;

protected:
    virtual Image do_segment(const Image& image) const = 0;
};

class Inpainter : public Backend {
public:
    using Backend::Backend;
    /// f(fg, mask, bg): repaints the region outside the mask starting from bg.
    Image inpaint(const Image& fg_image, const Image& fg_mask, const Image& bg_image, std::string_view prompt,
                  std::uint64_t seed) const;

protected:
    virtual Image do_inpaint(const Image& fg_image, const Image& fg_mask, const Image& bg_image,
                             std::string_view prompt, std::uint64_t seed) const = 0;
};

class TextCompleter : public Backend {
public:
    using Backend::Backend;
    /// Raw completion, unmodified. Throws EmptyCompletion on blank output.
    std::string complete_text(std::string_view system_prompt, std::string_view few_shot_block,
                              std::string_view user_query) const;

protected:
    virtual std::string do_complete(std::string_view system_prompt, std::string_view few_shot_block,
                                    std::string_view user_query) const = 0;
};

class Captioner : public Backend {
public:
    using Backend::Backend;
    std::string caption_image(const Image& image, std::string_view instruction) const;

protected:
    virtual std::string do_caption(const Image& image, std::string_view instruction) const = 0;
};

class Detector : public Backend {
public:
    using Backend::Backend;
    /// Every returned box carries one of `labels` and is clamped to the image;
    /// boxes that clamp to nothing are dropped.
    std::vector<DetectionBox> detect_objects(const Image& image, std::span<const std::string> labels) const;

protected:
    virtual std::vector<DetectionBox> do_detect(const Image& image, std::span<const std::string> labels) const = 0;
};

class Embedder : public Backend {
public:
    using Backend::Backend;
    EmbeddingVector embed_image(const Image& image) const;
    EmbeddingVector embed_text(std::string_view text) const;
    /// Length under the text encoder's own tokenizer (including start/end).
    int count_text_tokens(std::string_view text) const;

protected:
    virtual std::vector<double> do_embed_image(const Image& image) const = 0;
    virtual std::vector<double> do_embed_text(std::string_view text) const = 0;
    virtual int do_count_tokens(std::string_view text) const = 0;
};

struct BackendSet {
    std::shared_ptr<const Segmenter> segmenter;
    std::shared_ptr<const Inpainter> inpainter;
    std::shared_ptr<const TextCompleter> text;
    std::shared_ptr<const Captioner> captioner;
    std::shared_ptr<const Detector> detector;
    std::shared_ptr<const Embedder> embedder;

    /// capability name -> model identifier, for sample provenance.
    std::map<std::string, std::string> versions() const;
};

/// Capability names used for configuration keys and provenance.
inline constexpr std::string_view kSegmentBackend = "segment";
inline constexpr std::string_view kInpaintBackend = "inpaint";
inline constexpr std::string_view kTextBackend = "text";
inline constexpr std::string_view kCaptionBackend = "caption";
inline constexpr std::string_view kDetectBackend = "detect";
inline constexpr std::string_view kEmbedBackend = "embed";

}  // namespace compogen
