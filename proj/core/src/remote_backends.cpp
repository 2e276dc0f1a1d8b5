// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/remote_backends.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <regex>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "wire.hpp"

namespace compogen {

namespace {

using wire::json;

class HttpTransport {
public:
    explicit HttpTransport(BackendConfig config) : m_config(std::move(config)) {
        check_backend_config(m_config);
        static const std::regex url_re(R"(^(http://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(m_config.endpoint, m, url_re)) {
            throw Error(Errc::Config, "backend '" + m_config.name + "': endpoint must look like http://host:port[/prefix]");
        }
        m_base = m[1].str();
        m_prefix = m[2].matched ? m[2].str() : "";
        while (!m_prefix.empty() && m_prefix.back() == '/') {
            m_prefix.pop_back();
        }
    }

    const BackendConfig& config() const noexcept { return m_config; }

    std::string model() const {
        std::scoped_lock lock(m_mutex);
        if (!m_echoed.empty()) {
            return m_echoed;
        }
        return m_config.model.empty() ? m_config.name : m_config.model;
    }

    json post(const std::string& path, const json& body) const {
        const std::string payload = body.dump();
        const int attempts = m_config.max_retries + 1;
        std::string last_failure;
        for (int attempt = 1; attempt <= attempts; ++attempt) {
            if (attempt > 1) {
                std::this_thread::sleep_for(std::chrono::milliseconds(25 * (attempt - 1)));
            }
            httplib::Client client(m_base);
            const auto seconds = static_cast<time_t>(m_config.timeout_seconds);
            const auto micros = static_cast<time_t>((m_config.timeout_seconds - static_cast<double>(seconds)) * 1e6);
            client.set_connection_timeout(seconds, micros);
            client.set_read_timeout(seconds, micros);
            client.set_write_timeout(seconds, micros);
            httplib::Headers headers;
            if (m_config.auth_token) {
                headers.emplace("Authorization", "Bearer " + *m_config.auth_token);
            }
            auto res = client.Post(m_prefix + path, headers, payload, "application/json");
            if (!res) {
                last_failure = httplib::to_string(res.error());
                spdlog::debug("{}{}: attempt {}/{} failed: {}", m_config.endpoint, path, attempt, attempts,
                              last_failure);
                continue;
            }
            if (res->status >= 500 || res->status == 429) {
                last_failure = "HTTP " + std::to_string(res->status);
                spdlog::debug("{}{}: attempt {}/{} got {}", m_config.endpoint, path, attempt, attempts, res->status);
                continue;
            }
            if (res->status != 200) {
                throw Error(Errc::Protocol, m_config.name + path + ": HTTP " + std::to_string(res->status) + " " +
                                                res->body.substr(0, 200));
            }
            json reply;
            try {
                reply = json::parse(res->body);
            } catch (const json::parse_error&) {
                throw Error(Errc::Protocol, m_config.name + path + ": response body is not valid JSON");
            }
            if (!reply.is_object()) {
                throw Error(Errc::Protocol, m_config.name + path + ": response body is not an object");
            }
            const auto model = wire::field<std::string>(reply, "model");
            {
                std::scoped_lock lock(m_mutex);
                m_echoed = model;
            }
            return reply;
        }
        throw Error(Errc::BackendUnavailable, m_config.name + path + " failed after " + std::to_string(attempts) +
                                                  " attempt(s): " + last_failure);
    }

private:
    BackendConfig m_config;
    std::string m_base;
    std::string m_prefix;
    mutable std::mutex m_mutex;
    mutable std::string m_echoed;
};

class RemoteSegmenter final : public Segmenter {
public:
    explicit RemoteSegmenter(const BackendConfig& c) : Segmenter(c.max_in_flight), m_http(c) {}
    std::string model_id() const override { return m_http.model(); }

protected:
    Image do_segment(const Image& image) const override {
        const auto reply = m_http.post("/segment", json{{"image", wire::encode_image(image)}});
        Image mask = wire::decode_image_field(reply, "mask");
        return mask.channels() == 1 ? mask : extract_channel(mask, 0);
    }

private:
    HttpTransport m_http;
};

class RemoteInpainter final : public Inpainter {
public:
    explicit RemoteInpainter(const BackendConfig& c) : Inpainter(c.max_in_flight), m_http(c) {}
    std::string model_id() const override { return m_http.model(); }

protected:
    Image do_inpaint(const Image& fg_image, const Image& fg_mask, const Image& bg_image, std::string_view prompt,
                     std::uint64_t seed) const override {
        const auto reply = m_http.post("/inpaint", json{{"image", wire::encode_image(fg_image)},
                                                        {"mask", wire::encode_image(fg_mask)},
                                                        {"background", wire::encode_image(bg_image)},
                                                        {"prompt", prompt},
                                                        {"seed", seed}});
        return wire::decode_image_field(reply, "image");
    }

private:
    HttpTransport m_http;
};

class RemoteTextCompleter final : public TextCompleter {
public:
    explicit RemoteTextCompleter(const BackendConfig& c) : TextCompleter(c.max_in_flight), m_http(c) {}
    std::string model_id() const override { return m_http.model(); }

protected:
    std::string do_complete(std::string_view system_prompt, std::string_view few_shot_block,
                            std::string_view user_query) const override {
        const auto reply = m_http.post(
            "/complete", json{{"system", system_prompt}, {"few_shot", few_shot_block}, {"query", user_query}});
        return wire::field<std::string>(reply, "text");
    }

private:
    HttpTransport m_http;
};

class RemoteCaptioner final : public Captioner {
public:
    explicit RemoteCaptioner(const BackendConfig& c) : Captioner(c.max_in_flight), m_http(c) {}
    std::string model_id() const override { return m_http.model(); }

protected:
    std::string do_caption(const Image& image, std::string_view instruction) const override {
        const auto reply =
            m_http.post("/caption", json{{"image", wire::encode_image(image)}, {"instruction", instruction}});
        return wire::field<std::string>(reply, "text");
    }

private:
    HttpTransport m_http;
};

class RemoteDetector final : public Detector {
public:
    explicit RemoteDetector(const BackendConfig& c) : Detector(c.max_in_flight), m_http(c) {}
    std::string model_id() const override { return m_http.model(); }

protected:
    std::vector<DetectionBox> do_detect(const Image& image, std::span<const std::string> labels) const override {
        const auto reply = m_http.post(
            "/detect", json{{"image", wire::encode_image(image)},
                            {"labels", std::vector<std::string>(labels.begin(), labels.end())}});
        const auto boxes = wire::field<json>(reply, "boxes");
        if (!boxes.is_array()) {
            throw Error(Errc::Protocol, "field 'boxes' must be a list");
        }
        std::vector<DetectionBox> out;
        for (const auto& b : boxes) {
            out.push_back(wire::box_from_json(b));
        }
        return out;
    }

private:
    HttpTransport m_http;
};

class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(const BackendConfig& c) : Embedder(c.max_in_flight), m_http(c) {}
    std::string model_id() const override { return m_http.model(); }

protected:
    std::vector<double> do_embed_image(const Image& image) const override {
        return wire::field<std::vector<double>>(m_http.post("/embed/image", json{{"image", wire::encode_image(image)}}),
                                                "embedding");
    }
    std::vector<double> do_embed_text(std::string_view text) const override {
        return wire::field<std::vector<double>>(m_http.post("/embed/text", json{{"text", text}}), "embedding");
    }
    int do_count_tokens(std::string_view text) const override {
        return wire::field<int>(m_http.post("/tokens", json{{"text", text}}), "count");
    }

private:
    HttpTransport m_http;
};

}  // namespace

std::shared_ptr<Segmenter> make_remote_segmenter(const BackendConfig& config) {
    return std::make_shared<RemoteSegmenter>(config);
}
std::shared_ptr<Inpainter> make_remote_inpainter(const BackendConfig& config) {
    return std::make_shared<RemoteInpainter>(config);
}
std::shared_ptr<TextCompleter> make_remote_text_completer(const BackendConfig& config) {
    return std::make_shared<RemoteTextCompleter>(config);
}
std::shared_ptr<Captioner> make_remote_captioner(const BackendConfig& config) {
    return std::make_shared<RemoteCaptioner>(config);
}
std::shared_ptr<Detector> make_remote_detector(const BackendConfig& config) {
    return std::make_shared<RemoteDetector>(config);
}
std::shared_ptr<Embedder> make_remote_embedder(const BackendConfig& config) {
    return std::make_shared<RemoteEmbedder>(config);
}

BackendSet make_backends(const std::map<std::string, BackendConfig>& configs, bool force_mock,
                         std::shared_ptr<const FixtureRegistry> fixtures, std::uint64_t mock_seed) {
    BackendSet set = make_mock_backends(fixtures, mock_seed);
    if (force_mock) {
        return set;
    }
    auto remote = [&configs](std::string_view name) -> const BackendConfig* {
        auto it = configs.find(std::string(name));
        return it == configs.end() || it->second.mock ? nullptr : &it->second;
    };
    if (const auto* c = remote(kSegmentBackend)) set.segmenter = make_remote_segmenter(*c);
    if (const auto* c = remote(kInpaintBackend)) set.inpainter = make_remote_inpainter(*c);
    if (const auto* c = remote(kTextBackend)) set.text = make_remote_text_completer(*c);
    if (const auto* c = remote(kCaptionBackend)) set.captioner = make_remote_captioner(*c);
    if (const auto* c = remote(kDetectBackend)) set.detector = make_remote_detector(*c);
    if (const auto* c = remote(kEmbedBackend)) set.embedder = make_remote_embedder(*c);
    return set;
}

}  // namespace compogen
