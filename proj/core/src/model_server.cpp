// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/model_server.hpp"

#include <functional>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "wire.hpp"

namespace compogen {

using wire::json;

struct ModelServer::Impl {
    BackendSet backends;
    httplib::Server server;
    std::thread thread;

    using Handler = std::function<json(const json&)>;

    void route(const std::string& path, Handler handler) {
        server.Post(path, [handler = std::move(handler), path](const httplib::Request& req, httplib::Response& res) {
            json reply;
            try {
                json body = json::parse(req.body);
                reply = handler(body);
                res.status = 200;
            } catch (const json::parse_error&) {
                res.status = 400;
                reply = json{{"error", "ProtocolError"}, {"message", "request body is not valid JSON"}};
            } catch (const Error& e) {
                switch (e.code()) {
                    case Errc::Precondition:
                    case Errc::Protocol:
                        res.status = 400;
                        break;
                    case Errc::BackendUnavailable:
                        res.status = 503;
                        break;
                    default:
                        res.status = 500;
                }
                reply = json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
            } catch (const std::exception& e) {
                res.status = 500;
                reply = json{{"error", "InternalError"}, {"message", e.what()}};
            }
            if (res.status != 200) {
                spdlog::warn("model server {} -> {}", path, res.status);
            }
            res.set_content(reply.dump(), "application/json");
        });
    }

    void install_routes() {
        route("/segment", [this](const json& b) {
            const Image mask = backends.segmenter->segment_foreground(wire::decode_image_field(b, "image"));
            return json{{"model", backends.segmenter->model_id()}, {"mask", wire::encode_image(mask)}};
        });
        route("/inpaint", [this](const json& b) {
            const Image out = backends.inpainter->inpaint(
                wire::decode_image_field(b, "image"), wire::decode_image_field(b, "mask"),
                wire::decode_image_field(b, "background"), wire::field<std::string>(b, "prompt"),
                b.value("seed", std::uint64_t{0}));
            return json{{"model", backends.inpainter->model_id()}, {"image", wire::encode_image(out)}};
        });
        route("/complete", [this](const json& b) {
            const auto text = backends.text->complete_text(wire::field<std::string>(b, "system"),
                                                           b.value("few_shot", std::string{}),
                                                           wire::field<std::string>(b, "query"));
            return json{{"model", backends.text->model_id()}, {"text", text}};
        });
        route("/caption", [this](const json& b) {
            const auto text = backends.captioner->caption_image(wire::decode_image_field(b, "image"),
                                                                wire::field<std::string>(b, "instruction"));
            return json{{"model", backends.captioner->model_id()}, {"text", text}};
        });
        route("/detect", [this](const json& b) {
            const auto labels = wire::field<std::vector<std::string>>(b, "labels");
            const auto boxes = backends.detector->detect_objects(wire::decode_image_field(b, "image"), labels);
            json out = json::array();
            for (const auto& box : boxes) {
                out.push_back(wire::box_to_json(box));
            }
            return json{{"model", backends.detector->model_id()}, {"boxes", out}};
        });
        route("/embed/image", [this](const json& b) {
            const auto v = backends.embedder->embed_image(wire::decode_image_field(b, "image"));
            return json{{"model", backends.embedder->model_id()}, {"embedding", v.values}};
        });
        route("/embed/text", [this](const json& b) {
            const auto v = backends.embedder->embed_text(wire::field<std::string>(b, "text"));
            return json{{"model", backends.embedder->model_id()}, {"embedding", v.values}};
        });
        route("/tokens", [this](const json& b) {
            const int n = backends.embedder->count_text_tokens(wire::field<std::string>(b, "text"));
            return json{{"model", backends.embedder->model_id()}, {"count", n}};
        });
    }
};

ModelServer::ModelServer(BackendSet backends) : m_impl(std::make_unique<Impl>()) {
    if (!backends.segmenter || !backends.inpainter || !backends.text || !backends.captioner || !backends.detector ||
        !backends.embedder) {
        throw Error(Errc::Precondition, "model server needs all six capabilities");
    }
    m_impl->backends = std::move(backends);
    m_impl->install_routes();
}

ModelServer::~ModelServer() { stop(); }

int ModelServer::start(const std::string& host, int port) {
    if (port == 0) {
        m_port = m_impl->server.bind_to_any_port(host);
    } else {
        m_port = m_impl->server.bind_to_port(host, port) ? port : -1;
    }
    if (m_port <= 0) {
        throw Error(Errc::Io, "cannot bind model server on " + host + ":" + std::to_string(port));
    }
    m_impl->thread = std::thread([this] { m_impl->server.listen_after_bind(); });
    m_impl->server.wait_until_ready();
    return m_port;
}

void ModelServer::listen(const std::string& host, int port) {
    m_port = port;
    if (!m_impl->server.listen(host, port)) {
        throw Error(Errc::Io, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void ModelServer::stop() {
    if (!m_impl) {
        return;
    }
    m_impl->server.stop();
    if (m_impl->thread.joinable()) {
        m_impl->thread.join();
    }
}

std::string ModelServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(m_port); }

}  // namespace compogen
