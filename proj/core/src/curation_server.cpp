// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/curation_server.hpp"

#include <fstream>
#include <iterator>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "compogen/error.hpp"

namespace compogen {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kReviewerHeader = "X-Reviewer-Id";

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", kind}, {"message", message}}.dump(), "application/json");
}

int status_for(Errc code) {
    switch (code) {
        case Errc::Validation:
        case Errc::Precondition:
        case Errc::Parse:
            return 400;
        case Errc::NotFound:
            return 404;
        case Errc::IncompleteReview:
            return 409;
        default:
            return 500;
    }
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const Error& e) {
        send_error(res, status_for(e.code()), std::string(to_string(e.code())), e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "ValidationError", std::string("malformed request body: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "InternalError", e.what());
    }
}

json item_to_json(const ReviewItem& item) {
    return json{{"sample_id", item.sample_id},
                {"image_url", "/image/" + item.sample_id},
                {"short_caption", item.short_caption},
                {"labels", item.labels},
                {"concept_count", item.concept_count},
                {"status", std::string(to_string(item.status))}};
}

}  // namespace

struct CurationServer::Impl {
    CurationStore& store;
    Options options;
    httplib::Server server;
    std::thread thread;

    Impl(CurationStore& s, Options o) : store(s), options(std::move(o)) {}

    std::string progress() const {
        return json{{"ranked", store.ranked_count()}, {"total", store.item_count()}}.dump();
    }

    void install_routes() {
        server.Get("/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string reviewer = req.get_header_value(kReviewerHeader);
                if (reviewer.empty()) {
                    throw Error(Errc::Validation, std::string("missing ") + kReviewerHeader + " header");
                }
                auto item = store.next_item(reviewer);
                if (!item) {
                    res.status = 204;
                    return;
                }
                json body = item_to_json(*item);
                body["progress"] = json::parse(progress());
                res.status = 200;
                res.set_content(body.dump(), "application/json");
            });
        });

        server.Post("/rank", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = nlohmann::json::parse(req.body);
                RankRecord record;
                record.sample_id = body.at("sample_id").get<std::string>();
                record.rank = body.at("rank").get<int>();
                if (body.contains("criteria")) {
                    const auto& c = body.at("criteria");
                    record.criteria.concepts_present = c.value("concepts_present", false);
                    record.criteria.placement_reasonable = c.value("placement_reasonable", false);
                    record.criteria.artifact_free = c.value("artifact_free", false);
                }
                record.reviewer_id = req.get_header_value(kReviewerHeader);
                if (record.reviewer_id.empty()) {
                    record.reviewer_id = body.value("reviewer_id", std::string{});
                }
                store.submit_rank(record);
                json reply{{"ok", true},
                           {"sample_id", record.sample_id},
                           {"effective_rank", *store.effective_rank_of(record.sample_id)}};
                res.status = 200;
                res.set_content(reply.dump(), "application/json");
            });
        });

        server.Post("/finalize", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                bool force = false;
                if (!req.body.empty()) {
                    force = nlohmann::json::parse(req.body).value("force", false);
                }
                if (!options.finalize) {
                    throw Error(Errc::Precondition, "finalization is not configured on this server");
                }
                const FinalizeSummary s = options.finalize(force);
                res.status = 200;
                res.set_content(json{{"input_samples", s.input_samples},
                                     {"kept", s.kept},
                                     {"dropped", s.dropped},
                                     {"unranked", s.unranked}}
                                    .dump(),
                                "application/json");
            });
        });

        server.Get("/stats/ranks", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                const auto samples = ranked_samples(store);
                res.status = 200;
                if (samples.empty()) {
                    res.set_content(json{{"rows", json::array()}}.dump(), "application/json");
                    return;
                }
                const auto rows = rank_distribution(samples);
                res.set_content(rank_table_to_json(rows), "application/json");
            });
        });

        server.Get(R"(/image/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string sample_id = req.matches[1];
                const auto item = store.item(sample_id);
                if (!item) {
                    throw Error(Errc::NotFound, "unknown sample '" + sample_id + "'");
                }
                const auto path = options.resolve_image ? options.resolve_image(item->image_ref)
                                                        : std::filesystem::path(item->image_ref);
                std::ifstream in(path, std::ios::binary);
                if (!in) {
                    throw Error(Errc::NotFound, "image for '" + sample_id + "' is missing");
                }
                std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                res.status = 200;
                res.set_content(std::move(bytes), "image/png");
            });
        });

        if (options.static_dir) {
            if (!server.set_mount_point("/", options.static_dir->string())) {
                spdlog::warn("review UI directory {} not found; serving the API only", options.static_dir->string());
            }
        }
    }
};

CurationServer::CurationServer(CurationStore& store, Options options)
    : m_impl(std::make_unique<Impl>(store, std::move(options))) {
    m_impl->install_routes();
}

CurationServer::~CurationServer() { stop(); }

int CurationServer::start(const std::string& host, int port) {
    m_port = port == 0 ? m_impl->server.bind_to_any_port(host) : (m_impl->server.bind_to_port(host, port) ? port : -1);
    if (m_port <= 0) {
        throw Error(Errc::Io, "cannot bind curation server on " + host + ":" + std::to_string(port));
    }
    m_impl->thread = std::thread([this] { m_impl->server.listen_after_bind(); });
    m_impl->server.wait_until_ready();
    return m_port;
}

void CurationServer::listen(const std::string& host, int port) {
    m_port = port;
    if (!m_impl->server.listen(host, port)) {
        throw Error(Errc::Io, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void CurationServer::stop() {
    if (!m_impl) {
        return;
    }
    m_impl->server.stop();
    if (m_impl->thread.joinable()) {
        m_impl->thread.join();
    }
}

}  // namespace compogen
