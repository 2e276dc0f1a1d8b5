// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "compogen/curation.hpp"

namespace compogen {

/// HTTP face of a CurationStore, the only contract the review UI relies on:
///
///   GET  /queue/next          -> 200 item JSON, 204 when the queue is done
///   POST /rank                -> {"sample_id", "rank", "criteria"}; 400 / 404
///   POST /finalize            -> {"force": bool}; 409 when review is incomplete
///   GET  /stats/ranks         -> rank distribution table
///   GET  /image/{sample_id}   -> the sample's PNG
///
/// The reviewer is identified by the X-Reviewer-Id header.
class CurationServer {
public:
    struct Options {
        /// Resolves an item's image ref to a file.
        std::function<std::filesystem::path(const std::string& image_ref)> resolve_image;
        /// Runs finalization and returns its summary.
        std::function<FinalizeSummary(bool force)> finalize;
        /// Serves a built review UI at "/" when set.
        std::optional<std::filesystem::path> static_dir;
    };

    CurationServer(CurationStore& store, Options options);
    ~CurationServer();
    CurationServer(const CurationServer&) = delete;
    CurationServer& operator=(const CurationServer&) = delete;

    /// Serves on a background thread; port 0 picks a free port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    int port() const noexcept { return m_port; }

private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
    int m_port = 0;
};

}  // namespace compogen
