// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "compogen/backends.hpp"

namespace compogen {

/// Serves a BackendSet over the model-service wire protocol (see
/// remote_backends.hpp). Used as the offline stand-in for real model services
/// and as the peer for remote-client tests.
class ModelServer {
public:
    explicit ModelServer(BackendSet backends);
    ~ModelServer();
    ModelServer(const ModelServer&) = delete;
    ModelServer& operator=(const ModelServer&) = delete;

    /// Binds and starts serving on a background thread. port = 0 picks a free
    /// port. Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Blocks serving on the calling thread.
    void listen(const std::string& host, int port);
    void stop();

    int port() const noexcept { return m_port; }
    std::string endpoint() const;

private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
    int m_port = 0;
};

}  // namespace compogen
