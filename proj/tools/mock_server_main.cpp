// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

// Serves the deterministic mock backends over the model-service protocol, so
// the pipeline can be exercised end to end through real HTTP clients.

#include <csignal>
#include <cstdint>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "compogen/error.hpp"
#include "compogen/mock_backends.hpp"
#include "compogen/model_server.hpp"

namespace {
compogen::ModelServer* g_server = nullptr;
void handle_signal(int) {
    if (g_server) {
        g_server->stop();
    }
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compogen-mock-server: mock model services over HTTP"};
    std::string host = "127.0.0.1";
    int port = 8090;
    std::uint64_t seed = 0;
    app.add_option("--host", host)->capture_default_str();
    app.add_option("--port", port)->capture_default_str();
    app.add_option("--seed", seed, "Seed for the mock embedder")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        compogen::ModelServer server(
            compogen::make_mock_backends(std::make_shared<compogen::FixtureRegistry>(), seed));
        g_server = &server;
        std::signal(SIGINT, handle_signal);
        std::signal(SIGTERM, handle_signal);
        spdlog::info("mock model server on http://{}:{}", host, port);
        server.listen(host, port);
    } catch (const compogen::Error& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
