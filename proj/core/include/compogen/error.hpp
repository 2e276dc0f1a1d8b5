// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace compogen {

enum class Errc {
    Precondition,
    Parse,
    Io,
    Config,
    // backends
    BackendUnavailable,
    Protocol,
    EmptyCompletion,
    // layout
    LayoutParse,
    UnknownObject,
    IncompleteLayout,
    IncompleteScales,
    ScaleOutOfRange,
    BackgroundParse,
    // compositor
    EmptySegmentation,
    NoBackgroundAvailable,
    // statistics / reports
    EmptyCorpus,
    EmptyReportSet,
    // curation
    Validation,
    NotFound,
    IncompleteReview,
    // pipeline
    StageOrder,
    NotFinalized,
    EmptyBundle,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries an Errc so callers (and the CLI
/// exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), m_code(code) {}

    Errc code() const noexcept { return m_code; }

private:
    Errc m_code;
};

}  // namespace compogen
