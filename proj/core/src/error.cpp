// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include "compogen/error.hpp"

namespace compogen {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::Precondition: return "PreconditionError";
        case Errc::Parse: return "ParseError";
        case Errc::Io: return "IoError";
        case Errc::Config: return "ConfigError";
        case Errc::BackendUnavailable: return "BackendUnavailable";
        case Errc::Protocol: return "ProtocolError";
        case Errc::EmptyCompletion: return "EmptyCompletion";
        case Errc::LayoutParse: return "LayoutParseError";
        case Errc::UnknownObject: return "UnknownObject";
        case Errc::IncompleteLayout: return "IncompleteLayout";
        case Errc::IncompleteScales: return "IncompleteScales";
        case Errc::ScaleOutOfRange: return "ScaleOutOfRange";
        case Errc::BackgroundParse: return "BackgroundParseError";
        case Errc::EmptySegmentation: return "EmptySegmentation";
        case Errc::NoBackgroundAvailable: return "NoBackgroundAvailable";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::EmptyReportSet: return "EmptyReportSet";
        case Errc::Validation: return "ValidationError";
        case Errc::NotFound: return "NotFound";
        case Errc::IncompleteReview: return "IncompleteReview";
        case Errc::StageOrder: return "StageOrderError";
        case Errc::NotFinalized: return "NotFinalized";
        case Errc::EmptyBundle: return "EmptyBundle";
    }
    return "Error";
}

}  // namespace compogen
