// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

// Body encoding shared by the remote clients and the model server. Images
// travel as base64 PNG (8-bit per channel).

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "compogen/backends.hpp"
#include "compogen/digest.hpp"
#include "compogen/error.hpp"
#include "compogen/image.hpp"

namespace compogen::wire {

using json = nlohmann::json;

inline std::string encode_image(const Image& image) { return base64_encode(encode_png(image)); }

inline Image decode_image_field(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || !it->is_string()) {
        throw Error(Errc::Protocol, std::string("missing image field '") + key + "'");
    }
    try {
        return decode_image(base64_decode(it->get<std::string>()));
    } catch (const Error& e) {
        throw Error(Errc::Protocol, std::string("field '") + key + "': " + e.what());
    }
}

template <typename T>
T field(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end()) {
        throw Error(Errc::Protocol, std::string("missing field '") + key + "'");
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(Errc::Protocol, std::string("field '") + key + "' has the wrong type");
    }
}

inline json box_to_json(const DetectionBox& box) {
    return json{{"label", box.label}, {"box", {box.x, box.y, box.w, box.h}}, {"confidence", box.confidence}};
}

inline DetectionBox box_from_json(const json& j) {
    const auto xywh = field<std::vector<double>>(j, "box");
    if (xywh.size() != 4) {
        throw Error(Errc::Protocol, "detection box must have 4 numbers");
    }
    return DetectionBox{field<std::string>(j, "label"), xywh[0], xywh[1], xywh[2], xywh[3],
                        field<double>(j, "confidence")};
}

}  // namespace compogen::wire
