// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>

#include "compogen/backends.hpp"
#include "compogen/mock_backends.hpp"

namespace compogen {

// HTTP clients for the model services. Endpoints (all POST, JSON bodies,
// base64 PNG images):
//   /segment      {image}                               -> {model, mask}
//   /inpaint      {image, mask, background, prompt, seed} -> {model, image}
//   /complete     {system, few_shot, query}             -> {model, text}
//   /caption      {image, instruction}                  -> {model, text}
//   /detect       {image, labels}                       -> {model, boxes:[{label, box:[x,y,w,h], confidence}]}
//   /embed/image  {image}                               -> {model, embedding}
//   /embed/text   {text}                                -> {model, embedding}
//   /tokens       {text}                                -> {model, count}
// Connection failures, timeouts and 5xx/429 replies are retried; after
// max_retries + 1 attempts the call fails with BackendUnavailable. Other
// replies that break the contract raise ProtocolError.

std::shared_ptr<Segmenter> make_remote_segmenter(const BackendConfig& config);
std::shared_ptr<Inpainter> make_remote_inpainter(const BackendConfig& config);
std::shared_ptr<TextCompleter> make_remote_text_completer(const BackendConfig& config);
std::shared_ptr<Captioner> make_remote_captioner(const BackendConfig& config);
std::shared_ptr<Detector> make_remote_detector(const BackendConfig& config);
std::shared_ptr<Embedder> make_remote_embedder(const BackendConfig& config);

/// Builds the set from per-capability configs (keys: segment, inpaint, text,
/// caption, detect, embed). A capability whose config is missing or marked
/// mock gets the deterministic mock; `force_mock` mocks everything.
BackendSet make_backends(const std::map<std::string, BackendConfig>& configs, bool force_mock,
                         std::shared_ptr<const FixtureRegistry> fixtures = nullptr, std::uint64_t mock_seed = 0);

}  // namespace compogen
