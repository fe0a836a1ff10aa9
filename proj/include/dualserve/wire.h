/* Copyright 2026 The dualserve Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// JSON-lines wire format of the generation API. protocol.md in the repository
// root is the normative description; the golden files under tests/golden pin
// the exact bytes.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dualserve/scheduler.h"

namespace dualserve::wire {

/// Body of a malformed request. `field` is the JSON path of the offending
/// value, e.g. "system.reference_frames[2]".
class RequestError : public InvalidArgument {
 public:
  RequestError(std::string field, const std::string& msg)
      : InvalidArgument(field.empty() ? msg : field + ": " + msg), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct GenerateRequest {
  std::string system_text;
  std::vector<std::vector<std::int64_t>> reference_frames;
  std::string text;
  std::uint64_t seed = 0;
  std::uint32_t max_frames = 4096;
  bool stream = true;
};

/// Parses and validates a request body against the codebook layout.
GenerateRequest parse_generate_request(std::string_view body, const CodebookConfig& cb);
std::string encode_generate_request(const GenerateRequest& req);

/// Engine request: reference audio frames first, then the parsed system text;
/// the target text is parsed for inline tags.
Request to_engine_request(const GenerateRequest& req, const CodebookConfig& cb);

// Stream events ---------------------------------------------------------------

struct DoneMetrics {
  std::optional<double> ttfa_ms;
  std::optional<double> rtf;
  std::uint32_t frames = 0;
  std::size_t cache_hit_units = 0;
};

struct StreamEvent {
  enum class Type { kFrame, kAudio, kDone, kError };
  Type type = Type::kFrame;
  std::uint32_t step = 0;           // frame
  std::vector<std::uint32_t> ids;   // frame: semantic id then acoustic ids
  std::uint32_t chunk = 0;          // audio
  std::uint64_t samples = 0;        // audio
  std::uint64_t digest = 0;         // audio
  DoneMetrics metrics;              // done
  std::string message;              // error

  bool terminal() const { return type == Type::kDone || type == Type::kError; }
};

/// Wire form of an engine event; nullopt for events that are not sent
/// (preemption notices). A Done carrying an error becomes an error event.
std::optional<StreamEvent> from_engine_event(const EngineEvent& e, const CodebookConfig& cb);

/// One line, no trailing newline.
std::string encode_event(const StreamEvent& e);
/// Throws RequestError on a line that is not a valid event.
StreamEvent decode_event(std::string_view line);

StreamEvent error_event(std::string message);

/// Error body for non-2xx responses: {"error": message, "field": path}.
std::string error_body(const std::string& message, const std::string& field = {});

}  // namespace dualserve::wire
