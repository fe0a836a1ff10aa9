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

// Minimal HTTP client for the generation API, used by the bench and rollout
// drivers when pointed at a running server.

#include <string>
#include <vector>

#include "dualserve/wire.h"

namespace dualserve {

struct RemoteResponse {
  int status = 0;                 // HTTP status; 0 when the transport failed
  std::vector<std::string> lines;  // raw NDJSON lines, newline stripped
  std::vector<wire::StreamEvent> events;
  std::string error;  // transport failure or error body
};

class ApiClient {
 public:
  /// `endpoint` is "host:port" or "http://host:port".
  explicit ApiClient(const std::string& endpoint);

  RemoteResponse generate(const wire::GenerateRequest& req) const;
  /// Raw body variant, for tests of malformed input.
  RemoteResponse generate_raw(const std::string& body) const;
  /// Body of GET /v1/stats; throws std::runtime_error on transport failure.
  std::string stats() const;

 private:
  std::string host_;
  int port_ = 0;
};

}  // namespace dualserve
