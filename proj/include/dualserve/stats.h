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

#include <optional>
#include <vector>

#include <json.hpp>

#include "dualserve/runner.h"

namespace dualserve {

/// Nearest-rank percentile, q in [0, 1]. nullopt for an empty sample.
std::optional<double> percentile(std::vector<double> values, double q);

/// Body of GET /v1/stats. `invalid` counts requests refused before reaching
/// the engine (malformed bodies).
nlohmann::ordered_json stats_json(const RunnerStats& s, const CodebookConfig& cb, std::uint64_t invalid);

}  // namespace dualserve
