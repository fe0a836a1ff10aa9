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

// Engine configuration file. One JSON object with a section per component;
// keys are the field names of the corresponding config structs. Durations are
// given in milliseconds. Every field can be overridden from the environment as
// ENGINE_<SECTION>_<FIELD>, e.g. ENGINE_SCHEDULER_MAX_RUNNING=8.

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dualserve/alignment.h"
#include "dualserve/scheduler.h"

namespace dualserve {

struct ServerConfig {
  std::string listen = "127.0.0.1:8080";
  std::uint32_t threads = 64;
  std::uint32_t stats_window = 1000;  // completed requests kept for percentile stats
};

struct RewardConfig {
  align::RewardWeights weights;
  align::SttPenalties penalties;
  std::size_t waveform_cache_capacity = 4096;
  std::uint32_t spot_check_period = 16;  // every n-th cache hit is recomputed and compared
  double scorer_failure_rate = 0.0;      // fault injection for the pseudo-scorers
};

struct AppConfig {
  EngineConfig engine;
  ServerConfig server;
  RewardConfig reward;

  void validate() const;
};

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

nlohmann::ordered_json config_to_json(const AppConfig& cfg);
/// Missing keys keep their defaults; unknown keys and type mismatches throw
/// ConfigError naming the key path.
AppConfig config_from_json(const nlohmann::json& j);
AppConfig load_config(const std::string& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
/// Reads the process environment.
EnvLookup process_env();

/// Applies ENGINE_<SECTION>_<FIELD> overrides for every field of `cfg`.
/// Values are parsed according to the field's JSON type (arrays as JSON).
AppConfig apply_env_overrides(const AppConfig& cfg, const EnvLookup& env);

/// "host:port" split; throws ConfigError when malformed.
std::pair<std::string, int> parse_listen(std::string_view listen);

}  // namespace dualserve
