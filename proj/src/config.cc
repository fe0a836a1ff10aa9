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

#include "dualserve/config.h"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dualserve {

using nlohmann::json;
using nlohmann::ordered_json;

void AppConfig::validate() const {
  engine.validate();
  reward.weights.validate();
  if (server.threads < 1) throw ConfigError("server.threads must be >= 1");
  if (server.stats_window < 1) throw ConfigError("server.stats_window must be >= 1");
  if (reward.waveform_cache_capacity < 1) throw ConfigError("reward.waveform_cache_capacity must be >= 1");
  if (reward.spot_check_period < 1) throw ConfigError("reward.spot_check_period must be >= 1");
  if (!(reward.scorer_failure_rate >= 0.0 && reward.scorer_failure_rate <= 1.0)) {
    throw ConfigError("reward.scorer_failure_rate must lie in [0, 1]");
  }
  parse_listen(server.listen);
}

namespace {

const char* clock_name(ClockKind c) { return c == ClockKind::kWall ? "wall" : "sim"; }
const char* concurrency_name(VocoderConcurrency c) {
  return c == VocoderConcurrency::kSerial ? "serial" : "overlapped";
}

}  // namespace

ordered_json config_to_json(const AppConfig& cfg) {
  const auto& e = cfg.engine;
  ordered_json j;
  j["codebooks"] = {{"n_codebooks", e.codebooks.n_codebooks},
                    {"semantic_vocab", e.codebooks.semantic_vocab},
                    {"acoustic_vocab_sizes", e.codebooks.acoustic_vocab_sizes},
                    {"sample_rate", e.codebooks.sample_rate},
                    {"samples_per_frame", e.codebooks.samples_per_frame},
                    {"eos_semantic_id", e.codebooks.eos_semantic_id}};
  j["model"] = {{"seed", e.model.seed},
                {"prefill_cost_per_unit", to_ms(e.model.prefill_cost_per_unit)},
                {"slow_step_cost", to_ms(e.model.slow_step_cost)},
                {"fast_step_cost_per_codebook", to_ms(e.model.fast_step_cost_per_codebook)},
                {"frames_per_text_token", e.model.frames_per_text_token},
                {"ratio_jitter", e.model.ratio_jitter}};
  j["pool"] = {{"page_size", e.pool.page_size}, {"total_blocks", e.pool.total_blocks}};
  j["cache"] = {{"capacity_units", e.cache.capacity_units}, {"low_watermark", e.cache.low_watermark}};
  j["scheduler"] = {{"max_running", e.scheduler.max_running},
                    {"prefill_chunk_units", e.scheduler.prefill_chunk_units},
                    {"decode_token_budget", e.scheduler.decode_token_budget},
                    {"max_waiting", e.scheduler.max_waiting},
                    {"clock", clock_name(e.scheduler.clock)},
                    {"preemption_policy", "recompute_lifo"}};
  j["vocoder"] = {{"first_chunk_frames", e.vocoder.first_chunk_frames},
                  {"steady_chunk_frames", e.vocoder.steady_chunk_frames},
                  {"cost_per_frame", to_ms(e.vocoder.cost_per_frame)},
                  {"concurrency", concurrency_name(e.vocoder.concurrency)}};
  j["server"] = {{"listen", cfg.server.listen},
                 {"threads", cfg.server.threads},
                 {"stats_window", cfg.server.stats_window}};
  j["reward"] = {{"stt", cfg.reward.weights.stt},
                 {"pref", cfg.reward.weights.pref},
                 {"sim", cfg.reward.weights.sim},
                 {"speaker_penalty", cfg.reward.penalties.speaker},
                 {"vocal_penalty", cfg.reward.penalties.vocal},
                 {"waveform_cache_capacity", cfg.reward.waveform_cache_capacity},
                 {"spot_check_period", cfg.reward.spot_check_period},
                 {"scorer_failure_rate", cfg.reward.scorer_failure_rate}};
  return j;
}

namespace {

// Reads the keys of one section, rejecting anything it does not consume.
class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw ConfigError(std::string(name) + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.emplace_back(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  void get_unsigned(const char* key, std::uint32_t& out) {
    std::int64_t v = out;
    get(key, v);
    if (v < 0 || v > static_cast<std::int64_t>(UINT32_MAX)) throw ConfigError(path(key) + ": out of range");
    out = static_cast<std::uint32_t>(v);
  }

  void get_ms(const char* key, Duration& out) {
    double ms = to_ms(out);
    get(key, ms);
    out = from_ms(ms);
  }

  template <typename E>
  void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    for (const auto& [n, v] : names) {
      if (v == out) s = n;
    }
    get(key, s);
    for (const auto& [n, v] : names) {
      if (s == n) {
        out = v;
        return;
      }
    }
    throw ConfigError(path(key) + ": unknown value '" + s + "'");
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [k, v] : node_->items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) throw ConfigError(path(k.c_str()) + ": unknown key");
    }
  }

 private:
  std::string path(const char* key) const { return std::string(name_) + "." + key; }

  const char* name_;
  const json* node_ = nullptr;
  std::vector<std::string> seen_;
};

}  // namespace

AppConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const char* kSections[] = {"codebooks", "model", "pool", "cache", "scheduler", "vocoder", "server", "reward"};
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(kSections), std::end(kSections), [&](const char* s) { return k == s; }) ==
        std::end(kSections)) {
      throw ConfigError(k + ": unknown section");
    }
  }

  AppConfig cfg;
  auto& e = cfg.engine;
  {
    Section s(j, "codebooks");
    std::int64_t n = static_cast<std::int64_t>(e.codebooks.n_codebooks);
    s.get("n_codebooks", n);
    if (n < 0) throw ConfigError("codebooks.n_codebooks: out of range");
    e.codebooks.n_codebooks = static_cast<std::size_t>(n);
    s.get_unsigned("semantic_vocab", e.codebooks.semantic_vocab);
    s.get("acoustic_vocab_sizes", e.codebooks.acoustic_vocab_sizes);
    s.get_unsigned("sample_rate", e.codebooks.sample_rate);
    s.get_unsigned("samples_per_frame", e.codebooks.samples_per_frame);
    s.get_unsigned("eos_semantic_id", e.codebooks.eos_semantic_id);
    s.finish();
  }
  {
    Section s(j, "model");
    s.get("seed", e.model.seed);
    s.get_ms("prefill_cost_per_unit", e.model.prefill_cost_per_unit);
    s.get_ms("slow_step_cost", e.model.slow_step_cost);
    s.get_ms("fast_step_cost_per_codebook", e.model.fast_step_cost_per_codebook);
    s.get("frames_per_text_token", e.model.frames_per_text_token);
    s.get("ratio_jitter", e.model.ratio_jitter);
    s.finish();
  }
  {
    Section s(j, "pool");
    s.get_unsigned("page_size", e.pool.page_size);
    s.get_unsigned("total_blocks", e.pool.total_blocks);
    s.finish();
  }
  {
    Section s(j, "cache");
    s.get("capacity_units", e.cache.capacity_units);
    s.get("low_watermark", e.cache.low_watermark);
    s.finish();
  }
  {
    Section s(j, "scheduler");
    s.get_unsigned("max_running", e.scheduler.max_running);
    s.get_unsigned("prefill_chunk_units", e.scheduler.prefill_chunk_units);
    s.get_unsigned("decode_token_budget", e.scheduler.decode_token_budget);
    s.get_unsigned("max_waiting", e.scheduler.max_waiting);
    s.get_enum("clock", e.scheduler.clock, {{"sim", ClockKind::kSimulated}, {"wall", ClockKind::kWall}});
    s.get_enum("preemption_policy", e.scheduler.preemption_policy,
               {{"recompute_lifo", PreemptionPolicy::kRecomputeLifo}});
    s.finish();
  }
  {
    Section s(j, "vocoder");
    s.get_unsigned("first_chunk_frames", e.vocoder.first_chunk_frames);
    s.get_unsigned("steady_chunk_frames", e.vocoder.steady_chunk_frames);
    s.get_ms("cost_per_frame", e.vocoder.cost_per_frame);
    s.get_enum("concurrency", e.vocoder.concurrency,
               {{"overlapped", VocoderConcurrency::kOverlapped}, {"serial", VocoderConcurrency::kSerial}});
    s.finish();
  }
  {
    Section s(j, "server");
    s.get("listen", cfg.server.listen);
    s.get_unsigned("threads", cfg.server.threads);
    s.get_unsigned("stats_window", cfg.server.stats_window);
    s.finish();
  }
  {
    Section s(j, "reward");
    s.get("stt", cfg.reward.weights.stt);
    s.get("pref", cfg.reward.weights.pref);
    s.get("sim", cfg.reward.weights.sim);
    s.get("speaker_penalty", cfg.reward.penalties.speaker);
    s.get("vocal_penalty", cfg.reward.penalties.vocal);
    s.get("waveform_cache_capacity", cfg.reward.waveform_cache_capacity);
    s.get_unsigned("spot_check_period", cfg.reward.spot_check_period);
    s.get("scorer_failure_rate", cfg.reward.scorer_failure_rate);
    s.finish();
  }
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
}

namespace {

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

json parse_env_value(const std::string& name, const std::string& raw, const ordered_json& current) {
  try {
    if (current.is_string()) return raw;
    if (current.is_boolean()) {
      if (raw == "1" || raw == "true") return true;
      if (raw == "0" || raw == "false") return false;
      throw ConfigError(name + ": expected a boolean");
    }
    const json v = json::parse(raw);
    if (current.is_number() && !v.is_number()) throw ConfigError(name + ": expected a number");
    if (current.is_array() && !v.is_array()) throw ConfigError(name + ": expected a JSON array");
    return v;
  } catch (const json::exception&) {
    throw ConfigError(name + ": cannot parse '" + raw + "'");
  }
}

}  // namespace

AppConfig apply_env_overrides(const AppConfig& cfg, const EnvLookup& env) {
  const ordered_json base = config_to_json(cfg);
  json patched = base;
  bool changed = false;
  for (const auto& [section, fields] : base.items()) {
    for (const auto& [field, value] : fields.items()) {
      const std::string name = "ENGINE_" + upper(section) + "_" + upper(field);
      if (auto raw = env(name)) {
        patched[section][field] = parse_env_value(name, *raw, value);
        changed = true;
      }
    }
  }
  return changed ? config_from_json(patched) : cfg;
}

std::pair<std::string, int> parse_listen(std::string_view listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw ConfigError("listen: expected host:port");
  int port = -1;
  const auto digits = listen.substr(colon + 1);
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || end != digits.data() + digits.size() || port < 0 || port > 65535) {
    throw ConfigError("listen: bad port '" + std::string(digits) + "'");
  }
  return {std::string(listen.substr(0, colon)), port};
}

}  // namespace dualserve
