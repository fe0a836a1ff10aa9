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

// Synthetic voice-reuse workloads and the latency/throughput report. A
// workload draws each request's voice from a Zipf law over `n_voices`; a
// voice is a fixed reference-audio prefix plus a short style prompt, so
// requests for the same voice share a cacheable system prefix.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualserve/scheduler.h"
#include "dualserve/wire.h"

namespace dualserve::bench {

inline constexpr int kSpecVersion = 1;

enum class ArrivalKind {
  kPoisson,     // exponential inter-arrival gaps at `rate_per_s`
  kSequential,  // each request arrives when the previous one has finished
  kBurst,       // everything arrives at t = 0
};

struct WorkloadSpec {
  int version = kSpecVersion;
  std::uint32_t n_requests = 200;
  std::uint32_t n_voices = 100;
  double voice_skew = 1.1;  // Zipf exponent; 0 is uniform
  ArrivalKind arrival = ArrivalKind::kPoisson;
  double rate_per_s = 2.0;
  // Text length in words: round(exp(N(mu, sigma))) clamped to [min, max].
  double text_len_mu = 3.0;
  double text_len_sigma = 0.5;
  std::uint32_t text_len_min = 1;
  std::uint32_t text_len_max = 200;
  bool identical_text = false;  // every request speaks the same text
  std::uint32_t ref_frames = 150;   // reference-audio frames per voice
  std::uint32_t style_words = 4;    // system-text words per voice
  std::uint32_t max_frames = 4096;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::ordered_json spec_to_json(const WorkloadSpec& spec);
/// Unknown keys and a version other than kSpecVersion are errors.
WorkloadSpec spec_from_json(const nlohmann::json& j);
WorkloadSpec load_spec(const std::string& path);

/// Inverse-CDF sampler over ranks 1..n with P(k) proportional to k^-s.
class ZipfSampler {
 public:
  ZipfSampler(std::uint32_t n, double s);
  /// Rank in [1, n] for a uniform u in [0, 1). Nonincreasing in s for fixed u.
  std::uint32_t sample(double u) const;
  double pmf(std::uint32_t rank) const;
  std::uint32_t size() const { return static_cast<std::uint32_t>(cdf_.size()); }

 private:
  std::vector<double> cdf_;
};

struct TimedRequest {
  std::uint32_t index = 0;
  std::uint32_t voice = 0;  // 0-based; voice v has Zipf rank v + 1
  TimePoint arrival{0};     // unused for sequential arrivals
  wire::GenerateRequest request;
  std::size_t prompt_units = 0;
  std::size_t text_tokens = 0;
};

/// Deterministic in the workload spec. Each request's random draws depend only on
/// (seed, index), so specs that differ in skew sample with common random
/// numbers.
std::vector<TimedRequest> generate_workload(const WorkloadSpec& spec, const CodebookConfig& cb);

// Reports -----------------------------------------------------------------------

struct RequestRow {
  std::uint32_t index = 0;
  std::uint32_t voice = 0;
  double arrival_ms = 0.0;
  std::string status = "ok";  // ok | error | rejected | backpressure | http_<code> | transport
  std::string error;
  std::optional<double> ttfa_ms;
  std::optional<double> rtf;
  std::uint32_t frames = 0;
  std::size_t prompt_units = 0;
  std::size_t cache_hit_units = 0;
  std::size_t text_tokens = 0;

  bool ok() const { return status == "ok"; }
};

struct Summary {
  std::optional<double> p50, p90, p99, mean, max;
};

struct RunReport {
  WorkloadSpec spec;
  std::string mode;  // "in-process" or "remote"
  std::vector<RequestRow> rows;

  std::size_t completed = 0;
  std::size_t failed = 0;
  std::optional<double> hit_rate;  // sum hit units / sum prompt units over completed rows
  Summary ttfa_ms;
  Summary rtf;
  std::uint64_t frames = 0;
  double makespan_ms = 0.0;
  std::optional<double> tokens_per_s;            // frames * N / makespan
  std::optional<double> saturated_tokens_per_s;  // in-process only
  std::optional<double> engine_hit_rate;         // in-process only, from the radix cache
};

/// Drives a fresh in-process engine. Uses the engine's clock; on the simulated
/// clock the report is a pure function of (spec, config).
RunReport run_in_process(const WorkloadSpec& spec, const EngineConfig& cfg);

/// Drives a running server over HTTP with up to `concurrency` connections.
/// Arrivals are honoured in wall time scaled by `time_scale`. Transport and
/// HTTP failures are recorded per row.
RunReport run_remote(const WorkloadSpec& spec, const std::string& endpoint, const CodebookConfig& cb,
                     std::uint32_t concurrency, double time_scale = 1.0);

/// Fills the aggregate fields from rows.
void summarize(RunReport& report, std::size_t n_codebooks);

std::string report_csv(const RunReport& report);
nlohmann::ordered_json report_json(const RunReport& report);
/// Writes <dir>/report.csv and <dir>/report.json, creating `dir`.
void write_report(const RunReport& report, const std::string& dir);

}  // namespace dualserve::bench
