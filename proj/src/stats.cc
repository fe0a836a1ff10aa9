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

#include "dualserve/stats.h"

#include <algorithm>
#include <cmath>

namespace dualserve {

using nlohmann::ordered_json;

std::optional<double> percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::nullopt;
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("percentile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[rank == 0 ? 0 : rank - 1];
}

namespace {

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

}  // namespace

ordered_json stats_json(const RunnerStats& s, const CodebookConfig& cb, std::uint64_t invalid) {
  std::vector<double> ttfa;
  double rtf_sum = 0.0;
  std::size_t rtf_n = 0;
  std::size_t prefill = 0;
  std::size_t hits = 0;
  for (const auto& c : s.window) {
    if (c.ttfa_ms) ttfa.push_back(*c.ttfa_ms);
    if (c.rtf) {
      rtf_sum += *c.rtf;
      ++rtf_n;
    }
    prefill += c.prefill_units;
    hits += c.cache_hit_units;
  }
  ordered_json j;
  j["hit_rate"] = opt(hit_rate(s.cache));
  j["cache"] = {{"matched_units", s.cache.matched_units},
                {"total_prefill_units", s.cache.total_prefill_units},
                {"evicted_units", s.cache.evicted_units},
                {"peak_resident_units", s.cache.peak_resident_units}};
  j["window"] = {{"requests", s.window.size()},
                 {"ttfa_ms_p50", opt(percentile(ttfa, 0.50))},
                 {"ttfa_ms_p99", opt(percentile(ttfa, 0.99))},
                 {"rtf_mean", rtf_n == 0 ? ordered_json(nullptr) : ordered_json(rtf_sum / rtf_n)},
                 {"hit_rate", prefill == 0 ? ordered_json(nullptr)
                                           : ordered_json(static_cast<double>(hits) / prefill)}};
  const double secs = to_seconds(s.engine_time);
  j["tokens_per_s"] = secs > 0 ? ordered_json(static_cast<double>(s.decoded_frames * cb.n_codebooks) / secs)
                               : ordered_json(nullptr);
  const double sat = to_seconds(s.saturated_time);
  j["saturated_tokens_per_s"] =
      sat > 0 ? ordered_json(static_cast<double>(s.saturated_frames * cb.n_codebooks) / sat) : ordered_json(nullptr);
  const std::size_t used = s.pool_total_blocks - s.pool_free_blocks;
  j["pool"] = {{"total_blocks", s.pool_total_blocks},
               {"free_blocks", s.pool_free_blocks},
               {"occupancy", s.pool_total_blocks == 0 ? 0.0 : static_cast<double>(used) / s.pool_total_blocks}};
  j["requests"] = {{"received", s.submitted + invalid},
                   {"invalid", invalid},
                   {"accepted", s.accepted},
                   {"backpressured", s.backpressured},
                   {"rejected", s.rejected},
                   {"unavailable", s.unavailable},
                   {"completed", s.completed},
                   {"failed", s.failed},
                   {"running", s.running},
                   {"waiting", s.waiting}};
  j["engine"] = {{"iterations", s.iterations},
                 {"decoded_frames", s.decoded_frames},
                 {"time_ms", to_ms(s.engine_time)},
                 {"fatal", s.fatal},
                 {"fatal_error", s.fatal_error}};
  return j;
}

}  // namespace dualserve
