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

// Continuous-batching engine loop over the mock Dual-AR model: admission with
// radix-cache prefix reuse, chunked prefill, batched per-frame decode, paged
// KV accounting, recompute preemption and co-scheduled vocoding.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dualserve/kv_pager.h"
#include "dualserve/radix_cache.h"
#include "dualserve/token_model.h"
#include "dualserve/vocoder.h"

namespace dualserve {

enum class ClockKind { kSimulated, kWall };
enum class PreemptionPolicy { kRecomputeLifo };

struct SchedulerConfig {
  std::uint32_t max_running = 16;
  std::uint32_t prefill_chunk_units = 512;
  std::uint32_t decode_token_budget = 0;  // frames per iteration; 0 means max_running
  std::uint32_t max_waiting = 4096;       // submissions beyond this get backpressure
  ClockKind clock = ClockKind::kSimulated;
  PreemptionPolicy preemption_policy = PreemptionPolicy::kRecomputeLifo;

  void validate() const;
  std::uint32_t effective_decode_budget() const {
    return decode_token_budget == 0 ? max_running : decode_token_budget;
  }
};

struct EngineConfig {
  CodebookConfig codebooks;
  MockModelConfig model;
  PoolConfig pool;
  RadixCacheConfig cache;
  SchedulerConfig scheduler;
  VocoderConfig vocoder;

  void validate() const;
};

struct Request {
  /// System prompt; reference audio frames come first within it.
  std::vector<PromptSegment> system;
  /// Target text, possibly carrying inline tags.
  std::vector<PromptSegment> text;
  SamplingParams sampling;
  /// Simulated clock only: explicit arrival stamp (must not lie in the past).
  std::optional<TimePoint> arrival_time;
};

enum class Phase { kWaiting, kPrefilling, kDecoding, kPreempted, kFinished };

struct RequestMetrics {
  TimePoint arrival{0};
  TimePoint admitted{0};
  std::optional<TimePoint> first_audio;
  TimePoint done{0};
  std::uint32_t frames = 0;
  std::size_t prefill_units = 0;
  std::size_t cache_hit_units = 0;
  std::uint32_t preemptions = 0;
  std::string error;  // empty on success

  std::optional<Duration> ttfa() const {
    if (!first_audio) return std::nullopt;
    return *first_audio - arrival;
  }
  /// (done - admitted) / audio duration; nullopt for zero frames.
  std::optional<double> rtf(const CodebookConfig& cb) const;
};

struct FrameOut {
  RequestId request = 0;
  std::uint32_t step = 0;
  TokenFrame frame;
  TimePoint at{0};
};
struct AudioChunk {
  RequestId request = 0;
  AudioChunkDesc chunk;
  TimePoint at{0};
};
struct Done {
  RequestId request = 0;
  RequestMetrics metrics;
  TimePoint at{0};
};
struct Preempted {
  RequestId request = 0;
  TimePoint at{0};
};

using EngineEvent = std::variant<FrameOut, AudioChunk, Done, Preempted>;

RequestId event_request(const EngineEvent& e);
TimePoint event_time(const EngineEvent& e);

struct SubmitResult {
  enum class Status { kAccepted, kBackpressure, kRejected };
  Status status = Status::kAccepted;
  RequestId id = 0;
  std::string error;

  bool accepted() const { return status == Status::kAccepted; }
};

struct MetricsSnapshot {
  std::vector<std::pair<RequestId, RequestMetrics>> completed;  // completion order
  CacheStats cache;
  std::size_t pool_total_blocks = 0;
  std::size_t pool_free_blocks = 0;
  std::uint64_t decoded_frames = 0;
  std::uint64_t iterations = 0;
  // Iterations whose decode batch was full (max_running requests).
  std::uint64_t saturated_frames = 0;
  Duration saturated_time{0};
  TimePoint now{0};

  std::optional<double> hit_rate() const { return dualserve::hit_rate(cache); }
  /// Acoustic+semantic tokens per second over saturated iterations.
  std::optional<double> saturated_tokens_per_s(std::size_t n_codebooks) const;
};

class Engine {
 public:
  explicit Engine(EngineConfig cfg);
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  SubmitResult submit(Request request);

  /// One scheduler iteration. Returns events in emission order.
  std::vector<EngineEvent> step();

  /// Steps until every request finished; appends events to `events` when given.
  MetricsSnapshot drain(std::vector<EngineEvent>* events = nullptr);

  bool idle() const { return waiting_.empty() && running_.empty(); }
  TimePoint now() const;
  /// Simulated clock: moves time forward (never backwards). Wall clock: no-op.
  void advance_to(TimePoint t);

  /// Test hook: preempt `id` at the start of the next iteration if running.
  void force_preempt(RequestId id);

  std::optional<Phase> phase(RequestId id) const;
  MetricsSnapshot metrics() const;
  /// metrics() without the completed list.
  MetricsSnapshot counters() const;

  const EngineConfig& config() const { return cfg_; }
  const MockModel& model() const { return model_; }
  const RadixCache& cache() const { return cache_; }
  const KvPager& pager() const { return pager_; }
  std::size_t waiting_count() const { return waiting_.size(); }
  std::size_t running_count() const { return running_.size(); }

 private:
  struct Job {
    RequestId id = 0;
    Request request;
    std::vector<PromptSegment> prompt;  // system ++ text
    std::vector<KeyUnit> prompt_keys;
    Phase phase = Phase::kWaiting;
    std::size_t prefill_total = 0;  // key-units that must be resident before decoding
    std::size_t prefill_done = 0;
    PageTable table;
    RadixCache::Handle leaf = nullptr;
    bool admitted_once = false;
    bool model_ready = false;
    MockModelState model;
    std::vector<TokenFrame> frames;
    std::uint64_t admit_seq = 0;
    TimePoint last_audio{0};
    RequestMetrics metrics;
  };

  bool try_admit(Job& job);
  bool ensure_free_blocks(std::size_t n);
  void preempt(Job& job, TimePoint at, std::vector<EngineEvent>& events);
  void finish(Job& job, TimePoint at, std::vector<EngineEvent>& events);
  void fail(Job& job, const std::string& error, TimePoint at, std::vector<EngineEvent>& events);
  std::vector<KeyUnit> full_keys(const Job& job) const;
  void advance_clock(TimePoint iteration_start, Duration llm_time);
  TimePoint wall_now() const;

  EngineConfig cfg_;
  MockModel model_;
  KvPager pager_;
  RadixCache cache_;
  VocoderStage vocoder_;

  std::map<RequestId, Job> jobs_;
  std::deque<RequestId> waiting_;
  std::vector<RequestId> running_;  // admission order
  std::vector<RequestId> forced_preempt_;
  RequestId next_id_ = 1;
  std::uint64_t next_admit_seq_ = 0;

  TimePoint now_{0};
  std::chrono::steady_clock::time_point wall_origin_;

  std::vector<std::pair<RequestId, RequestMetrics>> completed_;
  std::uint64_t decoded_frames_ = 0;
  std::uint64_t iterations_ = 0;
  std::uint64_t saturated_frames_ = 0;
  Duration saturated_time_{0};
};

}  // namespace dualserve
