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

// Group rollouts through the engine with decoupled, cached reward scoring.
// Generation of step s+1 overlaps scoring of step s; scoring runs on its own
// worker pool and consults a shared waveform cache keyed by frame content.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dualserve/alignment.h"
#include "dualserve/config.h"
#include "dualserve/scheduler.h"
#include "dualserve/wire.h"

namespace dualserve::rollout {

struct RolloutJob {
  std::string prompt;  // rich transcript text
  std::vector<std::vector<std::int64_t>> reference_frames;
  std::string system_text;
  std::uint32_t group_size = 8;
  std::vector<std::uint64_t> seeds;  // one per candidate, distinct
  std::uint32_t max_frames = 1024;
  align::RewardWeights weights;

  /// Throws InvalidArgument unless G >= 2 and the seeds are G distinct values.
  void validate() const;
  wire::GenerateRequest request(std::size_t candidate) const;
};

/// G distinct seeds derived from (base_seed, step).
std::vector<std::uint64_t> derive_seeds(std::uint64_t base_seed, std::uint64_t step, std::uint32_t group_size);

struct Candidate {
  std::uint32_t index = 0;
  std::uint64_t seed = 0;
  std::vector<TokenFrame> frames;
  std::string error;  // generation failure
};

/// Content digest of a frame sequence.
std::uint64_t frames_digest(const std::vector<TokenFrame>& frames);

// Generation backends ------------------------------------------------------------

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  /// Generates every candidate of the job; order of the result is by index.
  virtual std::vector<Candidate> generate(const RolloutJob& job) = 0;
  virtual const CodebookConfig& codebooks() const = 0;
};

/// In-process engine on its own clock. The engine (and its prefix cache)
/// persists across jobs.
class EngineBackend : public GenerationBackend {
 public:
  explicit EngineBackend(EngineConfig cfg, std::uint32_t max_submit_attempts = 64);
  std::vector<Candidate> generate(const RolloutJob& job) override;
  const CodebookConfig& codebooks() const override { return engine_.config().codebooks; }
  const Engine& engine() const { return engine_; }
  std::uint64_t backpressure_retries() const { return retries_; }

 private:
  Engine engine_;
  std::uint32_t max_attempts_;
  std::uint64_t retries_ = 0;
};

/// Server over HTTP. A 429 is retried with exponential backoff, at most
/// `max_attempts` tries per candidate.
class RemoteBackend : public GenerationBackend {
 public:
  RemoteBackend(std::string endpoint, CodebookConfig cb, std::uint32_t max_attempts = 8,
                std::chrono::milliseconds first_backoff = std::chrono::milliseconds(5));
  std::vector<Candidate> generate(const RolloutJob& job) override;
  const CodebookConfig& codebooks() const override { return cb_; }

 private:
  std::string endpoint_;
  CodebookConfig cb_;
  std::uint32_t max_attempts_;
  std::chrono::milliseconds first_backoff_;
};

// Scoring ----------------------------------------------------------------------------

struct ScoreBundle {
  double r_stt = 0.0;
  double r_pref = 0.0;
  double r_sim = 0.0;
  bool operator==(const ScoreBundle&) const = default;
};

class ScorerFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic stand-ins for the transcription, preference and speaker
/// similarity models. Pure functions of (frames, prompt, reference).
class PseudoScorers {
 public:
  PseudoScorers(CodebookConfig cb, align::SttPenalties penalties, double failure_rate = 0.0);

  /// Transcript the frames "sound like": the prompt with a frame-dependent
  /// share of words substituted, and tags dropped or swapped.
  std::vector<PromptSegment> pseudo_transcribe(const std::vector<TokenFrame>& frames,
                                               const std::vector<PromptSegment>& prompt,
                                               std::vector<double>* confidences) const;
  double stt(const std::vector<TokenFrame>& frames, const std::vector<PromptSegment>& prompt) const;
  double preference(const std::vector<TokenFrame>& frames) const;
  std::vector<double> voice_embedding(const std::vector<TokenFrame>& frames) const;
  double similarity(const std::vector<TokenFrame>& frames, const std::vector<TokenFrame>& reference) const;

  /// All three scores. Throws ScorerFailure for the deterministic
  /// `failure_rate` share of inputs.
  ScoreBundle score(const std::vector<TokenFrame>& frames, const std::vector<PromptSegment>& prompt,
                    const std::vector<TokenFrame>& reference) const;

 private:
  CodebookConfig cb_;
  align::SttPenalties penalties_;
  double failure_rate_;
};

struct CacheCounters {
  std::uint64_t lookups = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t spot_checks = 0;
  std::uint64_t spot_mismatches = 0;
  std::size_t size = 0;
};

/// Content-addressed score cache with single-flight computation: concurrent
/// lookups of one key run the computation once; later callers wait on it.
class WaveformCache {
 public:
  WaveformCache(std::size_t capacity, std::uint32_t spot_check_period);

  /// Cached bundle for `key`, computing it with `compute` on a miss. Every
  /// `spot_check_period`-th hit recomputes and compares. A failed
  /// computation is not cached; its exception reaches every waiter.
  ScoreBundle get_or_compute(std::uint64_t key, const std::function<ScoreBundle()>& compute);

  CacheCounters counters() const;

 private:
  struct Entry {
    std::shared_future<ScoreBundle> value;
    std::list<std::uint64_t>::iterator lru;
  };
  void touch(Entry& e);

  std::size_t capacity_;
  std::uint32_t spot_period_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, Entry> map_;
  std::list<std::uint64_t> lru_;  // most recent first
  CacheCounters c_;
};

struct ScoredCandidate {
  std::uint32_t index = 0;
  std::uint64_t seed = 0;
  std::uint64_t digest = 0;
  std::uint32_t frames = 0;
  bool sentinel = false;  // generation or scoring failed; excluded from the group mean
  std::string failure;
  double r_stt = 0.0;
  double r_pref = 0.0;
  double r_sim = 0.0;
  double reward = 0.0;     // fused
  double advantage = 0.0;  // 0 for sentinels

  bool operator==(const ScoredCandidate&) const = default;
};

nlohmann::ordered_json to_json(const ScoredCandidate& c);

/// Fixed-size worker pool for scoring tasks.
class ScoringPool {
 public:
  explicit ScoringPool(std::uint32_t workers);
  ~ScoringPool();
  ScoringPool(const ScoringPool&) = delete;
  ScoringPool& operator=(const ScoringPool&) = delete;

  void post(std::function<void()> task);
  std::uint32_t workers() const { return static_cast<std::uint32_t>(threads_.size()); }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

struct ScoringContext {
  const PseudoScorers* scorers = nullptr;
  WaveformCache* cache = nullptr;
  std::vector<PromptSegment> prompt;
  std::vector<TokenFrame> reference;
  align::RewardWeights weights;
};

/// Scores candidates on `pool`; the future resolves once every candidate is
/// scored, fused and assigned its group-relative advantage. Results are
/// ordered by candidate index and do not depend on the worker count.
std::future<std::vector<ScoredCandidate>> score_async(ScoringPool& pool, std::shared_ptr<const ScoringContext> ctx,
                                                      std::vector<Candidate> candidates);

/// Single-threaded reference for score_async.
std::vector<ScoredCandidate> score_sync(const ScoringContext& ctx, const std::vector<Candidate>& candidates);

/// Fuses rewards and assigns advantages in place: mean-subtracted over the
/// non-sentinel candidates; a lone survivor gets 0.
void assign_advantages(std::vector<ScoredCandidate>& group, const align::RewardWeights& w);

// Harness -------------------------------------------------------------------------------

struct HarnessOptions {
  std::uint32_t group_size = 8;
  std::uint32_t workers = 4;
  std::uint32_t steps = 100;
  std::uint64_t seed = 1;
  // When nonzero, step s samples with the seeds of step s % seed_period, so
  // revisited (prompt, seed) pairs regenerate identical candidates.
  std::uint32_t seed_period = 0;
  std::uint32_t max_frames = 1024;
  RewardConfig reward;
  bool include_candidates = false;  // every ScoredCandidate in the report
};

struct StepResult {
  std::uint32_t step = 0;
  std::uint32_t prompt_index = 0;
  std::vector<ScoredCandidate> candidates;
};

struct HarnessReport {
  HarnessOptions options;
  std::vector<StepResult> steps;
  CacheCounters cache;
};

/// Runs `steps` group rollouts over `prompts` (cycled). Prompts are rich
/// transcripts; each gets a reference voice derived from its text.
HarnessReport run_harness(GenerationBackend& backend, const std::vector<std::string>& prompts,
                          const HarnessOptions& opts);

nlohmann::ordered_json report_json(const HarnessReport& report);

/// Non-empty lines of a prompt file.
std::vector<std::string> load_prompts(const std::string& path);

}  // namespace dualserve::rollout
