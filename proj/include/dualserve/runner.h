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

// Thread-safe front for an Engine. A single loop thread owns the engine; all
// submissions funnel through its queue and every accepted request gets an
// ordered event stream of its own.

#include <condition_variable>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "dualserve/scheduler.h"

namespace dualserve {

/// Per-request event channel. The producer is the runner thread; one consumer
/// reads it with next().
class EventStream {
 public:
  /// Blocks until an event is available. Returns nullopt once the stream is
  /// closed and drained.
  std::optional<EngineEvent> next();
  /// Set when the runner closed the stream without a Done event.
  std::string error() const;

  void push(EngineEvent e);
  void close(std::string error = {});

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<EngineEvent> items_;
  bool closed_ = false;
  std::string error_;
};

struct RunnerSubmit {
  enum class Status { kAccepted, kBackpressure, kRejected, kUnavailable };
  Status status = Status::kAccepted;
  RequestId id = 0;
  std::string error;
  std::shared_ptr<EventStream> stream;  // set when accepted
};

struct CompletedSample {
  std::optional<double> ttfa_ms;
  std::optional<double> rtf;
  std::size_t prefill_units = 0;
  std::size_t cache_hit_units = 0;
  std::uint32_t frames = 0;
  bool failed = false;
};

struct RunnerStats {
  CacheStats cache;  // cumulative, straight from the radix cache
  std::size_t pool_total_blocks = 0;
  std::size_t pool_free_blocks = 0;
  std::uint64_t decoded_frames = 0;
  std::uint64_t iterations = 0;
  std::uint64_t saturated_frames = 0;
  Duration saturated_time{0};
  TimePoint engine_time{0};
  std::size_t running = 0;
  std::size_t waiting = 0;

  std::uint64_t submitted = 0;
  std::uint64_t accepted = 0;
  std::uint64_t backpressured = 0;
  std::uint64_t rejected = 0;
  std::uint64_t unavailable = 0;  // refused because the engine failed or stopped
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;
  bool fatal = false;
  std::string fatal_error;

  std::deque<CompletedSample> window;  // newest last
};

class EngineRunner {
 public:
  EngineRunner(EngineConfig cfg, std::size_t stats_window);
  ~EngineRunner();
  EngineRunner(const EngineRunner&) = delete;
  EngineRunner& operator=(const EngineRunner&) = delete;

  /// Hands the request to the loop thread and waits for its verdict.
  RunnerSubmit submit(Request request);

  RunnerStats stats() const;
  const EngineConfig& config() const { return cfg_; }

  /// Stops the loop; open streams are closed with an error.
  void stop();

  /// Test hook: the next engine step throws `message`.
  void inject_fault(std::string message);
  /// Test hook: while paused, submissions are admitted but the engine does not step.
  void set_paused(bool paused);

 private:
  struct Pending {
    Request request;
    std::promise<RunnerSubmit> verdict;
  };
  struct Scheduled {
    TimePoint at;
    std::uint64_t seq;
    EngineEvent event;
    bool operator>(const Scheduled& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  void loop();
  void admit_pending(std::deque<Pending>& batch);
  void route(std::vector<EngineEvent>& events);
  void deliver(EngineEvent e);
  void flush_due();
  void refresh_stats();
  void fail_all(const std::string& message);

  EngineConfig cfg_;
  std::size_t stats_window_;
  std::unique_ptr<Engine> engine_;  // loop thread only

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Pending> pending_;
  bool stopping_ = false;
  bool fatal_ = false;
  bool paused_ = false;
  std::string fault_;
  RunnerStats stats_;

  // Loop-thread state.
  std::unordered_map<RequestId, std::shared_ptr<EventStream>> streams_;
  std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> due_;
  std::uint64_t seq_ = 0;

  std::thread thread_;
};

}  // namespace dualserve
