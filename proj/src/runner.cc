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

#include "dualserve/runner.h"

namespace dualserve {

std::optional<EngineEvent> EventStream::next() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !items_.empty() || closed_; });
  if (items_.empty()) return std::nullopt;
  EngineEvent e = std::move(items_.front());
  items_.pop_front();
  return e;
}

std::string EventStream::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

void EventStream::push(EngineEvent e) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    items_.push_back(std::move(e));
  }
  cv_.notify_one();
}

void EventStream::close(std::string error) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    closed_ = true;
    error_ = std::move(error);
  }
  cv_.notify_all();
}

EngineRunner::EngineRunner(EngineConfig cfg, std::size_t stats_window)
    : cfg_(std::move(cfg)), stats_window_(std::max<std::size_t>(1, stats_window)) {
  engine_ = std::make_unique<Engine>(cfg_);
  refresh_stats();
  thread_ = std::thread([this] { loop(); });
}

EngineRunner::~EngineRunner() { stop(); }

void EngineRunner::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void EngineRunner::inject_fault(std::string message) {
  {
    std::lock_guard lock(mu_);
    fault_ = std::move(message);
  }
  cv_.notify_all();
}

void EngineRunner::set_paused(bool paused) {
  {
    std::lock_guard lock(mu_);
    paused_ = paused;
  }
  cv_.notify_all();
}

RunnerSubmit EngineRunner::submit(Request request) {
  std::future<RunnerSubmit> verdict;
  {
    std::lock_guard lock(mu_);
    ++stats_.submitted;
    if (fatal_ || stopping_) {
      ++stats_.unavailable;
      RunnerSubmit r;
      r.status = RunnerSubmit::Status::kUnavailable;
      r.error = fatal_ ? "engine failed: " + stats_.fatal_error : "engine stopped";
      return r;
    }
    pending_.push_back(Pending{std::move(request), {}});
    verdict = pending_.back().verdict.get_future();
  }
  cv_.notify_all();
  return verdict.get();
}

RunnerStats EngineRunner::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void EngineRunner::admit_pending(std::deque<Pending>& batch) {
  for (auto& p : batch) {
    RunnerSubmit r;
    SubmitResult s = engine_->submit(std::move(p.request));
    r.id = s.id;
    r.error = s.error;
    {
      std::lock_guard lock(mu_);
      switch (s.status) {
        case SubmitResult::Status::kAccepted:
          r.status = RunnerSubmit::Status::kAccepted;
          ++stats_.accepted;
          break;
        case SubmitResult::Status::kBackpressure:
          r.status = RunnerSubmit::Status::kBackpressure;
          ++stats_.backpressured;
          break;
        case SubmitResult::Status::kRejected:
          r.status = RunnerSubmit::Status::kRejected;
          ++stats_.rejected;
          break;
      }
    }
    if (r.status == RunnerSubmit::Status::kAccepted) {
      r.stream = std::make_shared<EventStream>();
      streams_.emplace(r.id, r.stream);
    }
    p.verdict.set_value(std::move(r));
  }
  batch.clear();
}

void EngineRunner::deliver(EngineEvent e) {
  const RequestId id = event_request(e);
  auto it = streams_.find(id);
  if (it == streams_.end()) return;
  const bool terminal = std::holds_alternative<Done>(e);
  it->second->push(std::move(e));
  if (terminal) {
    it->second->close();
    streams_.erase(it);
  }
}

void EngineRunner::route(std::vector<EngineEvent>& events) {
  for (auto& e : events) {
    if (const auto* d = std::get_if<Done>(&e)) {
      CompletedSample c;
      const auto& m = d->metrics;
      if (auto t = m.ttfa()) c.ttfa_ms = to_ms(*t);
      c.rtf = m.rtf(cfg_.codebooks);
      c.prefill_units = m.prefill_units;
      c.cache_hit_units = m.cache_hit_units;
      c.frames = m.frames;
      c.failed = !m.error.empty();
      std::lock_guard lock(mu_);
      ++stats_.completed;
      if (c.failed) ++stats_.failed;
      stats_.window.push_back(c);
      while (stats_.window.size() > stats_window_) stats_.window.pop_front();
    }
    if (cfg_.scheduler.clock == ClockKind::kSimulated) {
      deliver(std::move(e));
    } else {
      due_.push(Scheduled{event_time(e), seq_++, std::move(e)});
    }
  }
  events.clear();
}

void EngineRunner::flush_due() {
  const TimePoint now = engine_->now();
  while (!due_.empty() && due_.top().at <= now) {
    EngineEvent e = due_.top().event;
    due_.pop();
    deliver(std::move(e));
  }
}

void EngineRunner::refresh_stats() {
  const auto& cache = engine_->cache();
  const auto& pager = engine_->pager();
  const MetricsSnapshot m = engine_->counters();
  std::lock_guard lock(mu_);
  stats_.cache = cache.stats();
  stats_.pool_total_blocks = pager.total_blocks();
  stats_.pool_free_blocks = pager.free_blocks();
  stats_.running = engine_->running_count();
  stats_.waiting = engine_->waiting_count();
  stats_.decoded_frames = m.decoded_frames;
  stats_.iterations = m.iterations;
  stats_.saturated_frames = m.saturated_frames;
  stats_.saturated_time = m.saturated_time;
  stats_.engine_time = m.now;
}

void EngineRunner::fail_all(const std::string& message) {
  std::deque<Pending> pending;
  {
    std::lock_guard lock(mu_);
    fatal_ = true;
    stats_.fatal = true;
    stats_.fatal_error = message;
    pending.swap(pending_);
    stats_.unavailable += pending.size();
  }
  for (auto& p : pending) {
    RunnerSubmit r;
    r.status = RunnerSubmit::Status::kUnavailable;
    r.error = "engine failed: " + message;
    p.verdict.set_value(std::move(r));
  }
  for (auto& [id, s] : streams_) s->close(message);
  streams_.clear();
  while (!due_.empty()) due_.pop();
}

void EngineRunner::loop() {
  std::deque<Pending> batch;
  bool paused = false;
  for (;;) {
    {
      std::unique_lock lock(mu_);
      auto ready = [&] {
        return stopping_ || !pending_.empty() || !fault_.empty() || (!fatal_ && !paused_ && !engine_->idle());
      };
      if (!ready()) {
        if (due_.empty()) {
          cv_.wait(lock, ready);
        } else {
          const Duration wait = due_.top().at - engine_->now();
          cv_.wait_for(lock, std::max(wait, Duration(0)), ready);
        }
      }
      if (stopping_) break;
      batch.swap(pending_);
      paused = paused_;
    }
    if (fatal_) {
      {
        std::lock_guard lock(mu_);
        stats_.unavailable += batch.size();
      }
      for (auto& p : batch) {
        RunnerSubmit r;
        r.status = RunnerSubmit::Status::kUnavailable;
        r.error = "engine failed";
        p.verdict.set_value(std::move(r));
      }
      batch.clear();
      continue;
    }
    try {
      admit_pending(batch);
      std::string fault;
      {
        std::lock_guard lock(mu_);
        fault.swap(fault_);
      }
      if (!fault.empty()) throw std::runtime_error(fault);
      if (!paused && !engine_->idle()) {
        auto events = engine_->step();
        route(events);
      }
      flush_due();
      refresh_stats();
    } catch (const std::exception& e) {
      fail_all(e.what());
    }
  }
  // Shutdown.
  std::deque<Pending> rest;
  {
    std::lock_guard lock(mu_);
    rest.swap(pending_);
    stats_.unavailable += rest.size();
  }
  for (auto& p : rest) {
    RunnerSubmit r;
    r.status = RunnerSubmit::Status::kUnavailable;
    r.error = "engine stopped";
    p.verdict.set_value(std::move(r));
  }
  for (auto& [id, s] : streams_) s->close("engine stopped");
  streams_.clear();
}

}  // namespace dualserve
