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

#include "dualserve/scheduler.h"

#include <algorithm>
#include <thread>

namespace dualserve {

void SchedulerConfig::validate() const {
  if (max_running < 1 || prefill_chunk_units < 1 || max_waiting < 1) {
    throw InvalidArgument("scheduler counts must be >= 1");
  }
}

void EngineConfig::validate() const {
  codebooks.validate();
  model.validate();
  pool.validate();
  scheduler.validate();
  vocoder.validate();
  if (!(cache.low_watermark >= 0.0 && cache.low_watermark <= 1.0)) {
    throw InvalidArgument("cache low_watermark must lie in [0, 1]");
  }
}

std::optional<double> RequestMetrics::rtf(const CodebookConfig& cb) const {
  if (frames == 0) return std::nullopt;
  const double audio_s = static_cast<double>(frames) * cb.samples_per_frame / cb.sample_rate;
  return to_seconds(done - admitted) / audio_s;
}

std::optional<double> MetricsSnapshot::saturated_tokens_per_s(std::size_t n_codebooks) const {
  if (saturated_time.count() <= 0) return std::nullopt;
  return static_cast<double>(saturated_frames * n_codebooks) / to_seconds(saturated_time);
}

RequestId event_request(const EngineEvent& e) {
  return std::visit([](const auto& v) { return v.request; }, e);
}
TimePoint event_time(const EngineEvent& e) {
  return std::visit([](const auto& v) { return v.at; }, e);
}

Engine::Engine(EngineConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      model_(cfg_.codebooks, cfg_.model),
      pager_(cfg_.pool),
      cache_(cfg_.pool.page_size, &pager_, cfg_.cache),
      vocoder_(cfg_.vocoder, cfg_.codebooks.samples_per_frame),
      wall_origin_(std::chrono::steady_clock::now()) {}

TimePoint Engine::wall_now() const {
  return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - wall_origin_);
}

TimePoint Engine::now() const {
  return cfg_.scheduler.clock == ClockKind::kWall ? wall_now() : now_;
}

void Engine::advance_to(TimePoint t) {
  if (cfg_.scheduler.clock == ClockKind::kSimulated) now_ = std::max(now_, t);
}

SubmitResult Engine::submit(Request request) {
  SubmitResult res;
  auto reject = [&res](std::string why) {
    res.status = SubmitResult::Status::kRejected;
    res.error = std::move(why);
    return res;
  };
  if (waiting_.size() >= cfg_.scheduler.max_waiting) {
    res.status = SubmitResult::Status::kBackpressure;
    res.error = "waiting queue full";
    return res;
  }
  if (request.sampling.max_frames < 1) return reject("max_frames must be >= 1");

  Job job;
  job.prompt = request.system;
  job.prompt.insert(job.prompt.end(), request.text.begin(), request.text.end());
  if (count_units(job.prompt) == 0) return reject("empty prompt");
  try {
    for (const auto& seg : job.prompt) {
      if (const auto* a = std::get_if<AudioFrames>(&seg)) {
        if (a->frames.empty()) return reject("empty audio segment");
        for (const auto& f : a->frames) validate_frame(f, cfg_.codebooks);
      }
    }
  } catch (const std::exception& e) {
    return reject(e.what());
  }

  job.prompt_keys = to_key_units(job.prompt);
  const std::size_t worst = job.prompt_keys.size() + request.sampling.max_frames;
  if (pager_.blocks_for(worst) > pager_.total_blocks()) {
    return reject("request cannot fit in the KV pool");
  }
  TimePoint arrival = now();
  if (request.arrival_time && cfg_.scheduler.clock == ClockKind::kSimulated) {
    arrival = std::max(arrival, *request.arrival_time);
  }
  job.metrics.arrival = arrival;
  job.id = next_id_++;
  job.request = std::move(request);
  job.table.owner = job.id;
  res.id = job.id;
  waiting_.push_back(job.id);
  jobs_.emplace(job.id, std::move(job));
  return res;
}

std::vector<KeyUnit> Engine::full_keys(const Job& job) const {
  std::vector<KeyUnit> keys = job.prompt_keys;
  keys.reserve(keys.size() + job.frames.size());
  for (const auto& f : job.frames) keys.push_back(KeyUnit::frame(f));
  return keys;
}

bool Engine::ensure_free_blocks(std::size_t n) {
  while (pager_.free_blocks() < n) {
    const std::size_t missing = n - pager_.free_blocks();
    const auto r = cache_.evict(missing * pager_.page_size());
    if (r.evicted_units == 0) break;
  }
  return pager_.free_blocks() >= n;
}

bool Engine::try_admit(Job& job) {
  const auto keys = full_keys(job);
  auto match = cache_.match_prefix(keys);
  cache_.lock(match.leaf);

  const std::size_t page = pager_.page_size();
  const std::size_t shared = match.matched_len / page;
  const std::size_t fresh = pager_.blocks_for(keys.size()) - shared;
  if (!ensure_free_blocks(fresh)) {
    cache_.unlock(match.leaf);
    return false;
  }
  auto blocks = pager_.alloc(fresh * page, job.id);
  if (!blocks) throw ContractError("allocation failed after ensure_free_blocks");

  // Whole matched pages are shared; a trailing partial page is copied into the
  // first fresh block, so shared blocks are never written.
  std::span<const BlockId> reuse(match.blocks.data(), shared);
  pager_.share(reuse, job.id);
  job.table.blocks.assign(reuse.begin(), reuse.end());
  job.table.blocks.insert(job.table.blocks.end(), blocks->begin(), blocks->end());
  job.table.filled_units = match.matched_len;
  job.leaf = match.leaf;

  job.prefill_total = keys.size();
  job.prefill_done = match.matched_len;
  job.phase = Phase::kPrefilling;
  job.admit_seq = next_admit_seq_++;
  if (!job.admitted_once) {
    job.admitted_once = true;
    job.metrics.admitted = std::max(now(), job.metrics.arrival);
    job.metrics.prefill_units = job.prompt_keys.size();
    job.metrics.cache_hit_units = match.matched_len;
    cache_.record_lookup(match.matched_len, job.prompt_keys.size());
  }
  return true;
}

void Engine::preempt(Job& job, TimePoint at, std::vector<EngineEvent>& events) {
  pager_.release(job.table);
  job.table.owner = job.id;
  if (job.leaf != nullptr) cache_.unlock(job.leaf);
  job.leaf = nullptr;
  job.prefill_done = 0;
  job.phase = Phase::kPreempted;
  ++job.metrics.preemptions;
  running_.erase(std::find(running_.begin(), running_.end(), job.id));
  // Resumes ahead of newer arrivals; recompute happens on re-admission.
  waiting_.push_front(job.id);
  job.phase = Phase::kWaiting;
  events.emplace_back(Preempted{job.id, at});
}

void Engine::finish(Job& job, TimePoint at, std::vector<EngineEvent>& events) {
  vocoder_.end_of_stream(job.id);
  TimePoint done_at = at;
  if (auto chunk = vocoder_.flush(job.id, at)) {
    if (!job.metrics.first_audio) job.metrics.first_audio = chunk->complete_at;
    job.last_audio = chunk->complete_at;
    events.emplace_back(AudioChunk{job.id, *chunk, chunk->complete_at});
  }
  done_at = std::max(done_at, job.last_audio);

  const auto keys = full_keys(job);
  if (job.table.filled_units != keys.size()) throw ContractError("page table out of sync with keys");
  cache_.insert(keys, job.table.blocks);
  if (job.leaf != nullptr) cache_.unlock(job.leaf);
  job.leaf = nullptr;
  pager_.release(job.table);
  cache_.evict_to_fit();

  job.phase = Phase::kFinished;
  job.metrics.frames = static_cast<std::uint32_t>(job.frames.size());
  job.metrics.done = done_at;
  running_.erase(std::find(running_.begin(), running_.end(), job.id));
  completed_.emplace_back(job.id, job.metrics);
  const RequestId id = job.id;
  events.emplace_back(Done{id, job.metrics, done_at});
  jobs_.erase(id);
}

void Engine::fail(Job& job, const std::string& error, TimePoint at, std::vector<EngineEvent>& events) {
  if (job.leaf != nullptr) cache_.unlock(job.leaf);
  job.leaf = nullptr;
  pager_.release(job.table);
  vocoder_.cancel(job.id);
  job.phase = Phase::kFinished;
  job.metrics.error = error;
  job.metrics.frames = static_cast<std::uint32_t>(job.frames.size());
  job.metrics.done = at;
  if (auto it = std::find(running_.begin(), running_.end(), job.id); it != running_.end()) running_.erase(it);
  if (auto it = std::find(waiting_.begin(), waiting_.end(), job.id); it != waiting_.end()) waiting_.erase(it);
  completed_.emplace_back(job.id, job.metrics);
  const RequestId id = job.id;
  events.emplace_back(Done{id, job.metrics, at});
  jobs_.erase(id);
}

void Engine::advance_clock(TimePoint iteration_start, Duration llm_time) {
  TimePoint end = iteration_start + llm_time;
  if (cfg_.vocoder.concurrency == VocoderConcurrency::kSerial) {
    end = std::max(end, vocoder_.busy_until());
  }
  if (cfg_.scheduler.clock == ClockKind::kSimulated) {
    now_ = end;
  } else {
    std::this_thread::sleep_until(wall_origin_ + end);
  }
}

std::vector<EngineEvent> Engine::step() {
  std::vector<EngineEvent> events;
  const TimePoint start = now();
  ++iterations_;

  for (RequestId id : std::exchange(forced_preempt_, {})) {
    auto it = jobs_.find(id);
    if (it != jobs_.end() && (it->second.phase == Phase::kPrefilling || it->second.phase == Phase::kDecoding)) {
      preempt(it->second, start, events);
    }
  }

  // Admission. Requests whose arrival lies in the simulated future wait.
  while (!waiting_.empty() && running_.size() < cfg_.scheduler.max_running) {
    Job& job = jobs_.at(waiting_.front());
    if (job.metrics.arrival > start) break;
    if (!try_admit(job)) {
      if (running_.empty()) {
        // Nothing will ever release blocks for it.
        fail(job, "KV pool exhausted", start, events);
        continue;
      }
      break;
    }
    waiting_.pop_front();
    running_.push_back(job.id);
  }

  // Chunked prefill.
  Duration llm{0};
  for (RequestId id : running_) {
    Job& job = jobs_.at(id);
    if (job.phase != Phase::kPrefilling) continue;
    const std::size_t n = std::min<std::size_t>(cfg_.scheduler.prefill_chunk_units,
                                                job.prefill_total - job.prefill_done);
    llm += cfg_.model.prefill_cost_per_unit * static_cast<std::int64_t>(n);
    job.prefill_done += n;
    job.table.filled_units = job.prefill_done;
    if (job.prefill_done == job.prefill_total) {
      if (!job.model_ready) {
        job.model = model_.prefill(job.prompt, job.request.sampling, job.metrics.cache_hit_units).state;
        job.model_ready = true;
      }
      job.phase = Phase::kDecoding;
    }
  }

  // Batched decode: one frame per decoding request within the budget.
  std::vector<RequestId> batch;
  for (RequestId id : running_) {
    if (batch.size() >= cfg_.scheduler.effective_decode_budget()) break;
    if (jobs_.at(id).phase == Phase::kDecoding) batch.push_back(id);
  }
  if (!batch.empty()) llm += decode_step_cost(cfg_.model, cfg_.codebooks);
  const TimePoint end = start + llm;
  const bool saturated = batch.size() == cfg_.scheduler.max_running;
  std::uint64_t batch_frames = 0;

  for (RequestId id : batch) {
    auto it = jobs_.find(id);
    if (it == jobs_.end() || it->second.phase != Phase::kDecoding) continue;  // preempted above
    Job& job = it->second;
    if (job.model.frames_emitted == job.model.target_frames) {
      model_.decode_step(job.model);  // EOS
      finish(job, end, events);
      continue;
    }
    bool preempted_self = false;
    while (!pager_.append_slot(job.table)) {
      if (ensure_free_blocks(1)) continue;
      // Newest decoding request is the victim; it recomputes later.
      RequestId victim = 0;
      std::uint64_t newest = 0;
      for (RequestId rid : running_) {
        const Job& r = jobs_.at(rid);
        if (r.phase == Phase::kDecoding && (victim == 0 || r.admit_seq > newest)) {
          victim = rid;
          newest = r.admit_seq;
        }
      }
      preempt(jobs_.at(victim), end, events);
      if (victim == job.id) {
        preempted_self = true;
        break;
      }
    }
    if (preempted_self) continue;

    auto r = model_.decode_step(job.model);
    const auto step_index = static_cast<std::uint32_t>(job.frames.size());
    job.frames.push_back(r.frame);
    ++decoded_frames_;
    ++batch_frames;
    events.emplace_back(FrameOut{job.id, step_index, r.frame, end});
    if (auto chunk = vocoder_.enqueue(job.id, step_index, r.frame, end)) {
      if (!job.metrics.first_audio) job.metrics.first_audio = chunk->complete_at;
      job.last_audio = chunk->complete_at;
      events.emplace_back(AudioChunk{job.id, *chunk, chunk->complete_at});
    }
  }
  if (saturated) {
    saturated_frames_ += batch_frames;
    saturated_time_ += llm;
  }

  advance_clock(start, llm);
  if (llm.count() == 0 && running_.empty() && !waiting_.empty() &&
      cfg_.scheduler.clock == ClockKind::kSimulated) {
    // Idle until the next simulated arrival.
    now_ = std::max(now_, jobs_.at(waiting_.front()).metrics.arrival);
  }
  return events;
}

MetricsSnapshot Engine::drain(std::vector<EngineEvent>* events) {
  while (!idle()) {
    auto ev = step();
    if (events != nullptr) events->insert(events->end(), ev.begin(), ev.end());
  }
  if (cfg_.scheduler.clock == ClockKind::kSimulated) now_ = std::max(now_, vocoder_.busy_until());
  return metrics();
}

void Engine::force_preempt(RequestId id) { forced_preempt_.push_back(id); }

std::optional<Phase> Engine::phase(RequestId id) const {
  auto it = jobs_.find(id);
  if (it != jobs_.end()) return it->second.phase;
  for (const auto& [rid, m] : completed_) {
    if (rid == id) return Phase::kFinished;
  }
  return std::nullopt;
}

MetricsSnapshot Engine::metrics() const {
  MetricsSnapshot s = counters();
  s.completed = completed_;
  return s;
}

MetricsSnapshot Engine::counters() const {
  MetricsSnapshot s;
  s.cache = cache_.stats();
  s.pool_total_blocks = pager_.total_blocks();
  s.pool_free_blocks = pager_.free_blocks();
  s.decoded_frames = decoded_frames_;
  s.iterations = iterations_;
  s.saturated_frames = saturated_frames_;
  s.saturated_time = saturated_time_;
  s.now = now();
  return s;
}

}  // namespace dualserve
