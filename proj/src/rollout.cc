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

#include "dualserve/rollout.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "dualserve/client.h"
#include "dualserve/transcript.h"

namespace dualserve::rollout {

using nlohmann::ordered_json;

void RolloutJob::validate() const {
  if (group_size < 2) throw InvalidArgument("rollout group size must be >= 2");
  if (seeds.size() != group_size) throw InvalidArgument("rollout job needs one seed per candidate");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw InvalidArgument("rollout seeds must be distinct");
  }
  if (max_frames < 1) throw InvalidArgument("max_frames must be >= 1");
  weights.validate();
}

wire::GenerateRequest RolloutJob::request(std::size_t candidate) const {
  wire::GenerateRequest r;
  r.system_text = system_text;
  r.reference_frames = reference_frames;
  r.text = prompt;
  r.seed = seeds.at(candidate);
  r.max_frames = max_frames;
  return r;
}

std::vector<std::uint64_t> derive_seeds(std::uint64_t base_seed, std::uint64_t step, std::uint32_t group_size) {
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; seeds.size() < group_size; ++i) {
    const std::uint64_t s = hash_combine(hash_combine(base_seed, step), i);
    if (seen.insert(s).second) seeds.push_back(s);
  }
  return seeds;
}

std::uint64_t frames_digest(const std::vector<TokenFrame>& frames) {
  std::uint64_t h = hash_combine(kFnvOffset, frames.size());
  for (const auto& f : frames) {
    h = hash_combine(h, f.semantic);
    for (TokenId a : f.acoustic) h = hash_combine(h, a);
  }
  return h;
}

// Backends ---------------------------------------------------------------------------

EngineBackend::EngineBackend(EngineConfig cfg, std::uint32_t max_submit_attempts)
    : engine_(std::move(cfg)), max_attempts_(std::max<std::uint32_t>(1, max_submit_attempts)) {}

std::vector<Candidate> EngineBackend::generate(const RolloutJob& job) {
  job.validate();
  const auto& cb = codebooks();
  std::vector<Candidate> out(job.group_size);
  std::unordered_map<RequestId, std::uint32_t> index_of;
  std::vector<EngineEvent> events;
  for (std::uint32_t i = 0; i < job.group_size; ++i) {
    out[i].index = i;
    out[i].seed = job.seeds[i];
    const Request req = wire::to_engine_request(job.request(i), cb);
    for (std::uint32_t attempt = 1;; ++attempt) {
      const auto res = engine_.submit(req);
      if (res.accepted()) {
        index_of.emplace(res.id, i);
        break;
      }
      if (res.status == SubmitResult::Status::kRejected || attempt == max_attempts_ || engine_.idle()) {
        out[i].error = res.error.empty() ? "backpressure" : res.error;
        break;
      }
      // Make room by running the engine, then retry.
      ++retries_;
      auto ev = engine_.step();
      events.insert(events.end(), ev.begin(), ev.end());
    }
  }
  engine_.drain(&events);
  for (const auto& e : events) {
    auto it = index_of.find(event_request(e));
    if (it == index_of.end()) continue;
    if (const auto* f = std::get_if<FrameOut>(&e)) {
      out[it->second].frames.push_back(f->frame);
    } else if (const auto* d = std::get_if<Done>(&e)) {
      if (!d->metrics.error.empty()) out[it->second].error = d->metrics.error;
    }
  }
  return out;
}

RemoteBackend::RemoteBackend(std::string endpoint, CodebookConfig cb, std::uint32_t max_attempts,
                             std::chrono::milliseconds first_backoff)
    : endpoint_(std::move(endpoint)),
      cb_(std::move(cb)),
      max_attempts_(std::max<std::uint32_t>(1, max_attempts)),
      first_backoff_(first_backoff) {}

std::vector<Candidate> RemoteBackend::generate(const RolloutJob& job) {
  job.validate();
  const ApiClient client(endpoint_);
  std::vector<Candidate> out(job.group_size);
  std::vector<std::thread> threads;
  for (std::uint32_t i = 0; i < job.group_size; ++i) {
    threads.emplace_back([&, i] {
      Candidate& c = out[i];
      c.index = i;
      c.seed = job.seeds[i];
      auto backoff = first_backoff_;
      for (std::uint32_t attempt = 1;; ++attempt) {
        const auto res = client.generate(job.request(i));
        if (res.status == 429 && attempt < max_attempts_) {
          std::this_thread::sleep_for(backoff);
          backoff *= 2;
          continue;
        }
        if (res.status != 200) {
          c.error = "HTTP " + std::to_string(res.status) + ": " + res.error;
          return;
        }
        for (const auto& e : res.events) {
          if (e.type == wire::StreamEvent::Type::kFrame) {
            TokenFrame f;
            f.semantic = e.ids.at(0);
            f.acoustic.assign(e.ids.begin() + 1, e.ids.end());
            c.frames.push_back(std::move(f));
          } else if (e.type == wire::StreamEvent::Type::kError) {
            c.error = e.message;
          }
        }
        if (res.events.empty() || !res.events.back().terminal()) c.error = "stream ended early";
        return;
      }
    });
  }
  for (auto& t : threads) t.join();
  return out;
}

// Pseudo-scorers ----------------------------------------------------------------------

namespace {

constexpr std::size_t kEmbeddingDim = 32;

enum Salt : std::uint64_t { kRate = 101, kToken, kConf, kWrong, kPref, kFail };

double u01(std::uint64_t digest, Salt salt, std::uint64_t j = 0) {
  return unit_interval(hash_combine(hash_combine(digest, salt), j));
}

}  // namespace

PseudoScorers::PseudoScorers(CodebookConfig cb, align::SttPenalties penalties, double failure_rate)
    : cb_(std::move(cb)), penalties_(penalties), failure_rate_(failure_rate) {
  if (!(failure_rate >= 0.0 && failure_rate <= 1.0)) throw InvalidArgument("failure rate must lie in [0, 1]");
}

std::vector<PromptSegment> PseudoScorers::pseudo_transcribe(const std::vector<TokenFrame>& frames,
                                                            const std::vector<PromptSegment>& prompt,
                                                            std::vector<double>* confidences) const {
  const std::uint64_t d = frames_digest(frames);
  // Error rate between 5% and 30%, fixed per frame sequence.
  const double rate = 0.05 + 0.25 * u01(d, kRate);
  std::vector<PromptSegment> hyp;
  std::vector<double> conf;
  std::uint64_t j = 0;
  auto push_word = [&](const std::string& w) {
    if (hyp.empty() || !std::holds_alternative<TextTokens>(hyp.back())) hyp.emplace_back(TextTokens{});
    auto& t = std::get<TextTokens>(hyp.back());
    t.words.push_back(w);
    t.ids.push_back(text_token_id(w));
  };
  for (const auto& seg : prompt) {
    if (const auto* t = std::get_if<TextTokens>(&seg)) {
      for (const auto& w : t->words) {
        const double u = u01(d, kToken, j);
        push_word(u < rate ? "x" + std::to_string(hash_combine(d, j) % 1000) : w);
        conf.push_back(0.6 + 0.4 * u01(d, kConf, j));
        ++j;
      }
    } else if (const auto* s = std::get_if<SpeakerTag>(&seg)) {
      const double u = u01(d, kToken, j);
      hyp.emplace_back(SpeakerTag{u < rate / 2 ? s->index + 1 : s->index});
      conf.push_back(0.6 + 0.4 * u01(d, kConf, j));
      ++j;
    } else if (const auto* v = std::get_if<VocalTag>(&seg)) {
      const double u = u01(d, kToken, j);
      if (u >= rate) {
        hyp.emplace_back(*v);
        conf.push_back(0.6 + 0.4 * u01(d, kConf, j));
      }
      ++j;
    }
  }
  if (frames.empty()) {
    hyp.clear();
    conf.clear();
  }
  if (confidences != nullptr) *confidences = std::move(conf);
  return hyp;
}

double PseudoScorers::stt(const std::vector<TokenFrame>& frames, const std::vector<PromptSegment>& prompt) const {
  std::vector<double> conf;
  const auto hyp = pseudo_transcribe(frames, prompt, &conf);
  return align::stt_reward_mock(prompt, hyp, conf, penalties_);
}

double PseudoScorers::preference(const std::vector<TokenFrame>& frames) const {
  if (frames.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : frames) sum += u01(frames_digest({f}), kPref);
  return sum / static_cast<double>(frames.size());
}

std::vector<double> PseudoScorers::voice_embedding(const std::vector<TokenFrame>& frames) const {
  // Histogram of the first acoustic codebook folded into kEmbeddingDim bins,
  // on top of a unit floor so the vector is never zero.
  std::vector<double> e(kEmbeddingDim, 1.0);
  if (frames.empty()) return e;
  const double w = static_cast<double>(kEmbeddingDim) / static_cast<double>(frames.size());
  for (const auto& f : frames) {
    const TokenId t = f.acoustic.empty() ? f.semantic : f.acoustic[0];
    e[hash_combine(t, 0x5157) % kEmbeddingDim] += w;
  }
  return e;
}

double PseudoScorers::similarity(const std::vector<TokenFrame>& frames,
                                 const std::vector<TokenFrame>& reference) const {
  return align::sim_reward(voice_embedding(frames), voice_embedding(reference));
}

ScoreBundle PseudoScorers::score(const std::vector<TokenFrame>& frames, const std::vector<PromptSegment>& prompt,
                                 const std::vector<TokenFrame>& reference) const {
  if (failure_rate_ > 0.0 && u01(frames_digest(frames), kFail) < failure_rate_) {
    throw ScorerFailure("pseudo-scorer failed");
  }
  return ScoreBundle{stt(frames, prompt), preference(frames), similarity(frames, reference)};
}

// Waveform cache ------------------------------------------------------------------------

WaveformCache::WaveformCache(std::size_t capacity, std::uint32_t spot_check_period)
    : capacity_(capacity), spot_period_(spot_check_period) {
  if (capacity < 1) throw InvalidArgument("waveform cache capacity must be >= 1");
  if (spot_check_period < 1) throw InvalidArgument("spot-check period must be >= 1");
}

void WaveformCache::touch(Entry& e) { lru_.splice(lru_.begin(), lru_, e.lru); }

ScoreBundle WaveformCache::get_or_compute(std::uint64_t key, const std::function<ScoreBundle()>& compute) {
  std::shared_future<ScoreBundle> existing;
  std::promise<ScoreBundle> mine;
  bool spot_check = false;
  {
    std::lock_guard lock(mu_);
    ++c_.lookups;
    auto it = map_.find(key);
    if (it != map_.end()) {
      ++c_.hits;
      touch(it->second);
      existing = it->second.value;
      spot_check = c_.hits % spot_period_ == 0;
    } else {
      ++c_.misses;
      lru_.push_front(key);
      map_.emplace(key, Entry{mine.get_future().share(), lru_.begin()});
      while (map_.size() > capacity_) {
        const std::uint64_t victim = lru_.back();
        lru_.pop_back();
        map_.erase(victim);
        ++c_.evictions;
      }
      c_.size = map_.size();
    }
  }

  if (existing.valid()) {
    const ScoreBundle cached = existing.get();
    if (spot_check) {
      const ScoreBundle fresh = compute();
      std::lock_guard lock(mu_);
      ++c_.spot_checks;
      if (!(fresh == cached)) ++c_.spot_mismatches;
    }
    return cached;
  }

  try {
    const ScoreBundle value = compute();
    mine.set_value(value);
    return value;
  } catch (...) {
    mine.set_exception(std::current_exception());
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    if (it != map_.end()) {
      lru_.erase(it->second.lru);
      map_.erase(it);
      c_.size = map_.size();
    }
    throw;
  }
}

CacheCounters WaveformCache::counters() const {
  std::lock_guard lock(mu_);
  return c_;
}

// Scoring ------------------------------------------------------------------------------

ordered_json to_json(const ScoredCandidate& c) {
  ordered_json j;
  j["index"] = c.index;
  j["seed"] = c.seed;
  j["digest"] = to_hex(c.digest);
  j["frames"] = c.frames;
  j["sentinel"] = c.sentinel;
  if (c.sentinel) {
    j["failure"] = c.failure;
    j["r_stt"] = nullptr;
    j["r_pref"] = nullptr;
    j["r_sim"] = nullptr;
    j["reward"] = nullptr;
    j["advantage"] = nullptr;
  } else {
    j["r_stt"] = c.r_stt;
    j["r_pref"] = c.r_pref;
    j["r_sim"] = c.r_sim;
    j["reward"] = c.reward;
    j["advantage"] = c.advantage;
  }
  return j;
}

ScoringPool::ScoringPool(std::uint32_t workers) {
  if (workers < 1) throw InvalidArgument("scoring pool needs at least one worker");
  for (std::uint32_t i = 0; i < workers; ++i) {
    threads_.emplace_back([this] {
      for (;;) {
        std::function<void()> task;
        {
          std::unique_lock lock(mu_);
          cv_.wait(lock, [&] { return stop_ || !tasks_.empty(); });
          if (tasks_.empty()) return;
          task = std::move(tasks_.front());
          tasks_.pop_front();
        }
        task();
      }
    });
  }
}

ScoringPool::~ScoringPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ScoringPool::post(std::function<void()> task) {
  {
    std::lock_guard lock(mu_);
    tasks_.push_back(std::move(task));
  }
  cv_.notify_one();
}

void assign_advantages(std::vector<ScoredCandidate>& group, const align::RewardWeights& w) {
  std::vector<double> rewards;
  for (auto& c : group) {
    c.advantage = 0.0;
    if (c.sentinel) {
      c.reward = 0.0;
      continue;
    }
    c.reward = align::reward_fuse(c.r_stt, c.r_pref, c.r_sim, w);
    rewards.push_back(c.reward);
  }
  if (rewards.size() < 2) return;
  const auto adv = align::grpo_advantages(rewards);
  std::size_t k = 0;
  for (auto& c : group) {
    if (!c.sentinel) c.advantage = adv[k++];
  }
}

namespace {

std::uint64_t context_digest(const ScoringContext& ctx) {
  std::uint64_t h = fnv1a(render_transcript(ctx.prompt));
  return hash_combine(h, frames_digest(ctx.reference));
}

ScoredCandidate score_one(const ScoringContext& ctx, std::uint64_t ctx_key, const Candidate& cand) {
  ScoredCandidate sc;
  sc.index = cand.index;
  sc.seed = cand.seed;
  sc.digest = frames_digest(cand.frames);
  sc.frames = static_cast<std::uint32_t>(cand.frames.size());
  if (!cand.error.empty()) {
    sc.sentinel = true;
    sc.failure = "generation: " + cand.error;
    return sc;
  }
  try {
    // Scores depend on the prompt and reference too, so they join the key.
    const ScoreBundle b = ctx.cache->get_or_compute(hash_combine(sc.digest, ctx_key), [&] {
      return ctx.scorers->score(cand.frames, ctx.prompt, ctx.reference);
    });
    sc.r_stt = b.r_stt;
    sc.r_pref = b.r_pref;
    sc.r_sim = b.r_sim;
  } catch (const std::exception& e) {
    sc.sentinel = true;
    sc.failure = std::string("scoring: ") + e.what();
  }
  return sc;
}

}  // namespace

std::vector<ScoredCandidate> score_sync(const ScoringContext& ctx, const std::vector<Candidate>& candidates) {
  const std::uint64_t key = context_digest(ctx);
  std::vector<ScoredCandidate> out;
  for (const auto& c : candidates) out.push_back(score_one(ctx, key, c));
  assign_advantages(out, ctx.weights);
  return out;
}

std::future<std::vector<ScoredCandidate>> score_async(ScoringPool& pool, std::shared_ptr<const ScoringContext> ctx,
                                                      std::vector<Candidate> candidates) {
  struct Shared {
    std::shared_ptr<const ScoringContext> ctx;
    std::uint64_t key = 0;
    std::vector<Candidate> candidates;
    std::vector<ScoredCandidate> results;
    std::atomic<std::size_t> remaining{0};
    std::promise<std::vector<ScoredCandidate>> done;
  };
  auto shared = std::make_shared<Shared>();
  shared->ctx = std::move(ctx);
  shared->key = context_digest(*shared->ctx);
  shared->candidates = std::move(candidates);
  shared->results.resize(shared->candidates.size());
  shared->remaining = shared->candidates.size();
  auto fut = shared->done.get_future();
  if (shared->candidates.empty()) {
    shared->done.set_value({});
    return fut;
  }
  for (std::size_t i = 0; i < shared->candidates.size(); ++i) {
    pool.post([shared, i] {
      shared->results[i] = score_one(*shared->ctx, shared->key, shared->candidates[i]);
      if (shared->remaining.fetch_sub(1) == 1) {
        assign_advantages(shared->results, shared->ctx->weights);
        shared->done.set_value(std::move(shared->results));
      }
    });
  }
  return fut;
}

// Harness ----------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::int64_t>> reference_voice(const std::string& prompt, const CodebookConfig& cb) {
  constexpr std::uint32_t kFrames = 32;
  const std::uint64_t seed = fnv1a(prompt);
  std::vector<std::vector<std::int64_t>> frames(kFrames, std::vector<std::int64_t>(cb.n_codebooks));
  for (std::uint32_t f = 0; f < kFrames; ++f) {
    for (std::size_t k = 0; k < cb.n_codebooks; ++k) {
      const std::uint32_t vocab = k == 0 ? cb.semantic_vocab - 1 : cb.vocab_size(k);
      std::int64_t v = static_cast<std::int64_t>(hash_combine(hash_combine(seed, f), k) % vocab);
      if (k == 0 && v >= static_cast<std::int64_t>(cb.eos_semantic_id)) ++v;
      frames[f][k] = v;
    }
  }
  return frames;
}

std::vector<TokenFrame> to_frames(const std::vector<std::vector<std::int64_t>>& rows) {
  std::vector<TokenFrame> out;
  for (const auto& r : rows) {
    TokenFrame f;
    f.semantic = static_cast<TokenId>(r.at(0));
    for (std::size_t k = 1; k < r.size(); ++k) f.acoustic.push_back(static_cast<TokenId>(r[k]));
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

HarnessReport run_harness(GenerationBackend& backend, const std::vector<std::string>& prompts,
                          const HarnessOptions& opts) {
  if (prompts.empty()) throw InvalidArgument("rollout needs at least one prompt");
  if (opts.group_size < 2) throw InvalidArgument("rollout group size must be >= 2");
  opts.reward.weights.validate();
  const auto& cb = backend.codebooks();
  const PseudoScorers scorers(cb, opts.reward.penalties, opts.reward.scorer_failure_rate);
  WaveformCache cache(opts.reward.waveform_cache_capacity, opts.reward.spot_check_period);
  ScoringPool pool(opts.workers);

  std::vector<std::vector<PromptSegment>> parsed;
  for (const auto& p : prompts) parsed.push_back(parse_rich_transcript(p));

  HarnessReport report;
  report.options = opts;
  std::deque<std::pair<StepResult, std::future<std::vector<ScoredCandidate>>>> inflight;
  auto collect = [&] {
    auto [step, fut] = std::move(inflight.front());
    inflight.pop_front();
    step.candidates = fut.get();
    report.steps.push_back(std::move(step));
  };
  for (std::uint32_t s = 0; s < opts.steps; ++s) {
    const std::uint32_t p = s % static_cast<std::uint32_t>(prompts.size());
    RolloutJob job;
    job.prompt = prompts[p];
    job.reference_frames = reference_voice(prompts[p], cb);
    job.group_size = opts.group_size;
    job.seeds = derive_seeds(opts.seed, opts.seed_period == 0 ? s : s % opts.seed_period, opts.group_size);
    job.max_frames = opts.max_frames;
    job.weights = opts.reward.weights;
    // Scoring of the previous step proceeds on the pool meanwhile.
    auto candidates = backend.generate(job);

    auto ctx = std::make_shared<ScoringContext>();
    ctx->scorers = &scorers;
    ctx->cache = &cache;
    ctx->prompt = parsed[p];
    ctx->reference = to_frames(job.reference_frames);
    ctx->weights = job.weights;
    StepResult step;
    step.step = s;
    step.prompt_index = p;
    inflight.emplace_back(std::move(step), score_async(pool, ctx, std::move(candidates)));
    while (inflight.size() > 1) collect();
  }
  while (!inflight.empty()) collect();
  report.cache = cache.counters();
  return report;
}

namespace {

struct StepStats {
  std::size_t valid = 0;
  double mean_reward = 0, mean_stt = 0, mean_pref = 0, mean_sim = 0;
  double adv_sum = 0, adv_min = 0, adv_max = 0;
};

StepStats step_stats(const StepResult& s) {
  StepStats st;
  bool first = true;
  for (const auto& c : s.candidates) {
    if (c.sentinel) continue;
    ++st.valid;
    st.mean_reward += c.reward;
    st.mean_stt += c.r_stt;
    st.mean_pref += c.r_pref;
    st.mean_sim += c.r_sim;
    st.adv_sum += c.advantage;
    st.adv_min = first ? c.advantage : std::min(st.adv_min, c.advantage);
    st.adv_max = first ? c.advantage : std::max(st.adv_max, c.advantage);
    first = false;
  }
  if (st.valid > 0) {
    const double n = static_cast<double>(st.valid);
    st.mean_reward /= n;
    st.mean_stt /= n;
    st.mean_pref /= n;
    st.mean_sim /= n;
  }
  return st;
}

}  // namespace

ordered_json report_json(const HarnessReport& r) {
  const auto& o = r.options;
  ordered_json j;
  j["options"] = {{"group_size", o.group_size},
                  {"workers", o.workers},
                  {"steps", o.steps},
                  {"seed", o.seed},
                  {"seed_period", o.seed_period},
                  {"max_frames", o.max_frames},
                  {"weights", {{"stt", o.reward.weights.stt}, {"pref", o.reward.weights.pref}, {"sim", o.reward.weights.sim}}},
                  {"scorer_failure_rate", o.reward.scorer_failure_rate}};
  ordered_json series_reward = ordered_json::array(), series_stt = ordered_json::array(),
               series_pref = ordered_json::array(), series_sim = ordered_json::array();
  ordered_json steps = ordered_json::array();
  double total = 0.0;
  std::size_t counted = 0, sentinels = 0;
  for (const auto& s : r.steps) {
    const StepStats st = step_stats(s);
    const auto num = [&](double v) { return st.valid > 0 ? ordered_json(v) : ordered_json(nullptr); };
    series_reward.push_back(num(st.mean_reward));
    series_stt.push_back(num(st.mean_stt));
    series_pref.push_back(num(st.mean_pref));
    series_sim.push_back(num(st.mean_sim));
    ordered_json row;
    row["step"] = s.step;
    row["prompt_index"] = s.prompt_index;
    row["valid"] = st.valid;
    row["sentinels"] = s.candidates.size() - st.valid;
    row["mean_reward"] = num(st.mean_reward);
    row["mean_r_stt"] = num(st.mean_stt);
    row["mean_r_pref"] = num(st.mean_pref);
    row["mean_r_sim"] = num(st.mean_sim);
    row["fused_of_means"] = num(align::reward_fuse(st.mean_stt, st.mean_pref, st.mean_sim, o.reward.weights));
    row["advantage_sum"] = num(st.adv_sum);
    row["advantage_min"] = num(st.adv_min);
    row["advantage_max"] = num(st.adv_max);
    steps.push_back(std::move(row));
    if (st.valid > 0) {
      total += st.mean_reward;
      ++counted;
    }
    sentinels += s.candidates.size() - st.valid;
  }
  j["series"] = {{"mean_reward", series_reward},
                 {"mean_r_stt", series_stt},
                 {"mean_r_pref", series_pref},
                 {"mean_r_sim", series_sim}};
  j["steps"] = std::move(steps);
  const auto& c = r.cache;
  j["cache"] = {{"lookups", c.lookups},
                {"hits", c.hits},
                {"misses", c.misses},
                {"hit_rate", c.lookups == 0 ? ordered_json(nullptr) : ordered_json(static_cast<double>(c.hits) / c.lookups)},
                {"evictions", c.evictions},
                {"spot_checks", c.spot_checks},
                {"spot_mismatches", c.spot_mismatches},
                {"size", c.size}};
  j["summary"] = {{"steps", r.steps.size()},
                  {"mean_reward", counted == 0 ? ordered_json(nullptr) : ordered_json(total / counted)},
                  {"sentinels", sentinels}};
  if (o.include_candidates) {
    ordered_json all = ordered_json::array();
    for (const auto& s : r.steps) {
      for (const auto& cand : s.candidates) {
        auto cj = to_json(cand);
        cj["step"] = s.step;
        all.push_back(std::move(cj));
      }
    }
    j["candidates"] = std::move(all);
  }
  return j;
}

std::vector<std::string> load_prompts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open prompt file " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  if (out.empty()) throw InvalidArgument("prompt file " + path + " has no prompts");
  return out;
}

}  // namespace dualserve::rollout
