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

#include "dualserve/alignment.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualserve/kernels/kernels.h"

namespace dualserve::align {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

SlowLogProbs SlowLogProbs::unweighted(std::vector<double> logp, std::vector<double> mask) {
  SlowLogProbs s;
  s.weight.assign(logp.size(), 1.0);
  s.logp = std::move(logp);
  s.mask = std::move(mask);
  return s;
}

void SlowLogProbs::validate() const {
  require(mask.size() == logp.size() && weight.size() == logp.size(), "slow log-prob shape mismatch");
  for (double m : mask) require(m == 0.0 || m == 1.0, "mask entries must be 0 or 1");
  for (double w : weight) require(std::isfinite(w) && w > 0.0, "per-token weights must be finite and positive");
}

void FastLogProbs::validate() const {
  require(n_codebooks >= 2, "fast log-probs need at least two codebooks");
  require(logp.size() % n_codebooks == 0, "fast log-probs are not T x N");
  require(codebook_weights.size() == n_codebooks, "codebook weight count differs from N");
}

std::vector<double> codebook_weights(FastLossMode mode, std::size_t n_codebooks, double decay) {
  std::vector<double> w(n_codebooks, 1.0);
  if (mode == FastLossMode::kSft) {
    w[0] = 0.0;
    for (std::size_t k = 1; k < n_codebooks; ++k) w[k] = std::pow(decay, static_cast<double>(k - 1));
  }
  return w;
}

void RewardWeights::validate() const {
  require(std::isfinite(stt) && std::isfinite(pref) && std::isfinite(sim), "reward weights must be finite");
  require(stt >= 0 && pref >= 0 && sim >= 0, "reward weights must be nonnegative");
  require(stt + pref + sim > 0, "reward weights must not all be zero");
}

double loss_slow(const SlowLogProbs& s) {
  s.validate();
  return kernels::omp::masked_nll(s.logp, s.mask, s.weight);
}

namespace {

double weighted_fast_nll(std::span<const double> logp, std::span<const double> weights) {
  double norm = 0.0;
  for (std::size_t k = 1; k < weights.size(); ++k) norm += weights[k];
  require(norm > 0.0, "acoustic codebook weights sum to zero");
  return kernels::omp::weighted_codebook_nll(logp, weights) / norm;
}

}  // namespace

double loss_fast(const FastLogProbs& f) {
  f.validate();
  return weighted_fast_nll(f.logp, f.codebook_weights);
}

double loss_fast(const FastLogProbs& f, FastLossMode mode, double decay) {
  require(f.n_codebooks >= 2 && f.logp.size() % f.n_codebooks == 0, "fast log-probs are not T x N");
  return weighted_fast_nll(f.logp, codebook_weights(mode, f.n_codebooks, decay));
}

double loss_total(double slow, double fast, const LossWeights& w) {
  return w.slow * slow + w.fast * fast;
}

std::vector<double> grpo_advantages(std::span<const double> rewards) {
  require(rewards.size() >= 2, "group size must be >= 2");
  require(all_finite(rewards), "rewards must be finite");
  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double mean = sum / static_cast<double>(rewards.size());
  std::vector<double> a(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = rewards[i] - mean;
  return a;
}

std::vector<double> kl_schulman(std::span<const double> logp_cur, std::span<const double> logp_ref) {
  require(logp_cur.size() == logp_ref.size(), "KL inputs differ in shape");
  require(all_finite(logp_cur) && all_finite(logp_ref), "KL inputs must be finite");
  std::vector<double> out(logp_cur.size());
  kernels::omp::kl_k3_elementwise(logp_cur, logp_ref, out);
  return out;
}

void GroupRollout::validate() const {
  require(candidates.size() >= 2, "group size must be >= 2");
  require(rewards.size() == candidates.size() && advantages.size() == candidates.size(),
          "reward/advantage count differs from group size");
  require(n_codebooks >= 2 && codebook_sizes.size() == n_codebooks, "codebook sizes must have N entries");
  for (const auto& c : candidates) {
    require(c.slow_ref.size() == c.slow_cur.size(), "slow current/reference shape mismatch");
    require(c.fast_ref.size() == c.fast_cur.size(), "fast current/reference shape mismatch");
    require(c.fast_cur.size() % n_codebooks == 0, "fast log-probs are not T x N");
  }
}

double rl_loss_slow(const GroupRollout& g, std::size_t i, double beta) {
  g.validate();
  const auto& c = g.candidates.at(i);
  require(!c.slow_cur.empty(), "candidate has no slow tokens");
  kernels::PolicyTermArgs args;
  args.logp_cur = c.slow_cur;
  args.logp_ref = c.slow_ref;
  args.advantage = g.advantages[i];
  args.beta = beta;
  return kernels::omp::policy_term_sum(args) / static_cast<double>(c.slow_cur.size());
}

double rl_loss_fast(const GroupRollout& g, std::size_t i, double beta, FastRlNormalization norm) {
  g.validate();
  const auto& c = g.candidates.at(i);
  kernels::PolicyTermArgs args;
  args.logp_cur = c.fast_cur;
  args.logp_ref = c.fast_ref;
  args.cols = g.n_codebooks;
  args.first_col = 1;
  args.advantage = g.advantages[i];
  args.beta = beta;
  if (norm == FastRlNormalization::kCodebookSize) {
    std::vector<double> scale(g.n_codebooks);
    for (std::size_t k = 0; k < g.n_codebooks; ++k) {
      require(g.codebook_sizes[k] > 0, "codebook size must be positive");
      scale[k] = 1.0 / static_cast<double>(g.codebook_sizes[k]);
    }
    args.col_scale = scale;
    return kernels::omp::policy_term_sum(args);
  }
  const std::size_t steps = c.fast_cur.size() / g.n_codebooks;
  require(steps > 0, "candidate has no fast tokens");
  return kernels::omp::policy_term_sum(args) / static_cast<double>(steps * (g.n_codebooks - 1));
}

double rl_loss_total(double slow, double fast, double gamma) { return slow + gamma * fast; }

double reward_fuse(double r_stt, double r_pref, double r_sim, const RewardWeights& w) {
  return w.stt * r_stt + w.pref * r_pref + w.sim * r_sim;
}

double sim_reward(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && !a.empty(), "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, "zero embedding vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

// Transcription reward -----------------------------------------------------------

namespace {

enum class TokKind { kWord, kSpeaker, kVocal };

struct Tok {
  TokKind kind;
  std::uint64_t key;
};

std::vector<Tok> flatten(const std::vector<PromptSegment>& segs) {
  std::vector<Tok> out;
  for (const auto& seg : segs) {
    if (const auto* t = std::get_if<TextTokens>(&seg)) {
      for (std::size_t i = 0; i < t->words.size(); ++i) {
        out.push_back({TokKind::kWord, fnv1a(t->words[i])});
      }
    } else if (const auto* s = std::get_if<SpeakerTag>(&seg)) {
      out.push_back({TokKind::kSpeaker, static_cast<std::uint64_t>(s->index)});
    } else if (const auto* v = std::get_if<VocalTag>(&seg)) {
      out.push_back({TokKind::kVocal, fnv1a(v->label)});
    } else {
      throw InvalidArgument("transcription reward takes text segments only");
    }
  }
  return out;
}

}  // namespace

double stt_reward_mock(const std::vector<PromptSegment>& prompt,
                       const std::vector<PromptSegment>& hypothesis,
                       std::span<const double> confidences, SttPenalties penalties) {
  const auto ref = flatten(prompt);
  const auto hyp = flatten(hypothesis);
  require(!ref.empty(), "empty prompt");
  require(confidences.size() == hyp.size(), "one confidence per hypothesis token required");
  for (double c : confidences) require(c >= 0.0 && c <= 1.0, "confidences must lie in [0, 1]");

  auto weight_of = [&](TokKind k) {
    switch (k) {
      case TokKind::kSpeaker: return penalties.speaker;
      case TokKind::kVocal: return penalties.vocal;
      default: return 1.0;
    }
  };

  std::vector<bool> hyp_used(hyp.size(), false);
  double mass = 0.0, earned = 0.0;

  // Tags: greedy in-order match against hypothesis tags of the same kind and value.
  std::size_t cursor = 0;
  for (const auto& t : ref) {
    if (t.kind == TokKind::kWord) continue;
    mass += weight_of(t.kind);
    for (std::size_t j = cursor; j < hyp.size(); ++j) {
      if (hyp[j].kind == t.kind && hyp[j].key == t.key) {
        earned += weight_of(t.kind) * confidences[j];
        hyp_used[j] = true;
        cursor = j + 1;
        break;
      }
    }
  }

  // Words: positional alignment among words.
  std::vector<std::size_t> hyp_words;
  for (std::size_t j = 0; j < hyp.size(); ++j) {
    if (hyp[j].kind == TokKind::kWord) hyp_words.push_back(j);
  }
  std::size_t wi = 0;
  for (const auto& t : ref) {
    if (t.kind != TokKind::kWord) continue;
    mass += 1.0;
    if (wi < hyp_words.size()) {
      const std::size_t j = hyp_words[wi];
      hyp_used[j] = true;
      if (hyp[j].key == t.key) earned += confidences[j];
    }
    ++wi;
  }

  for (std::size_t j = 0; j < hyp.size(); ++j) {
    if (!hyp_used[j]) mass += weight_of(hyp[j].kind);
  }
  return earned / mass;
}

}  // namespace dualserve::align
