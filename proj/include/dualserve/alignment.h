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

// Loss and reward kernels for Dual-AR training and group-relative RL
// post-training. Pure functions over arrays of log-probabilities; no autograd.

#include <cstdint>
#include <span>
#include <vector>

#include "dualserve/token_model.h"

namespace dualserve::align {

inline constexpr double kDefaultSftDecay = 0.8;

/// Per-step log-probabilities of the realized slow-AR tokens.
struct SlowLogProbs {
  std::vector<double> logp;
  std::vector<double> mask;    // 1 = supervised, 0 = system prompt / reference audio
  std::vector<double> weight;  // per-token weight, 1 by default

  static SlowLogProbs unweighted(std::vector<double> logp, std::vector<double> mask);
  std::size_t steps() const { return logp.size(); }
  void validate() const;
};

/// Per-(step, codebook) log-probabilities from the fast AR, row-major T x N.
struct FastLogProbs {
  std::vector<double> logp;
  std::size_t n_codebooks = 0;
  std::vector<double> codebook_weights;  // N entries

  std::size_t steps() const { return n_codebooks == 0 ? 0 : logp.size() / n_codebooks; }
  void validate() const;
};

enum class FastLossMode {
  kPretrain,  // every codebook weighted 1, semantic included
  kSft,       // semantic dropped, acoustic codebook k weighted decay^(k-1)
};

std::vector<double> codebook_weights(FastLossMode mode, std::size_t n_codebooks,
                                     double decay = kDefaultSftDecay);

struct LossWeights {
  double slow = 1.0;
  double fast = 1.0;
  double beta = 0.0;   // KL coefficient
  double gamma = 1.0;  // fast RL loss coefficient
};

struct RewardWeights {
  double stt = 0.4;
  double pref = 0.3;
  double sim = 0.3;

  void validate() const;
};

/// -sum_t m_t * lambda_t * logp_t, no length normalization.
double loss_slow(const SlowLogProbs& s);

/// -(1 / sum_{k>=1} w_k) * sum_t sum_{k>=0} w_k * logp[t,k], using f.codebook_weights.
/// Note the normalizer skips k = 0 while the sum does not.
double loss_fast(const FastLogProbs& f);
/// Same, with weights taken from `mode` instead of f.codebook_weights.
double loss_fast(const FastLogProbs& f, FastLossMode mode, double decay = kDefaultSftDecay);

double loss_total(double slow, double fast, const LossWeights& w);

/// A_i = R_i - mean(R). No division by the group standard deviation.
std::vector<double> grpo_advantages(std::span<const double> rewards);

/// Per-element k3 estimate exp(r) - r - 1, r = logp_ref - logp_cur clamped to <= 30.
std::vector<double> kl_schulman(std::span<const double> logp_cur, std::span<const double> logp_ref);

struct CandidateLogProbs {
  std::vector<double> slow_cur;
  std::vector<double> slow_ref;
  std::vector<double> fast_cur;  // T x N
  std::vector<double> fast_ref;  // T x N
};

struct GroupRollout {
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<CandidateLogProbs> candidates;
  std::size_t n_codebooks = 0;
  std::vector<std::uint32_t> codebook_sizes;  // C^(k), N entries (entry 0 unused by the fast loss)

  std::size_t size() const { return candidates.size(); }
  void validate() const;
};

enum class FastRlNormalization {
  kCodebookSize,  // each (t, k) term divided by C^(k)
  kTokenCount,    // whole sum divided by T * (N - 1)
};

/// (1/T) * sum_t [-A_i * logp_cur_t + beta * KL_t] over the candidate's slow tokens.
double rl_loss_slow(const GroupRollout& g, std::size_t i, double beta);

/// sum over t and acoustic codebooks k = 1..N-1 of (-A_i * logp + beta * KL),
/// normalized per `norm`.
double rl_loss_fast(const GroupRollout& g, std::size_t i, double beta,
                    FastRlNormalization norm = FastRlNormalization::kCodebookSize);

double rl_loss_total(double slow, double fast, double gamma);

double reward_fuse(double r_stt, double r_pref, double r_sim, const RewardWeights& w);

/// Cosine similarity. Throws InvalidArgument on a zero vector or size mismatch.
double sim_reward(std::span<const double> a, std::span<const double> b);

struct SttPenalties {
  double speaker = 5.0;  // weight of a speaker tag
  double vocal = 3.0;    // weight of a vocal tag
};

/// Token-weighted transcription reward. Every prompt token carries a weight
/// (words 1, speaker tags `speaker`, vocal tags `vocal`) and earns its
/// hypothesis confidence when reproduced, 0 otherwise. Tags are matched
/// greedily in order; words are aligned by position among words. Hypothesis
/// tokens left unmatched (insertions) add their weight with score 0.
///
///   reward = sum(weight * score) / (sum prompt weights + sum insertion weights)
///
/// `confidences` holds one value in [0, 1] per hypothesis token, in the order
/// tokens appear in `hypothesis`.
double stt_reward_mock(const std::vector<PromptSegment>& prompt,
                       const std::vector<PromptSegment>& hypothesis,
                       std::span<const double> confidences, SttPenalties penalties = {});

}  // namespace dualserve::align
