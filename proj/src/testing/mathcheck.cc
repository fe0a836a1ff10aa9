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

#include "dualserve/testing/mathcheck.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>

#include "dualserve/alignment.h"
#include "dualserve/testing/oracle.h"

namespace dualserve::testing {
namespace {

using Rng = std::mt19937_64;

struct Shape {
  std::size_t steps;
  std::size_t codebooks;
};

// Mostly small shapes; every 100th case is large enough to span several
// reduction chunks of the parallel kernels.
Shape random_shape(Rng& rng, std::size_t case_index) {
  std::uniform_int_distribution<std::size_t> steps(1, 64), cbs(2, 12);
  if (case_index % 100 == 99) return {3000, 10};
  return {steps(rng), cbs(rng)};
}

std::vector<double> random_logp(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = std::log(u(rng));
  return v;
}

std::vector<double> random_mask(Rng& rng, std::size_t n) {
  std::bernoulli_distribution b(0.7);
  std::vector<double> v(n);
  for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
  return v;
}

std::vector<double> random_positive(Rng& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

class RowBuilder {
 public:
  RowBuilder(std::string name, double tol) : tol_(tol) {
    row_.name = std::move(name);
    start_ = std::chrono::steady_clock::now();
  }
  void check(double got, const Ref& want) {
    double err = 0.0;
    if (!close(got, want, tol_, &err)) ++row_.failures;
    row_.max_error = std::max(row_.max_error, err);
  }
  void check_abs(double got, double want) {
    const double err = std::fabs(got - want);
    if (!(err <= tol_)) ++row_.failures;
    row_.max_error = std::max(row_.max_error, err);
  }
  void fail() { ++row_.failures; }
  void next_case() { ++row_.cases; }
  CheckRow finish() {
    row_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return row_;
  }

 private:
  CheckRow row_;
  double tol_;
  std::chrono::steady_clock::time_point start_;
};

// Runs `body` once per case, turning any exception into a failure.
CheckRow run_cases(const std::string& name, const MathcheckOptions& o, std::uint64_t salt,
                   const std::function<void(Rng&, std::size_t, RowBuilder&)>& body) {
  RowBuilder row(name, o.tolerance);
  Rng rng(o.seed ^ salt);
  for (std::size_t c = 0; c < o.cases; ++c) {
    row.next_case();
    try {
      body(rng, c, row);
    } catch (const std::exception&) {
      row.fail();
    }
  }
  return row.finish();
}

}  // namespace

std::vector<CheckRow> run_mathcheck(const MathcheckOptions& o) {
  std::vector<CheckRow> rows;

  rows.push_back(run_cases("mcf_fuse", o, 1, [](Rng& rng, std::size_t, RowBuilder& row) {
    std::uniform_int_distribution<std::size_t> n(2, 12), d(1, 16);
    std::uniform_int_distribution<std::uint32_t> v(2, 64);
    CodebookConfig cb;
    cb.n_codebooks = n(rng);
    cb.semantic_vocab = v(rng);
    cb.eos_semantic_id = cb.semantic_vocab - 1;
    cb.acoustic_vocab_sizes.clear();
    for (std::size_t k = 1; k < cb.n_codebooks; ++k) cb.acoustic_vocab_sizes.push_back(v(rng));
    const auto tables = EmbeddingTables::random(cb, d(rng), rng());
    TokenFrame f;
    f.semantic = std::uniform_int_distribution<std::uint32_t>(0, cb.semantic_vocab - 1)(rng);
    for (std::size_t k = 1; k < cb.n_codebooks; ++k) {
      f.acoustic.push_back(std::uniform_int_distribution<std::uint32_t>(0, cb.vocab_size(k) - 1)(rng));
    }
    const auto got = dualserve::mcf_fuse(f, tables);
    const auto want = testing::mcf_fuse(f, tables);
    for (std::size_t i = 0; i < got.size(); ++i) row.check_abs(got[i], want[i]);
  }));

  rows.push_back(run_cases("loss_slow", o, 2, [](Rng& rng, std::size_t c, RowBuilder& row) {
    const auto shape = random_shape(rng, c);
    align::SlowLogProbs s;
    s.logp = random_logp(rng, shape.steps);
    s.mask = random_mask(rng, shape.steps);
    s.weight = random_positive(rng, shape.steps, 0.1, 3.0);
    row.check(align::loss_slow(s), loss_slow(s.logp, s.mask, s.weight));
  }));

  rows.push_back(run_cases("loss_fast[pretrain]", o, 3, [](Rng& rng, std::size_t c, RowBuilder& row) {
    const auto shape = random_shape(rng, c);
    align::FastLogProbs f;
    f.n_codebooks = shape.codebooks;
    f.logp = random_logp(rng, shape.steps * shape.codebooks);
    f.codebook_weights.assign(shape.codebooks, 1.0);
    const std::vector<double> ones(shape.codebooks, 1.0);
    row.check(align::loss_fast(f, align::FastLossMode::kPretrain), loss_fast(f.logp, f.n_codebooks, ones));
  }));

  rows.push_back(run_cases("loss_fast[sft]", o, 4, [](Rng& rng, std::size_t c, RowBuilder& row) {
    const auto shape = random_shape(rng, c);
    const double decay = std::uniform_real_distribution<double>(0.3, 1.0)(rng);
    align::FastLogProbs f;
    f.n_codebooks = shape.codebooks;
    f.logp = random_logp(rng, shape.steps * shape.codebooks);
    std::vector<double> w(shape.codebooks, 0.0);
    double p = 1.0;
    for (std::size_t k = 1; k < shape.codebooks; ++k, p *= decay) w[k] = p;
    row.check(align::loss_fast(f, align::FastLossMode::kSft, decay), loss_fast(f.logp, f.n_codebooks, w));
  }));

  rows.push_back(run_cases("loss_total", o, 5, [](Rng& rng, std::size_t, RowBuilder& row) {
    std::uniform_real_distribution<double> u(0.0, 5.0);
    const double ls = u(rng) * 40, lf = u(rng) * 40;
    align::LossWeights w;
    w.slow = u(rng);
    w.fast = u(rng);
    row.check(align::loss_total(ls, lf, w), loss_total(ls, lf, w.slow, w.fast));
  }));

  rows.push_back(run_cases("grpo_advantages", o, 6, [](Rng& rng, std::size_t, RowBuilder& row) {
    const std::size_t g = std::uniform_int_distribution<std::size_t>(2, 32)(rng);
    const auto r = random_positive(rng, g, -3.0, 5.0);
    const auto got = align::grpo_advantages(r);
    const auto want = advantages(r);
    double sum = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      row.check(got[i], want[i]);
      sum += got[i];
      max_abs = std::max(max_abs, std::fabs(r[i]));
    }
    if (!(std::fabs(sum) < 1e-12 * static_cast<double>(g) * max_abs)) row.fail();
  }));

  rows.push_back(run_cases("kl_schulman", o, 7, [](Rng& rng, std::size_t c, RowBuilder& row) {
    const auto shape = random_shape(rng, c);
    const auto cur = random_logp(rng, shape.steps);
    auto ref = cur;
    std::normal_distribution<double> jitter(0.0, c % 2 == 0 ? 0.01 : 1.0);
    for (auto& x : ref) x += jitter(rng);
    const auto got = align::kl_schulman(cur, ref);
    for (std::size_t i = 0; i < got.size(); ++i) row.check(got[i], kl_k3(cur[i], ref[i]));
  }));

  auto make_group = [](Rng& rng, std::size_t c) {
    const auto shape = random_shape(rng, c);
    align::GroupRollout g;
    const std::size_t size = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    g.n_codebooks = shape.codebooks;
    g.codebook_sizes.push_back(4096);
    for (std::size_t k = 1; k < shape.codebooks; ++k) {
      g.codebook_sizes.push_back(std::uniform_int_distribution<std::uint32_t>(2, 2048)(rng));
    }
    g.rewards = random_positive(rng, size, 0.0, 1.5);
    g.advantages = align::grpo_advantages(g.rewards);
    for (std::size_t i = 0; i < size; ++i) {
      align::CandidateLogProbs cand;
      const std::size_t steps = std::uniform_int_distribution<std::size_t>(1, shape.steps)(rng);
      cand.slow_cur = random_logp(rng, steps);
      cand.slow_ref = random_logp(rng, steps);
      cand.fast_cur = random_logp(rng, steps * shape.codebooks);
      cand.fast_ref = random_logp(rng, steps * shape.codebooks);
      g.candidates.push_back(std::move(cand));
    }
    return g;
  };

  rows.push_back(run_cases("rl_loss_slow", o, 8, [&](Rng& rng, std::size_t c, RowBuilder& row) {
    const auto g = make_group(rng, c);
    const double beta = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& cand = g.candidates[i];
      row.check(align::rl_loss_slow(g, i, beta), rl_loss_slow(cand.slow_cur, cand.slow_ref, g.advantages[i], beta));
    }
  }));

  rows.push_back(run_cases("rl_loss_fast", o, 9, [&](Rng& rng, std::size_t c, RowBuilder& row) {
    const auto g = make_group(rng, c);
    const double beta = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& cand = g.candidates[i];
      row.check(align::rl_loss_fast(g, i, beta),
                rl_loss_fast(cand.fast_cur, cand.fast_ref, g.n_codebooks, g.codebook_sizes, g.advantages[i], beta));
    }
  }));

  rows.push_back(run_cases("rl_loss_total", o, 10, [](Rng& rng, std::size_t, RowBuilder& row) {
    std::uniform_real_distribution<double> u(-5.0, 5.0), gamma(0.0, 2.0);
    const double s = u(rng), f = u(rng), g = gamma(rng);
    row.check(align::rl_loss_total(s, f, g), rl_loss_total(s, f, g));
  }));

  rows.push_back(run_cases("reward_fuse", o, 11, [](Rng& rng, std::size_t, RowBuilder& row) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    align::RewardWeights w{u(rng), u(rng), u(rng)};
    const double a = u(rng), b = u(rng), s = 2 * u(rng) - 1;
    row.check(align::reward_fuse(a, b, s, w), reward_fuse(a, b, s, w.stt, w.pref, w.sim));
  }));

  rows.push_back(run_cases("sim_reward", o, 12, [](Rng& rng, std::size_t, RowBuilder& row) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 256)(rng);
    const auto a = random_positive(rng, d, -1.0, 1.0);
    const auto b = random_positive(rng, d, -1.0, 1.0);
    row.check(align::sim_reward(a, b), cosine(a, b));
  }));

  {
    RowBuilder row("kl_enumeration", o.tolerance);
    Rng rng(o.seed ^ 13);
    for (std::size_t c = 0; c < o.kl_pairs; ++c) {
      row.next_case();
      const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
      auto p = random_positive(rng, k, 0.01, 1.0), q = random_positive(rng, k, 0.01, 1.0);
      double sp = 0, sq = 0;
      for (std::size_t i = 0; i < k; ++i) {
        sp += p[i];
        sq += q[i];
      }
      for (std::size_t i = 0; i < k; ++i) {
        p[i] /= sp;
        q[i] /= sq;
      }
      // Expectation of the production estimator under p, by enumeration.
      std::vector<double> lp(k), lq(k);
      for (std::size_t i = 0; i < k; ++i) {
        lp[i] = std::log(p[i]);
        lq[i] = std::log(q[i]);
      }
      const auto est = align::kl_schulman(lp, lq);
      double expectation = 0.0;
      for (std::size_t i = 0; i < k; ++i) expectation += p[i] * est[i];
      const double exact = kl_exact(p, q);
      row.check(expectation, Ref{exact, exact});
      row.check(kl_k3_expectation(p, q), Ref{exact, exact});
    }
    rows.push_back(row.finish());
  }

  {
    RowBuilder row("kl_nonnegative", 0.0);
    Rng rng(o.seed ^ 14);
    std::normal_distribution<double> n(0.0, 3.0);
    std::vector<double> cur(o.kl_samples), ref(o.kl_samples);
    for (std::size_t i = 0; i < o.kl_samples; ++i) {
      cur[i] = -std::fabs(n(rng));
      ref[i] = -std::fabs(n(rng));
    }
    // Include near-identical pairs where cancellation is worst.
    for (std::size_t i = 0; i < o.kl_samples; i += 7) ref[i] = cur[i] + 1e-12 * n(rng);
    const auto est = align::kl_schulman(cur, ref);
    for (double e : est) {
      row.next_case();
      if (!(e >= 0.0)) row.fail();
    }
    rows.push_back(row.finish());
  }
  return rows;
}

bool all_passed(const std::vector<CheckRow>& rows) {
  for (const auto& r : rows) {
    if (!r.passed()) return false;
  }
  return true;
}

void print_table(const std::vector<CheckRow>& rows, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof(line), "%-22s %8s %8s %12s %9s  %s\n", "kernel", "cases", "failed", "max_err",
                "seconds", "result");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-22s %8zu %8zu %12.3e %9.3f  %s\n", r.name.c_str(), r.cases, r.failures,
                  r.max_error, r.seconds, r.passed() ? "PASS" : "FAIL");
    out << line;
  }
}

}  // namespace dualserve::testing
