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

#include "dualserve/testing/oracle.h"

#include <algorithm>
#include <cmath>

namespace dualserve::testing {

using LD = long double;

bool close(double got, const Ref& want, double tol, double* rel_err) {
  const double scale = std::max({std::fabs(want.value), want.magnitude, 1e-300});
  const double err = std::fabs(got - want.value) / scale;
  if (rel_err != nullptr) *rel_err = err;
  return err <= tol;
}

std::vector<double> mcf_fuse(const TokenFrame& frame, const EmbeddingTables& tables) {
  std::vector<double> out(tables.dim);
  for (std::size_t d = 0; d < tables.dim; ++d) {
    LD acc = tables.lm_table[static_cast<std::size_t>(frame.semantic) * tables.dim + d];
    for (std::size_t k = 0; k < tables.codebook_tables.size(); ++k) {
      const TokenId q = k == 0 ? frame.semantic : frame.acoustic[k - 1];
      acc += tables.codebook_tables[k][static_cast<std::size_t>(q) * tables.dim + d];
    }
    out[d] = static_cast<double>(acc);
  }
  return out;
}

Ref loss_slow(std::span<const double> logp, std::span<const double> mask, std::span<const double> weight) {
  LD acc = 0, mag = 0;
  for (std::size_t t = 0; t < logp.size(); ++t) {
    const LD term = static_cast<LD>(mask[t]) * weight[t] * logp[t];
    acc -= term;
    mag += std::fabs(term);
  }
  return {static_cast<double>(acc), static_cast<double>(mag)};
}

Ref loss_fast(std::span<const double> logp, std::size_t n_codebooks, std::span<const double> weights) {
  LD norm = 0;
  for (std::size_t k = 1; k < n_codebooks; ++k) norm += weights[k];
  const std::size_t steps = logp.size() / n_codebooks;
  LD acc = 0, mag = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < n_codebooks; ++k) {
      const LD term = static_cast<LD>(weights[k]) * logp[t * n_codebooks + k];
      acc -= term;
      mag += std::fabs(term);
    }
  }
  return {static_cast<double>(acc / norm), static_cast<double>(mag / norm)};
}

Ref loss_total(double slow, double fast, double w_slow, double w_fast) {
  const LD a = static_cast<LD>(w_slow) * slow, b = static_cast<LD>(w_fast) * fast;
  return {static_cast<double>(a + b), static_cast<double>(std::fabs(a) + std::fabs(b))};
}

std::vector<Ref> advantages(std::span<const double> rewards) {
  LD sum = 0, mag = 0;
  for (double r : rewards) {
    sum += r;
    mag += std::fabs(r);
  }
  const LD mean = sum / static_cast<LD>(rewards.size());
  std::vector<Ref> out;
  for (double r : rewards) {
    out.push_back({static_cast<double>(r - mean),
                   static_cast<double>(std::fabs(static_cast<LD>(r)) + mag / rewards.size())});
  }
  return out;
}

Ref kl_k3(double logp_cur, double logp_ref) {
  LD r = static_cast<LD>(logp_ref) - logp_cur;
  r = std::min<LD>(r, 30.0L);
  LD v = 0;
  if (std::fabs(r) < 0.5L) {
    LD term = r;
    for (int n = 2; n < 40; ++n) {
      term *= r / n;
      v += term;
    }
  } else {
    v = std::exp(r) - r - 1;
  }
  return {static_cast<double>(v), static_cast<double>(std::fabs(v))};
}

double kl_exact(std::span<const double> p, std::span<const double> q) {
  LD acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) acc += static_cast<LD>(p[i]) * std::log(static_cast<LD>(p[i]) / q[i]);
  }
  return static_cast<double>(acc);
}

double kl_k3_expectation(std::span<const double> p, std::span<const double> q) {
  LD acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    const LD r = std::log(static_cast<LD>(q[i])) - std::log(static_cast<LD>(p[i]));
    acc += static_cast<LD>(p[i]) * (std::exp(r) - r - 1);
  }
  return static_cast<double>(acc);
}

Ref rl_loss_slow(std::span<const double> cur, std::span<const double> ref, double advantage, double beta) {
  LD acc = 0, mag = 0;
  for (std::size_t t = 0; t < cur.size(); ++t) {
    const LD pg = -static_cast<LD>(advantage) * cur[t];
    const LD kl = static_cast<LD>(beta) * kl_k3(cur[t], ref[t]).value;
    acc += pg + kl;
    mag += std::fabs(pg) + std::fabs(kl);
  }
  const LD n = static_cast<LD>(cur.size());
  return {static_cast<double>(acc / n), static_cast<double>(mag / n)};
}

Ref rl_loss_fast(std::span<const double> cur, std::span<const double> ref, std::size_t n_codebooks,
                 std::span<const std::uint32_t> codebook_sizes, double advantage, double beta) {
  LD acc = 0, mag = 0;
  const std::size_t steps = cur.size() / n_codebooks;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 1; k < n_codebooks; ++k) {
      const std::size_t i = t * n_codebooks + k;
      const LD c = codebook_sizes[k];
      const LD pg = -static_cast<LD>(advantage) * cur[i] / c;
      const LD kl = static_cast<LD>(beta) * kl_k3(cur[i], ref[i]).value / c;
      acc += pg + kl;
      mag += std::fabs(pg) + std::fabs(kl);
    }
  }
  return {static_cast<double>(acc), static_cast<double>(mag)};
}

Ref rl_loss_total(double slow, double fast, double gamma) {
  const LD g = static_cast<LD>(gamma) * fast;
  return {static_cast<double>(slow + g), static_cast<double>(std::fabs(slow) + std::fabs(g))};
}

Ref reward_fuse(double stt, double pref, double sim, double w_stt, double w_pref, double w_sim) {
  const LD a = static_cast<LD>(w_stt) * stt, b = static_cast<LD>(w_pref) * pref,
           c = static_cast<LD>(w_sim) * sim;
  return {static_cast<double>(a + b + c), static_cast<double>(std::fabs(a) + std::fabs(b) + std::fabs(c))};
}

Ref cosine(std::span<const double> a, std::span<const double> b) {
  LD dot = 0, na = 0, nb = 0, mag = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<LD>(a[i]) * b[i];
    mag += std::fabs(static_cast<LD>(a[i]) * b[i]);
    na += static_cast<LD>(a[i]) * a[i];
    nb += static_cast<LD>(b[i]) * b[i];
  }
  const LD denom = std::sqrt(na) * std::sqrt(nb);
  return {static_cast<double>(dot / denom), static_cast<double>(mag / denom)};
}

}  // namespace dualserve::testing
