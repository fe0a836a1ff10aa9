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

// Array kernels behind the loss, KL and fusion operations. Two builds of every
// kernel: `serial` is the plain reference loop kept for testing and
// benchmarking; `omp` splits the index range into fixed-size chunks, reduces
// each chunk in parallel and sums the partials in chunk order, so its result
// does not depend on the OpenMP thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace dualserve::kernels {

/// Elements per reduction chunk in the `omp` kernels.
inline constexpr std::size_t kChunk = 4096;

/// Clamp applied to the log-ratio before exponentiation in the k3 estimator.
inline constexpr double kKlLogRatioClamp = 30.0;

/// Per-element k3 KL estimate: exp(r) - r - 1 with r = ref - cur, r <= 30.
double kl_k3(double logp_cur, double logp_ref);

struct PolicyTermArgs {
  std::span<const double> logp_cur;  // rows x cols, row-major
  std::span<const double> logp_ref;  // same shape; may be empty when beta == 0
  std::size_t cols = 1;
  std::size_t first_col = 0;           // columns before this are skipped
  std::span<const double> col_scale;  // per-column multiplier; empty means 1
  double advantage = 0.0;
  double beta = 0.0;
};

namespace serial {

/// -sum_t mask_t * weight_t * logp_t
double masked_nll(std::span<const double> logp, std::span<const double> mask,
                  std::span<const double> weight);
/// -sum_{t,k} w_k * logp[t,k] over a rows x weights.size() matrix.
double weighted_codebook_nll(std::span<const double> logp, std::span<const double> weights);
/// out[i] = kl_k3(cur[i], ref[i])
void kl_k3_elementwise(std::span<const double> cur, std::span<const double> ref,
                       std::span<double> out);
double kl_k3_sum(std::span<const double> cur, std::span<const double> ref);
/// Sum over (t, k >= first_col) of scale_k * (-A * cur + beta * kl_k3(cur, ref)).
double policy_term_sum(const PolicyTermArgs& args);
/// Row t of `out` = lm[ids(t,0)] + sum_k table_k[ids(t,k)], `dim` columns each.
void fuse_rows(std::span<const std::uint32_t> ids, std::size_t n_codebooks,
               std::span<const double> lm_table,
               std::span<const std::span<const double>> codebook_tables, std::size_t dim,
               std::span<double> out);

}  // namespace serial

namespace omp {

/// -sum_t mask_t * weight_t * logp_t
double masked_nll(std::span<const double> logp, std::span<const double> mask,
                  std::span<const double> weight);
/// -sum_{t,k} w_k * logp[t,k] over a rows x weights.size() matrix.
double weighted_codebook_nll(std::span<const double> logp, std::span<const double> weights);
/// out[i] = kl_k3(cur[i], ref[i])
void kl_k3_elementwise(std::span<const double> cur, std::span<const double> ref,
                       std::span<double> out);
double kl_k3_sum(std::span<const double> cur, std::span<const double> ref);
/// Sum over (t, k >= first_col) of scale_k * (-A * cur + beta * kl_k3(cur, ref)).
double policy_term_sum(const PolicyTermArgs& args);
/// Row t of `out` = lm[ids(t,0)] + sum_k table_k[ids(t,k)], `dim` columns each.
void fuse_rows(std::span<const std::uint32_t> ids, std::size_t n_codebooks,
               std::span<const double> lm_table,
               std::span<const std::span<const double>> codebook_tables, std::size_t dim,
               std::span<double> out);

/// Threads OpenMP would use for a parallel region (1 when built without it).
int max_threads();

}  // namespace omp

}  // namespace dualserve::kernels
