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

#include <algorithm>
#include <cstdint>
#include <vector>

#include "dualserve/kernels/kernels.h"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dualserve::kernels::omp {
namespace {

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

// Reduces body(i) over [0, n) chunk by chunk; partials are summed in chunk
// order after the parallel region.
template <typename Body>
double chunked_sum(std::size_t n, Body body) {
  const std::size_t chunks = chunk_count(n);
  if (chunks <= 1) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += body(i);
    return acc;
  }
  std::vector<double> partial(chunks, 0.0);
  const auto nchunks = static_cast<std::int64_t>(chunks);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < nchunks; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = std::min(n, lo + kChunk);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += body(i);
    partial[static_cast<std::size_t>(c)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

double masked_nll(std::span<const double> logp, std::span<const double> mask,
                  std::span<const double> weight) {
  return -chunked_sum(logp.size(),
                      [&](std::size_t t) { return mask[t] * weight[t] * logp[t]; });
}

double weighted_codebook_nll(std::span<const double> logp, std::span<const double> weights) {
  const std::size_t cols = weights.size();
  return -chunked_sum(logp.size(), [&](std::size_t i) { return weights[i % cols] * logp[i]; });
}

void kl_k3_elementwise(std::span<const double> cur, std::span<const double> ref,
                       std::span<double> out) {
  const auto n = static_cast<std::int64_t>(cur.size());
#pragma omp parallel for schedule(static) if (n > static_cast<std::int64_t>(kChunk))
  for (std::int64_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u] = kl_k3(cur[u], ref[u]);
  }
}

double kl_k3_sum(std::span<const double> cur, std::span<const double> ref) {
  return chunked_sum(cur.size(), [&](std::size_t i) { return kl_k3(cur[i], ref[i]); });
}

double policy_term_sum(const PolicyTermArgs& a) {
  const bool with_kl = a.beta != 0.0;
  return chunked_sum(a.logp_cur.size(), [&](std::size_t i) {
    const std::size_t k = i % a.cols;
    if (k < a.first_col) return 0.0;
    double term = -a.advantage * a.logp_cur[i];
    if (with_kl) term += a.beta * kl_k3(a.logp_cur[i], a.logp_ref[i]);
    return (a.col_scale.empty() ? 1.0 : a.col_scale[k]) * term;
  });
}

void fuse_rows(std::span<const std::uint32_t> ids, std::size_t n_codebooks,
               std::span<const double> lm_table,
               std::span<const std::span<const double>> codebook_tables, std::size_t dim,
               std::span<double> out) {
  const auto rows = static_cast<std::int64_t>(ids.size() / n_codebooks);
  // Rows are independent and each is accumulated in the serial order, so the
  // output matches serial::fuse_rows bit for bit.
#pragma omp parallel for schedule(static) if (rows > 64)
  for (std::int64_t t = 0; t < rows; ++t) {
    const std::uint32_t* row_ids = ids.data() + static_cast<std::size_t>(t) * n_codebooks;
    double* dst = out.data() + static_cast<std::size_t>(t) * dim;
    const double* lm = lm_table.data() + static_cast<std::size_t>(row_ids[0]) * dim;
    for (std::size_t d = 0; d < dim; ++d) dst[d] = lm[d];
    for (std::size_t k = 0; k < n_codebooks; ++k) {
      const double* e = codebook_tables[k].data() + static_cast<std::size_t>(row_ids[k]) * dim;
      for (std::size_t d = 0; d < dim; ++d) dst[d] += e[d];
    }
  }
}

}  // namespace dualserve::kernels::omp
