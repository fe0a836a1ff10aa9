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

#include <cassert>

#include "dualserve/kernels/kernels.h"

namespace dualserve::kernels::serial {

double masked_nll(std::span<const double> logp, std::span<const double> mask,
                  std::span<const double> weight) {
  double acc = 0.0;
  for (std::size_t t = 0; t < logp.size(); ++t) acc += mask[t] * weight[t] * logp[t];
  return -acc;
}

double weighted_codebook_nll(std::span<const double> logp, std::span<const double> weights) {
  const std::size_t cols = weights.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) acc += weights[i % cols] * logp[i];
  return -acc;
}

void kl_k3_elementwise(std::span<const double> cur, std::span<const double> ref,
                       std::span<double> out) {
  for (std::size_t i = 0; i < cur.size(); ++i) out[i] = kl_k3(cur[i], ref[i]);
}

double kl_k3_sum(std::span<const double> cur, std::span<const double> ref) {
  double acc = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) acc += kl_k3(cur[i], ref[i]);
  return acc;
}

double policy_term_sum(const PolicyTermArgs& a) {
  const bool with_kl = a.beta != 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.logp_cur.size(); ++i) {
    const std::size_t k = i % a.cols;
    if (k < a.first_col) continue;
    double term = -a.advantage * a.logp_cur[i];
    if (with_kl) term += a.beta * kl_k3(a.logp_cur[i], a.logp_ref[i]);
    acc += (a.col_scale.empty() ? 1.0 : a.col_scale[k]) * term;
  }
  return acc;
}

void fuse_rows(std::span<const std::uint32_t> ids, std::size_t n_codebooks,
               std::span<const double> lm_table,
               std::span<const std::span<const double>> codebook_tables, std::size_t dim,
               std::span<double> out) {
  const std::size_t rows = ids.size() / n_codebooks;
  for (std::size_t t = 0; t < rows; ++t) {
    const std::uint32_t* row_ids = ids.data() + t * n_codebooks;
    double* dst = out.data() + t * dim;
    const double* lm = lm_table.data() + static_cast<std::size_t>(row_ids[0]) * dim;
    for (std::size_t d = 0; d < dim; ++d) dst[d] = lm[d];
    for (std::size_t k = 0; k < n_codebooks; ++k) {
      const double* e = codebook_tables[k].data() + static_cast<std::size_t>(row_ids[k]) * dim;
      for (std::size_t d = 0; d < dim; ++d) dst[d] += e[d];
    }
  }
}

}  // namespace dualserve::kernels::serial
