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
#include <cmath>

#include "dualserve/kernels/kernels.h"

namespace dualserve::kernels {

double kl_k3(double logp_cur, double logp_ref) {
  const double r = std::min(logp_ref - logp_cur, kKlLogRatioClamp);
  if (std::fabs(r) < 0.5) {
    // r^2/2! + r^3/3! + ...; expm1(r) - r cancels badly here.
    double term = 0.5 * r * r;
    double sum = term;
    for (int n = 3; n < 22; ++n) {
      term *= r / n;
      sum += term;
    }
    return std::max(0.0, sum);
  }
  return std::expm1(r) - r;
}

}  // namespace dualserve::kernels
