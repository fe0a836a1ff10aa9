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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dualserve {

using TokenId = std::uint32_t;
using RequestId = std::uint64_t;

// Simulated and wall time share one integer-nanosecond representation so the
// simulated clock is exact for every cost the configuration can express.
using Duration = std::chrono::nanoseconds;
using TimePoint = Duration;  // offset from engine start

inline Duration from_ms(double ms) {
  return Duration(static_cast<std::int64_t>(std::llround(ms * 1e6)));
}
inline double to_ms(Duration d) { return static_cast<double>(d.count()) / 1e6; }
inline double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e9; }

/// Violated precondition or broken internal invariant.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Caller-supplied data failed validation.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A token id lies outside its table. `codebook` is -1 for the LM table.
class OutOfRangeError : public std::out_of_range {
 public:
  OutOfRangeError(int codebook, const std::string& what)
      : std::out_of_range(what), codebook_(codebook) {}
  int codebook() const noexcept { return codebook_; }

 private:
  int codebook_;
};

/// Operation invoked in a state that does not permit it.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Hashing. Everything deterministic in the engine (sampling, digests, jitter)
// derives from these so results are stable across processes and platforms.

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

/// Uniform double in [0, 1) from 53 high bits of a hash.
constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::string to_hex(std::uint64_t v);

}  // namespace dualserve
