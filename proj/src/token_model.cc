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

#include "dualserve/token_model.h"

#include <cmath>
#include <string>

#include "dualserve/kernels/kernels.h"

namespace dualserve {

Duration CodebookConfig::frame_duration() const {
  // 2048 / 44100 s is not an integer number of nanoseconds; round once here.
  return Duration(static_cast<std::int64_t>(
      std::llround(1e9 * static_cast<double>(samples_per_frame) / sample_rate)));
}

void CodebookConfig::validate() const {
  if (n_codebooks < 2) throw InvalidArgument("n_codebooks must be >= 2");
  if (acoustic_vocab_sizes.size() != n_codebooks - 1) {
    throw InvalidArgument("acoustic_vocab_sizes must have n_codebooks - 1 entries");
  }
  if (semantic_vocab < 2) throw InvalidArgument("semantic_vocab must be >= 2");
  for (auto v : acoustic_vocab_sizes) {
    if (v < 2) throw InvalidArgument("acoustic vocab sizes must be >= 2");
  }
  if (eos_semantic_id >= semantic_vocab) {
    throw InvalidArgument("eos_semantic_id must be < semantic_vocab");
  }
  if (sample_rate == 0 || samples_per_frame == 0) {
    throw InvalidArgument("sample_rate and samples_per_frame must be positive");
  }
}

void validate_frame(const TokenFrame& frame, const CodebookConfig& cfg) {
  if (frame.acoustic.size() != cfg.n_codebooks - 1) {
    throw InvalidArgument("frame has " + std::to_string(frame.acoustic.size() + 1) +
                          " codebook ids, expected " + std::to_string(cfg.n_codebooks));
  }
  for (std::size_t k = 0; k < cfg.n_codebooks; ++k) {
    if (frame.at(k) >= cfg.vocab_size(k)) {
      throw OutOfRangeError(static_cast<int>(k),
                            "token id " + std::to_string(frame.at(k)) + " out of range for codebook " +
                                std::to_string(k) + " (vocab " +
                                std::to_string(cfg.vocab_size(k)) + ")");
    }
  }
}

TokenId text_token_id(std::string_view word) {
  return static_cast<TokenId>(fnv1a(word) % kTextVocabSize);
}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::size_t count_units(std::span<const PromptSegment> segments) {
  std::size_t n = 0;
  for (const auto& seg : segments) {
    n += std::visit(Overloaded{[](const TextTokens& t) { return t.ids.size(); },
                               [](const AudioFrames& a) { return a.frames.size(); },
                               [](const SpeakerTag&) -> std::size_t { return 1; },
                               [](const VocalTag&) -> std::size_t { return 1; }},
                    seg);
  }
  return n;
}

std::size_t count_text_tokens(std::span<const PromptSegment> segments) {
  std::size_t n = 0;
  for (const auto& seg : segments) {
    if (const auto* t = std::get_if<TextTokens>(&seg)) n += t->ids.size();
  }
  return n;
}

// Embeddings ---------------------------------------------------------------

EmbeddingTables EmbeddingTables::zeros(const CodebookConfig& cfg, std::size_t dim) {
  EmbeddingTables t;
  t.dim = dim;
  for (std::size_t k = 0; k < cfg.n_codebooks; ++k) t.vocab_sizes.push_back(cfg.vocab_size(k));
  t.lm_table.assign(static_cast<std::size_t>(cfg.semantic_vocab) * dim, 0.0);
  for (auto v : t.vocab_sizes) t.codebook_tables.emplace_back(static_cast<std::size_t>(v) * dim, 0.0);
  return t;
}

EmbeddingTables EmbeddingTables::random(const CodebookConfig& cfg, std::size_t dim,
                                        std::uint64_t seed) {
  EmbeddingTables t = zeros(cfg, dim);
  std::uint64_t s = seed;
  auto next = [&s] {
    s = splitmix64(s);
    return 2.0 * unit_interval(s) - 1.0;
  };
  for (auto& x : t.lm_table) x = next();
  for (auto& table : t.codebook_tables) {
    for (auto& x : table) x = next();
  }
  return t;
}

void EmbeddingTables::validate() const {
  if (codebook_tables.size() != vocab_sizes.size() || vocab_sizes.empty()) {
    throw InvalidArgument("embedding tables: codebook count mismatch");
  }
  if (lm_table.size() != static_cast<std::size_t>(vocab_sizes[0]) * dim) {
    throw InvalidArgument("embedding tables: lm table shape mismatch");
  }
  for (std::size_t k = 0; k < codebook_tables.size(); ++k) {
    if (codebook_tables[k].size() != static_cast<std::size_t>(vocab_sizes[k]) * dim) {
      throw InvalidArgument("embedding tables: codebook " + std::to_string(k) + " shape mismatch");
    }
  }
  auto finite = [](const std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  if (!finite(lm_table)) throw InvalidArgument("embedding tables: non-finite lm entry");
  for (const auto& table : codebook_tables) {
    if (!finite(table)) throw InvalidArgument("embedding tables: non-finite codebook entry");
  }
}

namespace {

void check_fusable(const TokenFrame& frame, const EmbeddingTables& tables) {
  const std::size_t n = tables.n_codebooks();
  if (frame.acoustic.size() + 1 != n) {
    throw InvalidArgument("frame has " + std::to_string(frame.acoustic.size() + 1) +
                          " codebook ids, tables have " + std::to_string(n));
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (frame.at(k) >= tables.vocab_sizes[k]) {
      throw OutOfRangeError(static_cast<int>(k), "token id " + std::to_string(frame.at(k)) +
                                                     " out of range for codebook " +
                                                     std::to_string(k));
    }
  }
}

std::vector<std::span<const double>> table_views(const EmbeddingTables& tables) {
  std::vector<std::span<const double>> views;
  views.reserve(tables.codebook_tables.size());
  for (const auto& t : tables.codebook_tables) views.emplace_back(t);
  return views;
}

}  // namespace

std::vector<double> mcf_fuse(const TokenFrame& frame, const EmbeddingTables& tables) {
  return mcf_fuse_batch(std::span<const TokenFrame>(&frame, 1), tables);
}

std::vector<double> mcf_fuse_batch(std::span<const TokenFrame> frames,
                                   const EmbeddingTables& tables) {
  const std::size_t n = tables.n_codebooks();
  std::vector<std::uint32_t> ids;
  ids.reserve(frames.size() * n);
  for (const auto& f : frames) {
    check_fusable(f, tables);
    for (std::size_t k = 0; k < n; ++k) ids.push_back(f.at(k));
  }
  std::vector<double> out(frames.size() * tables.dim);
  const auto views = table_views(tables);
  kernels::omp::fuse_rows(ids, n, tables.lm_table, views, tables.dim, out);
  return out;
}

// Mock generator -------------------------------------------------------------

void MockModelConfig::validate() const {
  if (prefill_cost_per_unit.count() < 0 || slow_step_cost.count() < 0 ||
      fast_step_cost_per_codebook.count() < 0) {
    throw InvalidArgument("model costs must be >= 0");
  }
  if (!(frames_per_text_token > 0.0)) throw InvalidArgument("frames_per_text_token must be > 0");
  if (!(ratio_jitter >= 0.0 && ratio_jitter < 1.0)) {
    throw InvalidArgument("ratio_jitter must lie in [0, 1)");
  }
}

std::uint64_t prompt_digest(std::span<const PromptSegment> segments) {
  std::uint64_t h = 0x5eed5eed5eed5eedULL;
  for (const auto& seg : segments) {
    std::visit(Overloaded{[&](const TextTokens& t) {
                            for (auto id : t.ids) h = hash_combine(h, (1ULL << 60) | id);
                          },
                          [&](const AudioFrames& a) {
                            for (const auto& f : a.frames) {
                              h = hash_combine(h, (2ULL << 60) | f.semantic);
                              for (auto id : f.acoustic) h = hash_combine(h, id);
                            }
                          },
                          [&](const SpeakerTag& s) {
                            h = hash_combine(h, (3ULL << 60) ^ static_cast<std::uint64_t>(s.index));
                          },
                          [&](const VocalTag& v) { h = hash_combine(h, (4ULL << 60) ^ fnv1a(v.label)); }},
               seg);
  }
  return h;
}

std::uint32_t expected_frames(std::size_t text_tokens, const MockModelConfig& cfg) {
  return static_cast<std::uint32_t>(
      std::llround(cfg.frames_per_text_token * static_cast<double>(text_tokens)));
}

Duration decode_step_cost(const MockModelConfig& cfg, const CodebookConfig& codebooks) {
  return cfg.slow_step_cost +
         cfg.fast_step_cost_per_codebook * static_cast<std::int64_t>(codebooks.n_codebooks - 1);
}

MockModel::MockModel(CodebookConfig codebooks, MockModelConfig cfg)
    : codebooks_(std::move(codebooks)), cfg_(cfg) {
  codebooks_.validate();
  cfg_.validate();
}

PrefillResult MockModel::prefill(std::span<const PromptSegment> segments,
                                 const SamplingParams& params, std::size_t skip_units) const {
  const std::size_t total = count_units(segments);
  if (total == 0) throw InvalidArgument("empty prompt");
  if (skip_units > total) throw ContractError("skip_units exceeds prompt length");

  PrefillResult out;
  auto& st = out.state;
  st.prompt_digest = prompt_digest(segments);
  st.rng_key = hash_combine(hash_combine(cfg_.seed, params.seed), st.prompt_digest);

  const double base = cfg_.frames_per_text_token * static_cast<double>(count_text_tokens(segments));
  const double u = unit_interval(hash_combine(st.rng_key, 0x6a177e7ULL));
  const double jittered = base * (1.0 + cfg_.ratio_jitter * (2.0 * u - 1.0));
  const auto target = static_cast<std::uint32_t>(std::max<long long>(0, std::llround(jittered)));
  st.target_frames = std::min(target, params.max_frames);

  out.duration = cfg_.prefill_cost_per_unit * static_cast<std::int64_t>(total - skip_units);
  return out;
}

TokenFrame MockModel::frame_at(const MockModelState& state, std::uint32_t step) const {
  TokenFrame f;
  const std::uint64_t step_key = hash_combine(state.rng_key, step);
  if (step >= state.target_frames) {
    f.semantic = codebooks_.eos_semantic_id;
  } else {
    auto sem = static_cast<TokenId>(step_key % (codebooks_.semantic_vocab - 1));
    if (sem >= codebooks_.eos_semantic_id) ++sem;
    f.semantic = sem;
  }
  f.acoustic.resize(codebooks_.n_codebooks - 1);
  for (std::size_t k = 1; k < codebooks_.n_codebooks; ++k) {
    const std::uint64_t h = hash_combine(hash_combine(step_key, k), f.semantic);
    f.acoustic[k - 1] = static_cast<TokenId>(h % codebooks_.vocab_size(k));
  }
  return f;
}

DecodeResult MockModel::decode_step(MockModelState& state) const {
  if (state.finished) throw StateError("decode_step called on a finished state");
  DecodeResult r;
  r.frame = frame_at(state, state.frames_emitted);
  r.duration = decode_step_cost(cfg_, codebooks_);
  if (state.frames_emitted == state.target_frames) {
    state.finished = true;
    r.finished = true;
  } else {
    ++state.frames_emitted;
  }
  return r;
}

}  // namespace dualserve
