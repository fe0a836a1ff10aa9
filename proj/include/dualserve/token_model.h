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

// Token universe for a Dual-AR speech model: RVQ codebooks, frames, mixed
// prompts, and a deterministic stand-in for the slow/fast generator with an
// explicit compute-cost model.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dualserve/common.h"

namespace dualserve {

struct CodebookConfig {
  std::size_t n_codebooks = 10;
  std::uint32_t semantic_vocab = 4096;
  std::vector<std::uint32_t> acoustic_vocab_sizes = std::vector<std::uint32_t>(9, 1024);
  std::uint32_t sample_rate = 44100;
  std::uint32_t samples_per_frame = 2048;
  TokenId eos_semantic_id = 4095;

  double frame_rate() const {
    return static_cast<double>(sample_rate) / static_cast<double>(samples_per_frame);
  }
  /// Audio duration of one frame.
  Duration frame_duration() const;
  /// Vocabulary size of codebook k (k = 0 is the semantic codebook).
  std::uint32_t vocab_size(std::size_t k) const {
    return k == 0 ? semantic_vocab : acoustic_vocab_sizes.at(k - 1);
  }
  /// Throws InvalidArgument when an invariant does not hold.
  void validate() const;
};

struct TokenFrame {
  TokenId semantic = 0;
  std::vector<TokenId> acoustic;

  TokenId at(std::size_t k) const { return k == 0 ? semantic : acoustic[k - 1]; }
  bool operator==(const TokenFrame&) const = default;
};

/// Throws OutOfRangeError naming the offending codebook, or InvalidArgument on
/// a wrong acoustic length.
void validate_frame(const TokenFrame& frame, const CodebookConfig& cfg);

// Prompt segments ------------------------------------------------------------

inline constexpr std::uint32_t kTextVocabSize = 32768;

struct TextTokens {
  std::vector<std::string> words;
  std::vector<TokenId> ids;
  bool operator==(const TextTokens&) const = default;
};
struct AudioFrames {
  std::vector<TokenFrame> frames;
  bool operator==(const AudioFrames&) const = default;
};
struct SpeakerTag {
  std::int64_t index = 0;
  bool operator==(const SpeakerTag&) const = default;
};
struct VocalTag {
  std::string label;
  bool operator==(const VocalTag&) const = default;
};

using PromptSegment = std::variant<TextTokens, AudioFrames, SpeakerTag, VocalTag>;

/// Stable word -> text-vocab id (FNV-1a folded into kTextVocabSize slots).
TokenId text_token_id(std::string_view word);

/// Number of key-units a segment list expands to (one per word, frame, tag).
std::size_t count_units(std::span<const PromptSegment> segments);
std::size_t count_text_tokens(std::span<const PromptSegment> segments);

// Embeddings and multi-codebook fusion ----------------------------------------

/// Row-major embedding tables used as fixtures for multi-codebook fusion.
struct EmbeddingTables {
  std::size_t dim = 0;
  std::vector<double> lm_table;                     // semantic_vocab x dim
  std::vector<std::vector<double>> codebook_tables;  // table k: vocab_k x dim
  std::vector<std::uint32_t> vocab_sizes;           // rows of codebook table k

  std::size_t n_codebooks() const { return codebook_tables.size(); }
  std::uint32_t lm_rows() const { return vocab_sizes.empty() ? 0 : vocab_sizes[0]; }

  static EmbeddingTables zeros(const CodebookConfig& cfg, std::size_t dim);
  static EmbeddingTables random(const CodebookConfig& cfg, std::size_t dim, std::uint64_t seed);
  void validate() const;
};

/// Next slow-step input: LM embedding of the semantic token plus every
/// codebook embedding of the frame. The semantic token is counted twice, once
/// per table.
std::vector<double> mcf_fuse(const TokenFrame& frame, const EmbeddingTables& tables);

/// Fuses a run of frames; row t of the result is mcf_fuse(frames[t]).
/// Parallel over frames; each row is computed in the same order as mcf_fuse.
std::vector<double> mcf_fuse_batch(std::span<const TokenFrame> frames,
                                   const EmbeddingTables& tables);

// Mock generator ----------------------------------------------------------------

struct MockModelConfig {
  std::uint64_t seed = 0;
  Duration prefill_cost_per_unit = from_ms(0.1);
  Duration slow_step_cost = from_ms(5.0);
  Duration fast_step_cost_per_codebook = from_ms(0.45);
  double frames_per_text_token = 4.24;
  double ratio_jitter = 0.1;

  void validate() const;
};

struct SamplingParams {
  std::uint64_t seed = 0;
  std::uint32_t max_frames = 4096;
};

struct MockModelState {
  std::uint64_t rng_key = 0;  // counter-based stream key; step index is the counter
  std::uint32_t frames_emitted = 0;
  std::uint32_t target_frames = 0;
  std::uint64_t prompt_digest = 0;
  bool finished = false;

  bool operator==(const MockModelState&) const = default;
};

struct PrefillResult {
  MockModelState state;
  Duration duration{0};
};

struct DecodeResult {
  TokenFrame frame;
  Duration duration{0};
  bool finished = false;
};

/// Digest over the key-units of a prompt. Depends on every unit.
std::uint64_t prompt_digest(std::span<const PromptSegment> segments);

/// round(ratio * text_tokens), no jitter.
std::uint32_t expected_frames(std::size_t text_tokens, const MockModelConfig& cfg);

/// Duration of one batched decode iteration: slow step plus one fast step per
/// acoustic codebook.
Duration decode_step_cost(const MockModelConfig& cfg, const CodebookConfig& codebooks);

class MockModel {
 public:
  MockModel(CodebookConfig codebooks, MockModelConfig cfg);

  const CodebookConfig& codebooks() const { return codebooks_; }
  const MockModelConfig& config() const { return cfg_; }

  /// Prefill of a prompt with its first `skip_units` key-units already cached.
  /// The resulting state is independent of `skip_units`.
  PrefillResult prefill(std::span<const PromptSegment> segments, const SamplingParams& params,
                        std::size_t skip_units) const;

  /// One slow step followed by N-1 fast steps. Throws StateError once finished.
  DecodeResult decode_step(MockModelState& state) const;

  /// The frame the generator emits at `step`; decode_step is a thin wrapper.
  TokenFrame frame_at(const MockModelState& state, std::uint32_t step) const;

 private:
  CodebookConfig codebooks_;
  MockModelConfig cfg_;
};

}  // namespace dualserve
