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

#include <gtest/gtest.h>

#include <random>

#include "dualserve/testing/oracle.h"
#include "dualserve/token_model.h"

namespace dualserve {
namespace {

CodebookConfig two_codebooks(std::uint32_t v0, std::uint32_t v1) {
  CodebookConfig cb;
  cb.n_codebooks = 2;
  cb.semantic_vocab = v0;
  cb.eos_semantic_id = v0 - 1;
  cb.acoustic_vocab_sizes = {v1};
  return cb;
}

std::vector<PromptSegment> words_prompt(std::size_t n, const std::string& stem = "w") {
  TextTokens t;
  for (std::size_t i = 0; i < n; ++i) {
    t.words.push_back(stem + std::to_string(i));
    t.ids.push_back(text_token_id(t.words.back()));
  }
  return {t};
}

TEST(CodebookConfig, DefaultsDescribeTenCodebooksAt44k) {
  CodebookConfig cb;
  EXPECT_NO_THROW(cb.validate());
  EXPECT_EQ(cb.n_codebooks, 10u);
  EXPECT_EQ(cb.semantic_vocab, 4096u);
  EXPECT_EQ(cb.acoustic_vocab_sizes.size(), 9u);
  EXPECT_NEAR(cb.frame_rate(), 21.533, 1e-3);
  EXPECT_EQ(cb.frame_duration().count(), 46439909);
}

TEST(CodebookConfig, RejectsBrokenInvariants) {
  CodebookConfig cb;
  cb.n_codebooks = 1;
  cb.acoustic_vocab_sizes.clear();
  EXPECT_THROW(cb.validate(), InvalidArgument);
  cb = CodebookConfig{};
  cb.eos_semantic_id = cb.semantic_vocab;
  EXPECT_THROW(cb.validate(), InvalidArgument);
  cb = CodebookConfig{};
  cb.acoustic_vocab_sizes[3] = 1;
  EXPECT_THROW(cb.validate(), InvalidArgument);
  cb = CodebookConfig{};
  cb.acoustic_vocab_sizes.pop_back();
  EXPECT_THROW(cb.validate(), InvalidArgument);
}

TEST(ValidateFrame, NamesTheOffendingCodebook) {
  CodebookConfig cb;
  TokenFrame f{1, std::vector<TokenId>(9, 3)};
  EXPECT_NO_THROW(validate_frame(f, cb));
  f.acoustic[4] = 1024;
  try {
    validate_frame(f, cb);
    FAIL() << "expected OutOfRangeError";
  } catch (const OutOfRangeError& e) {
    EXPECT_EQ(e.codebook(), 5);
  }
  f.acoustic.pop_back();
  EXPECT_THROW(validate_frame(f, cb), InvalidArgument);
}

TEST(McfFuse, ZeroTablesGiveZeroVector) {
  CodebookConfig cb;
  const auto tables = EmbeddingTables::zeros(cb, 8);
  const auto x = mcf_fuse(TokenFrame{7, std::vector<TokenId>(9, 5)}, tables);
  ASSERT_EQ(x.size(), 8u);
  for (double v : x) EXPECT_EQ(v, 0.0);
}

TEST(McfFuse, SemanticTokenCountsTwice) {
  const auto cb = two_codebooks(4, 4);
  auto tables = EmbeddingTables::zeros(cb, 1);
  tables.lm_table[2] = 0.5;
  tables.codebook_tables[0][2] = 0.25;
  tables.codebook_tables[1][3] = 0.25;
  const auto x = mcf_fuse(TokenFrame{2, {3}}, tables);
  ASSERT_EQ(x.size(), 1u);
  EXPECT_EQ(x[0], 1.0);
}

TEST(McfFuse, MatchesNaiveLoopOnRandomTables) {
  CodebookConfig cb;
  const auto tables = EmbeddingTables::random(cb, 8, 42);
  std::mt19937_64 rng(7);
  for (int c = 0; c < 200; ++c) {
    TokenFrame f;
    f.semantic = static_cast<TokenId>(rng() % cb.semantic_vocab);
    for (std::size_t k = 1; k < cb.n_codebooks; ++k) f.acoustic.push_back(static_cast<TokenId>(rng() % 1024));
    const auto got = mcf_fuse(f, tables);
    const auto want = testing::mcf_fuse(f, tables);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(McfFuse, BatchRowsEqualSingleFrames) {
  CodebookConfig cb;
  const auto tables = EmbeddingTables::random(cb, 5, 3);
  std::vector<TokenFrame> frames;
  for (TokenId i = 0; i < 37; ++i) frames.push_back(TokenFrame{i * 13, std::vector<TokenId>(9, i * 7)});
  const auto batch = mcf_fuse_batch(frames, tables);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto row = mcf_fuse(frames[t], tables);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(batch[t * 5 + i], row[i]);
  }
}

TEST(McfFuse, OutOfRangeIdNamesCodebook) {
  const auto cb = two_codebooks(4, 8);
  const auto tables = EmbeddingTables::zeros(cb, 2);
  try {
    mcf_fuse(TokenFrame{1, {8}}, tables);
    FAIL();
  } catch (const OutOfRangeError& e) {
    EXPECT_EQ(e.codebook(), 1);
  }
  try {
    mcf_fuse(TokenFrame{4, {0}}, tables);
    FAIL();
  } catch (const OutOfRangeError& e) {
    EXPECT_EQ(e.codebook(), 0);
  }
}

TEST(ExpectedFrames, RoundsRatioTimesTokens) {
  MockModelConfig cfg;
  EXPECT_EQ(expected_frames(0, cfg), 0u);
  cfg.frames_per_text_token = 4.4;
  EXPECT_EQ(expected_frames(100, cfg), 440u);
  cfg.frames_per_text_token = 4.24;
  EXPECT_EQ(expected_frames(1, cfg), 4u);
  std::uint32_t prev = 0;
  for (std::size_t n = 0; n < 500; ++n) {
    const auto f = expected_frames(n, cfg);
    EXPECT_GE(f, prev);
    prev = f;
  }
}

TEST(MockModel, DecodeStepCostIsSlowPlusFastPerAcousticCodebook) {
  MockModelConfig cfg;
  cfg.slow_step_cost = from_ms(5.0);
  cfg.fast_step_cost_per_codebook = from_ms(0.45);
  EXPECT_EQ(decode_step_cost(cfg, CodebookConfig{}), from_ms(9.05));
}

TEST(MockModel, PrefillCostIsLinearInUncachedUnits) {
  MockModelConfig cfg;
  cfg.prefill_cost_per_unit = from_ms(1.0);
  MockModel model(CodebookConfig{}, cfg);
  const auto prompt = words_prompt(100);
  const auto cold = model.prefill(prompt, {}, 0);
  const auto warm = model.prefill(prompt, {}, 90);
  EXPECT_EQ(cold.duration, from_ms(100.0));
  EXPECT_EQ(warm.duration, from_ms(10.0));
  EXPECT_EQ(cold.state, warm.state);
  EXPECT_THROW(model.prefill(prompt, {}, 101), ContractError);
  EXPECT_THROW(model.prefill({}, {}, 0), InvalidArgument);
}

TEST(MockModel, DigestDependsOnEveryUnit) {
  auto a = words_prompt(50);
  auto b = a;
  std::get<TextTokens>(b[0]).ids[0] ^= 1;
  EXPECT_NE(prompt_digest(a), prompt_digest(b));
  b = a;
  std::get<TextTokens>(b[0]).ids[49] ^= 1;
  EXPECT_NE(prompt_digest(a), prompt_digest(b));
}

TEST(MockModel, SameSeedSameFrames) {
  MockModel model(CodebookConfig{}, MockModelConfig{});
  const auto prompt = words_prompt(20);
  auto run = [&](std::uint64_t seed) {
    auto st = model.prefill(prompt, SamplingParams{seed, 4096}, 0).state;
    std::vector<TokenFrame> out;
    while (!st.finished) out.push_back(model.decode_step(st).frame);
    return out;
  };
  const auto a = run(1), b = run(1), c = run(2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& f : a) EXPECT_NO_THROW(validate_frame(f, model.codebooks()));
}

TEST(MockModel, EmitsEosExactlyAtTarget) {
  MockModel model(CodebookConfig{}, MockModelConfig{});
  auto st = model.prefill(words_prompt(10), {}, 0).state;
  const auto target = st.target_frames;
  EXPECT_GT(target, 0u);
  for (std::uint32_t i = 0; i < target; ++i) {
    const auto r = model.decode_step(st);
    EXPECT_FALSE(r.finished);
    EXPECT_NE(r.frame.semantic, model.codebooks().eos_semantic_id);
  }
  const auto last = model.decode_step(st);
  EXPECT_TRUE(last.finished);
  EXPECT_EQ(last.frame.semantic, model.codebooks().eos_semantic_id);
  EXPECT_EQ(st.frames_emitted, target);
  EXPECT_THROW(model.decode_step(st), StateError);
}

TEST(MockModel, ZeroTargetEmitsEosFirst) {
  MockModel model(CodebookConfig{}, MockModelConfig{});
  std::vector<PromptSegment> tags_only{SpeakerTag{0}, VocalTag{"laugh"}};
  auto st = model.prefill(tags_only, {}, 0).state;
  EXPECT_EQ(st.target_frames, 0u);
  const auto r = model.decode_step(st);
  EXPECT_TRUE(r.finished);
  EXPECT_EQ(r.frame.semantic, model.codebooks().eos_semantic_id);
}

TEST(MockModel, JitterStaysWithinBandAndMaxFramesCaps) {
  MockModelConfig cfg;
  cfg.ratio_jitter = 0.1;
  MockModel model(CodebookConfig{}, cfg);
  const auto prompt = words_prompt(100);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto st = model.prefill(prompt, SamplingParams{seed, 4096}, 0).state;
    EXPECT_GE(st.target_frames, 381u);
    EXPECT_LE(st.target_frames, 467u);
  }
  EXPECT_EQ(model.prefill(prompt, SamplingParams{0, 3}, 0).state.target_frames, 3u);
}

TEST(MockModelConfig, RejectsBadValues) {
  MockModelConfig cfg;
  cfg.ratio_jitter = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.frames_per_text_token = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.slow_step_cost = Duration(-1);
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

}  // namespace
}  // namespace dualserve
