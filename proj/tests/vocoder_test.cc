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

#include "dualserve/vocoder.h"

namespace dualserve {
namespace {

TokenFrame frame(std::uint32_t i) { return TokenFrame{i, {i + 1, i + 2}}; }

std::vector<AudioChunkDesc> run_stream(VocoderStage& v, RequestId id, std::uint32_t n, TimePoint t0 = {}) {
  std::vector<AudioChunkDesc> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (auto c = v.enqueue(id, i, frame(i), t0 + from_ms(i))) out.push_back(*c);
  }
  v.end_of_stream(id);
  if (auto c = v.flush(id, t0 + from_ms(n))) out.push_back(*c);
  return out;
}

TEST(Vocoder, ChunksAreFirstThenSteady) {
  VocoderStage v(VocoderConfig{2, 4, from_ms(1), VocoderConcurrency::kOverlapped}, 2048);
  const auto chunks = run_stream(v, 1, 10);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].frame_count, 2u);
  EXPECT_EQ(chunks[1].frame_count, 4u);
  EXPECT_EQ(chunks[2].frame_count, 4u);
}

TEST(Vocoder, ResidualBecomesShortFinalChunk) {
  VocoderStage v(VocoderConfig{2, 4, from_ms(1), VocoderConcurrency::kOverlapped}, 2048);
  const auto chunks = run_stream(v, 1, 9);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[2].frame_count, 3u);
  EXPECT_EQ(chunks[2].first_frame, 6u);
}

TEST(Vocoder, NoResidualNoFinalChunk) {
  VocoderStage v(VocoderConfig{2, 4, from_ms(1), VocoderConcurrency::kOverlapped}, 2048);
  for (std::uint32_t i = 0; i < 6; ++i) v.enqueue(1, i, frame(i), {});
  v.end_of_stream(1);
  EXPECT_FALSE(v.flush(1, {}));
}

TEST(Vocoder, SpansAreContiguousAndSamplesAddUp) {
  VocoderStage v(VocoderConfig{3, 5, from_ms(1), VocoderConcurrency::kOverlapped}, 2048);
  const auto chunks = run_stream(v, 4, 37);
  std::uint32_t next = 0;
  std::uint64_t samples = 0;
  for (std::size_t j = 0; j < chunks.size(); ++j) {
    EXPECT_EQ(chunks[j].chunk_index, j);
    EXPECT_EQ(chunks[j].first_frame, next);
    EXPECT_EQ(chunks[j].sample_count, chunks[j].frame_count * 2048ull);
    next += chunks[j].frame_count;
    samples += chunks[j].sample_count;
  }
  EXPECT_EQ(samples, 37u * 2048u);
}

TEST(Vocoder, FirstChunkOfOneCostsOneFrame) {
  VocoderStage v(VocoderConfig{1, 8, from_ms(2), VocoderConcurrency::kOverlapped}, 2048);
  const auto c = v.enqueue(1, 0, frame(0), from_ms(109.05));
  ASSERT_TRUE(c);
  EXPECT_EQ(c->complete_at, from_ms(111.05));
}

TEST(Vocoder, JobsQueueOnOneWorker) {
  VocoderStage v(VocoderConfig{1, 1, from_ms(10), VocoderConcurrency::kOverlapped}, 2048);
  const auto a = v.enqueue(1, 0, frame(0), from_ms(0));
  const auto b = v.enqueue(2, 0, frame(0), from_ms(1));
  EXPECT_EQ(a->complete_at, from_ms(10));
  EXPECT_EQ(b->complete_at, from_ms(20));
  EXPECT_EQ(v.busy_until(), from_ms(20));
}

TEST(Vocoder, OutOfOrderAndLateFramesAreContractErrors) {
  VocoderStage v(VocoderConfig{}, 2048);
  v.enqueue(1, 0, frame(0), {});
  EXPECT_THROW(v.enqueue(1, 2, frame(2), {}), ContractError);
  EXPECT_THROW(v.flush(1, {}), ContractError);
  v.end_of_stream(1);
  EXPECT_THROW(v.enqueue(1, 1, frame(1), {}), ContractError);
}

TEST(Vocoder, DigestIsDeterministicAndContentSensitive) {
  std::vector<TokenFrame> a{frame(1), frame(2)};
  std::vector<TokenFrame> b{frame(1), frame(3)};
  EXPECT_EQ(pcm_digest(a, 2048), pcm_digest(a, 2048));
  EXPECT_NE(pcm_digest(a, 2048), pcm_digest(b, 2048));
  VocoderStage v1(VocoderConfig{}, 2048), v2(VocoderConfig{}, 2048);
  EXPECT_EQ(run_stream(v1, 1, 20), run_stream(v2, 1, 20));
}

TEST(Vocoder, PseudoPcmIsNeverSilent) {
  const auto pcm = pseudo_pcm(std::vector<TokenFrame>{frame(0), TokenFrame{0, {0, 0}}}, 2048);
  ASSERT_EQ(pcm.size(), 4096u);
  for (auto s : pcm) EXPECT_NE(s, 0);
}

TEST(Vocoder, ConcurrencyModeChangesOnlyTiming) {
  VocoderStage a(VocoderConfig{2, 4, from_ms(3), VocoderConcurrency::kOverlapped}, 2048);
  VocoderStage b(VocoderConfig{2, 4, from_ms(3), VocoderConcurrency::kSerial}, 2048);
  auto ca = run_stream(a, 1, 11), cb = run_stream(b, 1, 11);
  ASSERT_EQ(ca.size(), cb.size());
  for (std::size_t i = 0; i < ca.size(); ++i) {
    EXPECT_EQ(ca[i].digest, cb[i].digest);
    EXPECT_EQ(ca[i].frame_count, cb[i].frame_count);
  }
}

TEST(Vocoder, RejectsZeroChunk) {
  EXPECT_THROW(VocoderStage(VocoderConfig{0, 4, from_ms(1), VocoderConcurrency::kOverlapped}, 2048),
               InvalidArgument);
}

}  // namespace
}  // namespace dualserve
