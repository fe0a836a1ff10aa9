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

#include "dualserve/vocoder.h"

#include <algorithm>
#include <string>

namespace dualserve {

void VocoderConfig::validate() const {
  if (first_chunk_frames < 1 || steady_chunk_frames < 1) {
    throw InvalidArgument("vocoder chunk sizes must be >= 1");
  }
  if (cost_per_frame.count() < 0) throw InvalidArgument("vocoder cost must be >= 0");
}

namespace {

std::uint64_t frame_seed(const TokenFrame& f) {
  std::uint64_t h = hash_combine(0x70c0de5ULL, f.semantic);
  for (auto id : f.acoustic) h = hash_combine(h, id);
  return h;
}

template <typename Sink>
void generate_pcm(std::span<const TokenFrame> frames, std::uint32_t samples_per_frame, Sink sink) {
  for (const auto& f : frames) {
    std::uint64_t s = frame_seed(f);
    for (std::uint32_t i = 0; i < samples_per_frame; ++i) {
      s = splitmix64(s);
      // Low bit forced on: no sample is ever exactly zero.
      sink(static_cast<std::int16_t>(static_cast<std::uint16_t>(s >> 48) | 1U));
    }
  }
}

}  // namespace

std::vector<std::int16_t> pseudo_pcm(std::span<const TokenFrame> frames,
                                     std::uint32_t samples_per_frame) {
  std::vector<std::int16_t> out;
  out.reserve(frames.size() * samples_per_frame);
  generate_pcm(frames, samples_per_frame, [&](std::int16_t v) { out.push_back(v); });
  return out;
}

std::uint64_t pcm_digest(std::span<const TokenFrame> frames, std::uint32_t samples_per_frame) {
  std::uint64_t h = kFnvOffset;
  generate_pcm(frames, samples_per_frame, [&](std::int16_t v) {
    const auto u = static_cast<std::uint16_t>(v);
    h = (h ^ (u & 0xFFU)) * kFnvPrime;
    h = (h ^ (u >> 8)) * kFnvPrime;
  });
  return h;
}

VocoderStage::VocoderStage(VocoderConfig cfg, std::uint32_t samples_per_frame)
    : cfg_(cfg), samples_per_frame_(samples_per_frame) {
  cfg_.validate();
}

AudioChunkDesc VocoderStage::schedule(RequestId request, Stream& s, TimePoint ready_at) {
  AudioChunkDesc d;
  d.request = request;
  d.chunk_index = s.next_chunk++;
  d.first_frame = s.first_buffered;
  d.frame_count = static_cast<std::uint32_t>(s.buffer.size());
  d.sample_count = static_cast<std::uint64_t>(d.frame_count) * samples_per_frame_;
  d.digest = pcm_digest(s.buffer, samples_per_frame_);
  d.ready_at = ready_at;
  const TimePoint start = std::max(ready_at, busy_until_);
  d.complete_at = start + cfg_.cost_per_frame * static_cast<std::int64_t>(d.frame_count);
  busy_until_ = d.complete_at;
  s.first_buffered += d.frame_count;
  s.buffer.clear();
  return d;
}

std::optional<AudioChunkDesc> VocoderStage::enqueue(RequestId request, std::uint32_t step,
                                                    const TokenFrame& frame, TimePoint ready_at) {
  Stream& s = streams_[request];
  if (s.eos) throw ContractError("frame enqueued after end of stream");
  if (step != s.next_step) {
    throw ContractError("out-of-order frame " + std::to_string(step) + " (expected " +
                        std::to_string(s.next_step) + ")");
  }
  ++s.next_step;
  s.buffer.push_back(frame);
  const std::uint32_t want = s.next_chunk == 0 ? cfg_.first_chunk_frames : cfg_.steady_chunk_frames;
  if (s.buffer.size() >= want) return schedule(request, s, ready_at);
  return std::nullopt;
}

void VocoderStage::end_of_stream(RequestId request) { streams_[request].eos = true; }

std::optional<AudioChunkDesc> VocoderStage::flush(RequestId request, TimePoint ready_at) {
  auto it = streams_.find(request);
  if (it == streams_.end() || !it->second.eos) throw ContractError("flush before end of stream");
  std::optional<AudioChunkDesc> out;
  if (!it->second.buffer.empty()) out = schedule(request, it->second, ready_at);
  streams_.erase(it);
  return out;
}

void VocoderStage::cancel(RequestId request) { streams_.erase(request); }

}  // namespace dualserve
