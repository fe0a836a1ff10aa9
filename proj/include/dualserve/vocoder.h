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

// Simulated frame-to-audio decoder. Frames are buffered per request and cut
// into chunks (a short first chunk for latency, longer steady chunks after);
// each chunk is a job on a single vocoder worker timeline.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dualserve/token_model.h"

namespace dualserve {

enum class VocoderConcurrency { kOverlapped, kSerial };

struct VocoderConfig {
  std::uint32_t first_chunk_frames = 2;
  std::uint32_t steady_chunk_frames = 8;
  Duration cost_per_frame = from_ms(0.5);
  VocoderConcurrency concurrency = VocoderConcurrency::kOverlapped;

  void validate() const;
};

struct AudioChunkDesc {
  RequestId request = 0;
  std::uint32_t chunk_index = 0;
  std::uint32_t first_frame = 0;  // frame span [first_frame, first_frame + frame_count)
  std::uint32_t frame_count = 0;
  std::uint64_t sample_count = 0;
  std::uint64_t digest = 0;
  TimePoint ready_at{0};     // frames available to the vocoder
  TimePoint complete_at{0};  // audio available to the client

  bool operator==(const AudioChunkDesc&) const = default;
};

/// Deterministic pseudo-PCM for a run of frames: a hash stream seeded by the
/// frame tokens, never all-zero.
std::vector<std::int16_t> pseudo_pcm(std::span<const TokenFrame> frames, std::uint32_t samples_per_frame);
/// FNV-1a over the pseudo-PCM bytes of the chunk.
std::uint64_t pcm_digest(std::span<const TokenFrame> frames, std::uint32_t samples_per_frame);

class VocoderStage {
 public:
  VocoderStage(VocoderConfig cfg, std::uint32_t samples_per_frame);

  const VocoderConfig& config() const { return cfg_; }

  /// Buffers frame `step` of `request` (steps must arrive 0, 1, 2, ...). Returns
  /// the chunk scheduled once the buffer reaches the current chunk size.
  std::optional<AudioChunkDesc> enqueue(RequestId request, std::uint32_t step,
                                        const TokenFrame& frame, TimePoint ready_at);

  /// Marks end of stream for `request`; no further frames are accepted.
  void end_of_stream(RequestId request);

  /// Emits the residual frames as a final short chunk (nothing when empty) and
  /// forgets the request. Throws ContractError before end_of_stream.
  std::optional<AudioChunkDesc> flush(RequestId request, TimePoint ready_at);

  /// Drops a request's buffered state without emitting audio.
  void cancel(RequestId request);

  /// Time at which the worker finishes all scheduled jobs.
  TimePoint busy_until() const { return busy_until_; }

 private:
  struct Stream {
    std::uint32_t next_step = 0;
    std::uint32_t next_chunk = 0;
    std::uint32_t first_buffered = 0;
    std::vector<TokenFrame> buffer;
    bool eos = false;
  };

  AudioChunkDesc schedule(RequestId request, Stream& s, TimePoint ready_at);

  VocoderConfig cfg_;
  std::uint32_t samples_per_frame_;
  std::map<RequestId, Stream> streams_;
  TimePoint busy_until_{0};
};

}  // namespace dualserve
