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

// Rich-transcription text: words interleaved with speaker turns
// (`<|speaker:K|>`) and bracketed vocal events (`[laugh]`, `[in a hurry]`).

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dualserve/token_model.h"

namespace dualserve {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& msg)
      : std::runtime_error(msg + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Splits `text` into text runs, speaker tags and vocal tags in source order.
/// Consecutive words form one TextTokens segment. Vocal-tag labels are trimmed
/// of surrounding whitespace. Throws ParseError on invalid UTF-8, an unclosed
/// or empty tag, a stray `]`, or a non-integer speaker index.
std::vector<PromptSegment> parse_rich_transcript(std::string_view text);

/// Canonical rendering: segments and words separated by single spaces.
std::string render_transcript(const std::vector<PromptSegment>& segments);

}  // namespace dualserve
