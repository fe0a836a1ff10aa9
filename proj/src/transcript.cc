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

#include "dualserve/transcript.h"

#include <charconv>
#include <limits>

namespace dualserve {
namespace {

constexpr std::string_view kSpeakerOpen = "<|speaker:";
constexpr std::string_view kSpeakerClose = "|>";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Returns the offset of the first invalid byte, or npos.
std::size_t find_invalid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > s.size()) return i;
    for (std::size_t j = 1; j < len; ++j) {
      const auto cc = static_cast<unsigned char>(s[i + j]);
      if ((cc & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (cc & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::string_view::npos;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::vector<PromptSegment> run() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (is_space(c)) {
        ++pos_;
      } else if (text_.substr(pos_, 2) == "<|") {
        speaker_tag();
      } else if (c == '[') {
        vocal_tag();
      } else if (c == ']') {
        throw ParseError(pos_, "unmatched ']'");
      } else {
        word();
      }
    }
    return std::move(out_);
  }

 private:
  void speaker_tag() {
    const std::size_t start = pos_;
    if (text_.substr(pos_, kSpeakerOpen.size()) != kSpeakerOpen) {
      throw ParseError(start, "unknown control tag");
    }
    const std::size_t digits = pos_ + kSpeakerOpen.size();
    const std::size_t close = text_.find(kSpeakerClose, digits);
    if (close == std::string_view::npos) throw ParseError(start, "unclosed speaker tag");
    const std::string_view body = text_.substr(digits, close - digits);
    std::int64_t index = -1;
    const auto [end, ec] = std::from_chars(body.data(), body.data() + body.size(), index);
    if (body.empty() || ec != std::errc{} || end != body.data() + body.size() || index < 0) {
      throw ParseError(digits, "speaker index is not a non-negative integer");
    }
    out_.emplace_back(SpeakerTag{index});
    pos_ = close + kSpeakerClose.size();
  }

  void vocal_tag() {
    const std::size_t start = pos_;
    std::size_t i = pos_ + 1;
    while (i < text_.size() && text_[i] != ']') {
      if (text_[i] == '[') throw ParseError(i, "nested '[' inside vocal tag");
      ++i;
    }
    if (i >= text_.size()) throw ParseError(start, "unclosed '['");
    const std::string_view label = trim(text_.substr(start + 1, i - start - 1));
    if (label.empty()) throw ParseError(start, "empty vocal tag");
    out_.emplace_back(VocalTag{std::string(label)});
    pos_ = i + 1;
  }

  void word() {
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (is_space(c) || c == '[' || c == ']' || text_.substr(pos_, 2) == "<|") break;
      ++pos_;
    }
    const std::string_view w = text_.substr(start, pos_ - start);
    if (out_.empty() || !std::holds_alternative<TextTokens>(out_.back())) {
      out_.emplace_back(TextTokens{});
    }
    auto& run = std::get<TextTokens>(out_.back());
    run.words.emplace_back(w);
    run.ids.push_back(text_token_id(w));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<PromptSegment> out_;
};

}  // namespace

std::vector<PromptSegment> parse_rich_transcript(std::string_view text) {
  if (const auto bad = find_invalid_utf8(text); bad != std::string_view::npos) {
    throw ParseError(bad, "invalid UTF-8");
  }
  return Parser(text).run();
}

std::string render_transcript(const std::vector<PromptSegment>& segments) {
  std::string out;
  auto sep = [&out] {
    if (!out.empty()) out.push_back(' ');
  };
  for (const auto& seg : segments) {
    if (const auto* t = std::get_if<TextTokens>(&seg)) {
      for (const auto& w : t->words) {
        sep();
        out += w;
      }
    } else if (const auto* s = std::get_if<SpeakerTag>(&seg)) {
      sep();
      out += "<|speaker:" + std::to_string(s->index) + "|>";
    } else if (const auto* v = std::get_if<VocalTag>(&seg)) {
      sep();
      out += "[" + v->label + "]";
    } else {
      throw InvalidArgument("audio frames have no transcript rendering");
    }
  }
  return out;
}

}  // namespace dualserve
