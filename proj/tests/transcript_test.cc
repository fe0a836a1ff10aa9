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

#include "dualserve/transcript.h"

namespace dualserve {
namespace {

TextTokens text(std::initializer_list<const char*> words) {
  TextTokens t;
  for (const char* w : words) {
    t.words.emplace_back(w);
    t.ids.push_back(text_token_id(w));
  }
  return t;
}

std::size_t error_offset(std::string_view s) {
  try {
    parse_rich_transcript(s);
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no ParseError for: " << s;
  return std::string::npos;
}

TEST(Transcript, SpeakerWordsAndVocalTag) {
  const auto segs = parse_rich_transcript("<|speaker:0|> hello [laugh] there");
  const std::vector<PromptSegment> want{SpeakerTag{0}, text({"hello"}), VocalTag{"laugh"}, text({"there"})};
  EXPECT_EQ(segs, want);
}

TEST(Transcript, EmptyInput) {
  EXPECT_TRUE(parse_rich_transcript("").empty());
  EXPECT_TRUE(parse_rich_transcript("  \n\t ").empty());
}

TEST(Transcript, MultiWordVocalTag) {
  const auto segs = parse_rich_transcript("[in a hurry] go");
  const std::vector<PromptSegment> want{VocalTag{"in a hurry"}, text({"go"})};
  EXPECT_EQ(segs, want);
}

TEST(Transcript, ConsecutiveWordsShareOneSegment) {
  const auto segs = parse_rich_transcript("one two\tthree\nfour");
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(std::get<TextTokens>(segs[0]), text({"one", "two", "three", "four"}));
}

TEST(Transcript, TagsNeedNoSurroundingSpace) {
  const auto segs = parse_rich_transcript("hi[sigh]ok<|speaker:12|>yes");
  const std::vector<PromptSegment> want{text({"hi"}), VocalTag{"sigh"}, text({"ok"}), SpeakerTag{12},
                                        text({"yes"})};
  EXPECT_EQ(segs, want);
}

TEST(Transcript, VocalLabelIsTrimmed) {
  const auto segs = parse_rich_transcript("[  prolonged laugh ]");
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(std::get<VocalTag>(segs[0]).label, "prolonged laugh");
}

TEST(Transcript, Utf8WordsAreKept) {
  const auto segs = parse_rich_transcript("caf\xC3\xA9 \xE4\xBD\xA0\xE5\xA5\xBD");
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(std::get<TextTokens>(segs[0]).words.size(), 2u);
}

TEST(Transcript, ErrorsCarryByteOffsets) {
  EXPECT_EQ(error_offset("ok [laugh"), 3u);
  EXPECT_EQ(error_offset("a ] b"), 2u);
  EXPECT_EQ(error_offset("[]"), 0u);
  EXPECT_EQ(error_offset("[  ]"), 0u);
  EXPECT_EQ(error_offset("[a [b]]"), 3u);
  EXPECT_EQ(error_offset("x <|speaker:one|>"), 12u);
  EXPECT_EQ(error_offset("<|speaker:-1|>"), 10u);
  EXPECT_EQ(error_offset("<|speaker:|>"), 10u);
  EXPECT_EQ(error_offset("<|speaker:3"), 0u);
  EXPECT_EQ(error_offset("hi <|lang:en|>"), 3u);
  EXPECT_EQ(error_offset("ab \xC3("), 3u);
  EXPECT_EQ(error_offset("\xED\xA0\x80"), 0u);  // surrogate
}

TEST(Transcript, TextIdsAreStable) {
  EXPECT_EQ(text_token_id("hello"), text_token_id("hello"));
  EXPECT_LT(text_token_id("hello"), kTextVocabSize);
  EXPECT_NE(text_token_id("hello"), text_token_id("there"));
}

TEST(Transcript, RenderThenParseRoundTrips) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> words{"a", "bb", "hello", "w\xC3\xB6rd", "x<y", "q|r", "1:2"};
  const std::vector<std::string> labels{"laugh", "in a hurry", "sigh", "whisper softly"};
  for (int c = 0; c < 500; ++c) {
    std::string src;
    const int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      switch (rng() % 3) {
        case 0:
          src += words[rng() % words.size()];
          break;
        case 1:
          src += "[ " + labels[rng() % labels.size()] + "]";
          break;
        default:
          src += "<|speaker:" + std::to_string(rng() % 7) + "|>";
      }
      src += (rng() % 2) ? " " : "  \t";
    }
    const auto once = parse_rich_transcript(src);
    const auto rendered = render_transcript(once);
    EXPECT_EQ(parse_rich_transcript(rendered), once) << src;
    EXPECT_EQ(render_transcript(parse_rich_transcript(rendered)), rendered);
  }
}

TEST(Transcript, RenderRejectsAudio) {
  std::vector<PromptSegment> segs{AudioFrames{{TokenFrame{1, {2}}}}};
  EXPECT_THROW(render_transcript(segs), InvalidArgument);
}

}  // namespace
}  // namespace dualserve
