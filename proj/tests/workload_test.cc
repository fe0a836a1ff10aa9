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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "dualserve/client.h"
#include "dualserve/server.h"
#include "dualserve/workload.h"

namespace dualserve::bench {
namespace {

using nlohmann::json;

TEST(Zipf, PmfSumsToOneAndDecreases) {
  const ZipfSampler z(50, 1.1);
  double sum = 0.0;
  for (std::uint32_t k = 1; k <= 50; ++k) {
    sum += z.pmf(k);
    if (k > 1) {
      EXPECT_LT(z.pmf(k), z.pmf(k - 1));
    }
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // Independent evaluation of the normalizer.
  double h = 0.0;
  for (int k = 1; k <= 50; ++k) h += 1.0 / std::pow(k, 1.1);
  EXPECT_NEAR(z.pmf(3), std::pow(3.0, -1.1) / h, 1e-14);
}

TEST(Zipf, UniformAtZeroSkewAndEdges) {
  const ZipfSampler z(4, 0.0);
  EXPECT_EQ(z.sample(0.0), 1u);
  EXPECT_EQ(z.sample(0.24), 1u);
  EXPECT_EQ(z.sample(0.26), 2u);
  EXPECT_EQ(z.sample(0.999999), 4u);
  EXPECT_EQ(ZipfSampler(1, 2.0).sample(0.7), 1u);
  EXPECT_THROW(ZipfSampler(0, 1.0), InvalidArgument);
  EXPECT_THROW(ZipfSampler(3, -1.0), InvalidArgument);
}

TEST(Zipf, RankNonincreasingInSkewForFixedU) {
  for (double u = 0.0; u < 1.0; u += 0.01) {
    std::uint32_t prev = UINT32_MAX;
    for (double s : {0.0, 0.5, 1.0, 1.5, 2.5, 5.0}) {
      const auto r = ZipfSampler(100, s).sample(u);
      EXPECT_LE(r, prev);
      prev = r;
    }
  }
}

TEST(Workload, EmpiricalVoiceFrequenciesMatchZipf) {
  WorkloadSpec spec;
  spec.n_requests = 10000;
  spec.n_voices = 20;
  spec.voice_skew = 1.1;
  spec.ref_frames = 0;
  spec.style_words = 1;
  spec.text_len_min = spec.text_len_max = 1;
  CodebookConfig cb;
  const auto w = generate_workload(spec, cb);
  std::vector<double> counts(spec.n_voices, 0.0);
  for (const auto& r : w) counts.at(r.voice) += 1.0;
  const ZipfSampler z(spec.n_voices, spec.voice_skew);
  double chi2 = 0.0;
  for (std::uint32_t v = 0; v < spec.n_voices; ++v) {
    const double expected = z.pmf(v + 1) * spec.n_requests;
    chi2 += (counts[v] - expected) * (counts[v] - expected) / expected;
  }
  // Upper 0.1% point of chi-squared with 19 degrees of freedom.
  EXPECT_LT(chi2, 43.82);
}

TEST(Workload, DeterministicAndSingleVoiceShares) {
  WorkloadSpec spec;
  spec.n_requests = 30;
  spec.n_voices = 1;
  spec.ref_frames = 5;
  CodebookConfig cb;
  const auto a = generate_workload(spec, cb);
  const auto b = generate_workload(spec, cb);
  ASSERT_EQ(a.size(), 30u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(wire::encode_generate_request(a[i].request), wire::encode_generate_request(b[i].request));
    EXPECT_EQ(a[i].arrival, b[i].arrival);
    EXPECT_EQ(a[i].voice, 0u);
    EXPECT_EQ(a[i].request.reference_frames, a[0].request.reference_frames);
    EXPECT_EQ(a[i].request.system_text, a[0].request.system_text);
    if (i > 0) {
      EXPECT_GT(a[i].arrival, a[i - 1].arrival);
    }
    for (const auto& row : a[i].request.reference_frames) EXPECT_NE(row[0], cb.eos_semantic_id);
  }
}

TEST(Workload, HugeSkewDegeneratesToOneVoice) {
  WorkloadSpec spec;
  spec.n_requests = 500;
  spec.voice_skew = 200.0;
  CodebookConfig cb;
  for (const auto& r : generate_workload(spec, cb)) EXPECT_EQ(r.voice, 0u);
}

TEST(Workload, CommonRandomNumbersAcrossSkews) {
  WorkloadSpec lo, hi;
  hi.voice_skew = 2.0;
  CodebookConfig cb;
  const auto a = generate_workload(lo, cb);
  const auto b = generate_workload(hi, cb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].arrival, b[i].arrival);
    EXPECT_EQ(a[i].request.text, b[i].request.text);
    EXPECT_LE(b[i].voice, a[i].voice);
  }
}

TEST(Workload, LognormalTextLengths) {
  WorkloadSpec spec;
  spec.n_requests = 4000;
  spec.text_len_mu = 3.0;
  spec.text_len_sigma = 0.5;
  spec.text_len_max = 100000;
  spec.ref_frames = 0;
  CodebookConfig cb;
  double sum_log = 0.0;
  for (const auto& r : generate_workload(spec, cb)) sum_log += std::log(static_cast<double>(r.text_tokens));
  EXPECT_NEAR(sum_log / spec.n_requests, 3.0, 0.05);
}

TEST(Workload, SpecJsonRoundTripAndErrors) {
  WorkloadSpec s;
  s.arrival = ArrivalKind::kBurst;
  s.n_voices = 7;
  const auto back = spec_from_json(json::parse(spec_to_json(s).dump()));
  EXPECT_EQ(spec_to_json(back).dump(), spec_to_json(s).dump());
  EXPECT_THROW(spec_from_json(json::parse(R"({"version":2})")), InvalidArgument);
  EXPECT_THROW(spec_from_json(json::parse(R"({"n_requests":3})")), InvalidArgument);
  EXPECT_THROW(spec_from_json(json::parse(R"({"version":1,"n_voices":0})")), InvalidArgument);
  EXPECT_THROW(spec_from_json(json::parse(R"({"version":1,"rate_per_s":0})")), InvalidArgument);
  EXPECT_THROW(spec_from_json(json::parse(R"({"version":1,"arrival":"weekly"})")), InvalidArgument);
  EXPECT_THROW(spec_from_json(json::parse(R"({"version":1,"text_len":{"median":3}})")), InvalidArgument);
  EXPECT_THROW(spec_from_json(json::parse(R"({"version":1,"bogus":1})")), InvalidArgument);
}

TEST(Workload, ShippedSpecsParse) {
  for (const char* name : {"desk.json", "single_voice.json", "saturation.json"}) {
    EXPECT_NO_THROW(load_spec(std::string(DUALSERVE_SOURCE_DIR "/bench/specs/") + name)) << name;
  }
}

WorkloadSpec small_spec() {
  WorkloadSpec s;
  s.n_requests = 40;
  s.n_voices = 5;
  s.ref_frames = 20;
  s.rate_per_s = 5.0;
  return s;
}

TEST(Bench, InProcessReportIsDeterministic) {
  EngineConfig cfg;
  const auto a = run_in_process(small_spec(), cfg);
  const auto b = run_in_process(small_spec(), cfg);
  EXPECT_EQ(report_csv(a), report_csv(b));
  EXPECT_EQ(report_json(a).dump(), report_json(b).dump());
  EXPECT_EQ(a.completed, 40u);
  EXPECT_EQ(a.failed, 0u);
  EXPECT_EQ(a.hit_rate, a.engine_hit_rate);
  EXPECT_LE(*a.ttfa_ms.p50, *a.ttfa_ms.p90);
  EXPECT_LE(*a.ttfa_ms.p90, *a.ttfa_ms.p99);
  EXPECT_LE(*a.ttfa_ms.p99, *a.ttfa_ms.max);
  for (const auto& row : a.rows) EXPECT_GT(row.rtf.value(), 0.0);
}

TEST(Bench, SingleVoiceSequentialHitRate) {
  WorkloadSpec s;
  s.n_requests = 10;
  s.n_voices = 1;
  s.arrival = ArrivalKind::kSequential;
  s.ref_frames = 190;
  s.style_words = 0;
  s.identical_text = true;
  s.text_len_min = s.text_len_max = 10;
  const auto r = run_in_process(s, EngineConfig{});
  ASSERT_EQ(r.rows[0].prompt_units, 200u);
  EXPECT_EQ(r.rows[0].cache_hit_units, 0u);
  for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_EQ(r.rows[i].cache_hit_units, 200u);
  EXPECT_DOUBLE_EQ(*r.hit_rate, 0.9);
}

TEST(Bench, HitRateMonotoneInSkew) {
  auto base = small_spec();
  base.n_requests = 100;
  base.n_voices = 30;
  std::optional<double> prev;
  for (double s : {0.0, 0.6, 1.1, 1.8, 3.0}) {
    auto spec = base;
    spec.voice_skew = s;
    const auto r = run_in_process(spec, EngineConfig{});
    if (prev) {
      EXPECT_GE(*r.hit_rate, *prev) << "skew " << s;
    }
    prev = r.hit_rate;
  }
}

TEST(Bench, CsvShape) {
  const auto r = run_in_process(small_spec(), EngineConfig{});
  const std::string csv = report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "index,voice,arrival_ms,status,ttfa_ms,rtf,frames,prompt_units,cache_hit_units,text_tokens,error");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 41);
  const auto dir = std::filesystem::path(testing::TempDir()) / "bench_report_test";
  write_report(r, dir.string());
  EXPECT_TRUE(std::filesystem::exists(dir / "report.csv"));
  const auto j = json::parse(std::ifstream(dir / "report.json"));
  EXPECT_EQ(j["completed"], 40);
  std::filesystem::remove_all(dir);
}

TEST(Bench, RemoteRunMatchesInProcessContent) {
  AppConfig app;
  app.server.threads = 8;
  EngineRunner runner(app.engine, 100);
  HttpServer server(app, runner);
  const int port = server.start("127.0.0.1", 0);
  auto spec = small_spec();
  spec.n_requests = 12;
  spec.arrival = ArrivalKind::kSequential;
  const auto remote = run_remote(spec, "127.0.0.1:" + std::to_string(port), app.engine.codebooks, 4);
  const auto local = run_in_process(spec, app.engine);
  server.stop();
  runner.stop();
  ASSERT_EQ(remote.completed, 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(remote.rows[i].frames, local.rows[i].frames);
    EXPECT_EQ(remote.rows[i].cache_hit_units, local.rows[i].cache_hit_units);
    EXPECT_EQ(remote.rows[i].ttfa_ms, local.rows[i].ttfa_ms);
  }
}

TEST(Bench, TransportFailuresAreRecordedPerRow) {
  auto spec = small_spec();
  spec.n_requests = 3;
  // Nothing listens on port 1.
  const auto r = run_remote(spec, "127.0.0.1:1", CodebookConfig{}, 2, 0.0);
  ASSERT_EQ(r.rows.size(), 3u);
  for (const auto& row : r.rows) EXPECT_EQ(row.status, "transport");
  EXPECT_EQ(r.failed, 3u);
  EXPECT_FALSE(r.hit_rate.has_value());
}

}  // namespace
}  // namespace dualserve::bench
