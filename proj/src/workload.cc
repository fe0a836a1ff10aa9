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

#include "dualserve/workload.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "dualserve/client.h"
#include "dualserve/stats.h"

namespace dualserve::bench {

using nlohmann::json;
using nlohmann::ordered_json;

void WorkloadSpec::validate() const {
  if (version != kSpecVersion) throw InvalidArgument("unsupported workload spec version " + std::to_string(version));
  if (n_requests < 1) throw InvalidArgument("n_requests must be >= 1");
  if (n_voices < 1) throw InvalidArgument("n_voices must be >= 1");
  if (!(voice_skew >= 0.0) || !std::isfinite(voice_skew)) throw InvalidArgument("voice_skew must be finite and >= 0");
  if (arrival == ArrivalKind::kPoisson && !(rate_per_s > 0.0 && std::isfinite(rate_per_s))) {
    throw InvalidArgument("rate_per_s must be > 0");
  }
  if (!std::isfinite(text_len_mu) || !(text_len_sigma >= 0.0) || !std::isfinite(text_len_sigma)) {
    throw InvalidArgument("text_len mu/sigma must be finite, sigma >= 0");
  }
  if (text_len_min < 1 || text_len_max < text_len_min) throw InvalidArgument("need 1 <= text_len_min <= text_len_max");
  if (max_frames < 1) throw InvalidArgument("max_frames must be >= 1");
}

namespace {

const char* arrival_name(ArrivalKind a) {
  switch (a) {
    case ArrivalKind::kPoisson:
      return "poisson";
    case ArrivalKind::kSequential:
      return "sequential";
    case ArrivalKind::kBurst:
      return "burst";
  }
  return "?";
}

}  // namespace

ordered_json spec_to_json(const WorkloadSpec& s) {
  ordered_json j;
  j["version"] = s.version;
  j["n_requests"] = s.n_requests;
  j["n_voices"] = s.n_voices;
  j["voice_skew"] = s.voice_skew;
  j["arrival"] = arrival_name(s.arrival);
  j["rate_per_s"] = s.rate_per_s;
  j["text_len"] = {{"mu", s.text_len_mu}, {"sigma", s.text_len_sigma}, {"min", s.text_len_min}, {"max", s.text_len_max}};
  j["identical_text"] = s.identical_text;
  j["ref_frames"] = s.ref_frames;
  j["style_words"] = s.style_words;
  j["max_frames"] = s.max_frames;
  j["seed"] = s.seed;
  return j;
}

WorkloadSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("workload spec: expected an object");
  WorkloadSpec s;
  auto field = [](const json& obj, const char* key, auto& out, const std::string& path) {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const json::exception&) {
      throw InvalidArgument("workload spec: " + path + key + ": wrong type");
    }
  };
  static const char* kKeys[] = {"version", "n_requests", "n_voices", "voice_skew", "arrival", "rate_per_s",
                                "text_len", "identical_text", "ref_frames", "style_words", "max_frames", "seed"};
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(std::begin(kKeys), std::end(kKeys), [&](const char* key) { return k == key; })) {
      throw InvalidArgument("workload spec: unknown key " + k);
    }
  }
  if (!j.contains("version")) throw InvalidArgument("workload spec: version is required");
  field(j, "version", s.version, "");
  field(j, "n_requests", s.n_requests, "");
  field(j, "n_voices", s.n_voices, "");
  field(j, "voice_skew", s.voice_skew, "");
  std::string arrival = arrival_name(s.arrival);
  field(j, "arrival", arrival, "");
  if (arrival == "poisson") {
    s.arrival = ArrivalKind::kPoisson;
  } else if (arrival == "sequential") {
    s.arrival = ArrivalKind::kSequential;
  } else if (arrival == "burst") {
    s.arrival = ArrivalKind::kBurst;
  } else {
    throw InvalidArgument("workload spec: unknown arrival '" + arrival + "'");
  }
  field(j, "rate_per_s", s.rate_per_s, "");
  if (j.contains("text_len")) {
    const json& t = j.at("text_len");
    if (!t.is_object()) throw InvalidArgument("workload spec: text_len must be an object");
    for (const auto& [k, v] : t.items()) {
      if (k != "mu" && k != "sigma" && k != "min" && k != "max") {
        throw InvalidArgument("workload spec: unknown key text_len." + k);
      }
    }
    field(t, "mu", s.text_len_mu, "text_len.");
    field(t, "sigma", s.text_len_sigma, "text_len.");
    field(t, "min", s.text_len_min, "text_len.");
    field(t, "max", s.text_len_max, "text_len.");
  }
  field(j, "identical_text", s.identical_text, "");
  field(j, "ref_frames", s.ref_frames, "");
  field(j, "style_words", s.style_words, "");
  field(j, "max_frames", s.max_frames, "");
  field(j, "seed", s.seed, "");
  s.validate();
  return s;
}

WorkloadSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open workload spec " + path);
  try {
    return spec_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

// Zipf ------------------------------------------------------------------------

ZipfSampler::ZipfSampler(std::uint32_t n, double s) {
  if (n < 1) throw InvalidArgument("Zipf support must be >= 1");
  if (!(s >= 0.0)) throw InvalidArgument("Zipf exponent must be >= 0");
  cdf_.resize(n);
  double acc = 0.0;
  for (std::uint32_t k = 1; k <= n; ++k) {
    acc += std::pow(static_cast<double>(k), -s);
    cdf_[k - 1] = acc;
  }
  for (auto& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::uint32_t ZipfSampler::sample(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = static_cast<std::uint32_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), cdf_.size() - 1));
  return idx + 1;
}

double ZipfSampler::pmf(std::uint32_t rank) const {
  if (rank < 1 || rank > cdf_.size()) return 0.0;
  return rank == 1 ? cdf_[0] : cdf_[rank - 1] - cdf_[rank - 2];
}

// Generation ----------------------------------------------------------------------

namespace {

enum Stream : std::uint64_t { kVoice = 1, kGap, kLenA, kLenB, kWord, kSeed, kRef, kStyle };

double uniform(std::uint64_t seed, std::uint64_t index, Stream stream, std::uint64_t j = 0) {
  return unit_interval(hash_combine(hash_combine(hash_combine(seed, stream), index), j));
}

std::uint32_t text_length(const WorkloadSpec& s, std::uint64_t index) {
  // Box-Muller over two hashed uniforms; 1 - u keeps the log argument positive.
  const double u1 = 1.0 - uniform(s.seed, index, kLenA);
  const double u2 = uniform(s.seed, index, kLenB);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  const double len = std::round(std::exp(s.text_len_mu + s.text_len_sigma * z));
  return static_cast<std::uint32_t>(std::clamp(len, static_cast<double>(s.text_len_min),
                                               static_cast<double>(s.text_len_max)));
}

std::string text_for(const WorkloadSpec& s, std::uint64_t index) {
  const std::uint32_t n = text_length(s, index);
  std::string out;
  for (std::uint32_t w = 0; w < n; ++w) {
    if (w > 0) out += ' ';
    const auto word = static_cast<std::uint32_t>(uniform(s.seed, index, kWord, w) * 4096.0);
    out += "w" + std::to_string(word);
  }
  return out;
}

std::vector<std::vector<std::int64_t>> reference_for(const WorkloadSpec& s, std::uint32_t voice,
                                                     const CodebookConfig& cb) {
  std::vector<std::vector<std::int64_t>> frames(s.ref_frames);
  for (std::uint32_t f = 0; f < s.ref_frames; ++f) {
    auto& row = frames[f];
    row.resize(cb.n_codebooks);
    for (std::size_t k = 0; k < cb.n_codebooks; ++k) {
      // The semantic codebook skips the end-of-speech id.
      const std::uint32_t vocab = k == 0 ? cb.semantic_vocab - 1 : cb.vocab_size(k);
      const std::uint64_t h = hash_combine(hash_combine(hash_combine(s.seed ^ kRef, voice), f), k);
      row[k] = static_cast<std::int64_t>(h % vocab);
      if (k == 0 && row[k] >= static_cast<std::int64_t>(cb.eos_semantic_id)) ++row[k];
    }
  }
  return frames;
}

std::string style_for(const WorkloadSpec& s, std::uint32_t voice) {
  std::string out;
  for (std::uint32_t w = 0; w < s.style_words; ++w) {
    if (w > 0) out += ' ';
    out += "voice" + std::to_string(voice) + "_s" + std::to_string(w);
  }
  return out;
}

}  // namespace

std::vector<TimedRequest> generate_workload(const WorkloadSpec& spec, const CodebookConfig& cb) {
  spec.validate();
  cb.validate();
  const ZipfSampler zipf(spec.n_voices, spec.voice_skew);
  std::unordered_map<std::uint32_t, std::vector<std::vector<std::int64_t>>> refs;
  std::vector<TimedRequest> out;
  out.reserve(spec.n_requests);
  double t_s = 0.0;
  const std::string shared_text = spec.identical_text ? text_for(spec, 0) : std::string();
  for (std::uint32_t i = 0; i < spec.n_requests; ++i) {
    TimedRequest tr;
    tr.index = i;
    tr.voice = zipf.sample(uniform(spec.seed, i, kVoice)) - 1;
    if (spec.arrival == ArrivalKind::kPoisson) {
      t_s += -std::log(1.0 - uniform(spec.seed, i, kGap)) / spec.rate_per_s;
      tr.arrival = Duration(static_cast<std::int64_t>(std::llround(t_s * 1e9)));
    }
    auto& ref = refs[tr.voice];
    if (ref.empty() && spec.ref_frames > 0) ref = reference_for(spec, tr.voice, cb);
    tr.request.reference_frames = ref;
    tr.request.system_text = style_for(spec, tr.voice);
    tr.request.text = spec.identical_text ? shared_text : text_for(spec, i);
    tr.request.seed = hash_combine(spec.seed ^ kSeed, i);
    tr.request.max_frames = spec.max_frames;
    const Request er = wire::to_engine_request(tr.request, cb);
    tr.prompt_units = count_units(er.system) + count_units(er.text);
    tr.text_tokens = count_text_tokens(er.text);
    out.push_back(std::move(tr));
  }
  return out;
}

// Running ---------------------------------------------------------------------------

namespace {

RequestRow base_row(const TimedRequest& tr) {
  RequestRow row;
  row.index = tr.index;
  row.voice = tr.voice;
  row.arrival_ms = to_ms(tr.arrival);
  row.prompt_units = tr.prompt_units;
  row.text_tokens = tr.text_tokens;
  return row;
}

}  // namespace

RunReport run_in_process(const WorkloadSpec& spec, const EngineConfig& cfg) {
  const auto& cb = cfg.codebooks;
  const auto workload = generate_workload(spec, cb);
  Engine engine(cfg);
  RunReport report;
  report.spec = spec;
  report.mode = "in-process";
  report.rows.reserve(workload.size());
  for (const auto& tr : workload) report.rows.push_back(base_row(tr));

  std::unordered_map<RequestId, std::uint32_t> index_of;
  std::size_t next = 0;
  auto record = [&](const std::vector<EngineEvent>& events) {
    for (const auto& e : events) {
      const auto* d = std::get_if<Done>(&e);
      if (d == nullptr) continue;
      RequestRow& row = report.rows[index_of.at(d->request)];
      const auto& m = d->metrics;
      row.arrival_ms = to_ms(m.arrival);
      row.frames = m.frames;
      row.cache_hit_units = m.cache_hit_units;
      if (!m.error.empty()) {
        row.status = "error";
        row.error = m.error;
        continue;
      }
      if (auto t = m.ttfa()) row.ttfa_ms = to_ms(*t);
      row.rtf = m.rtf(cb);
    }
  };
  auto submit = [&](const TimedRequest& tr) {
    Request r = wire::to_engine_request(tr.request, cb);
    if (spec.arrival != ArrivalKind::kSequential) r.arrival_time = std::max(tr.arrival, engine.now());
    const auto res = engine.submit(std::move(r));
    if (res.status == SubmitResult::Status::kBackpressure) return false;
    if (res.status == SubmitResult::Status::kRejected) {
      report.rows[tr.index].status = "rejected";
      report.rows[tr.index].error = res.error;
    } else {
      index_of.emplace(res.id, tr.index);
    }
    return true;
  };

  if (spec.arrival == ArrivalKind::kSequential) {
    for (const auto& tr : workload) {
      submit(tr);
      std::vector<EngineEvent> events;
      engine.drain(&events);
      record(events);
    }
  } else {
    while (next < workload.size() || !engine.idle()) {
      while (next < workload.size() && submit(workload[next])) ++next;
      record(engine.step());
    }
    engine.drain();
  }

  const auto m = engine.metrics();
  report.saturated_tokens_per_s = m.saturated_tokens_per_s(cb.n_codebooks);
  report.engine_hit_rate = m.hit_rate();
  summarize(report, cb.n_codebooks);
  // Makespan on the engine clock: first arrival to last completion.
  TimePoint first{0}, last{0};
  bool any = false;
  for (const auto& [id, rm] : m.completed) {
    if (!any || rm.arrival < first) first = rm.arrival;
    if (!any || rm.done > last) last = rm.done;
    any = true;
  }
  report.makespan_ms = any ? to_ms(last - first) : 0.0;
  report.tokens_per_s.reset();
  if (report.makespan_ms > 0) {
    report.tokens_per_s = static_cast<double>(report.frames * cb.n_codebooks) / (report.makespan_ms / 1e3);
  }
  return report;
}

RunReport run_remote(const WorkloadSpec& spec, const std::string& endpoint, const CodebookConfig& cb,
                     std::uint32_t concurrency, double time_scale) {
  if (concurrency < 1) throw InvalidArgument("concurrency must be >= 1");
  if (!(time_scale >= 0.0)) throw InvalidArgument("time_scale must be >= 0");
  const auto workload = generate_workload(spec, cb);
  const ApiClient client(endpoint);
  RunReport report;
  report.spec = spec;
  report.mode = "remote";
  report.rows.resize(workload.size());

  const auto start = std::chrono::steady_clock::now();
  auto run_one = [&](const TimedRequest& tr) {
    RequestRow row = base_row(tr);
    const auto res = client.generate(tr.request);
    if (res.status == 0) {
      row.status = "transport";
      row.error = res.error;
    } else if (res.status != 200) {
      row.status = res.status == 429 ? "backpressure" : "http_" + std::to_string(res.status);
      row.error = res.error;
    } else if (res.events.empty() || !res.events.back().terminal()) {
      row.status = "transport";
      row.error = res.error.empty() ? "stream ended without a terminal event" : res.error;
    } else if (res.events.back().type == wire::StreamEvent::Type::kError) {
      row.status = "error";
      row.error = res.events.back().message;
    } else {
      const auto& m = res.events.back().metrics;
      row.ttfa_ms = m.ttfa_ms;
      row.rtf = m.rtf;
      row.frames = m.frames;
      row.cache_hit_units = m.cache_hit_units;
    }
    return row;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= workload.size()) return;
      const auto& tr = workload[i];
      if (spec.arrival == ArrivalKind::kPoisson && time_scale > 0) {
        std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                  tr.arrival * time_scale));
      }
      report.rows[i] = run_one(tr);
    }
  };
  const std::uint32_t threads = spec.arrival == ArrivalKind::kSequential ? 1 : concurrency;
  std::vector<std::thread> pool;
  for (std::uint32_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  summarize(report, cb.n_codebooks);
  report.makespan_ms = wall_ms;
  if (wall_ms > 0) report.tokens_per_s = static_cast<double>(report.frames * cb.n_codebooks) / (wall_ms / 1e3);
  return report;
}

namespace {

Summary summarize_values(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.p50 = percentile(v, 0.50);
  s.p90 = percentile(v, 0.90);
  s.p99 = percentile(v, 0.99);
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

}  // namespace

void summarize(RunReport& report, std::size_t n_codebooks) {
  (void)n_codebooks;
  std::vector<double> ttfa, rtf;
  std::size_t hits = 0, prompt = 0;
  report.completed = report.failed = 0;
  report.frames = 0;
  for (const auto& row : report.rows) {
    if (!row.ok()) {
      ++report.failed;
      continue;
    }
    ++report.completed;
    report.frames += row.frames;
    hits += row.cache_hit_units;
    prompt += row.prompt_units;
    if (row.ttfa_ms) ttfa.push_back(*row.ttfa_ms);
    if (row.rtf) rtf.push_back(*row.rtf);
  }
  report.hit_rate.reset();
  if (prompt > 0) report.hit_rate = static_cast<double>(hits) / static_cast<double>(prompt);
  report.ttfa_ms = summarize_values(ttfa);
  report.rtf = summarize_values(rtf);
}

namespace {

std::string fixed(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Rounds to the CSV precision so both report files carry the same numbers.
ordered_json rounded(const std::optional<double>& v) {
  if (!v) return nullptr;
  return std::round(*v * 1e6) / 1e6;
}

ordered_json summary_json(const Summary& s) {
  return {{"p50", rounded(s.p50)}, {"p90", rounded(s.p90)}, {"p99", rounded(s.p99)},
          {"mean", rounded(s.mean)}, {"max", rounded(s.max)}};
}

}  // namespace

std::string report_csv(const RunReport& report) {
  std::string out =
      "index,voice,arrival_ms,status,ttfa_ms,rtf,frames,prompt_units,cache_hit_units,text_tokens,error\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.index) + ',' + std::to_string(r.voice) + ',' + fixed(r.arrival_ms) + ',' + r.status +
           ',' + fixed(r.ttfa_ms) + ',' + fixed(r.rtf) + ',' + std::to_string(r.frames) + ',' +
           std::to_string(r.prompt_units) + ',' + std::to_string(r.cache_hit_units) + ',' +
           std::to_string(r.text_tokens) + ',' + csv_escape(r.error) + '\n';
  }
  return out;
}

ordered_json report_json(const RunReport& report) {
  ordered_json j;
  j["spec"] = spec_to_json(report.spec);
  j["mode"] = report.mode;
  j["requests"] = report.rows.size();
  j["completed"] = report.completed;
  j["failed"] = report.failed;
  j["hit_rate"] = rounded(report.hit_rate);
  j["engine_hit_rate"] = rounded(report.engine_hit_rate);
  j["ttfa_ms"] = summary_json(report.ttfa_ms);
  j["rtf"] = summary_json(report.rtf);
  j["frames"] = report.frames;
  j["makespan_ms"] = rounded(report.makespan_ms);
  j["tokens_per_s"] = rounded(report.tokens_per_s);
  j["saturated_tokens_per_s"] = rounded(report.saturated_tokens_per_s);
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json row;
    row["index"] = r.index;
    row["voice"] = r.voice;
    row["arrival_ms"] = rounded(r.arrival_ms);
    row["status"] = r.status;
    row["ttfa_ms"] = rounded(r.ttfa_ms);
    row["rtf"] = rounded(r.rtf);
    row["frames"] = r.frames;
    row["prompt_units"] = r.prompt_units;
    row["cache_hit_units"] = r.cache_hit_units;
    row["text_tokens"] = r.text_tokens;
    if (!r.error.empty()) row["error"] = r.error;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

void write_report(const RunReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);
  {
    std::ofstream out(base / "report.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (base / "report.csv").string());
    out << report_csv(report);
  }
  {
    std::ofstream out(base / "report.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (base / "report.json").string());
    out << report_json(report).dump(2) << '\n';
  }
}

}  // namespace dualserve::bench
