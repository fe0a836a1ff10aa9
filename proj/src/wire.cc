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

#include "dualserve/wire.h"

#include "dualserve/transcript.h"

namespace dualserve::wire {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw RequestError(path, "expected an object");
  return j;
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw RequestError(path, "expected a string");
  return j.get<std::string>();
}

std::uint64_t get_uint(const json& j, const std::string& path, std::uint64_t max) {
  if (!j.is_number_integer()) throw RequestError(path, "expected a non-negative integer");
  if (j.is_number_unsigned()) {
    const auto v = j.get<std::uint64_t>();
    if (v > max) throw RequestError(path, "out of range");
    return v;
  }
  const auto v = j.get<std::int64_t>();
  if (v < 0 || static_cast<std::uint64_t>(v) > max) throw RequestError(path, "out of range");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

GenerateRequest parse_generate_request(std::string_view body, const CodebookConfig& cb) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw RequestError("", std::string("malformed JSON: ") + e.what());
  }
  require_object(j, "");
  GenerateRequest req;
  bool have_text = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "system") {
      require_object(value, "system");
      for (const auto& [skey, svalue] : value.items()) {
        if (skey == "text") {
          req.system_text = get_string(svalue, "system.text");
        } else if (skey == "reference_frames") {
          if (!svalue.is_array()) throw RequestError("system.reference_frames", "expected an array");
          for (std::size_t i = 0; i < svalue.size(); ++i) {
            const std::string row_path = "system.reference_frames[" + std::to_string(i) + "]";
            const json& row = svalue[i];
            if (!row.is_array()) throw RequestError(row_path, "expected an array");
            if (row.size() != cb.n_codebooks) {
              throw RequestError(row_path, "expected " + std::to_string(cb.n_codebooks) + " ids, got " +
                                               std::to_string(row.size()));
            }
            std::vector<std::int64_t> ids;
            for (std::size_t k = 0; k < row.size(); ++k) {
              const std::string id_path = row_path + "[" + std::to_string(k) + "]";
              const auto v = get_uint(row[k], id_path, UINT32_MAX);
              if (v >= cb.vocab_size(k)) {
                throw RequestError(id_path, "id " + std::to_string(v) + " out of range for codebook " +
                                                std::to_string(k) + " (vocab " +
                                                std::to_string(cb.vocab_size(k)) + ")");
              }
              ids.push_back(static_cast<std::int64_t>(v));
            }
            req.reference_frames.push_back(std::move(ids));
          }
        } else {
          throw RequestError("system." + skey, "unknown field");
        }
      }
    } else if (key == "text") {
      req.text = get_string(value, "text");
      have_text = true;
    } else if (key == "seed") {
      req.seed = get_uint(value, "seed", UINT64_MAX);
    } else if (key == "max_frames") {
      req.max_frames = static_cast<std::uint32_t>(get_uint(value, "max_frames", UINT32_MAX));
      if (req.max_frames < 1) throw RequestError("max_frames", "must be >= 1");
    } else if (key == "stream") {
      if (!value.is_boolean()) throw RequestError("stream", "expected a boolean");
      req.stream = value.get<bool>();
    } else {
      throw RequestError(key, "unknown field");
    }
  }
  if (!have_text) throw RequestError("text", "required");
  // Surface tag errors with their field before the request reaches the engine.
  try {
    parse_rich_transcript(req.system_text);
  } catch (const ParseError& e) {
    throw RequestError("system.text", e.what());
  }
  try {
    if (parse_rich_transcript(req.text).empty()) throw RequestError("text", "empty");
  } catch (const ParseError& e) {
    throw RequestError("text", e.what());
  }
  return req;
}

std::string encode_generate_request(const GenerateRequest& req) {
  ordered_json j;
  j["system"] = {{"text", req.system_text}, {"reference_frames", req.reference_frames}};
  j["text"] = req.text;
  j["seed"] = req.seed;
  j["max_frames"] = req.max_frames;
  j["stream"] = req.stream;
  return j.dump();
}

Request to_engine_request(const GenerateRequest& req, const CodebookConfig& cb) {
  Request r;
  if (!req.reference_frames.empty()) {
    AudioFrames audio;
    for (const auto& row : req.reference_frames) {
      TokenFrame f;
      f.semantic = static_cast<TokenId>(row.at(0));
      for (std::size_t k = 1; k < row.size(); ++k) f.acoustic.push_back(static_cast<TokenId>(row[k]));
      validate_frame(f, cb);
      audio.frames.push_back(std::move(f));
    }
    r.system.emplace_back(std::move(audio));
  }
  for (auto& seg : parse_rich_transcript(req.system_text)) r.system.push_back(std::move(seg));
  r.text = parse_rich_transcript(req.text);
  r.sampling.seed = req.seed;
  r.sampling.max_frames = req.max_frames;
  return r;
}

std::optional<StreamEvent> from_engine_event(const EngineEvent& e, const CodebookConfig& cb) {
  StreamEvent out;
  if (const auto* f = std::get_if<FrameOut>(&e)) {
    out.type = StreamEvent::Type::kFrame;
    out.step = f->step;
    out.ids.reserve(cb.n_codebooks);
    for (std::size_t k = 0; k < cb.n_codebooks; ++k) out.ids.push_back(f->frame.at(k));
    return out;
  }
  if (const auto* a = std::get_if<AudioChunk>(&e)) {
    out.type = StreamEvent::Type::kAudio;
    out.chunk = a->chunk.chunk_index;
    out.samples = a->chunk.sample_count;
    out.digest = a->chunk.digest;
    return out;
  }
  if (const auto* d = std::get_if<Done>(&e)) {
    if (!d->metrics.error.empty()) return error_event(d->metrics.error);
    out.type = StreamEvent::Type::kDone;
    if (auto t = d->metrics.ttfa()) out.metrics.ttfa_ms = to_ms(*t);
    out.metrics.rtf = d->metrics.rtf(cb);
    out.metrics.frames = d->metrics.frames;
    out.metrics.cache_hit_units = d->metrics.cache_hit_units;
    return out;
  }
  return std::nullopt;
}

StreamEvent error_event(std::string message) {
  StreamEvent e;
  e.type = StreamEvent::Type::kError;
  e.message = std::move(message);
  return e;
}

namespace {

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string encode_event(const StreamEvent& e) {
  ordered_json j;
  switch (e.type) {
    case StreamEvent::Type::kFrame:
      j["type"] = "frame";
      j["step"] = e.step;
      j["ids"] = e.ids;
      break;
    case StreamEvent::Type::kAudio:
      j["type"] = "audio";
      j["chunk"] = e.chunk;
      j["samples"] = e.samples;
      j["digest"] = to_hex(e.digest);
      break;
    case StreamEvent::Type::kDone:
      j["type"] = "done";
      j["metrics"] = ordered_json{{"ttfa_ms", opt_number(e.metrics.ttfa_ms)},
                                  {"rtf", opt_number(e.metrics.rtf)},
                                  {"frames", e.metrics.frames},
                                  {"cache_hit_units", e.metrics.cache_hit_units}};
      break;
    case StreamEvent::Type::kError:
      j["type"] = "error";
      j["message"] = e.message;
      break;
  }
  return j.dump();
}

StreamEvent decode_event(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw RequestError("", std::string("malformed event: ") + e.what());
  }
  require_object(j, "");
  if (!j.contains("type")) throw RequestError("type", "required");
  const std::string type = get_string(j.at("type"), "type");
  StreamEvent e;
  try {
    if (type == "frame") {
      e.type = StreamEvent::Type::kFrame;
      e.step = j.at("step").get<std::uint32_t>();
      e.ids = j.at("ids").get<std::vector<std::uint32_t>>();
    } else if (type == "audio") {
      e.type = StreamEvent::Type::kAudio;
      e.chunk = j.at("chunk").get<std::uint32_t>();
      e.samples = j.at("samples").get<std::uint64_t>();
      const std::string hex = j.at("digest").get<std::string>();
      std::size_t used = 0;
      e.digest = std::stoull(hex, &used, 16);
      if (used != hex.size() || hex.size() != 16) throw RequestError("digest", "expected 16 hex digits");
    } else if (type == "done") {
      e.type = StreamEvent::Type::kDone;
      const json& m = j.at("metrics");
      if (!m.at("ttfa_ms").is_null()) e.metrics.ttfa_ms = m.at("ttfa_ms").get<double>();
      if (!m.at("rtf").is_null()) e.metrics.rtf = m.at("rtf").get<double>();
      e.metrics.frames = m.at("frames").get<std::uint32_t>();
      e.metrics.cache_hit_units = m.at("cache_hit_units").get<std::size_t>();
    } else if (type == "error") {
      e.type = StreamEvent::Type::kError;
      e.message = j.at("message").get<std::string>();
    } else {
      throw RequestError("type", "unknown event type '" + type + "'");
    }
  } catch (const json::exception& ex) {
    throw RequestError("", std::string("malformed ") + type + " event: " + ex.what());
  } catch (const std::logic_error& ex) {
    if (dynamic_cast<const RequestError*>(&ex) != nullptr) throw;
    throw RequestError("digest", "expected 16 hex digits");
  }
  return e;
}

std::string error_body(const std::string& message, const std::string& field) {
  ordered_json j;
  j["error"] = message;
  if (!field.empty()) j["field"] = field;
  return j.dump();
}

}  // namespace dualserve::wire
