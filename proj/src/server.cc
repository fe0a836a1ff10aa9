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

#include "dualserve/server.h"

#include <httplib.h>

#include "dualserve/stats.h"
#include "dualserve/wire.h"

namespace dualserve {

namespace {

constexpr const char* kNdjson = "application/x-ndjson";
constexpr const char* kJson = "application/json";

// Reads a stream up to its terminal event, translated to wire lines.
class WireReader {
 public:
  WireReader(std::shared_ptr<EventStream> stream, const CodebookConfig& cb) : stream_(std::move(stream)), cb_(cb) {}

  /// Next line (with newline); nullopt after the terminal line.
  std::optional<std::string> next() {
    if (finished_) return std::nullopt;
    for (;;) {
      auto e = stream_->next();
      if (!e) {
        finished_ = true;
        std::string why = stream_->error();
        return wire::encode_event(wire::error_event(why.empty() ? "stream closed" : why)) + "\n";
      }
      auto w = wire::from_engine_event(*e, cb_);
      if (!w) continue;
      if (w->terminal()) finished_ = true;
      return wire::encode_event(*w) + "\n";
    }
  }

 private:
  std::shared_ptr<EventStream> stream_;
  const CodebookConfig& cb_;
  bool finished_ = false;
};

}  // namespace

struct HttpServer::Impl {
  Impl(const AppConfig& c, EngineRunner& r) : cfg(c), runner(r) {}

  void install() {
    const auto threads = cfg.server.threads;
    svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    svr.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) { generate(req, res); });
    svr.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(stats_json(runner.stats(), cfg.engine.codebooks, invalid.load()).dump(), kJson);
    });
  }

  void generate(const httplib::Request& req, httplib::Response& res) {
    const auto& cb = cfg.engine.codebooks;
    wire::GenerateRequest g;
    Request engine_req;
    try {
      g = wire::parse_generate_request(req.body, cb);
      engine_req = wire::to_engine_request(g, cb);
    } catch (const wire::RequestError& e) {
      ++invalid;
      res.status = 400;
      res.set_content(wire::error_body(e.what(), e.field()), kJson);
      return;
    } catch (const std::exception& e) {
      ++invalid;
      res.status = 400;
      res.set_content(wire::error_body(e.what()), kJson);
      return;
    }

    RunnerSubmit sub = runner.submit(std::move(engine_req));
    switch (sub.status) {
      case RunnerSubmit::Status::kAccepted:
        break;
      case RunnerSubmit::Status::kBackpressure:
        res.status = 429;
        res.set_header("Retry-After", "1");
        res.set_content(wire::error_body(sub.error), kJson);
        return;
      case RunnerSubmit::Status::kRejected:
        res.status = 400;
        res.set_content(wire::error_body(sub.error), kJson);
        return;
      case RunnerSubmit::Status::kUnavailable:
        res.status = 500;
        res.set_content(wire::error_body(sub.error), kJson);
        return;
    }

    auto reader = std::make_shared<WireReader>(sub.stream, cb);
    res.set_header("X-Request-Id", std::to_string(sub.id));
    if (!g.stream) {
      std::string body;
      while (auto line = reader->next()) body += *line;
      res.set_content(body, kNdjson);
      return;
    }
    res.set_chunked_content_provider(kNdjson, [reader](std::size_t, httplib::DataSink& sink) {
      if (auto line = reader->next()) {
        if (!sink.write(line->data(), line->size())) return false;
        return true;
      }
      sink.done();
      return true;
    });
  }

  const AppConfig& cfg;
  EngineRunner& runner;
  httplib::Server svr;
  std::atomic<std::uint64_t> invalid{0};
};

HttpServer::HttpServer(const AppConfig& cfg, EngineRunner& runner) : impl_(std::make_unique<Impl>(cfg, runner)) {
  impl_->install();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->svr.bind_to_any_port(host);
  } else {
    port_ = impl_->svr.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port_;
}

void HttpServer::serve() { impl_->svr.listen_after_bind(); }

int HttpServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  thread_ = std::thread([this] { serve(); });
  impl_->svr.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  impl_->svr.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace dualserve
