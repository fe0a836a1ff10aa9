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

// HTTP front end: POST /v1/generate and GET /v1/stats over an EngineRunner.

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "dualserve/config.h"
#include "dualserve/runner.h"

namespace dualserve {

class HttpServer {
 public:
  HttpServer(const AppConfig& cfg, EngineRunner& runner);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks the caller.
  void serve();
  /// bind + serve on a background thread; returns once accepting connections.
  int start(const std::string& host, int port);
  void stop();

  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = -1;
  std::thread thread_;
};

}  // namespace dualserve
