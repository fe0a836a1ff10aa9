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

#include "dualserve/client.h"

#include <httplib.h>

#include "dualserve/config.h"

namespace dualserve {

ApiClient::ApiClient(const std::string& endpoint) {
  std::string_view ep = endpoint;
  if (ep.substr(0, 7) == "http://") ep.remove_prefix(7);
  while (!ep.empty() && ep.back() == '/') ep.remove_suffix(1);
  auto [host, port] = parse_listen(ep);
  host_ = host;
  port_ = port;
}

RemoteResponse ApiClient::generate(const wire::GenerateRequest& req) const {
  return generate_raw(wire::encode_generate_request(req));
}

RemoteResponse ApiClient::generate_raw(const std::string& body) const {
  RemoteResponse out;
  httplib::Client cli(host_, port_);
  cli.set_read_timeout(600, 0);
  cli.set_write_timeout(60, 0);
  std::string buffer;
  std::string error_text;
  auto split = [&](bool final) {
    std::size_t pos;
    while ((pos = buffer.find('\n')) != std::string::npos) {
      out.lines.push_back(buffer.substr(0, pos));
      buffer.erase(0, pos + 1);
    }
    if (final && !buffer.empty()) {
      out.lines.push_back(buffer);
      buffer.clear();
    }
  };
  httplib::Request req;
  req.method = "POST";
  req.path = "/v1/generate";
  req.body = body;
  req.set_header("Content-Type", "application/json");
  int status = 0;
  req.response_handler = [&](const httplib::Response& r) {
    status = r.status;
    return true;
  };
  req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
    if (status == 200) {
      buffer.append(data, len);
      split(false);
    } else {
      error_text.append(data, len);
    }
    return true;
  };
  httplib::Response res;
  httplib::Error err = httplib::Error::Success;
  if (!cli.send(req, res, err)) {
    out.status = status;
    out.error = "transport: " + httplib::to_string(err);
    split(true);
  } else {
    out.status = res.status;
    split(true);
    if (out.status != 200) out.error = error_text.empty() ? res.body : error_text;
  }
  for (const auto& line : out.lines) {
    try {
      out.events.push_back(wire::decode_event(line));
    } catch (const std::exception& e) {
      if (out.error.empty()) out.error = e.what();
    }
  }
  return out;
}

std::string ApiClient::stats() const {
  httplib::Client cli(host_, port_);
  auto res = cli.Get("/v1/stats");
  if (!res) throw std::runtime_error("GET /v1/stats failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw std::runtime_error("GET /v1/stats returned " + std::to_string(res->status));
  return res->body;
}

}  // namespace dualserve
