// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include <string>
#include <vector>

#include "needle/collector.hpp"

namespace needle {

// Queries a JSON search endpoint: GET <base>?q=<query>&page=<n> answering
// {"results": [{"url": ..., "title": ..., "snippet": ...}, ...]}.
// Plain http only.
class HttpJsonConnector : public SearchConnector {
 public:
  explicit HttpJsonConnector(const std::string& base_url, int timeout_seconds = 10) : timeout_(timeout_seconds) {
    const std::string scheme = "http://";
    if (base_url.rfind(scheme, 0) != 0) throw Error("http connector: only http:// endpoints are supported");
    auto rest = base_url.substr(scheme.size());
    auto slash = rest.find('/');
    host_port_ = rest.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : rest.substr(slash);
    if (host_port_.empty()) throw Error("http connector: missing host in " + base_url);
  }

  std::vector<SearchResult> fetch(const std::string& query, std::size_t page_index) override {
    httplib::Client cli("http://" + host_port_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    httplib::Params params{{"q", query}, {"page", std::to_string(page_index)}};
    auto res = cli.Get(path_, params, httplib::Headers{});
    if (!res) throw Error("http connector: request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error("http connector: status " + std::to_string(res->status));
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.contains("results") || !body["results"].is_array())
      throw Error("http connector: malformed response");
    std::vector<SearchResult> out;
    for (const auto& r : body["results"]) {
      if (!r.is_object()) continue;
      out.push_back({r.value("url", ""), r.value("title", ""), r.value("snippet", "")});
    }
    return out;
  }

 private:
  std::string host_port_;
  std::string path_;
  int timeout_;
};

}  // namespace needle
