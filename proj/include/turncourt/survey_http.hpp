// Copyright 2026 The turncourt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <memory>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "turncourt/survey.hpp"

namespace turncourt::survey {

namespace detail {

inline void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  if (r.content_type == "application/json") {
    res.set_content(r.body.dump(), "application/json");
  } else {
    res.set_content(r.bytes, r.content_type);
  }
}

inline std::optional<nlohmann::json> parse_body(const httplib::Request& req, httplib::Response& res) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded()) {
    reply(res, error_response(400, "request body is not valid JSON"));
    return std::nullopt;
  }
  return j;
}

inline std::optional<std::string> session_of(const httplib::Request& req) {
  if (req.has_param("session_id")) return req.get_param_value("session_id");
  if (req.has_header("X-Session-Id")) return req.get_header_value("X-Session-Id");
  return std::nullopt;
}

}  // namespace detail

// Registers the survey API on `server`. If `static_dir` is set the UI bundle
// is served from "/".
inline void install_routes(httplib::Server& server, SurveyService& service, const std::string& static_dir = "") {
  server.Post("/session", [&service](const httplib::Request& req, httplib::Response& res) {
    if (auto body = detail::parse_body(req, res)) detail::reply(res, service.start_session(*body));
  });
  server.Get(R"(/clip/([A-Za-z0-9_.\-]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    const auto sid = detail::session_of(req);
    if (!sid) return detail::reply(res, error_response(401, "missing session_id"));
    detail::reply(res, service.get_clip(*sid, req.matches[1]));
  });
  server.Post("/annotation", [&service](const httplib::Request& req, httplib::Response& res) {
    if (auto body = detail::parse_body(req, res)) detail::reply(res, service.submit_annotation(*body));
  });
  server.Post("/demographics", [&service](const httplib::Request& req, httplib::Response& res) {
    if (auto body = detail::parse_body(req, res)) detail::reply(res, service.submit_demographics(*body));
  });
  server.Get("/progress", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::reply(res, service.progress(detail::session_of(req)));
  });
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
    warn("UI bundle directory " + static_dir + " not found; serving the API only");
  }
}

}  // namespace turncourt::survey
