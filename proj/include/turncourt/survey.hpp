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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "turncourt/annotation.hpp"
#include "turncourt/error.hpp"
#include "turncourt/log.hpp"
#include "turncourt/util.hpp"

namespace turncourt::survey {

struct ExampleClip {
  std::string category;
  std::string segment_id;
};

// Text shown during training. Deployments supply their own wording.
struct SurveyTexts {
  std::string competitive =
      "The next speaker takes the floor from the current one: interrupting, talking over them, "
      "or cutting their point short.";
  std::string cooperative =
      "The next speaker takes the floor smoothly: after the current speaker has finished, or "
      "while supporting and building on what was said.";
  std::string prompt = "Where on the scale from competitive to cooperative does this exchange fall?";
  std::vector<std::string> anchors = {"Competitive", "Slightly competitive", "Neutral", "Slightly cooperative",
                                      "Cooperative"};
  std::vector<ExampleClip> examples;
};

struct SurveyConfig {
  std::string clips_dir;
  std::string store_path;
  std::string demographics_path;
  std::size_t per_segment = annotation::kAnnotationsPerSegment;
  std::size_t session_cap = annotation::kSessionCap;
  SurveyTexts texts;
};

// Transport-neutral reply; the HTTP layer maps it one to one.
struct Response {
  int status = 200;
  nlohmann::json body;
  std::string bytes;  // raw payload for clip downloads
  std::string content_type = "application/json";
};

inline Response error_response(int status, const std::string& message) {
  return {status, {{"error", message}}, {}, "application/json"};
}

class SurveyService {
 public:
  using Clock = std::function<std::int64_t()>;

  SurveyService(SurveyConfig cfg, std::vector<std::string> segment_ids, Clock clock = {})
      : cfg_(std::move(cfg)),
        store_(cfg_.store_path),
        assignment_(std::move(segment_ids), cfg_.per_segment, cfg_.session_cap),
        clock_(clock ? std::move(clock) : default_clock()),
        token_rng_(std::random_device{}()) {
    for (const auto& r : store_.load()) assignment_.record_existing(r.segment_id, r.annotator_id);
  }

  // POST /session {attestation: bool, demographics?: {...}}
  Response start_session(const nlohmann::json& body) {
    if (!body.is_object() || !body.value("attestation", false)) {
      return error_response(403, "participation requires attesting to legal-professional eligibility");
    }
    std::string sid;
    {
      std::lock_guard lock(mu_);
      do {
        sid = hex64(token_rng_()) + hex64(token_rng_());
      } while (sessions_.count(sid));
      sessions_[sid];
    }
    assignment_.register_annotator(sid);
    if (body.contains("demographics")) {
      auto r = store_demographics(sid, body["demographics"]);
      if (r.status != 200) {
        std::lock_guard lock(mu_);
        sessions_.erase(sid);
        return r;
      }
    }
    const auto first = advance(sid);
    nlohmann::json out = {{"session_id", sid}, {"training", training_payload(sid)}, {"first_task", task_json(sid, first)}};
    if (!first) out["notice"] = "all segments are fully annotated; thank you";
    return {200, out, {}, "application/json"};
  }

  // GET /clip/{segment_id}?session_id=...
  Response get_clip(const std::string& session_id, const std::string& segment_id) const {
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(session_id);
      if (it == sessions_.end()) return error_response(401, "unknown session");
      const auto& s = it->second;
      const bool example = std::any_of(cfg_.texts.examples.begin(), cfg_.texts.examples.end(),
                                       [&](const ExampleClip& e) { return e.segment_id == segment_id; });
      if (!example && s.answered.count(segment_id) == 0 && s.pending != segment_id) {
        return error_response(403, "segment " + segment_id + " is not assigned to this session");
      }
    }
    const auto path = std::filesystem::path(cfg_.clips_dir) / (segment_id + ".wav");
    std::string bytes;
    try {
      bytes = read_file(path.string());
    } catch (const IoError&) {
      return error_response(500, "clip for segment " + segment_id + " is unavailable");
    }
    return {200, nullptr, std::move(bytes), "audio/wav"};
  }

  // POST /annotation {session_id, segment_id, score}
  Response submit_annotation(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("session_id") || !body.contains("segment_id") || !body.contains("score") ||
        !body["session_id"].is_string() || !body["segment_id"].is_string()) {
      return error_response(400, "expected {session_id, segment_id, score}");
    }
    const std::string sid = body["session_id"], seg = body["segment_id"];
    const auto& score = body["score"];
    std::lock_guard submit_lock(submit_mu_);
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(sid);
      if (it == sessions_.end()) return error_response(401, "unknown session");
      if (it->second.answered.count(seg)) return error_response(409, "segment " + seg + " already answered");
      if (it->second.pending != seg) return error_response(403, "segment " + seg + " is not the current task");
    }
    if (!score.is_number_integer() || score.get<std::int64_t>() < annotation::kMinScore ||
        score.get<std::int64_t>() > annotation::kMaxScore) {
      return error_response(422, "score must be an integer in [0, 100]");
    }
    annotation::AnnotationRecord rec{seg, sid, score.get<int>(), clock_(), {}};
    try {
      store_.append(rec);
    } catch (const IoError& e) {
      return error_response(500, e.what());
    }
    std::size_t completed;
    {
      std::lock_guard lock(mu_);
      auto& s = sessions_.at(sid);
      s.answered.insert(seg);
      s.pending.reset();
      completed = s.answered.size();
    }
    const auto next = advance(sid);
    nlohmann::json out = {{"completed", completed}, {"done", !next.has_value()}, {"next_task", task_json(sid, next)}};
    return {200, out, {}, "application/json"};
  }

  // POST /demographics {session_id, fields...}
  Response submit_demographics(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("session_id") || !body["session_id"].is_string()) {
      return error_response(400, "expected {session_id, ...}");
    }
    const std::string sid = body["session_id"];
    {
      std::lock_guard lock(mu_);
      if (!sessions_.count(sid)) return error_response(401, "unknown session");
    }
    nlohmann::json fields = body;
    fields.erase("session_id");
    return store_demographics(sid, fields);
  }

  // GET /progress[?session_id=...]
  Response progress(const std::optional<std::string>& session_id) const {
    if (session_id) {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(*session_id);
      if (it == sessions_.end()) return error_response(401, "unknown session");
      const std::size_t done = it->second.answered.size();
      return {200, {{"completed", done}, {"remaining", cfg_.session_cap - done}}, {}, "application/json"};
    }
    std::size_t filled = 0;
    for (const auto& seg : assignment_.segments()) filled += assignment_.assignees(seg).size();
    const std::size_t total = assignment_.segments().size() * cfg_.per_segment;
    return {200, {{"completed", filled}, {"remaining", total - filled}}, {}, "application/json"};
  }

  const annotation::AssignmentState& assignment() const { return assignment_; }
  const annotation::AnnotationStore& store() const { return store_; }
  const SurveyConfig& config() const { return cfg_; }

 private:
  struct Session {
    std::optional<std::string> pending;
    std::set<std::string> answered;
  };

  static Clock default_clock() {
    return [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }

  std::optional<std::string> advance(const std::string& sid) {
    auto next = assignment_.assign_next(sid);
    std::lock_guard lock(mu_);
    sessions_.at(sid).pending = next;
    return next;
  }

  static std::string clip_url(const std::string& sid, const std::string& seg) {
    return "/clip/" + seg + "?session_id=" + sid;
  }

  nlohmann::json task_json(const std::string& sid, const std::optional<std::string>& seg) const {
    if (!seg) return nullptr;
    return {{"segment_id", *seg}, {"clip_url", clip_url(sid, *seg)}, {"default_score", annotation::kNeutralScore}};
  }

  nlohmann::json training_payload(const std::string& sid) const {
    nlohmann::json examples = nlohmann::json::array();
    for (const auto& e : cfg_.texts.examples)
      examples.push_back({{"category", e.category}, {"segment_id", e.segment_id}, {"clip_url", clip_url(sid, e.segment_id)}});
    return {{"categories", {{"competitive", cfg_.texts.competitive}, {"cooperative", cfg_.texts.cooperative}}},
            {"prompt", cfg_.texts.prompt},
            {"anchors", cfg_.texts.anchors},
            {"score_range", {annotation::kMinScore, annotation::kMaxScore}},
            {"session_cap", cfg_.session_cap},
            {"examples", examples}};
  }

  Response store_demographics(const std::string& sid, const nlohmann::json& fields) {
    if (!fields.is_object()) return error_response(400, "demographics must be an object");
    for (const auto& [k, v] : fields.items())
      if (!v.is_primitive()) return error_response(422, "demographic field '" + k + "' must be a scalar");
    if (cfg_.demographics_path.empty()) return error_response(500, "demographics storage is not configured");
    nlohmann::json line = {{"session_id", sid}, {"fields", fields}};
    try {
      annotation::AnnotationStore(cfg_.demographics_path).append_line(line.dump());
    } catch (const IoError& e) {
      return error_response(500, e.what());
    }
    return {200, {{"stored", true}}, {}, "application/json"};
  }

  SurveyConfig cfg_;
  annotation::AnnotationStore store_;
  annotation::AssignmentState assignment_;
  Clock clock_;
  mutable std::mutex mu_;
  std::mutex submit_mu_;
  std::mt19937_64 token_rng_;
  std::map<std::string, Session> sessions_;
};

}  // namespace turncourt::survey
