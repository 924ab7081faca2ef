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

#include "turncourt/survey.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "turncourt/audio.hpp"
#include "turncourt/survey_http.hpp"

namespace turncourt::survey {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Fixture {
  fs::path dir;
  SurveyConfig cfg;
  std::vector<std::string> segments;

  explicit Fixture(const std::string& name, std::size_t n_segments = 30) {
    dir = fs::temp_directory_path() / ("turncourt_survey_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir / "clips");
    cfg.clips_dir = (dir / "clips").string();
    cfg.store_path = (dir / "annotations.jsonl").string();
    cfg.demographics_path = (dir / "demographics.jsonl").string();
    audio::AudioBuffer tone{std::vector<float>(800, 0.1f), 8000};
    for (std::size_t i = 0; i < n_segments; ++i) {
      segments.push_back("seg_" + std::to_string(i));
      audio::save_wav16((dir / "clips" / (segments.back() + ".wav")).string(), tone);
    }
  }
  ~Fixture() { fs::remove_all(dir); }

  std::size_t store_lines() const {
    std::ifstream in(cfg.store_path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
  }
};

TEST(Session, AttestationRequired) {
  Fixture f("attest");
  SurveyService svc(f.cfg, f.segments);
  EXPECT_EQ(svc.start_session({{"attestation", false}}).status, 403);
  EXPECT_EQ(svc.start_session(json::object()).status, 403);
  const auto r = svc.start_session({{"attestation", true}});
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body["first_task"].is_object());
  EXPECT_EQ(r.body["first_task"]["default_score"], 50);
  EXPECT_TRUE(r.body["training"]["categories"].contains("competitive"));
  EXPECT_TRUE(r.body["training"]["categories"].contains("cooperative"));
}

TEST(Session, FullyAnnotatedCorpusGivesNoTasks) {
  Fixture f("full", 1);
  SurveyService svc(f.cfg, f.segments);
  for (int i = 0; i < 2; ++i) {
    auto s = svc.start_session({{"attestation", true}});
    EXPECT_EQ(svc.submit_annotation({{"session_id", s.body["session_id"]}, {"segment_id", "seg_0"}, {"score", 40}}).status,
              200);
  }
  const auto r = svc.start_session({{"attestation", true}});
  EXPECT_EQ(r.status, 200);
  EXPECT_TRUE(r.body["first_task"].is_null());
  EXPECT_TRUE(r.body.contains("notice"));
}

TEST(Clip, AuthorizationAndMissingFile) {
  Fixture f("clip");
  SurveyService svc(f.cfg, f.segments);
  const auto s = svc.start_session({{"attestation", true}});
  const std::string sid = s.body["session_id"], seg = s.body["first_task"]["segment_id"];
  const auto ok = svc.get_clip(sid, seg);
  EXPECT_EQ(ok.status, 200);
  EXPECT_EQ(ok.content_type, "audio/wav");
  EXPECT_EQ(ok.bytes.substr(0, 4), "RIFF");
  EXPECT_EQ(svc.get_clip(sid, seg == "seg_5" ? "seg_6" : "seg_5").status, 403);
  EXPECT_EQ(svc.get_clip("nope", seg).status, 401);
  fs::remove(fs::path(f.cfg.clips_dir) / (seg + ".wav"));
  const auto missing = svc.get_clip(sid, seg);
  EXPECT_EQ(missing.status, 500);
  EXPECT_NE(missing.body["error"].get<std::string>().find(seg), std::string::npos);
}

TEST(Annotation, ValidationConflictAndCap) {
  Fixture f("submit", 40);
  SurveyService svc(f.cfg, f.segments, [] { return std::int64_t{7}; });
  const auto s = svc.start_session({{"attestation", true}});
  const std::string sid = s.body["session_id"];
  std::string seg = s.body["first_task"]["segment_id"];
  EXPECT_EQ(svc.submit_annotation({{"session_id", sid}, {"segment_id", seg}, {"score", 101}}).status, 422);
  EXPECT_EQ(svc.submit_annotation({{"session_id", sid}, {"segment_id", seg}, {"score", 5.5}}).status, 422);
  EXPECT_EQ(svc.submit_annotation({{"session_id", sid}, {"segment_id", "seg_39"}, {"score", 5}}).status, 403);
  EXPECT_EQ(svc.submit_annotation({{"session_id", sid}, {"segment_id", seg}}).status, 400);
  auto r = svc.submit_annotation({{"session_id", sid}, {"segment_id", seg}, {"score", 50}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(svc.store().load().at(0).score, 50);
  EXPECT_EQ(svc.store().load().at(0).timestamp_ms, 7);
  EXPECT_EQ(svc.submit_annotation({{"session_id", sid}, {"segment_id", seg}, {"score", 50}}).status, 409);
  for (int i = 2; i <= 26; ++i) {
    seg = r.body["next_task"]["segment_id"];
    r = svc.submit_annotation({{"session_id", sid}, {"segment_id", seg}, {"score", i}});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["done"], i == 26);
  }
  EXPECT_TRUE(r.body["next_task"].is_null());
  EXPECT_EQ(f.store_lines(), 26u);
  const auto p = svc.progress(sid);
  EXPECT_EQ(p.body["completed"], 26);
  EXPECT_EQ(p.body["remaining"], 0);
}

TEST(Demographics, StoredSeparatelyByToken) {
  Fixture f("demo");
  SurveyService svc(f.cfg, f.segments);
  const auto s = svc.start_session({{"attestation", true}, {"demographics", {{"profession", "attorney"}}}});
  ASSERT_EQ(s.status, 200);
  const std::string sid = s.body["session_id"];
  EXPECT_EQ(svc.submit_demographics({{"session_id", sid}, {"age_range", "30-39"}}).status, 200);
  EXPECT_EQ(svc.submit_demographics({{"session_id", sid}, {"nested", {{"a", 1}}}}).status, 422);
  EXPECT_EQ(svc.submit_demographics({{"session_id", "nope"}}).status, 401);
  const auto lines = annotation::AnnotationStore(f.cfg.demographics_path);
  std::ifstream in(f.cfg.demographics_path);
  std::vector<json> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["session_id"], sid);
  EXPECT_EQ(rows[1]["fields"]["age_range"], "30-39");
}

TEST(Persistence, KillAndRestartKeepsSubmittedRecords) {
  Fixture f("restart", 10);
  std::size_t submitted = 0;
  {
    SurveyService svc(f.cfg, f.segments);
    for (int a = 0; a < 3; ++a) {
      auto s = svc.start_session({{"attestation", true}});
      std::string sid = s.body["session_id"];
      json task = s.body["first_task"];
      for (int k = 0; k < 4 && task.is_object(); ++k) {
        auto r = svc.submit_annotation({{"session_id", sid}, {"segment_id", task["segment_id"]}, {"score", 10 * k}});
        ++submitted;
        task = r.body["next_task"];
      }
    }
  }
  // Simulate a crash in the middle of an append.
  {
    std::ofstream out(f.cfg.store_path, std::ios::app);
    out << R"({"segment_id":"seg_9","annot)";
  }
  ScopedWarningCapture w;
  SurveyService again(f.cfg, f.segments);
  EXPECT_EQ(again.store().load().size(), submitted);
  EXPECT_TRUE(w.contains("incomplete final line"));
  std::size_t filled = 0;
  for (const auto& seg : f.segments) filled += again.assignment().assignees(seg).size();
  EXPECT_EQ(filled, submitted);
  EXPECT_EQ(again.progress(std::nullopt).body["completed"], submitted);
}

// --- HTTP surface ----------------------------------------------------------

struct HttpServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit HttpServer(SurveyService& svc) {
    install_routes(server, svc);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~HttpServer() {
    server.stop();
    thread.join();
  }
};

TEST(Http, RoutesAndStatusCodes) {
  Fixture f("http");
  SurveyService svc(f.cfg, f.segments);
  HttpServer srv(svc);
  httplib::Client cli("127.0.0.1", srv.port);
  auto r = cli.Post("/session", R"({"attestation":false})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 403);
  EXPECT_EQ(cli.Post("/session", "{not json", "application/json")->status, 400);
  r = cli.Post("/session", R"({"attestation":true})", "application/json");
  ASSERT_EQ(r->status, 200);
  const auto s = json::parse(r->body);
  const std::string sid = s["session_id"], seg = s["first_task"]["segment_id"];
  auto clip = cli.Get(s["first_task"]["clip_url"].get<std::string>());
  ASSERT_TRUE(clip);
  EXPECT_EQ(clip->status, 200);
  EXPECT_EQ(clip->get_header_value("Content-Type"), "audio/wav");
  EXPECT_EQ(cli.Get("/clip/" + seg)->status, 401);
  r = cli.Post("/annotation", json({{"session_id", sid}, {"segment_id", seg}, {"score", 50}}).dump(), "application/json");
  EXPECT_EQ(r->status, 200);
  r = cli.Post("/annotation", json({{"session_id", sid}, {"segment_id", seg}, {"score", 50}}).dump(), "application/json");
  EXPECT_EQ(r->status, 409);
  r = cli.Post("/demographics", json({{"session_id", sid}, {"role", "law student"}}).dump(), "application/json");
  EXPECT_EQ(r->status, 200);
  r = cli.Get("/progress?session_id=" + sid);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["completed"], 1);
  EXPECT_EQ(json::parse(r->body)["remaining"], 25);
}

TEST(Http, ConcurrentAnnotatorsRespectQuotas) {
  Fixture f("race", 20);
  SurveyService svc(f.cfg, f.segments);
  HttpServer srv(svc);
  std::vector<std::thread> clients;
  for (int a = 0; a < 10; ++a) {
    clients.emplace_back([&, a] {
      httplib::Client cli("127.0.0.1", srv.port);
      auto r = cli.Post("/session", R"({"attestation":true})", "application/json");
      if (!r || r->status != 200) return;
      auto body = json::parse(r->body);
      const std::string sid = body["session_id"];
      json task = body["first_task"];
      while (task.is_object()) {
        r = cli.Post("/annotation",
                     json({{"session_id", sid}, {"segment_id", task["segment_id"]}, {"score", a * 10}}).dump(),
                     "application/json");
        if (!r || r->status != 200) return;
        task = json::parse(r->body)["next_task"];
      }
    });
  }
  for (auto& c : clients) c.join();
  const auto records = svc.store().load();  // throws on duplicate pairs
  std::map<std::string, int> per_segment;
  for (const auto& rec : records) ++per_segment[rec.segment_id];
  for (const auto& [seg, n] : per_segment) EXPECT_LE(n, 2) << seg;
  EXPECT_EQ(records.size(), 40u);
  EXPECT_TRUE(svc.assignment().invariants_hold());
}

}  // namespace
}  // namespace turncourt::survey
