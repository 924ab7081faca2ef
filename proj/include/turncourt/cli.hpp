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

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"
#include "turncourt/pipeline.hpp"
#include "turncourt/survey_http.hpp"

namespace turncourt::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kInternalError = 3 };

inline std::vector<std::string> kept_segment_ids(const pipeline::PipelineConfig& c) {
  std::vector<std::string> ids;
  for (const auto& tc : pipeline::detail::load_manifest(c))
    if (tc.status == corpus::Status::kept) ids.push_back(tc.id);
  return ids;
}

inline pipeline::json cmd_serve(const pipeline::PipelineConfig& c, std::ostream& out) {
  if (c.annotations.empty()) throw ConfigError("paths.annotations is required for serve");
  survey::SurveyService service(c.survey.service, kept_segment_ids(c));
  httplib::Server server;
  survey::install_routes(server, service, c.survey.ui_dir);
  out << "serving on http://" << c.survey.host << ":" << c.survey.port << std::endl;
  if (!server.listen(c.survey.host, c.survey.port))
    throw IoError("cannot listen on " + c.survey.host + ":" + std::to_string(c.survey.port));
  return {{"stopped", true}};
}

// argv-style entry point; returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"turncourt: turn-change analysis for courtroom audio"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  const std::vector<std::string> names = {"ingest", "features", "agreement", "stats", "train", "serve"};
  for (const auto& n : names) {
    auto* sub = app.add_subcommand(n);
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "override the output directory");
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = pipeline::load_config(config_path, seed, out_dir);
    pipeline::json result;
    if (cmd == "ingest") result = pipeline::cmd_ingest(cfg);
    else if (cmd == "features") result = pipeline::cmd_features(cfg);
    else if (cmd == "agreement") result = pipeline::cmd_agreement(cfg);
    else if (cmd == "stats") result = pipeline::cmd_stats(cfg);
    else if (cmd == "train") result = pipeline::cmd_train(cfg);
    else result = cmd_serve(cfg, out);
    out << result.dump(2) << "\n";
    return kOk;
  } catch (const InputError& e) {
    err << cmd << ": " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << cmd << ": internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace turncourt::cli
