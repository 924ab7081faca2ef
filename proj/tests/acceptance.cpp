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

// Acceptance run: one PASS/FAIL (or SKIP) line per criterion. Exit status is
// nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "turncourt/cli.hpp"

namespace fs = std::filesystem;
using namespace turncourt;
using nlohmann::json;

namespace {

struct Outcome {
  enum Kind { pass, fail, skip } kind = pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// --- windowing ---------------------------------------------------------------

corpus::TurnChange change(double f0, double f1, double s0, double s1) {
  corpus::TurnChange tc;
  tc.id = "w";
  tc.first.turn.speaker_id = "a";
  tc.second.turn.speaker_id = "b";
  tc.first.start = corpus::from_seconds(f0);
  tc.first.end = corpus::from_seconds(f1);
  tc.second.start = corpus::from_seconds(s0);
  tc.second.end = corpus::from_seconds(s1);
  return tc;
}

Outcome windowing() {
  struct Case {
    const char* name;
    std::array<double, 4> turns;
    std::optional<std::pair<corpus::EditKind, double>> edit;
    double start, end;  // expected; NaN = edit rejected
  };
  using K = corpus::EditKind;
  const double rej = std::nan("");
  const std::vector<Case> cases = {
      {"default six seconds", {95, 100, 100, 110}, {}, 98, 104},
      {"short first turn", {99, 100.2, 100.2, 110}, {}, 99, 104.2},
      {"short second turn", {90, 100, 100, 102.5}, {}, 98, 102.5},
      {"both short", {99.5, 100, 100.5, 101}, {}, 99.5, 101},
      {"gap between turns", {10, 20, 21, 30}, {}, 18, 25},
      {"overlapping onset", {10, 20, 19, 30}, {}, 18, 23},
      {"first exactly two seconds", {8, 10, 10, 20}, {}, 8, 14},
      {"second exactly four seconds", {0, 10, 10, 14}, {}, 8, 14},
      {"millisecond arithmetic", {0.001, 3.333, 3.334, 9.999}, {}, 1.333, 7.334},
      {"extend end 0.5", {95, 100, 100, 110}, {{K::extend_end, 0.5}}, 98, 104.5},
      {"extend start 1.0", {95, 100, 100, 110}, {{K::extend_start, 1.0}}, 97, 104},
      {"trim start 1.0", {95, 100, 100, 110}, {{K::trim_start, 1.0}}, 99, 104},
      {"trim end 0.25", {95, 100, 100, 110}, {{K::trim_end, 0.25}}, 98, 103.75},
      {"extend end 1.5 rejected", {95, 100, 100, 110}, {{K::extend_end, 1.5}}, rej, rej},
      {"trim start 1.001 rejected", {95, 100, 100, 110}, {{K::trim_start, 1.001}}, rej, rej},
      {"trim to empty rejected", {99.5, 100, 100, 100.5}, {{K::trim_end, 1.0}}, rej, rej},
  };
  std::size_t ok = 0;
  std::string failures;
  for (const auto& c : cases) {
    auto tc = change(c.turns[0], c.turns[1], c.turns[2], c.turns[3]);
    bool good = false;
    try {
      tc.window = corpus::compute_segment_window(tc);
      if (c.edit) {
        corpus::ReviewEdit e{"w", c.edit->first, corpus::from_seconds(c.edit->second), ""};
        tc = corpus::apply_review_edits({tc}, {e}).front();
      }
      good = !std::isnan(c.start) &&
             std::abs(corpus::to_seconds(tc.window.start) - c.start) <= 1e-3 &&
             std::abs(corpus::to_seconds(tc.window.end) - c.end) <= 1e-3;
    } catch (const InputError&) {
      good = std::isnan(c.start);
    }
    ok += good;
    if (!good) failures += std::string(" [") + c.name + "]";
  }
  return {ok == cases.size() ? Outcome::pass : Outcome::fail,
          std::to_string(ok) + "/" + std::to_string(cases.size()) + " cases" + failures};
}

// --- DSP -----------------------------------------------------------------------

Outcome dsp_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2026);
  const int rates[] = {8000, 16000, 22050};
  std::size_t ok = 0;
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const int rate = rates[i % 3];
    const double f = rng.uniform(80, 400);
    audio::AudioBuffer buf;
    buf.sample_rate_hz = rate;
    for (int s = 0; s < rate; ++s) buf.samples.push_back(static_cast<float>(0.5 * std::sin(2 * M_PI * f * s / rate)));
    const auto track = audio::track_f0(buf);
    std::vector<double> v;
    for (const auto& fr : track.frames)
      if (fr.f0_hz) v.push_back(*fr.f0_hz);
    if (v.empty()) continue;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    const double err = std::abs(v[v.size() / 2] - f) / f;
    worst = std::max(worst, err);
    ok += err <= 0.02;
  }
  audio::AudioBuffer silence;
  silence.sample_rate_hz = 16000;
  silence.samples.assign(16000, 0.0f);
  const auto voiced = audio::track_f0(silence).voiced_count();
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << ok << "/50 tones within 2% (worst " << worst * 100 << "%), silence voiced frames " << voiced << ", " << secs
    << " s";
  return {ok == 50 && voiced == 0 && secs < 30 ? Outcome::pass : Outcome::fail, d.str()};
}

// --- agreement -----------------------------------------------------------------

Outcome agreement_oracles() {
  Rng rng(77);
  double worst = 0;
  for (int set = 0; set < 100; ++set) {
    const std::size_t n = 10 + rng.index(191);
    std::vector<std::pair<double, double>> raw;
    std::vector<std::pair<int, int>> ints, binned;
    for (std::size_t i = 0; i < n; ++i) {
      // Correlated scores with plenty of ties.
      const int a = static_cast<int>(rng.index(101));
      const int b = std::clamp(a + static_cast<int>(std::lround(30 * rng.normal())), 0, 100);
      raw.push_back({double(a), double(b)});
      ints.push_back({a, b});
      binned.push_back({annotation::bin_five(a), annotation::bin_five(b)});
    }
    worst = std::max(worst, std::abs(annotation::spearman_rho(raw) - oracle::spearman(raw)));
    std::vector<std::pair<double, double>> braw;
    for (auto [x, y] : binned) braw.push_back({double(x), double(y)});
    worst = std::max(worst, std::abs(annotation::spearman_rho(braw) - oracle::spearman(braw)));
    for (bool quad : {false, true}) {
      const auto w = quad ? annotation::Weighting::quadratic : annotation::Weighting::linear;
      worst = std::max(worst,
                       std::abs(annotation::weighted_cohen_kappa(ints, 101, w) - oracle::weighted_kappa(ints, 101, quad)));
      worst = std::max(worst, std::abs(annotation::weighted_cohen_kappa(binned, 5, w) -
                                       oracle::weighted_kappa(binned, 5, quad)));
    }
  }
  std::ostringstream d;
  d << "100 sets, max |diff| " << worst;
  return {worst <= 1e-9 ? Outcome::pass : Outcome::fail, d.str()};
}

// --- nonparametric ---------------------------------------------------------------

void compositions(std::size_t total, std::size_t k, std::vector<std::size_t>& cur,
                  const std::function<void(const std::vector<std::size_t>&)>& visit) {
  if (cur.size() + 1 == k) {
    if (total >= 1) {
      cur.push_back(total);
      visit(cur);
      cur.pop_back();
    }
    return;
  }
  for (std::size_t s = 1; s + (k - cur.size() - 1) <= total; ++s) {
    cur.push_back(s);
    compositions(total - s, k, cur, visit);
    cur.pop_back();
  }
}

Outcome nonparametric_oracles() {
  Rng rng(8);
  std::size_t checked = 0;
  double worst = 0;
  // Every group-size layout with total n in [3, 8] and k in {2, 3, 4}, each with
  // several value draws including heavy ties.
  for (std::size_t n = 3; n <= 8; ++n) {
    for (std::size_t k = 2; k <= std::min<std::size_t>(4, n); ++k) {
      std::vector<std::size_t> cur;
      compositions(n, k, cur, [&](const std::vector<std::size_t>& sizes) {
        for (int draw = 0; draw < 6; ++draw) {
          const std::size_t levels = draw < 2 ? 1000 : draw < 4 ? 4 : 2;
          std::vector<std::vector<double>> g(sizes.size());
          for (std::size_t i = 0; i < sizes.size(); ++i)
            for (std::size_t j = 0; j < sizes[i]; ++j) g[i].push_back(double(rng.index(levels)));
          try {
            const auto kw = stats::kruskal_wallis(g);
            worst = std::max(worst, std::abs(kw.p_value - oracle::kw_permutation_p(g)));
            ++checked;
          } catch (const DegenerateError&) {
          }
          if (g.size() == 2) {
            const auto w = stats::wilcoxon_rank_sum(g[0], g[1]);
            worst = std::max(worst, std::abs(w.p_value - oracle::ranksum_permutation_p(g[0], g[1])));
            ++checked;
          }
        }
      });
    }
  }
  const std::vector<std::vector<double>> sep = {{1, 2, 3}, {4, 5, 6}};
  const double h = stats::kruskal_wallis(sep).statistic;
  std::ostringstream d;
  d << checked << " samples, max |p - oracle| " << worst << ", H = " << h;
  return {worst <= 0.05 && std::abs(h - 3.857) <= 1e-3 ? Outcome::pass : Outcome::fail, d.str()};
}

// --- micro-F1 --------------------------------------------------------------------

Outcome micro_f1_identity() {
  Rng rng(1000);
  std::size_t exact = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(300);
    std::vector<classify::LabelClass> pred, gold;
    for (std::size_t i = 0; i < n; ++i) {
      pred.push_back(classify::kAllClasses[rng.index(3)]);
      gold.push_back(classify::kAllClasses[rng.index(3)]);
    }
    exact += classify::micro_f1(pred, gold) == oracle::accuracy(pred, gold);
  }
  std::vector<classify::LabelClass> gold;
  for (int i = 0; i < 300; ++i) gold.push_back(classify::kAllClasses[i % 3]);
  bool third = true;
  for (auto k : classify::kAllClasses)
    third = third && classify::micro_f1(classify::target_class_baseline(k, gold.size()), gold) == 1.0 / 3.0;
  return {exact == 1000 && third ? Outcome::pass : Outcome::fail,
          std::to_string(exact) + "/1000 exact, target-class baseline 1/3: " + (third ? "yes" : "no")};
}

// --- end to end and determinism ------------------------------------------------

struct EndToEnd {
  fs::path dir;
  std::string config;
  json train;
  double secs = 0;
  std::string error;
};

int run(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (err) *err = e.str();
  return code;
}

EndToEnd run_end_to_end() {
  EndToEnd r;
  r.dir = fs::temp_directory_path() / "turncourt_acceptance";
  fs::remove_all(r.dir);
  const auto t0 = Clock::now();
  const auto corpus = synth::write_corpus(r.dir);
  r.config = corpus.config.string();
  for (const char* cmd : {"ingest", "features", "agreement", "train"}) {
    std::ostringstream o, e;
    if (cli::run({cmd, "--config", r.config}, o, e) != 0) {
      r.error = std::string(cmd) + ": " + e.str();
      return r;
    }
    if (std::string(cmd) == "train") r.train = json::parse(o.str());
  }
  r.secs = seconds_since(t0);
  return r;
}

Outcome end_to_end(const EndToEnd& r) {
  if (!r.error.empty()) return {Outcome::fail, r.error};
  const auto cfg = pipeline::load_config(r.config);
  const auto manifest = pipeline::detail::load_manifest(cfg);
  const auto kept = std::count_if(manifest.begin(), manifest.end(),
                                  [](const auto& tc) { return tc.status == corpus::Status::kept; });
  const double svc = r.train["svc_rbf"]["test_micro_f1"];
  const double rf = r.train["random_forest"]["test_micro_f1"];
  const double dash = r.train["dash_baseline"];
  double target = 0;
  for (auto k : classify::kAllClasses)
    target = std::max(target, r.train["target_class_" + std::string(annotation::to_string(k))].get<double>());
  const double best_base = std::max(dash, target);
  std::ostringstream d;
  d << kept << " kept changes, test n " << r.train["test"] << ", svc " << svc << ", rf " << rf << ", dash " << dash
    << ", target " << target << ", " << r.secs << " s";
  const bool ok = kept == 300 && svc >= 0.8 && rf >= 0.8 && svc > best_base && rf > best_base && r.secs < 300;
  return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

Outcome determinism(const EndToEnd& r) {
  if (!r.error.empty()) return {Outcome::fail, "end-to-end run failed"};
  const fs::path out = r.dir / "out";
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), out));
  std::sort(files.begin(), files.end());
  std::map<fs::path, std::string> before;
  for (const auto& f : files) before[f] = read_file((out / f).string());
  for (const char* cmd : {"ingest", "features", "train"}) {
    std::string err;
    if (run({cmd, "--config", r.config}, &err) != 0) return {Outcome::fail, std::string(cmd) + ": " + err};
  }
  std::size_t same = 0;
  std::string diff;
  for (const auto& f : files) {
    if (read_file((out / f).string()) == before[f])
      ++same;
    else
      diff += " " + f.string();
  }
  return {same == files.size() ? Outcome::pass : Outcome::fail,
          std::to_string(same) + "/" + std::to_string(files.size()) + " artifacts byte-identical after rerun" + diff};
}

// --- public corpus (conditional) ---------------------------------------------

// TURNCOURT_PUBLIC_CONFIG names a pipeline config whose output directory
// already holds the manifest for the released corpus and whose annotation
// path points at the released annotation store.
Outcome public_corpus() {
  const char* path = std::getenv("TURNCOURT_PUBLIC_CONFIG");
  if (!path || !*path) return {Outcome::skip, "TURNCOURT_PUBLIC_CONFIG not set; released corpus not available"};
  try {
    const auto cfg = pipeline::load_config(path);
    const auto agree = pipeline::cmd_agreement(cfg);
    pipeline::cmd_stats(cfg);
    const double rho = agree["spearman_raw"];
    bool kappa_ok = false;
    for (const char* k : {"kappa_raw_linear", "kappa_raw_quadratic"})
      kappa_ok = kappa_ok || std::abs(agree[k].get<double>() - 0.553) <= 0.02;
    std::map<std::pair<std::string, std::string>, double> means;
    const auto table = csv::parse(read_file(cfg.out("group_summary.csv").string()));
    for (const auto& row : table.rows) means[{row.fields[0], row.fields[1]}] = std::stod(row.fields[2]);
    const std::vector<std::tuple<std::string, std::string, double>> expect = {
        {"gender_of_first_speaker", "female", 45.0},
        {"gender_of_first_speaker", "male", 49.7},
        {"role_of_first_speaker", "attorney", 36.3},
        {"role_of_first_speaker", "justice", 59.0}};
    bool means_ok = true;
    std::ostringstream d;
    d << "rho " << rho;
    for (const auto& [key, group, target] : expect) {
      const auto it = means.find({key, group});
      const double m = it == means.end() ? std::nan("") : it->second;
      means_ok = means_ok && std::abs(m - target) <= 0.1;
      d << ", " << group << " " << m;
    }
    const bool ok = std::abs(rho - 0.556) <= 0.02 && kappa_ok && means_ok;
    return {ok ? Outcome::pass : Outcome::fail, d.str()};
  } catch (const std::exception& e) {
    return {Outcome::fail, e.what()};
  }
}

}  // namespace

int main() {
  set_warning_handler([](const std::string&) {});
  int failures = 0;
  auto report = [&](const char* name, const Outcome& o) {
    const char* tag = o.kind == Outcome::pass ? "PASS" : o.kind == Outcome::fail ? "FAIL" : "SKIP";
    failures += o.kind == Outcome::fail;
    std::cout << tag << "  " << name << "  (" << o.detail << ")" << std::endl;
  };
  report("windowing rules", windowing());
  report("dsp oracle", dsp_oracle());
  report("agreement oracles", agreement_oracles());
  report("nonparametric oracles", nonparametric_oracles());
  report("micro-f1 identity", micro_f1_identity());
  const auto e2e = run_end_to_end();
  report("end-to-end synthetic corpus", end_to_end(e2e));
  report("determinism", determinism(e2e));
  report("public corpus agreement and group means", public_corpus());
  fs::remove_all(e2e.dir);
  return failures == 0 ? 0 : 1;
}
