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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "turncourt/annotation.hpp"
#include "turncourt/audio.hpp"
#include "turncourt/classify.hpp"
#include "turncourt/corpus.hpp"
#include "turncourt/csv.hpp"
#include "turncourt/error.hpp"
#include "turncourt/features.hpp"
#include "turncourt/log.hpp"
#include "turncourt/stats.hpp"
#include "turncourt/survey.hpp"
#include "turncourt/util.hpp"

namespace turncourt::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct ArgumentSource {
  std::string id;
  std::string transcript;
  std::string timings;
  std::string audio;
};

struct SurveySettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
  survey::SurveyConfig service;
};

struct PipelineConfig {
  json effective;  // config after defaults and overrides, paths resolved
  std::vector<ArgumentSource> arguments;
  std::string speakers;
  std::string edits;
  std::string annotations;
  std::string demographics;
  std::string external_features;
  std::string output;
  corpus::ExtractOptions extract;
  audio::TrackConfig dsp;
  features::FeatureSet feature_set = features::FeatureSet::prosody_internal;
  bool include_metadata = false;
  bool gender_normalize_f0 = false;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::size_t folds = 3;
  unsigned threads = 0;
  std::vector<classify::Hyper> svc_grid = classify::default_svc_grid();
  std::vector<classify::Hyper> forest_grid = classify::default_forest_grid();
  SurveySettings survey;

  // FNV-1a over the effective config without the output directory, so the
  // same experiment written to two places carries the same hash.
  std::string hash() const {
    json j = effective;
    if (j.contains("paths")) j["paths"].erase("output");
    return hex64(fnv1a64(j.dump()));
  }

  std::string provenance() const { return "config_hash=" + hash() + " seed=" + std::to_string(seed); }

  fs::path out(const std::string& name) const { return fs::path(output) / name; }
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

inline std::string resolve(const fs::path& base, const json& j, const std::string& key) {
  if (!j.contains(key) || j[key].is_null()) return "";
  const fs::path p(j[key].get<std::string>());
  return (p.is_absolute() ? p : base / p).lexically_normal().string();
}

inline corpus::Millis millis(const json& j, const std::string& key, corpus::Millis fallback) {
  return j.contains(key) ? corpus::from_seconds(j[key].get<double>()) : fallback;
}

template <typename T>
std::vector<T> list_or(const json& j, const std::string& key, std::vector<T> fallback) {
  return j.contains(key) ? j[key].get<std::vector<T>>() : fallback;
}

}  // namespace detail

// JSON config; relative paths resolve against the config file's directory.
inline PipelineConfig parse_config(const json& raw, const fs::path& base_dir, std::optional<std::uint64_t> seed = {},
                                   std::optional<std::string> out = {}) {
  PipelineConfig c;
  try {
    detail::check_keys(raw, {"seed", "paths", "arguments", "windowing", "dsp", "features", "split", "train", "survey"},
                       "config");
    json eff = raw;
    const json paths = raw.value("paths", json::object());
    detail::check_keys(paths, {"speakers", "edits", "annotations", "demographics", "external_features", "output"},
                       "paths");
    c.speakers = detail::resolve(base_dir, paths, "speakers");
    c.edits = detail::resolve(base_dir, paths, "edits");
    c.annotations = detail::resolve(base_dir, paths, "annotations");
    c.demographics = detail::resolve(base_dir, paths, "demographics");
    c.external_features = detail::resolve(base_dir, paths, "external_features");
    c.output = out ? fs::absolute(*out).lexically_normal().string() : detail::resolve(base_dir, paths, "output");
    if (c.output.empty()) throw ConfigError("paths.output (or --out) is required");
    if (c.demographics.empty() && !c.annotations.empty())
      c.demographics = (fs::path(c.annotations).parent_path() / "demographics.jsonl").string();
    eff["paths"] = {{"speakers", c.speakers},       {"edits", c.edits},
                    {"annotations", c.annotations}, {"demographics", c.demographics},
                    {"external_features", c.external_features}, {"output", c.output}};

    eff["arguments"] = json::array();
    for (const auto& a : raw.value("arguments", json::array())) {
      detail::check_keys(a, {"id", "transcript", "timings", "audio"}, "arguments[]");
      ArgumentSource s{a.at("id").get<std::string>(), detail::resolve(base_dir, a, "transcript"),
                       detail::resolve(base_dir, a, "timings"), detail::resolve(base_dir, a, "audio")};
      if (s.id.empty() || s.id.find_first_not_of(
                              "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_.-") != std::string::npos)
        throw ConfigError("argument id '" + s.id + "' must be non-empty and use [A-Za-z0-9_.-]");
      eff["arguments"].push_back({{"id", s.id}, {"transcript", s.transcript}, {"timings", s.timings}, {"audio", s.audio}});
      c.arguments.push_back(std::move(s));
    }

    const json w = raw.value("windowing", json::object());
    detail::check_keys(w, {"before_first_end_s", "after_second_start_s", "max_edit_s", "max_length_s", "merge_gap_s",
                           "scripted_patterns"},
                       "windowing");
    auto& rules = c.extract.rules;
    rules.before_first_end = detail::millis(w, "before_first_end_s", rules.before_first_end);
    rules.after_second_start = detail::millis(w, "after_second_start_s", rules.after_second_start);
    rules.max_edit = detail::millis(w, "max_edit_s", rules.max_edit);
    rules.max_length = detail::millis(w, "max_length_s", rules.max_length);
    c.extract.merge_gap = detail::millis(w, "merge_gap_s", c.extract.merge_gap);
    c.extract.scripted_patterns = detail::list_or(w, "scripted_patterns", c.extract.scripted_patterns);
    corpus::compile_patterns(c.extract.scripted_patterns);

    const json d = raw.value("dsp", json::object());
    detail::check_keys(d, {"f0_min_hz", "f0_max_hz", "frame_len_s", "frame_hop_s", "voicing_threshold",
                           "octave_jump_ratio", "octave_guard_margin", "silence_floor_db"},
                       "dsp");
    c.dsp.f0_min_hz = d.value("f0_min_hz", c.dsp.f0_min_hz);
    c.dsp.f0_max_hz = d.value("f0_max_hz", c.dsp.f0_max_hz);
    c.dsp.frame_len_s = d.value("frame_len_s", c.dsp.frame_len_s);
    c.dsp.frame_hop_s = d.value("frame_hop_s", c.dsp.frame_hop_s);
    c.dsp.voicing_threshold = d.value("voicing_threshold", c.dsp.voicing_threshold);
    c.dsp.octave_jump_ratio = d.value("octave_jump_ratio", c.dsp.octave_jump_ratio);
    c.dsp.octave_guard_margin = d.value("octave_guard_margin", c.dsp.octave_guard_margin);
    c.dsp.silence_floor_db = d.value("silence_floor_db", c.dsp.silence_floor_db);
    if (!(c.dsp.f0_min_hz > 0 && c.dsp.f0_max_hz > c.dsp.f0_min_hz && c.dsp.frame_len_s > 0 && c.dsp.frame_hop_s > 0))
      throw ConfigError("dsp settings must satisfy 0 < f0_min_hz < f0_max_hz and positive frame sizes");

    const json f = raw.value("features", json::object());
    detail::check_keys(f, {"set", "include_metadata", "gender_normalize_f0"}, "features");
    c.feature_set = features::parse_feature_set(f.value("set", std::string("prosody_internal")));
    c.include_metadata = f.value("include_metadata", false);
    c.gender_normalize_f0 = f.value("gender_normalize_f0", false);

    const json s = raw.value("split", json::object());
    detail::check_keys(s, {"train_fraction"}, "split");
    c.train_fraction = s.value("train_fraction", 0.8);

    c.seed = seed ? *seed : raw.value("seed", std::uint64_t{0});
    eff["seed"] = c.seed;

    const json t = raw.value("train", json::object());
    detail::check_keys(t, {"folds", "threads", "svc_grid", "forest_grid"}, "train");
    c.folds = t.value("folds", std::size_t{3});
    c.threads = t.value("threads", 0u);
    if (t.contains("svc_grid")) {
      const auto& g = t["svc_grid"];
      detail::check_keys(g, {"C", "gamma", "tolerance"}, "train.svc_grid");
      c.svc_grid.clear();
      const double tol = g.value("tolerance", 1e-3);
      for (double cc : detail::list_or<double>(g, "C", {0.1, 1, 10, 100}))
        for (double gg : detail::list_or<double>(g, "gamma", {0.001, 0.01, 0.1, 1}))
          c.svc_grid.push_back({classify::ModelKind::svc_rbf, {cc, gg, tol}, {}});
    }
    if (t.contains("forest_grid")) {
      const auto& g = t["forest_grid"];
      detail::check_keys(g, {"n_trees", "max_depth", "min_leaf"}, "train.forest_grid");
      c.forest_grid.clear();
      const std::size_t min_leaf = g.value("min_leaf", std::size_t{1});
      std::vector<std::size_t> depths = {8, 16, 0};
      if (g.contains("max_depth")) {
        depths.clear();
        for (const auto& v : g["max_depth"]) depths.push_back(v.is_null() ? 0 : v.get<std::size_t>());
      }
      for (auto n : detail::list_or<std::size_t>(g, "n_trees", {100, 300}))
        for (auto dd : depths) c.forest_grid.push_back({classify::ModelKind::random_forest, {}, {n, dd, min_leaf}});
    }
    if (c.svc_grid.empty() || c.forest_grid.empty()) throw ConfigError("empty hyperparameter grid");

    const json v = raw.value("survey", json::object());
    detail::check_keys(v, {"host", "port", "session_cap", "per_segment", "ui_dir", "texts"}, "survey");
    c.survey.host = v.value("host", c.survey.host);
    c.survey.port = v.value("port", c.survey.port);
    c.survey.ui_dir = detail::resolve(base_dir, v, "ui_dir");
    auto& svc = c.survey.service;
    svc.session_cap = v.value("session_cap", svc.session_cap);
    svc.per_segment = v.value("per_segment", svc.per_segment);
    svc.store_path = c.annotations;
    svc.demographics_path = c.demographics;
    svc.clips_dir = (fs::path(c.output) / "clips").string();
    if (v.contains("texts")) {
      const auto& tx = v["texts"];
      detail::check_keys(tx, {"competitive", "cooperative", "prompt", "anchors", "examples"}, "survey.texts");
      svc.texts.competitive = tx.value("competitive", svc.texts.competitive);
      svc.texts.cooperative = tx.value("cooperative", svc.texts.cooperative);
      svc.texts.prompt = tx.value("prompt", svc.texts.prompt);
      svc.texts.anchors = detail::list_or(tx, "anchors", svc.texts.anchors);
      for (const auto& e : tx.value("examples", json::array()))
        svc.texts.examples.push_back({e.at("category").get<std::string>(), e.at("segment_id").get<std::string>()});
    }
    c.effective = std::move(eff);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path, std::optional<std::uint64_t> seed = {},
                                  std::optional<std::string> out = {}) {
  const auto text = read_file(path);
  auto raw = json::parse(text, nullptr, false);
  if (raw.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
  return parse_config(raw, fs::absolute(path).parent_path(), seed, out);
}

namespace detail {

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is not configured");
  if (!fs::is_regular_file(path)) throw IoError(what + " not found: " + path);
}

inline void prepare_output(const PipelineConfig& c) {
  fs::create_directories(c.output);
  json copy = c.effective;
  copy["paths"].erase("output");
  write_file(c.out("config.json").string(), copy.dump(2) + "\n");
}

inline std::vector<corpus::TurnChange> load_manifest(const PipelineConfig& c) {
  const auto path = c.out("manifest.jsonl").string();
  require_file(path, "manifest (run ingest first)");
  return corpus::parse_manifest(read_file(path));
}

inline corpus::SpeakerRegistry load_registry(const PipelineConfig& c) {
  require_file(c.speakers, "speaker registry");
  return corpus::parse_speaker_registry(read_file(c.speakers));
}

// Re-raises with the segment id in front, keeping the exit-code category.
[[noreturn]] inline void rethrow_for_segment(const std::string& id) {
  try {
    throw;
  } catch (const InputError& e) {
    throw InputError("segment " + id + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error("segment " + id + ": " + e.what());
  }
}

inline std::string labels_csv(std::span<const annotation::AggregatedLabel> labels, const std::string& comment) {
  std::string out = "# " + comment + "\nsegment_id,mean_score,n_annotations\n";
  for (const auto& l : labels) out += csv::join({l.segment_id, format_double(l.mean_score), std::to_string(l.n_annotations)});
  return out;
}

inline std::vector<annotation::AggregatedLabel> parse_labels_csv(std::string_view text) {
  const auto t = csv::parse(text);
  if (t.header != std::vector<std::string>{"segment_id", "mean_score", "n_annotations"})
    throw ParseError("labels.csv must have header segment_id,mean_score,n_annotations", 1);
  std::vector<annotation::AggregatedLabel> out;
  for (const auto& r : t.rows) {
    const auto score = parse_finite_double(r.fields[1]);
    const auto n = parse_finite_double(r.fields[2]);
    if (!score || *score < 0 || *score > 100 || !n || *n < 1)
      throw ParseError("bad label row for segment " + r.fields[0], r.line);
    out.push_back({r.fields[0], *score, static_cast<std::size_t>(*n), std::nullopt});
  }
  return out;
}

}  // namespace detail

// --- ingest ------------------------------------------------------------------

inline json cmd_ingest(const PipelineConfig& c) {
  const auto registry = detail::load_registry(c);
  if (c.arguments.empty()) throw ConfigError("no arguments configured");
  std::vector<corpus::TurnChange> changes;
  for (const auto& a : c.arguments) {
    detail::require_file(a.transcript, "transcript for " + a.id);
    detail::require_file(a.timings, "timings for " + a.id);
    detail::require_file(a.audio, "audio for " + a.id);
    try {
      const auto turns = corpus::resolve_speakers(corpus::parse_transcript(read_file(a.transcript)), registry);
      auto timings = corpus::parse_timings(read_file(a.timings));
      for (auto& r : timings) r.speaker_id = registry.resolve(r.speaker_id);
      const auto timed = corpus::align_timestamps(turns, timings);
      auto found = corpus::extract_turn_changes(timed, a.id, c.extract);
      changes.insert(changes.end(), found.begin(), found.end());
    } catch (const InputError& e) {
      throw InputError("argument " + a.id + ": " + e.what());
    }
  }
  if (!c.edits.empty()) {
    detail::require_file(c.edits, "review edits");
    changes = corpus::apply_review_edits(std::move(changes), corpus::parse_review_edits(read_file(c.edits)),
                                         c.extract.rules);
  }
  detail::prepare_output(c);
  fs::create_directories(c.out("clips"));
  std::map<std::string, std::string> audio_of;
  for (const auto& a : c.arguments) audio_of[a.id] = a.audio;
  std::map<std::string, std::size_t> status_counts;
  std::string current;
  audio::AudioBuffer buffer;
  for (const auto& tc : changes) {
    ++status_counts[std::string(corpus::to_string(tc.status))];
    if (tc.status != corpus::Status::kept) continue;
    try {
      if (tc.argument_id != current) {
        buffer = audio::load_audio(audio_of.at(tc.argument_id));
        current = tc.argument_id;
      }
      audio::save_wav16(c.out("clips/" + tc.id + ".wav").string(), audio::slice(buffer, tc.window));
    } catch (...) {
      detail::rethrow_for_segment(tc.id);
    }
  }
  write_file(c.out("manifest.jsonl").string(), corpus::serialize_manifest(changes));
  json meta = {{"config_hash", c.hash()}, {"seed", c.seed}, {"turn_changes", changes.size()}, {"status", status_counts}};
  write_file(c.out("manifest.meta.json").string(), meta.dump(2) + "\n");
  return meta;
}

// --- features ----------------------------------------------------------------

inline json cmd_features(const PipelineConfig& c) {
  const auto manifest = detail::load_manifest(c);
  const auto registry = detail::load_registry(c);
  std::vector<const corpus::TurnChange*> kept;
  for (const auto& tc : manifest)
    if (tc.status == corpus::Status::kept) kept.push_back(&tc);
  std::vector<features::FeatureVector> vectors;

  if (c.feature_set == features::FeatureSet::egemaps_imported) {
    detail::require_file(c.external_features, "external feature CSV");
    std::map<std::string, features::FeatureVector> by_id;
    for (auto& v : features::import_external_features(read_file(c.external_features))) by_id[v.segment_id] = v;
    for (const auto* tc : kept) {
      auto it = by_id.find(tc->id);
      if (it == by_id.end()) {
        warn("no external features for segment " + tc->id + "; skipped");
        continue;
      }
      vectors.push_back(it->second);
    }
  } else {
    vectors.resize(kept.size());
    parallel_for(
        kept.size(),
        [&](std::size_t i) {
          const auto& tc = *kept[i];
          try {
            const auto clip_path = c.out("clips/" + tc.id + ".wav").string();
            if (!fs::is_regular_file(clip_path)) throw IoError("clip file missing: " + clip_path);
            const auto clip = audio::load_audio(clip_path);
            auto [first, second] = features::speaker_tracks(clip, tc, c.dsp);
            vectors[i] = features::build_feature_vector(tc, first, second, registry, c.include_metadata);
          } catch (...) {
            detail::rethrow_for_segment(tc.id);
          }
        },
        c.threads);
  }
  if (c.gender_normalize_f0) {
    std::map<std::string, const corpus::TurnChange*> by_id;
    for (const auto* tc : kept) by_id[tc->id] = tc;
    std::vector<features::SpeakerPair> pairs;
    for (const auto& v : vectors) {
      const auto* tc = by_id.at(v.segment_id);
      pairs.push_back({registry.at(tc->first.turn.speaker_id), registry.at(tc->second.turn.speaker_id)});
    }
    vectors = features::gender_normalize_f0(vectors, pairs, true);
  }
  detail::prepare_output(c);
  write_file(c.out("features.csv").string(), features::serialize_feature_csv(vectors, c.provenance()));
  return {{"config_hash", c.hash()},
          {"seed", c.seed},
          {"segments", vectors.size()},
          {"feature_set", std::string(features::to_string(c.feature_set))},
          {"features_per_segment", vectors.empty() ? 0 : vectors.front().size()}};
}

// --- agreement ---------------------------------------------------------------

inline json cmd_agreement(const PipelineConfig& c) {
  detail::require_file(c.annotations, "annotation store");
  const auto records = annotation::AnnotationStore(c.annotations).load();
  if (records.empty()) throw InputError("annotation store " + c.annotations + " is empty");
  const auto rep = annotation::compute_agreement(records);
  const auto labels = annotation::aggregate_labels(records);
  detail::prepare_output(c);
  std::string out = "# " + c.provenance() + "\nmeasure,scale,weighting,value\n";
  auto row = [&](const char* m, const char* s, const char* w, double v) { out += csv::join({m, s, w, format_double(v)}); };
  row("spearman_rho", "raw", "none", rep.spearman_raw);
  row("spearman_rho", "five_bin", "none", rep.spearman_binned);
  row("weighted_kappa", "raw", "linear", rep.kappa_raw_linear);
  row("weighted_kappa", "raw", "quadratic", rep.kappa_raw_quadratic);
  row("weighted_kappa", "five_bin", "linear", rep.kappa_binned_linear);
  row("weighted_kappa", "five_bin", "quadratic", rep.kappa_binned_quadratic);
  write_file(c.out("agreement.csv").string(), out);
  write_file(c.out("labels.csv").string(), detail::labels_csv(labels, c.provenance()));
  return {{"config_hash", c.hash()},
          {"pairs", rep.n_pairs},
          {"labelled_segments", labels.size()},
          {"spearman_raw", rep.spearman_raw},
          {"spearman_five_bin", rep.spearman_binned},
          {"kappa_raw_linear", rep.kappa_raw_linear},
          {"kappa_raw_quadratic", rep.kappa_raw_quadratic},
          {"kappa_five_bin_linear", rep.kappa_binned_linear},
          {"kappa_five_bin_quadratic", rep.kappa_binned_quadratic}};
}

// --- stats -------------------------------------------------------------------

inline json cmd_stats(const PipelineConfig& c) {
  const auto label_path = c.out("labels.csv").string();
  detail::require_file(label_path, "labels.csv (run agreement first)");
  const auto labels = detail::parse_labels_csv(read_file(label_path));
  const auto manifest = detail::load_manifest(c);
  const auto registry = detail::load_registry(c);
  const auto segments = stats::join_labels(labels, manifest);
  std::vector<stats::SummaryRow> summary;
  std::vector<stats::TestResult> tests;
  std::vector<stats::HistogramRow> hist;
  json notices = json::array();
  for (const auto& key : stats::grouping_keys()) {
    const auto grouped = stats::group_scores(segments, registry, key);
    const auto rows = stats::group_summary(grouped);
    summary.insert(summary.end(), rows.begin(), rows.end());
    if (key.ends_with("first_speaker")) {
      const auto h = stats::score_distribution(grouped);
      hist.insert(hist.end(), h.begin(), h.end());
    }
    if (grouped.groups.size() < 2) {
      notices.push_back(key + ": fewer than 2 groups, tests skipped");
      continue;
    }
    try {
      tests.push_back(stats::kruskal_wallis(grouped));
      if (grouped.groups.size() == 2) tests.push_back(stats::wilcoxon_rank_sum(grouped));
    } catch (const InputError& e) {
      notices.push_back(key + ": " + e.what());
    }
  }
  for (const auto& n : notices) warn(n.get<std::string>());
  detail::prepare_output(c);
  write_file(c.out("group_summary.csv").string(), stats::summary_csv(summary, c.provenance()));
  write_file(c.out("tests.csv").string(), stats::tests_csv(tests, c.provenance()));
  write_file(c.out("first_speaker_distribution.csv").string(), stats::distribution_csv(hist, c.provenance()));
  json jt = json::array();
  for (const auto& t : tests) jt.push_back({{"test", t.test}, {"statistic", t.statistic}, {"p_value", t.p_value}, {"method", t.method}});
  return {{"config_hash", c.hash()}, {"segments", segments.size()}, {"tests", jt}, {"notices", notices}};
}

// --- train -------------------------------------------------------------------

struct TrainingData {
  std::vector<classify::LabeledExample> examples;
  classify::Classing classing;
};

inline TrainingData assemble_training_data(const PipelineConfig& c) {
  const auto feat_path = c.out("features.csv").string();
  const auto label_path = c.out("labels.csv").string();
  detail::require_file(feat_path, "features.csv (run features first)");
  detail::require_file(label_path, "labels.csv (run agreement first)");
  const auto vectors = features::import_external_features(read_file(feat_path));
  const auto labels = detail::parse_labels_csv(read_file(label_path));
  const auto manifest = detail::load_manifest(c);
  const auto registry = detail::load_registry(c);
  std::map<std::string, const corpus::TurnChange*> changes;
  for (const auto& tc : manifest) changes[tc.id] = &tc;
  std::map<std::string, double> score;
  for (const auto& l : labels) score[l.segment_id] = l.mean_score;

  TrainingData d;
  std::vector<double> scores;
  std::size_t unlabeled = 0;
  for (const auto& v : vectors) {
    auto s = score.find(v.segment_id);
    if (s == score.end()) {
      ++unlabeled;
      continue;
    }
    auto tc = changes.find(v.segment_id);
    if (tc == changes.end()) throw KeyError("features for segment " + v.segment_id + " not in manifest");
    const auto& first = registry.at(tc->second->first.turn.speaker_id);
    const auto& second = registry.at(tc->second->second.turn.speaker_id);
    classify::LabeledExample e;
    e.segment_id = v.segment_id;
    e.features = v;
    e.mean_score = s->second;
    e.stratum = classify::stratum_key(first.gender, second.gender, first.role, second.role);
    e.ends_with_dash = tc->second->first.turn.ends_with_dash;
    d.examples.push_back(std::move(e));
    scores.push_back(s->second);
  }
  if (unlabeled) warn(std::to_string(unlabeled) + " segment(s) with features but no label were left out");
  if (d.examples.size() < 3) throw TrainingError("need at least 3 labelled segments with features");
  d.classing = classify::quantile_classes(scores);
  for (std::size_t i = 0; i < d.examples.size(); ++i) d.examples[i].label = d.classing.classes[i];
  for (auto k : classify::kAllClasses)
    if (std::none_of(d.classing.classes.begin(), d.classing.classes.end(), [&](auto x) { return x == k; }))
      throw TrainingError(std::string("class '") + std::string(annotation::to_string(k)) +
                          "' is empty after quantile classing");
  return d;
}

// Forwards each distinct warning once; cross-validation repeats them per fold.
class OnceWarnings {
 public:
  OnceWarnings()
      : previous_(set_warning_handler([this](const std::string& m) {
          if (seen_.insert(m).second && previous_) previous_(m);
        })) {}
  ~OnceWarnings() { set_warning_handler(std::move(previous_)); }
  OnceWarnings(const OnceWarnings&) = delete;
  OnceWarnings& operator=(const OnceWarnings&) = delete;

 private:
  std::set<std::string> seen_;
  WarningHandler previous_;
};

inline json cmd_train(const PipelineConfig& c) {
  OnceWarnings once;
  const auto data = assemble_training_data(c);
  const auto& xs = data.examples;
  const auto split = classify::stratified_split(xs, {c.train_fraction, c.seed});
  const double gap = classify::gender_balance_gap(xs, split);
  if (gap > 2.0) warn("gender-pair shares differ by " + format_double(gap) + " pp between full set and a partition");

  classify::Dataset ds;
  ds.names = xs.front().features.names;
  for (const auto& e : xs) {
    if (e.features.names != ds.names) throw AssemblyError("segment " + e.segment_id + " has a different feature layout");
    ds.X.push_back(e.features.values);
    ds.y.push_back(e.label);
  }
  std::vector<std::vector<double>> test_x;
  std::vector<classify::LabelClass> test_y;
  std::vector<classify::LabeledExample> test_examples;
  for (auto i : split.test) {
    test_x.push_back(ds.X[i]);
    test_y.push_back(ds.y[i]);
    test_examples.push_back(xs[i]);
  }
  std::vector<std::vector<double>> train_x;
  std::vector<classify::LabelClass> train_y;
  for (auto i : split.train) {
    train_x.push_back(ds.X[i]);
    train_y.push_back(ds.y[i]);
  }
  const std::string feature_set(features::to_string(c.feature_set));

  std::vector<classify::EvalRow> rows;
  std::string grid_out = "# " + c.provenance() + "\nmodel,cell,hyperparameters,score\n";
  json summary = {{"config_hash", c.hash()},
                  {"seed", c.seed},
                  {"examples", xs.size()},
                  {"train", split.train.size()},
                  {"test", split.test.size()},
                  {"thresholds", {data.classing.q_low, data.classing.q_high}},
                  {"gender_balance_gap_pp", gap}};
  detail::prepare_output(c);
  const std::uint64_t grid_seed = mix_seed(c.seed, 1), fit_seed = mix_seed(c.seed, 2);
  for (const auto* grid : {&c.svc_grid, &c.forest_grid}) {
    const auto kind = grid->front().kind;
    const std::string name(classify::to_string(kind));
    const auto result = classify::grid_search(*grid, ds, split.train, c.folds, grid_seed, {}, c.threads);
    for (std::size_t k = 0; k < result.cells.size(); ++k)
      grid_out += csv::join({name, std::to_string(k), classify::to_json(result.cells[k].hyper).dump(),
                             format_double(result.cells[k].score)});
    const auto model = classify::train_model(result.best_hyper(), train_x, train_y, ds.names, fit_seed, c.threads);
    write_file(c.out("model_" + name + ".json").string(), classify::to_json(model, c.hash()).dump(1) + "\n");
    const auto pred = model.predict(test_x);
    const auto r = classify::evaluate(name, feature_set, pred, test_y);
    rows.insert(rows.end(), r.begin(), r.end());
    summary[name] = {{"hyperparameters", classify::to_json(result.best_hyper())},
                     {"cv_micro_f1", result.cells[result.best].score},
                     {"test_micro_f1", r.front().score}};
  }
  {
    const auto r = classify::evaluate("dash_baseline", "transcript", classify::dash_baseline(test_examples), test_y);
    rows.insert(rows.end(), r.begin(), r.end());
    summary["dash_baseline"] = r.front().score;
  }
  for (auto k : classify::kAllClasses) {
    const std::string name = "target_class_" + std::string(annotation::to_string(k));
    const auto r = classify::evaluate(name, "none", classify::target_class_baseline(k, test_y.size()), test_y);
    rows.insert(rows.end(), r.begin(), r.end());
    summary[name] = r.front().score;
  }
  std::string split_out = "# " + c.provenance() + "\nsegment_id,partition,class,stratum,mean_score\n";
  for (const auto* part : {&split.train, &split.test})
    for (auto i : *part)
      split_out += csv::join({xs[i].segment_id, part == &split.train ? "train" : "test",
                              std::string(annotation::to_string(xs[i].label)), xs[i].stratum,
                              format_double(xs[i].mean_score)});
  write_file(c.out("evaluation.csv").string(), classify::evaluation_csv(rows, c.provenance()));
  write_file(c.out("grid_search.csv").string(), grid_out);
  write_file(c.out("split.csv").string(), split_out);
  return summary;
}

}  // namespace turncourt::pipeline
