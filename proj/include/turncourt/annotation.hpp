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

// Annotation records and store, label aggregation, five-bin coding,
// inter-annotator agreement, and annotator-to-segment assignment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "turncourt/error.hpp"
#include "turncourt/log.hpp"
#include "turncourt/ranks.hpp"
#include "turncourt/util.hpp"

namespace turncourt::annotation {

inline constexpr int kMinScore = 0;    // most competitive
inline constexpr int kMaxScore = 100;  // most cooperative
inline constexpr int kNeutralScore = 50;

struct AnnotationRecord {
  std::string segment_id;
  std::string annotator_id;
  int score = kNeutralScore;
  std::int64_t timestamp_ms = 0;
  std::map<std::string, std::string> demographics;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

inline nlohmann::json to_json(const AnnotationRecord& r) {
  nlohmann::json j = {{"segment_id", r.segment_id},
                      {"annotator_id", r.annotator_id},
                      {"score", r.score},
                      {"timestamp_ms", r.timestamp_ms}};
  if (!r.demographics.empty()) j["demographics"] = r.demographics;
  return j;
}

inline AnnotationRecord record_from_json(const nlohmann::json& j) {
  AnnotationRecord r;
  r.segment_id = j.at("segment_id").get<std::string>();
  r.annotator_id = j.at("annotator_id").get<std::string>();
  const auto& score = j.at("score");
  if (!score.is_number()) throw ParseError("score must be a number");
  const double s = score.get<double>();
  if (s != std::floor(s) || s < kMinScore || s > kMaxScore)
    throw RangeError("score " + score.dump() + " outside integer range 0..100");
  r.score = static_cast<int>(s);
  r.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  if (j.contains("demographics"))
    for (const auto& [k, v] : j.at("demographics").items())
      r.demographics[k] = v.is_string() ? v.get<std::string>() : v.dump();
  return r;
}

// JSON Lines; (segment_id, annotator_id) must be unique.
inline std::vector<AnnotationRecord> parse_annotation_store(std::string_view text) {
  std::vector<AnnotationRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    AnnotationRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("annotation store: ") + e.what(), static_cast<std::int64_t>(line_no));
    } catch (const RangeError& e) {
      throw ParseError(e.what(), static_cast<std::int64_t>(line_no));
    }
    if (!seen.emplace(r.segment_id, r.annotator_id).second)
      throw ParseError("duplicate annotation of " + r.segment_id + " by " + r.annotator_id,
                       static_cast<std::int64_t>(line_no));
    out.push_back(std::move(r));
  }
  return out;
}

// Append-only JSONL file; every append is flushed and synced before
// returning so a crash loses at most the record being written.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::string path) : path_(std::move(path)) {}

  void append(const AnnotationRecord& r) { append_line(to_json(r).dump()); }

  void append_line(const std::string& line) {
    std::lock_guard lock(mu_);
    FILE* f = std::fopen(path_.c_str(), "ab");
    if (!f) throw IoError("cannot open annotation store " + path_);
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() &&
                    std::fputc('\n', f) != EOF && std::fflush(f) == 0 && ::fsync(fileno(f)) == 0;
    std::fclose(f);
    if (!ok) throw IoError("failed to persist record to " + path_);
  }

  std::vector<AnnotationRecord> load() const {
    std::lock_guard lock(mu_);
    std::ifstream in(path_, std::ios::binary);
    if (!in) return {};
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!text.empty() && text.back() != '\n') {
      // A crash mid-append leaves a torn final line; it was never acknowledged.
      const auto cut = text.rfind('\n');
      warn("dropping incomplete final line of " + path_);
      text.resize(cut == std::string::npos ? 0 : cut + 1);
    }
    return parse_annotation_store(text);
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Aggregation and binning

enum class LabelClass { competitive, middle, cooperative };

inline std::string_view to_string(LabelClass c) {
  switch (c) {
    case LabelClass::competitive: return "competitive";
    case LabelClass::middle: return "middle";
    case LabelClass::cooperative: return "cooperative";
  }
  return "middle";
}

inline LabelClass parse_label_class(std::string_view s) {
  if (s == "competitive") return LabelClass::competitive;
  if (s == "middle") return LabelClass::middle;
  if (s == "cooperative") return LabelClass::cooperative;
  throw ParseError("unknown class '" + std::string(s) + "'");
}

struct AggregatedLabel {
  std::string segment_id;
  double mean_score = 0;
  std::size_t n_annotations = 0;
  std::optional<LabelClass> quantile_class;
};

// Mean score per segment, ordered by segment id. Segments without exactly two
// annotations are kept and reported.
inline std::vector<AggregatedLabel> aggregate_labels(std::span<const AnnotationRecord> records) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    auto& [sum, n] = acc[r.segment_id];
    sum += r.score;
    ++n;
  }
  std::vector<AggregatedLabel> out;
  std::size_t under = 0, over = 0;
  for (const auto& [seg, p] : acc) {
    out.push_back({seg, p.first / static_cast<double>(p.second), p.second, std::nullopt});
    if (p.second < 2) ++under;
    if (p.second > 2) ++over;
  }
  if (under) warn(std::to_string(under) + " segment(s) are under-annotated (fewer than 2 labels)");
  if (over) warn(std::to_string(over) + " segment(s) have more than 2 labels");
  return out;
}

// Equal-width bins [0,20) [20,40) [40,60) [60,80) [80,100].
inline int bin_five(double score) {
  if (!(score >= kMinScore && score <= kMaxScore))
    throw RangeError("score " + format_double(score) + " outside [0, 100]");
  return std::min(4, static_cast<int>(std::floor(score / 20.0)));
}

// ---------------------------------------------------------------------------
// Agreement

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw DegenerateError("correlation undefined: one side is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Pearson correlation of average-tied ranks.
inline double spearman_rho(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 3) throw DegenerateError("spearman_rho needs at least 3 pairs");
  std::vector<double> x, y;
  x.reserve(pairs.size());
  y.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    x.push_back(a);
    y.push_back(b);
  }
  const auto rx = rank_with_ties(x);
  const auto ry = rank_with_ties(y);
  return pearson(rx, ry);
}

enum class Weighting { linear, quadratic };

inline std::string_view to_string(Weighting w) { return w == Weighting::linear ? "linear" : "quadratic"; }

// kappa = 1 - sum(w * O) / sum(w * E) with disagreement weights |i-j|/(n-1),
// squared for quadratic weighting.
inline double weighted_cohen_kappa(std::span<const std::pair<int, int>> pairs, int n_categories,
                                   Weighting weighting = Weighting::linear) {
  if (n_categories < 2) throw RangeError("kappa needs at least 2 categories");
  if (pairs.empty()) throw DegenerateError("kappa of an empty sample");
  const auto n = static_cast<std::size_t>(n_categories);
  std::vector<double> observed(n * n, 0.0), row(n, 0.0), col(n, 0.0);
  for (const auto& [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= n_categories || b >= n_categories)
      throw RangeError("category outside 0.." + std::to_string(n_categories - 1));
    observed[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] += 1;
    row[static_cast<std::size_t>(a)] += 1;
    col[static_cast<std::size_t>(b)] += 1;
  }
  const double total = static_cast<double>(pairs.size());
  double wo = 0, we = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (row[i] == 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double w = std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(n - 1);
      if (weighting == Weighting::quadratic) w *= w;
      wo += w * observed[i * n + j] / total;
      we += w * (row[i] / total) * (col[j] / total);
    }
  }
  if (we == 0) throw DegenerateError("kappa undefined: expected disagreement is zero");
  return 1.0 - wo / we;
}

// Per segment, the first two annotations in timestamp order (annotator id
// breaks ties).
inline std::vector<std::pair<int, int>> agreement_pairs(std::span<const AnnotationRecord> records) {
  std::map<std::string, std::vector<const AnnotationRecord*>> by_segment;
  for (const auto& r : records) by_segment[r.segment_id].push_back(&r);
  std::vector<std::pair<int, int>> out;
  for (auto& [seg, rs] : by_segment) {
    if (rs.size() < 2) continue;
    std::sort(rs.begin(), rs.end(), [](const AnnotationRecord* a, const AnnotationRecord* b) {
      return std::tie(a->timestamp_ms, a->annotator_id) < std::tie(b->timestamp_ms, b->annotator_id);
    });
    out.emplace_back(rs[0]->score, rs[1]->score);
  }
  return out;
}

struct AgreementReport {
  std::size_t n_pairs = 0;
  double spearman_raw = 0;
  double spearman_binned = 0;
  double kappa_raw_linear = 0;
  double kappa_raw_quadratic = 0;
  double kappa_binned_linear = 0;
  double kappa_binned_quadratic = 0;
};

// Raw mode treats integer scores as 101 ordinal categories; binned mode uses
// the five equal-width bins.
inline AgreementReport compute_agreement(std::span<const AnnotationRecord> records) {
  const auto pairs = agreement_pairs(records);
  if (pairs.empty()) throw InputError("no doubly annotated segments; agreement is undefined");
  AgreementReport rep;
  rep.n_pairs = pairs.size();
  std::vector<std::pair<double, double>> raw, binned;
  std::vector<std::pair<int, int>> binned_int;
  for (const auto& [a, b] : pairs) {
    raw.emplace_back(a, b);
    binned_int.emplace_back(bin_five(a), bin_five(b));
    binned.emplace_back(binned_int.back().first, binned_int.back().second);
  }
  rep.spearman_raw = spearman_rho(raw);
  rep.spearman_binned = spearman_rho(binned);
  rep.kappa_raw_linear = weighted_cohen_kappa(pairs, 101, Weighting::linear);
  rep.kappa_raw_quadratic = weighted_cohen_kappa(pairs, 101, Weighting::quadratic);
  rep.kappa_binned_linear = weighted_cohen_kappa(binned_int, 5, Weighting::linear);
  rep.kappa_binned_quadratic = weighted_cohen_kappa(binned_int, 5, Weighting::quadratic);
  return rep;
}

// ---------------------------------------------------------------------------
// Assignment

inline constexpr std::size_t kAnnotationsPerSegment = 2;
inline constexpr std::size_t kSessionCap = 26;

// Thread-safe; every assign_next is an atomic check-and-increment.
class AssignmentState {
 public:
  explicit AssignmentState(std::vector<std::string> segment_ids,
                           std::size_t per_segment = kAnnotationsPerSegment,
                           std::size_t per_annotator = kSessionCap)
      : order_(std::move(segment_ids)), per_segment_(per_segment), per_annotator_(per_annotator) {
    for (const auto& s : order_) assigned_[s];
  }

  void register_annotator(const std::string& annotator) {
    std::lock_guard lock(mu_);
    counts_.try_emplace(annotator, 0);
  }

  // Replays a persisted annotation (e.g. at service start).
  void record_existing(const std::string& segment, const std::string& annotator) {
    std::lock_guard lock(mu_);
    auto it = assigned_.find(segment);
    if (it == assigned_.end()) {
      warn("annotation for unknown segment " + segment + " ignored by assignment");
      return;
    }
    if (std::find(it->second.begin(), it->second.end(), annotator) != it->second.end()) return;
    it->second.push_back(annotator);
    ++counts_[annotator];
  }

  // Next segment for `annotator`, or nullopt when the annotator reached the
  // cap or no eligible segment remains. Half-annotated segments come first.
  std::optional<std::string> assign_next(const std::string& annotator) {
    std::lock_guard lock(mu_);
    auto cit = counts_.find(annotator);
    if (cit == counts_.end()) throw IdentityError("unknown annotator '" + annotator + "'");
    if (cit->second >= per_annotator_) return std::nullopt;
    const std::string* pick = nullptr;
    std::size_t pick_count = 0;
    for (const auto& seg : order_) {
      const auto& who = assigned_.at(seg);
      if (who.size() >= per_segment_) continue;
      if (std::find(who.begin(), who.end(), annotator) != who.end()) continue;
      if (!pick || who.size() > pick_count) {
        pick = &seg;
        pick_count = who.size();
        if (pick_count + 1 == per_segment_) break;
      }
    }
    if (!pick) return std::nullopt;
    assigned_.at(*pick).push_back(annotator);
    ++cit->second;
    return *pick;
  }

  std::vector<std::string> assignees(const std::string& segment) const {
    std::lock_guard lock(mu_);
    auto it = assigned_.find(segment);
    return it == assigned_.end() ? std::vector<std::string>{} : it->second;
  }

  std::size_t count(const std::string& annotator) const {
    std::lock_guard lock(mu_);
    auto it = counts_.find(annotator);
    return it == counts_.end() ? 0 : it->second;
  }

  bool is_registered(const std::string& annotator) const {
    std::lock_guard lock(mu_);
    return counts_.count(annotator) != 0;
  }

  // True when no segment exceeds its quota, no annotator repeats a segment
  // and no annotator exceeds the cap.
  bool invariants_hold() const {
    std::lock_guard lock(mu_);
    std::map<std::string, std::size_t> recount;
    for (const auto& [seg, who] : assigned_) {
      if (who.size() > per_segment_) return false;
      std::set<std::string> uniq(who.begin(), who.end());
      if (uniq.size() != who.size()) return false;
      for (const auto& a : who) ++recount[a];
    }
    for (const auto& [a, n] : counts_) {
      if (n > per_annotator_) return false;
      if (recount[a] != n) return false;
    }
    return true;
  }

  std::size_t per_annotator_cap() const { return per_annotator_; }
  const std::vector<std::string>& segments() const { return order_; }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::string>> assigned_;
  std::map<std::string, std::size_t> counts_;
  std::size_t per_segment_;
  std::size_t per_annotator_;
};

}  // namespace turncourt::annotation
