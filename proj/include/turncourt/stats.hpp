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

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "turncourt/annotation.hpp"
#include "turncourt/corpus.hpp"
#include "turncourt/csv.hpp"
#include "turncourt/error.hpp"
#include "turncourt/ranks.hpp"
#include "turncourt/util.hpp"

namespace turncourt::stats {

// Relabelings at or below this count are enumerated exactly.
inline constexpr double kExactLimit = 50000.0;

struct TestResult {
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<std::size_t> n_per_group;
  bool tie_corrected = false;
  std::string method;
};

struct GroupedScores {
  std::string key;
  std::map<std::string, std::vector<double>> groups;
};

inline double chi_square_upper(double x, double df) {
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

inline double normal_two_sided(double z) { return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0))); }

namespace detail {

inline double multinomial(std::span<const std::size_t> sizes) {
  double out = 1.0;
  std::size_t placed = 0;
  for (std::size_t s : sizes) {
    for (std::size_t i = 1; i <= s; ++i) {
      out *= static_cast<double>(placed + i) / static_cast<double>(i);
    }
    placed += s;
  }
  return out;
}

inline double tie_term(std::span<const double> pooled) {
  double t = 0;
  for (std::size_t b : tie_blocks(pooled)) {
    const double c = static_cast<double>(b);
    t += c * c * c - c;
  }
  return t;
}

// Share of label arrangements whose statistic is at least the observed one.
// `labels` must hold the observed arrangement; `stat` maps labels to a value.
template <typename Stat>
double permutation_p(std::vector<int> labels, const Stat& stat) {
  const double observed = stat(labels);
  const double tol = 1e-9 * std::max(1.0, std::abs(observed));
  std::sort(labels.begin(), labels.end());
  double hits = 0, total = 0;
  do {
    total += 1;
    if (stat(labels) >= observed - tol) hits += 1;
  } while (std::next_permutation(labels.begin(), labels.end()));
  return hits / total;
}

}  // namespace detail

inline TestResult kruskal_wallis(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw InputError("kruskal_wallis needs at least 2 groups");
  TestResult r;
  r.test = "kruskal_wallis";
  std::vector<double> pooled;
  std::vector<int> labels;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw InputError("kruskal_wallis: empty group");
    r.n_per_group.push_back(groups[g].size());
    for (double v : groups[g]) {
      pooled.push_back(v);
      labels.push_back(static_cast<int>(g));
    }
  }
  const double n = static_cast<double>(pooled.size());
  if (pooled.size() < 3) throw InputError("kruskal_wallis needs at least 3 observations");
  const double ties = detail::tie_term(pooled);
  const double correction = 1.0 - ties / (n * n * n - n);
  if (correction <= 0) throw DegenerateError("kruskal_wallis: all values identical");
  r.tie_corrected = ties > 0;

  const auto ranks = rank_with_ties(pooled);
  const std::size_t k = groups.size();
  auto weighted_sum = [&](const std::vector<int>& lab) {
    std::vector<double> sum(k, 0.0);
    for (std::size_t i = 0; i < lab.size(); ++i) sum[lab[i]] += ranks[i];
    double s = 0;
    for (std::size_t g = 0; g < k; ++g) s += sum[g] * sum[g] / static_cast<double>(r.n_per_group[g]);
    return s;
  };
  const double h = (12.0 / (n * (n + 1)) * weighted_sum(labels) - 3.0 * (n + 1)) / correction;
  r.statistic = std::max(0.0, h);

  if (detail::multinomial(r.n_per_group) <= kExactLimit) {
    r.p_value = detail::permutation_p(labels, weighted_sum);
    r.method = "exact_permutation";
  } else {
    r.p_value = chi_square_upper(r.statistic, static_cast<double>(k - 1));
    r.method = "chi_square";
  }
  return r;
}

inline TestResult kruskal_wallis(const GroupedScores& grouped) {
  std::vector<std::vector<double>> gs;
  for (const auto& [name, v] : grouped.groups) gs.push_back(v);
  auto r = kruskal_wallis(gs);
  r.test = "kruskal_wallis:" + grouped.key;
  return r;
}

// Statistic is U for sample `a`; two-sided p.
inline TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("wilcoxon_rank_sum: empty sample");
  TestResult r;
  r.test = "wilcoxon_rank_sum";
  r.n_per_group = {a.size(), b.size()};
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<int> labels(pooled.size(), 1);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(a.size()), 0);
  const auto ranks = rank_with_ties(pooled);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double n = na + nb;
  const double mu = na * nb / 2.0;
  auto u_of = [&](const std::vector<int>& lab) {
    double ra = 0;
    for (std::size_t i = 0; i < lab.size(); ++i)
      if (lab[i] == 0) ra += ranks[i];
    return ra - na * (na + 1) / 2.0;
  };
  r.statistic = u_of(labels);
  const double ties = detail::tie_term(pooled);
  r.tie_corrected = ties > 0;

  if (detail::multinomial(r.n_per_group) <= kExactLimit) {
    r.p_value = detail::permutation_p(labels, [&](const std::vector<int>& lab) { return std::abs(u_of(lab) - mu); });
    r.method = "exact_permutation";
    return r;
  }
  r.method = "normal";
  const double var = na * nb / 12.0 * ((n + 1) - ties / (n * (n - 1)));
  if (var <= 0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = std::max(0.0, std::abs(r.statistic - mu) - 0.5) / std::sqrt(var);
  r.p_value = normal_two_sided(z);
  return r;
}

inline TestResult wilcoxon_rank_sum(const GroupedScores& grouped) {
  if (grouped.groups.size() != 2) {
    throw InputError("wilcoxon_rank_sum needs exactly 2 groups for key " + grouped.key);
  }
  const auto& a = grouped.groups.begin()->second;
  const auto& b = std::next(grouped.groups.begin())->second;
  auto r = wilcoxon_rank_sum(a, b);
  r.test = "wilcoxon_rank_sum:" + grouped.key;
  return r;
}

// --- grouping ----------------------------------------------------------------

struct ScoredSegment {
  std::string segment_id;
  double score = 0.0;
  std::string first_speaker_id;
  std::string second_speaker_id;
};

inline const std::vector<std::string>& grouping_keys() {
  static const std::vector<std::string> keys = {
      "gender_of_first_speaker", "role_of_first_speaker", "gender_of_second_speaker",
      "role_of_second_speaker",  "gender_pooled",         "role_pooled"};
  return keys;
}

// Joins aggregated labels with the turn changes they score.
inline std::vector<ScoredSegment> join_labels(std::span<const annotation::AggregatedLabel> labels,
                                              std::span<const corpus::TurnChange> changes) {
  std::map<std::string, const corpus::TurnChange*> by_id;
  for (const auto& tc : changes) by_id[tc.id] = &tc;
  std::vector<ScoredSegment> out;
  for (const auto& l : labels) {
    auto it = by_id.find(l.segment_id);
    if (it == by_id.end()) throw KeyError("no turn change for labelled segment " + l.segment_id);
    out.push_back({l.segment_id, l.mean_score, it->second->first.turn.speaker_id,
                   it->second->second.turn.speaker_id});
  }
  return out;
}

// Pooled keys count each segment once under each speaker position.
inline GroupedScores group_scores(std::span<const ScoredSegment> segments,
                                  const corpus::SpeakerRegistry& registry, const std::string& key) {
  const auto& keys = grouping_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw KeyError("unknown grouping key: " + key);
  }
  const bool gender = key.starts_with("gender");
  auto value_of = [&](const std::string& speaker_id, const std::string& segment) {
    const auto* s = registry.find(speaker_id);
    if (!s) throw KeyError("segment " + segment + ": no metadata for speaker " + speaker_id);
    return std::string(gender ? corpus::to_string(s->gender) : corpus::to_string(s->role));
  };
  GroupedScores out{key, {}};
  for (const auto& seg : segments) {
    if (key.ends_with("first_speaker") || key.ends_with("pooled")) {
      out.groups[value_of(seg.first_speaker_id, seg.segment_id)].push_back(seg.score);
    }
    if (key.ends_with("second_speaker") || key.ends_with("pooled")) {
      out.groups[value_of(seg.second_speaker_id, seg.segment_id)].push_back(seg.score);
    }
  }
  return out;
}

// --- summaries ---------------------------------------------------------------

struct SummaryRow {
  std::string key;
  std::string group;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1); 0 for a single value
  std::size_t n = 0;
};

inline std::vector<SummaryRow> group_summary(const GroupedScores& grouped) {
  std::vector<SummaryRow> rows;
  for (const auto& [name, v] : grouped.groups) {
    SummaryRow row{grouped.key, name, 0.0, 0.0, v.size()};
    if (!v.empty()) {
      row.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - row.mean) * (x - row.mean);
        row.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
    }
    rows.push_back(row);
  }
  return rows;
}

struct HistogramRow {
  std::string key;
  std::string group;
  double bin_low = 0.0;
  double bin_high = 0.0;
  std::size_t count = 0;
};

// Ten bins of width 10 over [0, 100]; the last bin includes 100.
inline std::vector<HistogramRow> score_distribution(const GroupedScores& grouped) {
  std::vector<HistogramRow> rows;
  for (const auto& [name, v] : grouped.groups) {
    std::vector<std::size_t> counts(10, 0);
    for (double x : v) {
      const auto b = static_cast<std::size_t>(std::clamp(std::floor(x / 10.0), 0.0, 9.0));
      ++counts[b];
    }
    for (std::size_t b = 0; b < 10; ++b) {
      rows.push_back({grouped.key, name, 10.0 * b, 10.0 * (b + 1), counts[b]});
    }
  }
  return rows;
}

inline std::string summary_csv(std::span<const SummaryRow> rows, const std::string& comment = "") {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "key,group,mean,stddev,n\n";
  for (const auto& r : rows) {
    out += csv::join({r.key, r.group, format_double(r.mean), format_double(r.stddev), std::to_string(r.n)});
  }
  return out;
}

inline std::string tests_csv(std::span<const TestResult> results, const std::string& comment = "") {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "test,statistic,p_value\n";
  for (const auto& r : results) {
    out += csv::join({r.test, format_double(r.statistic), format_double(r.p_value)});
  }
  return out;
}

inline std::string distribution_csv(std::span<const HistogramRow> rows, const std::string& comment = "") {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "key,group,bin_low,bin_high,count\n";
  for (const auto& r : rows) {
    out += csv::join({r.key, r.group, format_double(r.bin_low), format_double(r.bin_high), std::to_string(r.count)});
  }
  return out;
}

}  // namespace turncourt::stats
