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

// Per-speaker functionals over pitch/level tracks, segment feature vectors,
// the per-speaker feature CSV, standardization and optional gender
// normalization of pitch features.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "turncourt/audio.hpp"
#include "turncourt/corpus.hpp"
#include "turncourt/csv.hpp"
#include "turncourt/error.hpp"
#include "turncourt/log.hpp"
#include "turncourt/util.hpp"

namespace turncourt::features {

enum class FeatureSet { prosody_internal, egemaps_imported };

inline std::string_view to_string(FeatureSet s) {
  return s == FeatureSet::prosody_internal ? "prosody_internal" : "egemaps_imported";
}

inline FeatureSet parse_feature_set(std::string_view s) {
  if (s == "prosody_internal" || s == "prosody") return FeatureSet::prosody_internal;
  if (s == "egemaps_imported" || s == "egemaps") return FeatureSet::egemaps_imported;
  throw ConfigError("unknown feature set '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Functionals

struct Functionals {
  double mean = 0;
  double stddev = 0;
  double p20 = 0;
  double p50 = 0;
  double p80 = 0;
  double mean_rising_slope = 0;   // units/s, over increasing adjacent frames
  double mean_falling_slope = 0;  // units/s, negative
  // F0: fraction of voiced frames. Level: fraction of frames above the
  // activity threshold.
  double voiced_fraction = 0;

  std::array<double, 8> values() const {
    return {mean, stddev, p20, p50, p80, mean_rising_slope, mean_falling_slope, voiced_fraction};
  }
};

inline constexpr std::array<std::string_view, 8> kF0FunctionalNames = {
    "f0_mean", "f0_stddev", "f0_p20", "f0_p50",
    "f0_p80",  "f0_rising_slope", "f0_falling_slope", "f0_voiced_fraction"};

inline constexpr std::array<std::string_view, 8> kLoudFunctionalNames = {
    "loud_mean", "loud_stddev", "loud_p20", "loud_p50",
    "loud_p80",  "loud_rising_slope", "loud_falling_slope", "loud_active_fraction"};

inline constexpr std::string_view kMetaFemale = "female";
inline constexpr std::string_view kMetaJustice = "justice";

inline constexpr double kActiveLevelDb = -50.0;

// Linear interpolation between closest ranks, position p * (n - 1).
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw RangeError("percentile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double semitones(double f0_hz) { return 12.0 * std::log2(f0_hz / 27.5); }

namespace detail {

struct Point {
  double time_s;
  std::optional<double> value;
};

inline Functionals summarize(const std::vector<Point>& points, double fraction) {
  Functionals f;
  std::vector<double> present;
  for (const auto& p : points)
    if (p.value) present.push_back(*p.value);
  f.voiced_fraction = fraction;
  if (present.empty()) return f;

  double sum = 0;
  for (double v : present) sum += v;
  f.mean = sum / static_cast<double>(present.size());
  double ss = 0;
  for (double v : present) ss += (v - f.mean) * (v - f.mean);
  f.stddev = std::sqrt(ss / static_cast<double>(present.size()));

  std::sort(present.begin(), present.end());
  f.p20 = percentile_sorted(present, 0.2);
  f.p50 = percentile_sorted(present, 0.5);
  f.p80 = percentile_sorted(present, 0.8);

  double rise = 0, fall = 0;
  std::size_t n_rise = 0, n_fall = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!points[i].value || !points[i - 1].value) continue;
    const double dt = points[i].time_s - points[i - 1].time_s;
    if (dt <= 0) continue;
    const double slope = (*points[i].value - *points[i - 1].value) / dt;
    if (slope > 0) {
      rise += slope;
      ++n_rise;
    } else if (slope < 0) {
      fall += slope;
      ++n_fall;
    }
  }
  if (n_rise) f.mean_rising_slope = rise / static_cast<double>(n_rise);
  if (n_fall) f.mean_falling_slope = fall / static_cast<double>(n_fall);
  return f;
}

}  // namespace detail

// F0 functionals in semitones re 27.5 Hz. With no voiced frames every value
// is 0 (the missing-pitch sentinel) and voiced_fraction is 0.
inline Functionals functionals(const audio::F0Track& track) {
  if (track.frames.empty()) throw RangeError("F0 track has no frames");
  std::vector<detail::Point> pts;
  pts.reserve(track.frames.size());
  for (const auto& f : track.frames)
    pts.push_back({f.time_s, f.f0_hz ? std::optional(semitones(*f.f0_hz)) : std::nullopt});
  const double voiced =
      static_cast<double>(track.voiced_count()) / static_cast<double>(track.frames.size());
  return detail::summarize(pts, voiced);
}

inline Functionals functionals(const audio::LoudnessTrack& track,
                               double active_level_db = kActiveLevelDb) {
  if (track.frames.empty()) throw RangeError("loudness track has no frames");
  std::vector<detail::Point> pts;
  pts.reserve(track.frames.size());
  std::size_t active = 0;
  for (const auto& f : track.frames) {
    pts.push_back({f.time_s, f.level_db});
    if (f.level_db > active_level_db) ++active;
  }
  return detail::summarize(pts, static_cast<double>(active) / static_cast<double>(track.frames.size()));
}

// ---------------------------------------------------------------------------
// Feature vectors

struct FeatureVector {
  std::string segment_id;
  std::vector<std::string> names;
  std::vector<double> values;
  FeatureSet feature_set = FeatureSet::prosody_internal;
  bool includes_metadata = false;

  std::size_t size() const { return values.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// The 16 per-speaker prosody column names, F0 block then level block.
inline std::vector<std::string> prosody_speaker_names() {
  std::vector<std::string> names;
  for (auto n : kF0FunctionalNames) names.emplace_back(n);
  for (auto n : kLoudFunctionalNames) names.emplace_back(n);
  return names;
}

// Full vector layout: s1 block, s2 block, then gender1, gender2, role1, role2.
inline std::vector<std::string> vector_names(const std::vector<std::string>& per_speaker,
                                             bool include_metadata) {
  std::vector<std::string> names;
  for (int pos : {1, 2})
    for (const auto& n : per_speaker) names.push_back("s" + std::to_string(pos) + "_" + n);
  if (include_metadata) {
    for (auto meta : {kMetaFemale, kMetaJustice})
      for (int pos : {1, 2}) names.push_back("s" + std::to_string(pos) + "_" + std::string(meta));
  }
  return names;
}

inline std::vector<std::string> prosody_vector_names(bool include_metadata) {
  return vector_names(prosody_speaker_names(), include_metadata);
}

struct SpeakerTracks {
  audio::F0Track f0;
  audio::LoudnessTrack loudness;
};

// Speaker 1 owns [window start, own transcript end]; speaker 2 owns
// [own transcript start, window end]. Overlapped speech belongs to both.
// Regions shorter than one frame are widened to one frame inside the clip.
inline std::pair<SpeakerTracks, SpeakerTracks> speaker_tracks(const audio::AudioBuffer& clip,
                                                              const corpus::TurnChange& tc,
                                                              const audio::TrackConfig& cfg = {}) {
  const double dur = clip.duration_s();
  if (dur < cfg.frame_len_s)
    throw RangeError("clip for " + tc.id + " is shorter than one analysis frame");
  const double w0 = corpus::to_seconds(tc.window.start);
  auto region = [&](double a, double b) {
    a = std::clamp(a, 0.0, dur);
    b = std::clamp(b, 0.0, dur);
    const double min_len = cfg.frame_len_s + 1.0 / clip.sample_rate_hz;
    if (b - a < min_len) {
      b = std::min(dur, a + min_len);
      a = std::max(0.0, b - min_len);
    }
    return audio::slice(clip, a, b);
  };
  const auto s1 = region(0.0, corpus::to_seconds(tc.first.end) - w0);
  const auto s2 = region(corpus::to_seconds(tc.second.start) - w0, dur);
  return {SpeakerTracks{audio::track_f0(s1, cfg), audio::track_loudness(s1, cfg)},
          SpeakerTracks{audio::track_f0(s2, cfg), audio::track_loudness(s2, cfg)}};
}

inline std::array<double, 16> speaker_block(const SpeakerTracks& t) {
  std::array<double, 16> out{};
  const auto f0 = functionals(t.f0).values();
  const auto loud = functionals(t.loudness).values();
  std::copy(f0.begin(), f0.end(), out.begin());
  std::copy(loud.begin(), loud.end(), out.begin() + 8);
  return out;
}

inline void append_metadata(FeatureVector& v, const corpus::Speaker& first,
                            const corpus::Speaker& second) {
  if (v.includes_metadata) return;
  for (auto meta : {kMetaFemale, kMetaJustice}) {
    for (int pos : {1, 2}) {
      const auto& s = pos == 1 ? first : second;
      const bool on = meta == kMetaFemale ? s.gender == corpus::Gender::female
                                          : s.role == corpus::Role::justice;
      v.names.push_back("s" + std::to_string(pos) + "_" + std::string(meta));
      v.values.push_back(on ? 1.0 : 0.0);
    }
  }
  v.includes_metadata = true;
}

inline FeatureVector build_feature_vector(const corpus::TurnChange& tc,
                                          const std::optional<SpeakerTracks>& first,
                                          const std::optional<SpeakerTracks>& second,
                                          const corpus::SpeakerRegistry& speakers,
                                          bool include_metadata) {
  if (!first)
    throw AssemblyError("segment " + tc.id + ": missing tracks for first speaker '" +
                        tc.first.turn.speaker_id + "'");
  if (!second)
    throw AssemblyError("segment " + tc.id + ": missing tracks for second speaker '" +
                        tc.second.turn.speaker_id + "'");
  FeatureVector v;
  v.segment_id = tc.id;
  v.feature_set = FeatureSet::prosody_internal;
  v.names = prosody_vector_names(false);
  for (const auto* t : {&*first, &*second}) {
    const auto block = speaker_block(*t);
    v.values.insert(v.values.end(), block.begin(), block.end());
  }
  if (include_metadata)
    append_metadata(v, speakers.at(tc.first.turn.speaker_id),
                    speakers.at(tc.second.turn.speaker_id));
  return v;
}

// ---------------------------------------------------------------------------
// Feature CSV: segment_id,speaker_position,<per-speaker names...>, one row per
// speaker. Values are written in shortest round-trip form.

namespace detail {

inline bool is_meta(std::string_view name) { return name == kMetaFemale || name == kMetaJustice; }

}  // namespace detail

inline std::vector<std::string> per_speaker_columns(const FeatureVector& v) {
  std::vector<std::string> cols;
  for (const auto& n : v.names)
    if (n.rfind("s1_", 0) == 0) cols.push_back(n.substr(3));
  // Metadata columns go last in the per-speaker row, in a fixed order.
  std::stable_partition(cols.begin(), cols.end(), [](const std::string& c) { return !detail::is_meta(c); });
  return cols;
}

inline std::string serialize_feature_csv(const std::vector<FeatureVector>& vectors,
                                         std::string_view comment = {}) {
  std::string out;
  if (!comment.empty()) {
    out += "# ";
    out += comment;
    out += '\n';
  }
  if (vectors.empty()) return out;
  const auto cols = per_speaker_columns(vectors.front());
  std::vector<std::string> header = {"segment_id", "speaker_position"};
  header.insert(header.end(), cols.begin(), cols.end());
  out += csv::join(header);
  for (const auto& v : vectors) {
    if (per_speaker_columns(v) != cols)
      throw AssemblyError("segment " + v.segment_id + " has a different feature layout");
    for (int pos : {1, 2}) {
      std::vector<std::string> row = {v.segment_id, std::to_string(pos)};
      for (const auto& c : cols) {
        const auto idx = v.index_of("s" + std::to_string(pos) + "_" + c);
        if (!idx) throw AssemblyError("segment " + v.segment_id + " lacks feature " + c);
        row.push_back(format_double(v.values[*idx]));
      }
      out += csv::join(row);
    }
  }
  return out;
}

// Rows for positions 1 and 2 of each segment are concatenated. `female` and
// `justice` columns, when present, become the trailing metadata one-hots.
inline std::vector<FeatureVector> import_external_features(std::string_view text) {
  const auto table = csv::parse(text);
  std::vector<FeatureVector> out;
  if (table.header.empty()) return out;
  if (table.header.size() < 3 || table.header[0] != "segment_id" ||
      table.header[1] != "speaker_position")
    throw ParseError("feature CSV header must start with segment_id,speaker_position", 1);

  std::vector<std::string> cols(table.header.begin() + 2, table.header.end());
  std::vector<std::string> prosody_cols;
  bool has_female = false, has_justice = false;
  for (const auto& c : cols) {
    if (c == kMetaFemale)
      has_female = true;
    else if (c == kMetaJustice)
      has_justice = true;
    else
      prosody_cols.push_back(c);
  }
  const bool with_meta = has_female && has_justice;
  if (has_female != has_justice)
    throw ParseError("feature CSV must carry both or neither of female/justice columns", 1);

  struct Pending {
    std::array<std::optional<std::vector<double>>, 2> rows;
    std::size_t line = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Pending> pending;
  for (const auto& row : table.rows) {
    const auto& seg = row.fields[0];
    const auto pos_str = trim(row.fields[1]);
    if (pos_str != "1" && pos_str != "2")
      throw ParseError("speaker_position must be 1 or 2", static_cast<std::int64_t>(row.line));
    const std::size_t pos = pos_str == "1" ? 0 : 1;
    std::vector<double> values;
    values.reserve(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto v = parse_finite_double(row.fields[c + 2]);
      if (!v)
        throw ParseError("column " + std::to_string(c + 3) + " ('" + cols[c] +
                             "') is not a finite number: '" + row.fields[c + 2] + "'",
                         static_cast<std::int64_t>(row.line));
      values.push_back(*v);
    }
    auto [it, inserted] = pending.try_emplace(seg);
    if (inserted) {
      order.push_back(seg);
      it->second.line = row.line;
    }
    if (it->second.rows[pos])
      throw ParseError("duplicate row for segment " + seg + " position " + std::string(pos_str),
                       static_cast<std::int64_t>(row.line));
    it->second.rows[pos] = std::move(values);
  }

  const bool internal = prosody_cols == prosody_speaker_names();
  for (const auto& seg : order) {
    const auto& p = pending.at(seg);
    if (!p.rows[0] || !p.rows[1])
      throw ParseError("segment " + seg + " has only one speaker row",
                       static_cast<std::int64_t>(p.line));
    FeatureVector v;
    v.segment_id = seg;
    v.feature_set = internal ? FeatureSet::prosody_internal : FeatureSet::egemaps_imported;
    v.includes_metadata = with_meta;
    v.names = vector_names(prosody_cols, with_meta);
    for (std::size_t pos = 0; pos < 2; ++pos)
      for (std::size_t c = 0; c < cols.size(); ++c)
        if (!detail::is_meta(cols[c])) v.values.push_back((*p.rows[pos])[c]);
    if (with_meta) {
      for (auto meta : {kMetaFemale, kMetaJustice}) {
        std::size_t c = 0;
        while (cols[c] != meta) ++c;
        for (std::size_t pos = 0; pos < 2; ++pos) v.values.push_back((*p.rows[pos])[c]);
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standardization

class Scaler {
 public:
  Scaler() = default;

  // Population statistics; features with zero spread are dropped.
  static Scaler fit(std::span<const std::vector<double>> rows, std::vector<std::string> names) {
    if (rows.size() < 2) throw InputError("scaler needs at least 2 training vectors");
    const std::size_t d = names.size();
    for (const auto& r : rows)
      if (r.size() != d) throw AssemblyError("scaler input rows have inconsistent width");
    Scaler s;
    s.input_names_ = std::move(names);
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0;
      for (const auto& r : rows) mean += r[j];
      mean /= n;
      double ss = 0;
      for (const auto& r : rows) ss += (r[j] - mean) * (r[j] - mean);
      const double sd = std::sqrt(ss / n);
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        s.dropped_.push_back(s.input_names_[j]);
        continue;
      }
      s.kept_.push_back(j);
      s.mean_.push_back(mean);
      s.stddev_.push_back(sd);
    }
    if (!s.dropped_.empty()) {
      std::string list;
      for (const auto& name : s.dropped_) list += (list.empty() ? "" : ", ") + name;
      warn("scaler dropped constant feature(s): " + list);
    }
    return s;
  }

  static Scaler fit(std::span<const FeatureVector> train) {
    if (train.empty()) throw InputError("scaler needs at least 2 training vectors");
    std::vector<std::vector<double>> rows;
    for (const auto& v : train) {
      if (v.names != train.front().names)
        throw AssemblyError("segment " + v.segment_id + " has a different feature layout");
      rows.push_back(v.values);
    }
    return fit(rows, train.front().names);
  }

  std::vector<double> transform(std::span<const double> row) const {
    if (row.size() != input_names_.size())
      throw AssemblyError("scaler expects " + std::to_string(input_names_.size()) +
                          " features, got " + std::to_string(row.size()));
    std::vector<double> out(kept_.size());
    for (std::size_t k = 0; k < kept_.size(); ++k) out[k] = (row[kept_[k]] - mean_[k]) / stddev_[k];
    return out;
  }

  FeatureVector transform(const FeatureVector& v) const {
    if (v.names != input_names_)
      throw AssemblyError("segment " + v.segment_id + " does not match the scaler's feature layout");
    FeatureVector out = v;
    out.values = transform(std::span<const double>(v.values));
    out.names = output_names();
    return out;
  }

  std::vector<std::string> output_names() const {
    std::vector<std::string> names;
    for (auto j : kept_) names.push_back(input_names_[j]);
    return names;
  }

  const std::vector<std::string>& input_names() const { return input_names_; }
  const std::vector<std::string>& dropped() const { return dropped_; }
  const std::vector<std::size_t>& kept() const { return kept_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

  // For deserialization.
  static Scaler from_parts(std::vector<std::string> input_names, std::vector<std::size_t> kept,
                           std::vector<double> mean, std::vector<double> stddev) {
    Scaler s;
    if (kept.size() != mean.size() || kept.size() != stddev.size())
      throw FormatError("inconsistent scaler parameters");
    std::vector<bool> used(input_names.size(), false);
    for (auto j : kept) {
      if (j >= input_names.size()) throw FormatError("scaler index out of range");
      used[j] = true;
    }
    for (std::size_t j = 0; j < input_names.size(); ++j)
      if (!used[j]) s.dropped_.push_back(input_names[j]);
    s.input_names_ = std::move(input_names);
    s.kept_ = std::move(kept);
    s.mean_ = std::move(mean);
    s.stddev_ = std::move(stddev);
    return s;
  }

 private:
  std::vector<std::string> input_names_;
  std::vector<std::size_t> kept_;
  std::vector<double> mean_;
  std::vector<double> stddev_;
  std::vector<std::string> dropped_;
};

inline Scaler fit_scaler(std::span<const FeatureVector> train) { return Scaler::fit(train); }

inline std::vector<FeatureVector> apply_scaler(const Scaler& scaler,
                                               std::span<const FeatureVector> vectors) {
  std::vector<FeatureVector> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) out.push_back(scaler.transform(v));
  return out;
}

// ---------------------------------------------------------------------------
// Gender normalization of pitch features (off by default)

struct SpeakerPair {
  corpus::Speaker first;
  corpus::Speaker second;
};

inline bool is_f0_feature(std::string_view per_speaker_name) {
  std::string lower(per_speaker_name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.find("f0") != std::string::npos;
}

// Pitch features of each speaker block are z-scored with statistics of that
// speaker's gender, pooled over both positions of the training vectors.
class GenderNormalizer {
 public:
  static GenderNormalizer fit(std::span<const FeatureVector> train,
                              std::span<const SpeakerPair> speakers) {
    if (train.size() != speakers.size())
      throw InputError("gender normalization needs one speaker pair per vector");
    GenderNormalizer g;
    if (train.empty()) return g;
    const auto& names = train.front().names;
    std::map<corpus::Gender, std::set<std::string>> ids;
    for (const auto& sp : speakers) {
      ids[sp.first.gender].insert(sp.first.id);
      ids[sp.second.gender].insert(sp.second.id);
    }
    for (const auto& [gender, set] : ids)
      if (set.size() < 2)
        throw InputError("gender group '" + std::string(corpus::to_string(gender)) +
                         "' has fewer than 2 speakers; cannot normalize");

    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto& n = names[j];
      if (n.rfind("s1_", 0) != 0 || !is_f0_feature(n.substr(3))) continue;
      const auto j2 = train.front().index_of("s2_" + n.substr(3));
      if (!j2) continue;
      for (const auto& [gender, set] : ids) {
        double sum = 0, sq = 0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < train.size(); ++i) {
          for (int pos : {1, 2}) {
            const auto& sp = pos == 1 ? speakers[i].first : speakers[i].second;
            if (sp.gender != gender) continue;
            const double v = train[i].values[pos == 1 ? j : *j2];
            sum += v;
            sq += v * v;
            ++cnt;
          }
        }
        const double mean = sum / static_cast<double>(cnt);
        const double var = std::max(0.0, sq / static_cast<double>(cnt) - mean * mean);
        g.stats_[{n.substr(3), gender}] = {mean, var > 0 ? std::sqrt(var) : 1.0};
      }
    }
    return g;
  }

  std::vector<FeatureVector> apply(std::span<const FeatureVector> vectors,
                                   std::span<const SpeakerPair> speakers) const {
    if (vectors.size() != speakers.size())
      throw InputError("gender normalization needs one speaker pair per vector");
    std::vector<FeatureVector> out(vectors.begin(), vectors.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = 0; j < out[i].names.size(); ++j) {
        const auto& n = out[i].names[j];
        if (n.size() < 3 || (n.rfind("s1_", 0) != 0 && n.rfind("s2_", 0) != 0)) continue;
        const auto gender = n[1] == '1' ? speakers[i].first.gender : speakers[i].second.gender;
        auto it = stats_.find({n.substr(3), gender});
        if (it == stats_.end()) {
          if (is_f0_feature(n.substr(3)) && !stats_.empty())
            throw InputError("no normalization statistics for gender '" +
                             std::string(corpus::to_string(gender)) + "'");
          continue;
        }
        out[i].values[j] = (out[i].values[j] - it->second.first) / it->second.second;
      }
    }
    return out;
  }

 private:
  std::map<std::pair<std::string, corpus::Gender>, std::pair<double, double>> stats_;
};

inline std::vector<FeatureVector> gender_normalize_f0(std::span<const FeatureVector> vectors,
                                                      std::span<const SpeakerPair> speakers,
                                                      bool enabled = false) {
  if (!enabled) return {vectors.begin(), vectors.end()};
  return GenderNormalizer::fit(vectors, speakers).apply(vectors, speakers);
}

}  // namespace turncourt::features
