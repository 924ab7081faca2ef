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

#include "turncourt/features.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

namespace turncourt::features {
namespace {

using corpus::Gender;
using corpus::Role;

audio::LoudnessTrack level_track(std::vector<double> levels, double hop = 0.01) {
  audio::LoudnessTrack t;
  for (std::size_t i = 0; i < levels.size(); ++i) t.frames.push_back({i * hop, levels[i]});
  return t;
}

audio::F0Track pitch_track(std::vector<std::optional<double>> f0, double hop = 0.01) {
  audio::F0Track t;
  for (std::size_t i = 0; i < f0.size(); ++i) t.frames.push_back({i * hop, f0[i]});
  return t;
}

audio::AudioBuffer tone(double f, double secs, double amp, int rate = 16000) {
  audio::AudioBuffer b;
  b.sample_rate_hz = rate;
  b.samples.resize(static_cast<std::size_t>(secs * rate));
  for (std::size_t i = 0; i < b.samples.size(); ++i)
    b.samples[i] = static_cast<float>(amp * std::sin(2 * M_PI * f * i / rate));
  return b;
}

corpus::SpeakerRegistry registry() {
  corpus::SpeakerRegistry r;
  r.add({"a", "Ms. A", Gender::female, Role::attorney});
  r.add({"j", "Justice J", Gender::male, Role::justice});
  return r;
}

corpus::TurnChange toy_change() {
  corpus::TurnChange tc;
  tc.id = "seg1";
  tc.first.turn.speaker_id = "a";
  tc.second.turn.speaker_id = "j";
  tc.first.start = corpus::Millis(0);
  tc.first.end = corpus::Millis(3000);
  tc.second.start = corpus::Millis(3000);
  tc.second.end = corpus::Millis(9000);
  tc.window = corpus::compute_segment_window(tc);
  return tc;
}

// --- functionals -----------------------------------------------------------

TEST(Functionals, ConstantTrack) {
  const auto f = functionals(level_track({-20, -20, -20, -20}));
  EXPECT_EQ(f.mean, -20);
  EXPECT_EQ(f.p20, -20);
  EXPECT_EQ(f.p50, -20);
  EXPECT_EQ(f.p80, -20);
  EXPECT_EQ(f.stddev, 0);
  EXPECT_EQ(f.mean_rising_slope, 0);
  EXPECT_EQ(f.mean_falling_slope, 0);
}

TEST(Functionals, Semitone440IsExactly48) {
  const auto f = functionals(pitch_track({440.0, 440.0, 440.0}));
  EXPECT_EQ(f.mean, 48.0);
  EXPECT_EQ(f.voiced_fraction, 1.0);
}

TEST(Functionals, SlopesFiniteDifference) {
  const auto f = functionals(level_track({100, 110, 105}));
  EXPECT_NEAR(f.mean_rising_slope, 1000.0, 1e-9);
  EXPECT_NEAR(f.mean_falling_slope, -500.0, 1e-9);
}

TEST(Functionals, PercentilesInterpolateAndOrder) {
  const auto f = functionals(level_track({1, 2, 3, 4, 5, 6}));
  EXPECT_NEAR(f.p20, 2.0, 1e-12);
  EXPECT_NEAR(f.p50, 3.5, 1e-12);
  EXPECT_NEAR(f.p80, 5.0, 1e-12);
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(1 + rng.index(40));
    for (auto& x : v) x = rng.uniform(-80, 0);
    const auto g = functionals(level_track(v));
    EXPECT_LE(g.p20, g.p50);
    EXPECT_LE(g.p50, g.p80);
    EXPECT_GE(g.stddev, 0);
    EXPECT_GE(g.voiced_fraction, 0);
    EXPECT_LE(g.voiced_fraction, 1);
  }
}

TEST(Functionals, UnvoicedFramesSkippedForSlopes) {
  const double a = 27.5 * 4, b = 27.5 * 8;  // 24 and 36 semitones
  const auto f = functionals(pitch_track({a, std::nullopt, b, b}));
  EXPECT_NEAR(f.voiced_fraction, 0.75, 1e-12);
  EXPECT_EQ(f.mean_rising_slope, 0);
  const auto g = functionals(pitch_track({a, b}));
  EXPECT_NEAR(g.mean_rising_slope, 1200.0, 1e-9);
}

TEST(Functionals, NoVoicedFramesGivesSentinel) {
  const auto f = functionals(pitch_track({std::nullopt, std::nullopt}));
  for (double v : f.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(functionals(pitch_track({})), RangeError);
}

// --- build_feature_vector --------------------------------------------------

SpeakerTracks tracks_for(const audio::AudioBuffer& b) {
  return {audio::track_f0(b), audio::track_loudness(b)};
}

TEST(BuildFeatureVector, WidthsWithAndWithoutMetadata) {
  const auto t = tracks_for(tone(180, 0.5, 0.3));
  const auto v32 = build_feature_vector(toy_change(), t, t, registry(), false);
  EXPECT_EQ(v32.size(), 32u);
  EXPECT_EQ(v32.names.size(), 32u);
  const auto v36 = build_feature_vector(toy_change(), t, t, registry(), true);
  EXPECT_EQ(v36.size(), 36u);
  EXPECT_EQ(v36.names[32], "s1_female");
  EXPECT_EQ(v36.values[32], 1.0);  // first speaker female
  EXPECT_EQ(v36.values[33], 0.0);
  EXPECT_EQ(v36.values[34], 0.0);  // first speaker attorney
  EXPECT_EQ(v36.values[35], 1.0);
}

TEST(BuildFeatureVector, SymmetricBlocksForIdenticalAudio) {
  const auto t = tracks_for(tone(220, 0.6, 0.2));
  const auto v = build_feature_vector(toy_change(), t, t, registry(), false);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(v.values[i], v.values[16 + i]) << v.names[i];
}

TEST(BuildFeatureVector, LengthIndependentOfContent) {
  Rng rng(4);
  for (int i = 0; i < 5; ++i) {
    const auto a = tracks_for(tone(rng.uniform(80, 400), rng.uniform(0.05, 1.0), rng.uniform(0, 1)));
    const auto b = tracks_for(tone(rng.uniform(80, 400), rng.uniform(0.05, 1.0), 0.0));
    EXPECT_EQ(build_feature_vector(toy_change(), a, b, registry(), true).size(), 36u);
  }
}

TEST(BuildFeatureVector, MissingTrackNamesSpeaker) {
  const auto t = tracks_for(tone(180, 0.2, 0.3));
  try {
    build_feature_vector(toy_change(), t, std::nullopt, registry(), false);
    FAIL();
  } catch (const AssemblyError& e) {
    EXPECT_NE(std::string(e.what()).find("'j'"), std::string::npos);
  }
}

TEST(BuildFeatureVector, SpeakerRegionsFromClip) {
  // First speaker 150 Hz for 2 s, second 300 Hz for 4 s.
  auto clip = tone(150, 2.0, 0.3);
  const auto second = tone(300, 4.0, 0.3);
  clip.samples.insert(clip.samples.end(), second.samples.begin(), second.samples.end());
  const auto tc = toy_change();  // window 1.0 .. 7.0, change at 3.0
  const auto [s1, s2] = speaker_tracks(clip, tc);
  const auto v = build_feature_vector(tc, s1, s2, registry(), false);
  EXPECT_NEAR(v.values[*v.index_of("s1_f0_p50")], semitones(150), 0.3);
  EXPECT_NEAR(v.values[*v.index_of("s2_f0_p50")], semitones(300), 0.3);
}

// --- CSV import/export -----------------------------------------------------

std::string egemaps_csv(std::size_t n_features, std::vector<std::string> segs, bool both = true) {
  std::string s = "segment_id,speaker_position";
  for (std::size_t i = 0; i < n_features; ++i) s += ",F0semitone_" + std::to_string(i);
  s += '\n';
  for (const auto& seg : segs) {
    for (int pos : {1, 2}) {
      if (pos == 2 && !both) continue;
      s += seg + "," + std::to_string(pos);
      for (std::size_t i = 0; i < n_features; ++i) s += "," + std::to_string(i * 0.5 + pos);
      s += '\n';
    }
  }
  return s;
}

TEST(ImportExternal, EightyEightPerSpeakerConcatenates) {
  const auto v = import_external_features(egemaps_csv(88, {"s1"}));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].size(), 176u);
  EXPECT_EQ(v[0].feature_set, FeatureSet::egemaps_imported);
  EXPECT_EQ(v[0].values[0], 1.0);
  EXPECT_EQ(v[0].values[88], 2.0);
  auto with_meta = v[0];
  const auto reg = registry();
  append_metadata(with_meta, reg.at("a"), reg.at("j"));
  EXPECT_EQ(with_meta.size(), 180u);
}

TEST(ImportExternal, EmptyAndErrors) {
  EXPECT_TRUE(import_external_features("").empty());
  EXPECT_THROW(import_external_features(egemaps_csv(3, {"s1"}, false)), ParseError);
  try {
    import_external_features("segment_id,speaker_position,a,b\ns,1,1,NaN\ns,2,1,2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("column 4"), std::string::npos);
  }
  EXPECT_THROW(import_external_features("segment_id,speaker_position,a\ns,3,1\n"), ParseError);
}

TEST(ImportExternal, InternalRoundTripIsBitExact) {
  Rng rng(8);
  std::vector<FeatureVector> vs;
  for (int i = 0; i < 20; ++i) {
    const auto a = tracks_for(tone(rng.uniform(80, 400), 0.3, rng.uniform(0.01, 0.9)));
    const auto b = tracks_for(tone(rng.uniform(80, 400), 0.3, rng.uniform(0.01, 0.9)));
    auto tc = toy_change();
    tc.id = "seg" + std::to_string(i);
    vs.push_back(build_feature_vector(tc, a, b, registry(), i % 2 == 0));
  }
  std::vector<FeatureVector> meta(vs.begin(), vs.end());
  std::erase_if(meta, [](const FeatureVector& v) { return !v.includes_metadata; });
  std::erase_if(vs, [](const FeatureVector& v) { return v.includes_metadata; });
  for (const auto& set : {vs, meta}) {
    const auto text = serialize_feature_csv(set, "config_hash=abc seed=1");
    const auto back = import_external_features(text);
    EXPECT_EQ(back, set);
    EXPECT_EQ(serialize_feature_csv(back, "config_hash=abc seed=1"), text);
  }
}

// --- scaler ----------------------------------------------------------------

FeatureVector vec(std::string id, std::vector<double> values) {
  FeatureVector v;
  v.segment_id = std::move(id);
  for (std::size_t i = 0; i < values.size(); ++i) v.names.push_back("x" + std::to_string(i));
  v.values = std::move(values);
  return v;
}

TEST(Scaler, TwoPoints) {
  const std::vector<FeatureVector> train = {vec("a", {0}), vec("b", {2})};
  const auto s = fit_scaler(train);
  EXPECT_EQ(s.mean()[0], 1.0);
  EXPECT_EQ(s.stddev()[0], 1.0);
  const auto out = apply_scaler(s, train);
  EXPECT_EQ(out[0].values[0], -1.0);
  EXPECT_EQ(out[1].values[0], 1.0);
}

TEST(Scaler, ConstantFeatureDroppedWithWarning) {
  const std::vector<FeatureVector> train = {vec("a", {0, 5, 1}), vec("b", {2, 5, 3}), vec("c", {4, 5, 2})};
  ScopedWarningCapture warnings;
  const auto s = fit_scaler(train);
  EXPECT_TRUE(warnings.contains("x1"));
  ASSERT_EQ(s.dropped(), std::vector<std::string>{"x1"});
  const auto out = apply_scaler(s, train);
  EXPECT_EQ(out[0].size(), 2u);
  EXPECT_EQ(out[0].names, (std::vector<std::string>{"x0", "x2"}));
}

TEST(Scaler, TrainStatisticsAndIdempotence) {
  Rng rng(21);
  std::vector<FeatureVector> train;
  for (int i = 0; i < 50; ++i)
    train.push_back(vec(std::to_string(i), {rng.uniform(-5, 5), rng.normal() * 30 + 100, rng.uniform()}));
  const auto scaled = apply_scaler(fit_scaler(train), train);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, ss = 0;
    for (const auto& v : scaled) m += v.values[j];
    m /= scaled.size();
    for (const auto& v : scaled) ss += (v.values[j] - m) * (v.values[j] - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(ss / scaled.size()), 1.0, 1e-9);
  }
  const auto twice = apply_scaler(fit_scaler(scaled), scaled);
  for (std::size_t i = 0; i < scaled.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(twice[i].values[j], scaled[i].values[j], 1e-9);
}

TEST(Scaler, TestVectorsUseTrainStatisticsOnly) {
  const std::vector<FeatureVector> train = {vec("a", {0}), vec("b", {2})};
  const auto s = fit_scaler(train);
  EXPECT_EQ(s.transform(vec("t", {10})).values[0], 9.0);
  EXPECT_THROW(fit_scaler(std::vector<FeatureVector>{vec("a", {1})}), InputError);
  EXPECT_THROW(s.transform(vec("t", {1, 2})), AssemblyError);
}

// --- gender normalization --------------------------------------------------

FeatureVector pitch_vec(std::string id, double s1_f0, double s2_f0, double s1_loud) {
  FeatureVector v;
  v.segment_id = std::move(id);
  v.names = {"s1_f0_mean", "s1_loud_mean", "s2_f0_mean", "s2_loud_mean"};
  v.values = {s1_f0, s1_loud, s2_f0, s1_loud};
  return v;
}

corpus::Speaker spk(std::string id, Gender g) { return {id, id, g, Role::attorney}; }

TEST(GenderNormalize, OffIsIdentity) {
  const std::vector<FeatureVector> vs = {pitch_vec("a", 1, 2, 3)};
  const std::vector<SpeakerPair> sp = {{spk("x", Gender::male), spk("y", Gender::male)}};
  EXPECT_EQ(gender_normalize_f0(vs, sp), vs);
}

TEST(GenderNormalize, SingleGenderEqualsPooledZScore) {
  std::vector<FeatureVector> vs;
  std::vector<SpeakerPair> sp;
  Rng rng(1);
  std::vector<double> pooled;
  for (int i = 0; i < 10; ++i) {
    vs.push_back(pitch_vec(std::to_string(i), rng.uniform(30, 50), rng.uniform(30, 50), -20));
    sp.push_back({spk("m" + std::to_string(i % 3), Gender::male),
                  spk("m" + std::to_string((i + 1) % 3), Gender::male)});
    pooled.push_back(vs.back().values[0]);
    pooled.push_back(vs.back().values[2]);
  }
  double m = 0, ss = 0;
  for (double v : pooled) m += v;
  m /= pooled.size();
  for (double v : pooled) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / pooled.size());
  const auto out = gender_normalize_f0(vs, sp, true);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    EXPECT_NEAR(out[i].values[0], (vs[i].values[0] - m) / sd, 1e-9);
    EXPECT_NEAR(out[i].values[2], (vs[i].values[2] - m) / sd, 1e-9);
    EXPECT_EQ(out[i].values[1], vs[i].values[1]);  // level untouched
  }
}

TEST(GenderNormalize, ShiftedGroupsEndWithEqualMeans) {
  std::vector<FeatureVector> vs;
  std::vector<SpeakerPair> sp;
  Rng rng(6);
  for (int i = 0; i < 40; ++i) {
    const bool f1 = rng.uniform() < 0.5, f2 = rng.uniform() < 0.5;
    vs.push_back(pitch_vec(std::to_string(i), (f1 ? 52 : 40) + rng.normal(),
                           (f2 ? 52 : 40) + rng.normal(), -20));
    sp.push_back({spk((f1 ? "f" : "m") + std::to_string(i % 4), f1 ? Gender::female : Gender::male),
                  spk((f2 ? "f" : "m") + std::to_string(i % 5), f2 ? Gender::female : Gender::male)});
  }
  const auto out = gender_normalize_f0(vs, sp, true);
  double sum[2] = {0, 0};
  int cnt[2] = {0, 0};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int g1 = sp[i].first.gender == Gender::female, g2 = sp[i].second.gender == Gender::female;
    sum[g1] += out[i].values[0];
    ++cnt[g1];
    sum[g2] += out[i].values[2];
    ++cnt[g2];
  }
  EXPECT_NEAR(sum[0] / cnt[0], sum[1] / cnt[1], 1e-9);
}

TEST(GenderNormalize, TooFewSpeakersInGroup) {
  const std::vector<FeatureVector> vs = {pitch_vec("a", 1, 2, 3), pitch_vec("b", 2, 3, 3)};
  const std::vector<SpeakerPair> sp = {{spk("f1", Gender::female), spk("m1", Gender::male)},
                                       {spk("f1", Gender::female), spk("m2", Gender::male)}};
  EXPECT_THROW(gender_normalize_f0(vs, sp, true), InputError);
}

}  // namespace
}  // namespace turncourt::features
