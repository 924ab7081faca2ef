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

#include "turncourt/annotation.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "support/oracles.hpp"

namespace turncourt::annotation {
namespace {

AnnotationRecord rec(std::string seg, std::string who, int score, std::int64_t ts = 0) {
  return {std::move(seg), std::move(who), score, ts, {}};
}

// --- aggregate_labels ------------------------------------------------------

TEST(AggregateLabels, MeansAndWarnings) {
  ScopedWarningCapture warnings;
  const std::vector<AnnotationRecord> rs = {rec("a", "x", 20), rec("a", "y", 40), rec("b", "x", 50),
                                            rec("c", "x", 0), rec("c", "y", 100)};
  const auto labels = aggregate_labels(rs);
  ASSERT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels[0].mean_score, 30.0);
  EXPECT_EQ(labels[0].n_annotations, 2u);
  EXPECT_EQ(labels[1].mean_score, 50.0);
  EXPECT_EQ(labels[1].n_annotations, 1u);
  EXPECT_EQ(labels[2].mean_score, 50.0);
  EXPECT_TRUE(warnings.contains("under-annotated"));
}

// --- bin_five --------------------------------------------------------------

TEST(BinFive, Boundaries) {
  EXPECT_EQ(bin_five(0), 0);
  EXPECT_EQ(bin_five(100), 4);
  EXPECT_EQ(bin_five(20), 1);
  EXPECT_EQ(bin_five(19.999), 0);
  EXPECT_EQ(bin_five(59.9), 2);
  EXPECT_EQ(bin_five(80), 4);
  EXPECT_THROW(bin_five(-0.1), RangeError);
  EXPECT_THROW(bin_five(100.5), RangeError);
}

TEST(BinFive, Monotone) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    double a = rng.uniform(0, 100), b = rng.uniform(0, 100);
    if (a > b) std::swap(a, b);
    EXPECT_LE(bin_five(a), bin_five(b));
  }
}

// --- spearman_rho ----------------------------------------------------------

TEST(Spearman, Identities) {
  std::vector<std::pair<double, double>> up, down;
  for (double x : {3.0, 9.0, -1.0, 4.5, 100.0}) {
    up.emplace_back(x, x);
    down.emplace_back(x, -x);
  }
  EXPECT_NEAR(spearman_rho(up), 1.0, 1e-15);
  EXPECT_NEAR(spearman_rho(down), -1.0, 1e-15);
}

TEST(Spearman, SmallCaseMatchesOracle) {
  const std::vector<std::pair<double, double>> p = {{1, 2}, {2, 1}, {3, 4}, {4, 3}};
  EXPECT_NEAR(oracle::spearman(p), 0.6, 1e-12);
  EXPECT_NEAR(spearman_rho(p), 0.6, 1e-12);
}

TEST(Spearman, DegenerateInputs) {
  EXPECT_THROW(spearman_rho(std::vector<std::pair<double, double>>{{1, 1}, {2, 2}}), DegenerateError);
  EXPECT_THROW(spearman_rho(std::vector<std::pair<double, double>>{{1, 5}, {2, 5}, {3, 5}}),
               DegenerateError);
}

TEST(Spearman, InvariantUnderMonotoneTransform) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::pair<double, double>> p, q;
    for (int i = 0; i < 30; ++i) {
      const double a = std::round(rng.uniform(0, 100)), b = std::round(rng.uniform(0, 100));
      p.emplace_back(a, b);
      q.emplace_back(std::exp(a / 10.0), b * b * b + 7);
    }
    EXPECT_NEAR(spearman_rho(p), spearman_rho(q), 1e-12);
  }
}

// --- weighted_cohen_kappa --------------------------------------------------

TEST(Kappa, PerfectAgreement) {
  const std::vector<std::pair<int, int>> p = {{0, 0}, {3, 3}, {4, 4}, {1, 1}};
  EXPECT_NEAR(weighted_cohen_kappa(p, 5, Weighting::linear), 1.0, 1e-15);
  EXPECT_NEAR(weighted_cohen_kappa(p, 5, Weighting::quadratic), 1.0, 1e-15);
}

TEST(Kappa, HandBuiltFiveBinCase) {
  const std::vector<std::pair<int, int>> p = {{0, 0}, {1, 1}, {2, 3}, {4, 4}, {0, 1}};
  // Rows a: {0:2, 1:1, 2:1, 4:1}; cols b: {0:1, 1:2, 3:1, 4:1}.
  // Linear: sum w O = (1/4 + 1/4) / 5 = 0.1; sum w E = 0.42.
  EXPECT_NEAR(oracle::weighted_kappa(p, 5, false), 1 - 0.1 / 0.42, 1e-12);
  EXPECT_NEAR(weighted_cohen_kappa(p, 5, Weighting::linear), 1 - 0.1 / 0.42, 1e-12);
  EXPECT_NEAR(weighted_cohen_kappa(p, 5, Weighting::quadratic), oracle::weighted_kappa(p, 5, true),
              1e-12);
}

TEST(Kappa, LinearBinaryEqualsCohen) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::pair<int, int>> p;
    for (int i = 0; i < 40; ++i)
      p.emplace_back(static_cast<int>(rng.index(2)), static_cast<int>(rng.index(2)));
    EXPECT_NEAR(weighted_cohen_kappa(p, 2, Weighting::linear), oracle::binary_kappa(p), 1e-12);
  }
}

TEST(Kappa, PermutedLabelsNearZero) {
  Rng rng(12);
  std::vector<int> a(5000);
  for (auto& v : a) v = static_cast<int>(rng.index(101));
  auto b = a;
  rng.shuffle(b);
  std::vector<std::pair<int, int>> p;
  for (std::size_t i = 0; i < a.size(); ++i) p.emplace_back(a[i], b[i]);
  EXPECT_NEAR(weighted_cohen_kappa(p, 101, Weighting::linear), 0.0, 0.1);
  EXPECT_NEAR(weighted_cohen_kappa(p, 101, Weighting::quadratic), 0.0, 0.1);
}

TEST(Kappa, Errors) {
  EXPECT_THROW(weighted_cohen_kappa(std::vector<std::pair<int, int>>{{2, 2}, {2, 2}}, 5),
               DegenerateError);
  EXPECT_THROW(weighted_cohen_kappa(std::vector<std::pair<int, int>>{{5, 2}}, 5), RangeError);
}

// --- agreement report ------------------------------------------------------

TEST(Agreement, PairsOrderedByTimestamp) {
  const std::vector<AnnotationRecord> rs = {rec("s", "late", 90, 20), rec("s", "early", 10, 5),
                                            rec("s", "third", 50, 30), rec("t", "x", 1, 0)};
  const auto p = agreement_pairs(rs);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], std::make_pair(10, 90));
}

TEST(Agreement, PerfectDuplicatesGiveOnes) {
  std::vector<AnnotationRecord> rs;
  for (int i = 0; i < 10; ++i) {
    rs.push_back(rec("s" + std::to_string(i), "a", i * 11, 1));
    rs.push_back(rec("s" + std::to_string(i), "b", i * 11, 2));
  }
  const auto r = compute_agreement(rs);
  EXPECT_EQ(r.n_pairs, 10u);
  EXPECT_NEAR(r.spearman_raw, 1.0, 1e-12);
  EXPECT_NEAR(r.spearman_binned, 1.0, 1e-12);
  EXPECT_NEAR(r.kappa_raw_linear, 1.0, 1e-12);
  EXPECT_NEAR(r.kappa_binned_quadratic, 1.0, 1e-12);
  EXPECT_THROW(compute_agreement(std::vector<AnnotationRecord>{rec("s", "a", 3)}), InputError);
}

// --- store -----------------------------------------------------------------

TEST(Store, AppendLoadAndValidation) {
  const auto path = std::filesystem::temp_directory_path() / "turncourt_store_test.jsonl";
  std::filesystem::remove(path);
  AnnotationStore store(path.string());
  EXPECT_TRUE(store.load().empty());
  auto r = rec("s1", "tok", 50, 123);
  r.demographics["age"] = "30-39";
  store.append(r);
  store.append(rec("s2", "tok", 0, 124));
  const auto back = store.load();
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], r);
  EXPECT_THROW(parse_annotation_store(R"({"segment_id":"a","annotator_id":"b","score":101})"),
               ParseError);
  EXPECT_THROW(parse_annotation_store(
                   "{\"segment_id\":\"a\",\"annotator_id\":\"b\",\"score\":1}\n"
                   "{\"segment_id\":\"a\",\"annotator_id\":\"b\",\"score\":2}\n"),
               ParseError);
  std::filesystem::remove(path);
}

// --- assignment ------------------------------------------------------------

TEST(Assignment, NoRepeatForSameAnnotator) {
  AssignmentState st({"only"});
  st.register_annotator("A");
  EXPECT_EQ(st.assign_next("A"), "only");
  EXPECT_EQ(st.assign_next("A"), std::nullopt);
}

TEST(Assignment, PrefersHalfAnnotatedSegments) {
  AssignmentState st({"s0", "s1", "s2"});
  st.record_existing("s2", "A");
  st.register_annotator("B");
  EXPECT_EQ(st.assign_next("B"), "s2");
  EXPECT_EQ(st.assign_next("B"), "s0");
}

TEST(Assignment, CapAndUnknownAnnotator) {
  std::vector<std::string> segs;
  for (int i = 0; i < 40; ++i) segs.push_back("s" + std::to_string(i));
  AssignmentState st(segs);
  st.register_annotator("A");
  for (int i = 0; i < 26; ++i) EXPECT_TRUE(st.assign_next("A").has_value());
  EXPECT_EQ(st.assign_next("A"), std::nullopt);
  EXPECT_THROW(st.assign_next("nobody"), IdentityError);
}

TEST(Assignment, RandomConcurrentSchedulesKeepInvariants) {
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> segs;
    for (int i = 0; i < 15 + trial; ++i) segs.push_back("s" + std::to_string(i));
    AssignmentState st(segs, 2, 5 + trial % 7);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        Rng rng(mix_seed(trial, t));
        for (int k = 0; k < 3; ++k) {
          const std::string who = "ann" + std::to_string(t) + "_" + std::to_string(k);
          st.register_annotator(who);
          const auto n = rng.index(40);
          for (std::size_t i = 0; i < n; ++i)
            if (!st.assign_next(who)) break;
        }
      });
    }
    for (auto& th : threads) th.join();
    EXPECT_TRUE(st.invariants_hold());
    for (const auto& s : segs) EXPECT_LE(st.assignees(s).size(), 2u);
  }
}

}  // namespace
}  // namespace turncourt::annotation
