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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "turncourt/annotation.hpp"
#include "turncourt/corpus.hpp"
#include "turncourt/csv.hpp"
#include "turncourt/error.hpp"
#include "turncourt/features.hpp"
#include "turncourt/log.hpp"
#include "turncourt/util.hpp"

namespace turncourt::classify {

using annotation::LabelClass;

inline constexpr std::array<LabelClass, 3> kAllClasses = {LabelClass::competitive, LabelClass::middle,
                                                           LabelClass::cooperative};

// --- quantile classes --------------------------------------------------------

// Linear interpolation between order statistics at position p * (n - 1).
inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  return features::percentile_sorted(values, p);
}

struct Classing {
  double q_low = 0.0;
  double q_high = 0.0;
  std::vector<LabelClass> classes;
};

// Scores at or below the 1/3 quantile are competitive, above the 2/3 quantile
// cooperative, the rest middle. Ties at a threshold fall to the lower class.
inline Classing quantile_classes(std::span<const double> scores) {
  if (scores.size() < 3) throw InputError("quantile classing needs at least 3 segments");
  std::vector<double> v(scores.begin(), scores.end());
  Classing c;
  c.q_low = quantile(v, 1.0 / 3.0);
  c.q_high = quantile(v, 2.0 / 3.0);
  std::array<std::size_t, 3> counts{};
  for (double s : scores) {
    const LabelClass k = s <= c.q_low ? LabelClass::competitive
                         : s > c.q_high ? LabelClass::cooperative
                                        : LabelClass::middle;
    c.classes.push_back(k);
    ++counts[static_cast<std::size_t>(k)];
  }
  std::sort(v.begin(), v.end());
  const auto distinct = static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
  if (distinct < 3 || std::count(counts.begin(), counts.end(), 0u) > 0) {
    warn("degenerate quantile classing: " + std::to_string(distinct) + " distinct score(s), class sizes " +
         std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" + std::to_string(counts[2]));
  }
  return c;
}

// --- examples and splitting --------------------------------------------------

struct LabeledExample {
  std::string segment_id;
  features::FeatureVector features;
  double mean_score = 0.0;
  LabelClass label = LabelClass::middle;
  std::string stratum;  // "<gender1>-<gender2>|<role1>-<role2>"
  bool ends_with_dash = false;
};

inline std::string stratum_key(corpus::Gender g1, corpus::Gender g2, corpus::Role r1, corpus::Role r2) {
  return std::string(corpus::to_string(g1)) + "-" + std::string(corpus::to_string(g2)) + "|" +
         std::string(corpus::to_string(r1)) + "-" + std::string(corpus::to_string(r2));
}

inline std::string gender_pair(const std::string& stratum) { return stratum.substr(0, stratum.find('|')); }

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

namespace detail {

// Edmonds-Karp on a dense capacity matrix; graphs here have a few dozen nodes.
class FlowNetwork {
 public:
  explicit FlowNetwork(std::size_t n) : cap_(n, std::vector<long>(n, 0)), flow_(n, std::vector<long>(n, 0)) {}

  void add(std::size_t u, std::size_t v, long c) { cap_[u][v] += c; }

  long max_flow(std::size_t s, std::size_t t) {
    const std::size_t n = cap_.size();
    long total = 0;
    for (;;) {
      std::vector<long> parent(n, -1);
      parent[s] = static_cast<long>(s);
      std::deque<std::size_t> q{s};
      while (!q.empty() && parent[t] == -1) {
        const std::size_t u = q.front();
        q.pop_front();
        for (std::size_t v = 0; v < n; ++v) {
          if (parent[v] == -1 && residual(u, v) > 0) {
            parent[v] = static_cast<long>(u);
            q.push_back(v);
          }
        }
      }
      if (parent[t] == -1) return total;
      long push = std::numeric_limits<long>::max();
      for (std::size_t v = t; v != s; v = static_cast<std::size_t>(parent[v]))
        push = std::min(push, residual(static_cast<std::size_t>(parent[v]), v));
      for (std::size_t v = t; v != s; v = static_cast<std::size_t>(parent[v])) {
        const auto u = static_cast<std::size_t>(parent[v]);
        flow_[u][v] += push;
        flow_[v][u] -= push;
      }
      total += push;
    }
  }

  long flow(std::size_t u, std::size_t v) const { return flow_[u][v]; }

 private:
  long residual(std::size_t u, std::size_t v) const { return cap_[u][v] - flow_[u][v]; }

  std::vector<std::vector<long>> cap_;
  std::vector<std::vector<long>> flow_;
};

inline std::pair<long, long> round_bounds(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) < 1e-9) return {static_cast<long>(r), static_cast<long>(r)};
  return {static_cast<long>(std::floor(x)), static_cast<long>(std::ceil(x))};
}

// Controlled rounding of targets[r][c]: every cell, row sum, column sum and
// the grand total is rounded to an adjacent integer. Solved as a feasible
// circulation with lower bounds.
inline std::vector<std::vector<long>> controlled_round(const std::vector<std::vector<double>>& targets) {
  const std::size_t R = targets.size(), C = R ? targets[0].size() : 0;
  const std::size_t src = 0, row0 = 1, col0 = 1 + R, snk = 1 + R + C, ss = snk + 1, st = snk + 2;
  FlowNetwork net(st + 1);
  std::vector<long> excess(st + 1, 0);
  auto edge = [&](std::size_t u, std::size_t v, std::pair<long, long> b) {
    net.add(u, v, b.second - b.first);
    excess[v] += b.first;
    excess[u] -= b.first;
  };
  std::vector<double> col_sum(C, 0.0);
  double total = 0;
  std::vector<std::vector<std::pair<long, long>>> cell(R);
  for (std::size_t r = 0; r < R; ++r) {
    double row_sum = 0;
    for (std::size_t c = 0; c < C; ++c) {
      cell[r].push_back(round_bounds(targets[r][c]));
      edge(row0 + r, col0 + c, cell[r][c]);
      row_sum += targets[r][c];
      col_sum[c] += targets[r][c];
    }
    edge(src, row0 + r, round_bounds(row_sum));
    total += row_sum;
  }
  for (std::size_t c = 0; c < C; ++c) edge(col0 + c, snk, round_bounds(col_sum[c]));
  edge(snk, src, round_bounds(total));
  long demand = 0;
  for (std::size_t v = 0; v <= snk; ++v) {
    if (excess[v] > 0) {
      net.add(ss, v, excess[v]);
      demand += excess[v];
    } else if (excess[v] < 0) {
      net.add(v, st, -excess[v]);
    }
  }
  if (net.max_flow(ss, st) != demand) throw Error("controlled rounding found no feasible table");
  std::vector<std::vector<long>> out(R, std::vector<long>(C));
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r][c] = cell[r][c].first + net.flow(row0 + r, col0 + c);
  return out;
}

}  // namespace detail

// Per (stratum, class) cell the train count is a controlled rounding of
// fraction * size, so strata, classes and the total are each within one
// example of the exact share. Members of a cell are drawn by seeded shuffle.
inline Split stratified_split(std::span<const LabeledExample> examples, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1)");
  std::map<std::string, std::array<std::vector<std::size_t>, 3>> cells;
  for (std::size_t i = 0; i < examples.size(); ++i)
    cells[examples[i].stratum][static_cast<std::size_t>(examples[i].label)].push_back(i);
  std::vector<std::vector<double>> targets;
  for (const auto& [stratum, by_class] : cells) {
    std::vector<double> row;
    for (const auto& members : by_class) row.push_back(spec.train_fraction * static_cast<double>(members.size()));
    targets.push_back(row);
  }
  const auto counts = detail::controlled_round(targets);
  Rng rng(spec.seed);
  Split split;
  std::size_t r = 0;
  for (auto& [stratum, by_class] : cells) {
    for (std::size_t c = 0; c < 3; ++c) {
      auto members = by_class[c];
      rng.shuffle(members);
      const auto take = static_cast<std::size_t>(counts[r][c]);
      split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
      split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
    }
    ++r;
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  if (split.train.empty() || split.test.empty()) {
    throw SplitError("split of " + std::to_string(examples.size()) + " examples leaves an empty partition");
  }
  return split;
}

// Share of each gender pair in a subset of examples.
inline std::map<std::string, double> gender_pair_shares(std::span<const LabeledExample> examples,
                                                        std::span<const std::size_t> subset) {
  std::map<std::string, double> shares;
  for (auto i : subset) shares[gender_pair(examples[i].stratum)] += 1.0;
  for (auto& [k, v] : shares) v /= static_cast<double>(subset.size());
  return shares;
}

// Largest gap, in percentage points, between a gender pair's share in the
// full set and in either partition.
inline double gender_balance_gap(std::span<const LabeledExample> examples, const Split& split) {
  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), 0);
  const auto full = gender_pair_shares(examples, all);
  double gap = 0;
  for (const auto* part : {&split.train, &split.test}) {
    const auto shares = gender_pair_shares(examples, *part);
    for (const auto& [k, v] : full) {
      const auto it = shares.find(k);
      gap = std::max(gap, 100.0 * std::abs(v - (it == shares.end() ? 0.0 : it->second)));
    }
  }
  return gap;
}

// --- scoring -----------------------------------------------------------------

enum class F1Mode { multiclass, per_class };

inline std::string_view to_string(F1Mode m) { return m == F1Mode::multiclass ? "multiclass" : "per_class"; }

// Micro-averaged F1 from pooled TP/FP/FN. per_class collapses both sides to
// target-vs-rest first and pools over the two binary classes.
inline double micro_f1(std::span<const LabelClass> pred, std::span<const LabelClass> gold,
                       F1Mode mode = F1Mode::multiclass, LabelClass target = LabelClass::competitive) {
  if (pred.size() != gold.size()) throw InputError("micro_f1: prediction and gold lengths differ");
  if (pred.empty()) throw InputError("micro_f1: empty input");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    int p = static_cast<int>(pred[i]), g = static_cast<int>(gold[i]);
    if (mode == F1Mode::per_class) {
      p = pred[i] == target;
      g = gold[i] == target;
    }
    if (p == g) {
      tp += 1;
    } else {
      fp += 1;  // counted against the predicted class
      fn += 1;  // and missed for the gold class
    }
  }
  return 2 * tp / (2 * tp + fp + fn);
}

// A first turn ending in a dash predicts competitive, otherwise cooperative.
inline std::vector<LabelClass> dash_baseline(const std::vector<bool>& ends_with_dash) {
  std::vector<LabelClass> out;
  for (bool d : ends_with_dash) out.push_back(d ? LabelClass::competitive : LabelClass::cooperative);
  return out;
}

inline std::vector<LabelClass> dash_baseline(std::span<const LabeledExample> examples) {
  std::vector<bool> d;
  for (const auto& e : examples) d.push_back(e.ends_with_dash);
  return dash_baseline(d);
}

inline std::vector<LabelClass> target_class_baseline(LabelClass target, std::size_t n) {
  return std::vector<LabelClass>(n, target);
}

// --- SVC with RBF kernel -----------------------------------------------------

struct SvcParams {
  double C = 1.0;
  double gamma = 0.1;
  double tolerance = 1e-3;
};

inline double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
  double d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return std::exp(-gamma * d);
}

// One-vs-one machine: positive side is class `a`.
struct BinaryMachine {
  int a = 0;
  int b = 1;
  std::vector<std::size_t> sv;  // indices into SvcModel::support_vectors
  std::vector<double> coef;     // y_i * alpha_i
  double rho = 0.0;
};

struct SvcModel {
  double gamma = 0.1;
  int n_classes = 0;
  std::vector<std::vector<double>> support_vectors;
  std::vector<BinaryMachine> machines;

  std::vector<double> decision_values(std::span<const double> x) const {
    std::vector<double> k(support_vectors.size());
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = rbf(support_vectors[i], x, gamma);
    std::vector<double> out;
    for (const auto& m : machines) {
      double s = -m.rho;
      for (std::size_t t = 0; t < m.sv.size(); ++t) s += m.coef[t] * k[m.sv[t]];
      out.push_back(s);
    }
    return out;
  }

  // Majority vote; ties go to the larger summed signed margin, then the lower class.
  int predict(std::span<const double> x) const {
    const auto dec = decision_values(x);
    std::vector<int> votes(n_classes, 0);
    std::vector<double> margin(n_classes, 0.0);
    for (std::size_t i = 0; i < machines.size(); ++i) {
      const auto& m = machines[i];
      ++votes[dec[i] > 0 ? m.a : m.b];
      margin[m.a] += dec[i];
      margin[m.b] -= dec[i];
    }
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && margin[c] > margin[best])) best = c;
    }
    return best;
  }
};

namespace detail {

struct SmoResult {
  std::vector<double> alpha;
  double rho = 0.0;
  std::size_t iterations = 0;
};

// Dual soft-margin solver with second-order working-set selection.
// K is the row-major kernel matrix over the n training points.
inline SmoResult smo(const std::vector<double>& K, const std::vector<int>& y, double C, double eps) {
  const std::size_t n = y.size();
  constexpr double tau = 1e-12;
  auto k = [&](std::size_t i, std::size_t j) { return K[i * n + j]; };
  std::vector<double> alpha(n, 0.0), G(n, -1.0);
  auto up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
  auto low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < C); };
  const std::size_t max_iter = std::max<std::size_t>(10000000, 100 * n);
  std::size_t iter = 0;
  for (; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity(), gmax2 = gmax;
    std::optional<std::size_t> i;
    for (std::size_t t = 0; t < n; ++t) {
      if (up(t) && -y[t] * G[t] >= gmax) {
        gmax = -y[t] * G[t];
        i = t;
      }
    }
    if (!i) break;
    std::optional<std::size_t> j;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!low(t)) continue;
      gmax2 = std::max(gmax2, y[t] * G[t]);
      const double diff = gmax + y[t] * G[t];
      if (diff > 0) {
        double quad = k(*i, *i) + k(t, t) - 2.0 * k(*i, t);
        if (quad <= 0) quad = tau;
        const double obj = -diff * diff / quad;
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    if (gmax + gmax2 < eps || !j) break;
    const std::size_t a = *i, b = *j;
    const double old_a = alpha[a], old_b = alpha[b];
    double quad = k(a, a) + k(b, b) - 2.0 * k(a, b);
    if (quad <= 0) quad = tau;
    if (y[a] != y[b]) {
      const double delta = (-G[a] - G[b]) / quad;
      const double diff = alpha[a] - alpha[b];
      alpha[a] += delta;
      alpha[b] += delta;
      if (diff > 0) {
        if (alpha[b] < 0) {
          alpha[b] = 0;
          alpha[a] = diff;
        }
      } else if (alpha[a] < 0) {
        alpha[a] = 0;
        alpha[b] = -diff;
      }
      if (diff > 0) {
        if (alpha[a] > C) {
          alpha[a] = C;
          alpha[b] = C - diff;
        }
      } else if (alpha[b] > C) {
        alpha[b] = C;
        alpha[a] = C + diff;
      }
    } else {
      const double delta = (G[a] - G[b]) / quad;
      const double sum = alpha[a] + alpha[b];
      alpha[a] -= delta;
      alpha[b] += delta;
      if (sum > C) {
        if (alpha[a] > C) {
          alpha[a] = C;
          alpha[b] = sum - C;
        }
      } else if (alpha[b] < 0) {
        alpha[b] = 0;
        alpha[a] = sum;
      }
      if (sum > C) {
        if (alpha[b] > C) {
          alpha[b] = C;
          alpha[a] = sum - C;
        }
      } else if (alpha[a] < 0) {
        alpha[a] = 0;
        alpha[b] = sum;
      }
    }
    const double da = alpha[a] - old_a, db = alpha[b] - old_b;
    for (std::size_t t = 0; t < n; ++t) G[t] += y[t] * (y[a] * k(t, a) * da + y[b] * k(t, b) * db);
  }
  if (iter == max_iter) warn("SMO stopped at the iteration cap before reaching tolerance");

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum += yg;
    }
  }
  const double rho = n_free > 0 ? sum / static_cast<double>(n_free) : (ub + lb) / 2;
  return {std::move(alpha), rho, iter};
}

inline void check_training_input(std::span<const std::vector<double>> X, std::span<const int> y, int n_classes) {
  if (X.size() != y.size()) throw InputError("feature rows and labels differ in count");
  if (X.empty()) throw TrainingError("no training examples");
  for (const auto& row : X) {
    if (row.size() != X[0].size()) throw InputError("ragged feature matrix");
    for (double v : row)
      if (!std::isfinite(v)) throw InputError("non-finite feature value");
  }
  std::vector<bool> seen(n_classes, false);
  for (int c : y) {
    if (c < 0 || c >= n_classes) throw InputError("label index out of range");
    seen[c] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) throw TrainingError("training data has a single class");
}

}  // namespace detail

// Labels are class indices in [0, n_classes).
inline SvcModel train_svc_rbf(std::span<const std::vector<double>> X, std::span<const int> y, int n_classes,
                              const SvcParams& p) {
  detail::check_training_input(X, y, n_classes);
  if (!(p.C > 0) || !(p.gamma > 0)) throw ConfigError("SVC needs C > 0 and gamma > 0");
  const std::size_t n = X.size();
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) K[i * n + j] = K[j * n + i] = rbf(X[i], X[j], p.gamma);

  SvcModel model;
  model.gamma = p.gamma;
  model.n_classes = n_classes;
  std::vector<std::optional<std::size_t>> sv_slot(n);
  for (int a = 0; a < n_classes; ++a) {
    for (int b = a + 1; b < n_classes; ++b) {
      std::vector<std::size_t> idx;
      std::vector<int> yy;
      for (std::size_t i = 0; i < n; ++i) {
        if (y[i] == a || y[i] == b) {
          idx.push_back(i);
          yy.push_back(y[i] == a ? 1 : -1);
        }
      }
      BinaryMachine m{a, b, {}, {}, 0.0};
      const bool both = std::count(yy.begin(), yy.end(), 1) > 0 && std::count(yy.begin(), yy.end(), -1) > 0;
      if (!both) continue;  // class absent from training: never voted for
      const std::size_t s = idx.size();
      std::vector<double> sub(s * s);
      for (std::size_t u = 0; u < s; ++u)
        for (std::size_t v = 0; v < s; ++v) sub[u * s + v] = K[idx[u] * n + idx[v]];
      const auto res = detail::smo(sub, yy, p.C, p.tolerance);
      m.rho = res.rho;
      for (std::size_t u = 0; u < s; ++u) {
        if (res.alpha[u] <= 0) continue;
        const std::size_t orig = idx[u];
        if (!sv_slot[orig]) {
          sv_slot[orig] = model.support_vectors.size();
          model.support_vectors.push_back(X[orig]);
        }
        m.sv.push_back(*sv_slot[orig]);
        m.coef.push_back(yy[u] * res.alpha[u]);
      }
      model.machines.push_back(std::move(m));
    }
  }
  return model;
}

// --- random forest -----------------------------------------------------------

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_leaf = 1;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  int predict(std::span<const double> x) const {
    std::size_t at = 0;
    while (nodes[at].feature >= 0) {
      at = static_cast<std::size_t>(x[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left : nodes[at].right);
    }
    return nodes[at].label;
  }
};

struct ForestModel {
  int n_classes = 0;
  std::vector<Tree> trees;

  // Majority vote, ties to the lower class index.
  int predict(std::span<const double> x) const {
    std::vector<int> votes(n_classes, 0);
    for (const auto& t : trees) ++votes[t.predict(x)];
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
};

namespace detail {

inline int majority(std::span<const std::size_t> counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

inline double gini_sum(std::span<const std::size_t> counts, double n) {
  double s = 0;
  for (auto c : counts) s += static_cast<double>(c) * static_cast<double>(c);
  return n - s / n;  // n * gini
}

// CART with Gini impurity. Candidate features are drawn √d at a time; if none
// of them admits a valid split the remaining features are tried in random
// order. Splits are taken even without impurity gain so XOR-like data can be
// separated below the root.
inline Tree grow_tree(std::span<const std::vector<double>> X, std::span<const int> y, int n_classes,
                      std::vector<std::size_t> sample, const ForestParams& p, Rng& rng) {
  const std::size_t d = X[0].size();
  const std::size_t mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
  const std::size_t min_leaf = std::max<std::size_t>(1, p.min_leaf);
  Tree tree;
  struct Task {
    std::size_t node;
    std::vector<std::size_t> members;
    std::size_t depth;
  };
  std::vector<Task> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::move(sample), 0});
  std::vector<std::size_t> features(d);
  while (!stack.empty()) {
    Task task = std::move(stack.back());
    stack.pop_back();
    std::vector<std::size_t> counts(n_classes, 0);
    for (auto i : task.members) ++counts[y[i]];
    tree.nodes[task.node].label = majority(counts);
    const bool pure = std::count(counts.begin(), counts.end(), 0u) == static_cast<std::ptrdiff_t>(n_classes) - 1;
    if (pure || (p.max_depth > 0 && task.depth >= p.max_depth) || task.members.size() < 2 * min_leaf) continue;

    std::iota(features.begin(), features.end(), 0);
    rng.shuffle(features);
    std::optional<std::size_t> best_feature;
    double best_threshold = 0, best_score = std::numeric_limits<double>::infinity();
    auto& m = task.members;
    const double n = static_cast<double>(m.size());
    for (std::size_t f = 0; f < d; ++f) {
      if (f >= mtry && best_feature) break;
      const std::size_t feat = features[f];
      std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
        return X[a][feat] < X[b][feat] || (X[a][feat] == X[b][feat] && a < b);
      });
      std::vector<std::size_t> left(n_classes, 0), right = counts;
      for (std::size_t k = 0; k + 1 < m.size(); ++k) {
        ++left[y[m[k]]];
        --right[y[m[k]]];
        const double lo = X[m[k]][feat], hi = X[m[k + 1]][feat];
        if (lo == hi) continue;
        const double nl = static_cast<double>(k + 1);
        if (k + 1 < min_leaf || m.size() - k - 1 < min_leaf) continue;
        const double score = gini_sum(left, nl) + gini_sum(right, n - nl);
        if (score < best_score) {
          best_score = score;
          best_feature = feat;
          best_threshold = lo + (hi - lo) / 2;
          if (best_threshold >= hi) best_threshold = lo;
        }
      }
    }
    if (!best_feature) continue;
    std::vector<std::size_t> l, r;
    for (auto i : m) (X[i][*best_feature] <= best_threshold ? l : r).push_back(i);
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[task.node];
    node.feature = static_cast<int>(*best_feature);
    node.threshold = best_threshold;
    node.left = li;
    node.right = li + 1;
    stack.push_back({static_cast<std::size_t>(li + 1), std::move(r), task.depth + 1});
    stack.push_back({static_cast<std::size_t>(li), std::move(l), task.depth + 1});
  }
  return tree;
}

}  // namespace detail

// Tree t bootstraps with seed mix_seed(seed, t), so output is independent of
// thread count.
inline ForestModel train_random_forest(std::span<const std::vector<double>> X, std::span<const int> y,
                                       int n_classes, const ForestParams& p, std::uint64_t seed,
                                       unsigned threads = 0) {
  detail::check_training_input(X, y, n_classes);
  if (p.n_trees == 0) throw ConfigError("random forest needs at least one tree");
  ForestModel model;
  model.n_classes = n_classes;
  model.trees.resize(p.n_trees);
  parallel_for(
      p.n_trees,
      [&](std::size_t t) {
        Rng rng(mix_seed(seed, t));
        std::vector<std::size_t> sample(X.size());
        for (auto& s : sample) s = rng.index(X.size());
        model.trees[t] = detail::grow_tree(X, y, n_classes, std::move(sample), p, rng);
      },
      threads);
  return model;
}

// --- unified model -----------------------------------------------------------

enum class ModelKind { svc_rbf, random_forest };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::svc_rbf ? "svc_rbf" : "random_forest"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "svc_rbf" || s == "svc") return ModelKind::svc_rbf;
  if (s == "random_forest" || s == "rf") return ModelKind::random_forest;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

struct Hyper {
  ModelKind kind = ModelKind::svc_rbf;
  SvcParams svc;
  ForestParams forest;
};

inline nlohmann::json to_json(const Hyper& h) {
  if (h.kind == ModelKind::svc_rbf) return {{"C", h.svc.C}, {"gamma", h.svc.gamma}, {"tolerance", h.svc.tolerance}};
  return {{"n_trees", h.forest.n_trees},
          {"max_depth", h.forest.max_depth == 0 ? nlohmann::json(nullptr) : nlohmann::json(h.forest.max_depth)},
          {"min_leaf", h.forest.min_leaf}};
}

inline Hyper hyper_from_json(ModelKind kind, const nlohmann::json& j) {
  Hyper h;
  h.kind = kind;
  if (kind == ModelKind::svc_rbf) {
    h.svc.C = j.at("C").get<double>();
    h.svc.gamma = j.at("gamma").get<double>();
    h.svc.tolerance = j.value("tolerance", 1e-3);
  } else {
    h.forest.n_trees = j.at("n_trees").get<std::size_t>();
    const auto& depth = j.at("max_depth");
    h.forest.max_depth = depth.is_null() ? 0 : depth.get<std::size_t>();
    h.forest.min_leaf = j.value("min_leaf", std::size_t{1});
  }
  return h;
}

inline std::vector<Hyper> default_svc_grid() {
  std::vector<Hyper> grid;
  for (double c : {0.1, 1.0, 10.0, 100.0})
    for (double g : {0.001, 0.01, 0.1, 1.0}) grid.push_back({ModelKind::svc_rbf, {c, g, 1e-3}, {}});
  return grid;
}

inline std::vector<Hyper> default_forest_grid() {
  std::vector<Hyper> grid;
  for (std::size_t trees : {100, 300})
    for (std::size_t depth : {8, 16, 0}) grid.push_back({ModelKind::random_forest, {}, {trees, depth, 1}});
  return grid;
}

struct Model {
  Hyper hyper;
  std::vector<LabelClass> classes;  // index -> class
  features::Scaler scaler;
  std::uint64_t seed = 0;
  SvcModel svc;
  ForestModel forest;

  LabelClass predict(std::span<const double> raw) const {
    const auto x = scaler.transform(raw);
    const int c = hyper.kind == ModelKind::svc_rbf ? svc.predict(x) : forest.predict(x);
    return classes[static_cast<std::size_t>(c)];
  }

  std::vector<LabelClass> predict(std::span<const std::vector<double>> rows) const {
    std::vector<LabelClass> out;
    for (const auto& r : rows) out.push_back(predict(r));
    return out;
  }
};

// Fits the scaler on X, then the model on the scaled rows. Class indices
// follow enum order over the classes present.
inline Model train_model(const Hyper& h, std::span<const std::vector<double>> X, std::span<const LabelClass> y,
                         const std::vector<std::string>& names, std::uint64_t seed, unsigned threads = 0) {
  if (X.size() != y.size()) throw InputError("feature rows and labels differ in count");
  if (X.size() < 2) throw TrainingError("need at least 2 training examples");
  for (const auto& row : X)
    for (double v : row)
      if (!std::isfinite(v)) throw InputError("non-finite feature value");
  Model m;
  m.hyper = h;
  m.seed = seed;
  for (auto c : kAllClasses)
    if (std::find(y.begin(), y.end(), c) != y.end()) m.classes.push_back(c);
  if (m.classes.size() < 2) throw TrainingError("training data has a single class");
  m.scaler = features::Scaler::fit(X, names);
  std::vector<std::vector<double>> Z;
  for (const auto& r : X) Z.push_back(m.scaler.transform(r));
  std::vector<int> yi;
  for (auto c : y) yi.push_back(static_cast<int>(std::find(m.classes.begin(), m.classes.end(), c) - m.classes.begin()));
  const int k = static_cast<int>(m.classes.size());
  if (h.kind == ModelKind::svc_rbf) {
    m.svc = train_svc_rbf(Z, yi, k, h.svc);
  } else {
    m.forest = train_random_forest(Z, yi, k, h.forest, seed, threads);
  }
  return m;
}

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const Model& m, const std::string& config_hash = "") {
  using nlohmann::json;
  json classes = json::array();
  for (auto c : m.classes) classes.push_back(std::string(annotation::to_string(c)));
  json scaler = {{"input_names", m.scaler.input_names()},
                 {"kept", m.scaler.kept()},
                 {"mean", m.scaler.mean()},
                 {"stddev", m.scaler.stddev()}};
  json params;
  if (m.hyper.kind == ModelKind::svc_rbf) {
    json machines = json::array();
    for (const auto& b : m.svc.machines)
      machines.push_back({{"a", b.a}, {"b", b.b}, {"sv", b.sv}, {"coef", b.coef}, {"rho", b.rho}});
    params = {{"gamma", m.svc.gamma}, {"support_vectors", m.svc.support_vectors}, {"machines", machines}};
  } else {
    json trees = json::array();
    for (const auto& t : m.forest.trees) {
      json nodes = json::array();
      for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.label});
      trees.push_back(nodes);
    }
    params = {{"trees", trees}};
  }
  return {{"format_version", kModelFormatVersion},
          {"kind", std::string(to_string(m.hyper.kind))},
          {"hyperparameters", to_json(m.hyper)},
          {"feature_names", m.scaler.input_names()},
          {"class_order", classes},
          {"scaler", scaler},
          {"seed", m.seed},
          {"config_hash", config_hash},
          {"parameters", params}};
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) throw FormatError("unsupported model format_version");
    Model m;
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    m.hyper = hyper_from_json(kind, j.at("hyperparameters"));
    for (const auto& c : j.at("class_order")) m.classes.push_back(annotation::parse_label_class(c.get<std::string>()));
    const auto& s = j.at("scaler");
    m.scaler = features::Scaler::from_parts(s.at("input_names").get<std::vector<std::string>>(),
                                            s.at("kept").get<std::vector<std::size_t>>(),
                                            s.at("mean").get<std::vector<double>>(),
                                            s.at("stddev").get<std::vector<double>>());
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("parameters");
    const int k = static_cast<int>(m.classes.size());
    if (kind == ModelKind::svc_rbf) {
      m.svc.gamma = p.at("gamma").get<double>();
      m.svc.n_classes = k;
      m.svc.support_vectors = p.at("support_vectors").get<std::vector<std::vector<double>>>();
      for (const auto& b : p.at("machines")) {
        BinaryMachine bm{b.at("a").get<int>(), b.at("b").get<int>(), b.at("sv").get<std::vector<std::size_t>>(),
                         b.at("coef").get<std::vector<double>>(), b.at("rho").get<double>()};
        if (bm.a < 0 || bm.a >= k || bm.b < 0 || bm.b >= k || bm.sv.size() != bm.coef.size())
          throw FormatError("malformed SVC machine");
        for (auto i : bm.sv)
          if (i >= m.svc.support_vectors.size()) throw FormatError("support vector index out of range");
        m.svc.machines.push_back(std::move(bm));
      }
    } else {
      m.forest.n_classes = k;
      for (const auto& t : p.at("trees")) {
        Tree tree;
        for (const auto& n : t)
          tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                                n.at(4).get<int>()});
        const int size = static_cast<int>(tree.nodes.size());
        for (const auto& n : tree.nodes) {
          if (n.feature >= 0 && (n.left <= 0 || n.left >= size || n.right <= 0 || n.right >= size))
            throw FormatError("malformed tree node");
          if (n.label < 0 || n.label >= k) throw FormatError("tree label out of range");
        }
        m.forest.trees.push_back(std::move(tree));
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model artifact: ") + e.what());
  }
}

// --- grid search -------------------------------------------------------------

struct Dataset {
  std::vector<std::vector<double>> X;
  std::vector<LabelClass> y;
  std::vector<std::string> names;
};

// Called with the dataset row index each time grid search reads a row.
using ReadObserver = std::function<void(std::size_t)>;

struct GridCell {
  Hyper hyper;
  double score = 0.0;  // mean fold micro-F1
  std::vector<double> fold_scores;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;

  const Hyper& best_hyper() const { return cells[best].hyper; }
};

// Class-stratified folds: each class is shuffled and dealt round-robin.
inline std::vector<std::size_t> stratified_folds(std::span<const LabelClass> y, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> fold(y.size());
  Rng rng(seed);
  std::size_t next = 0;
  for (auto c : kAllClasses) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) members.push_back(i);
    rng.shuffle(members);
    for (auto i : members) fold[i] = next++ % k;
  }
  return fold;
}

// Exhaustive k-fold search over `grid` using only the rows in `train_idx`;
// the scaler is refit inside every fold. Ties keep the earlier grid entry.
inline GridResult grid_search(const std::vector<Hyper>& grid, const Dataset& data,
                              std::span<const std::size_t> train_idx, std::size_t folds, std::uint64_t seed,
                              const ReadObserver& observe = {}, unsigned threads = 0) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid");
  if (folds < 2) throw ConfigError("grid search needs at least 2 folds");
  if (train_idx.size() < folds) throw TrainingError("fewer training examples than folds");
  std::vector<std::vector<double>> X;
  std::vector<LabelClass> y;
  for (auto i : train_idx) {
    if (observe) observe(i);
    X.push_back(data.X.at(i));
    y.push_back(data.y.at(i));
  }
  const auto fold = stratified_folds(y, folds, seed);

  GridResult result;
  result.cells.resize(grid.size());
  const std::size_t jobs = grid.size() * folds;
  std::vector<double> scores(jobs);
  // Forests parallelize over cells here, so each trains its trees serially.
  parallel_for(
      jobs,
      [&](std::size_t job) {
        const std::size_t cell = job / folds, f = job % folds;
        std::vector<std::vector<double>> tx, vx;
        std::vector<LabelClass> ty, vy;
        for (std::size_t i = 0; i < X.size(); ++i) {
          if (fold[i] == f) {
            vx.push_back(X[i]);
            vy.push_back(y[i]);
          } else {
            tx.push_back(X[i]);
            ty.push_back(y[i]);
          }
        }
        const auto model = train_model(grid[cell], tx, ty, data.names, mix_seed(seed, f), 1);
        scores[job] = micro_f1(model.predict(vx), vy);
      },
      threads);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    auto& cell = result.cells[c];
    cell.hyper = grid[c];
    cell.fold_scores.assign(scores.begin() + static_cast<std::ptrdiff_t>(c * folds),
                            scores.begin() + static_cast<std::ptrdiff_t>((c + 1) * folds));
    cell.score = std::accumulate(cell.fold_scores.begin(), cell.fold_scores.end(), 0.0) / static_cast<double>(folds);
    if (cell.score > result.cells[result.best].score) result.best = c;
  }
  return result;
}

// --- evaluation report -------------------------------------------------------

struct EvalRow {
  std::string model;
  std::string feature_set;
  F1Mode mode = F1Mode::multiclass;
  std::string cls;  // "all" in multiclass mode
  double score = 0.0;
};

// One multiclass row plus a per_class row for every class.
inline std::vector<EvalRow> evaluate(const std::string& model, const std::string& feature_set,
                                     std::span<const LabelClass> pred, std::span<const LabelClass> gold) {
  std::vector<EvalRow> rows;
  rows.push_back({model, feature_set, F1Mode::multiclass, "all", micro_f1(pred, gold)});
  for (auto c : kAllClasses)
    rows.push_back({model, feature_set, F1Mode::per_class, std::string(annotation::to_string(c)),
                    micro_f1(pred, gold, F1Mode::per_class, c)});
  return rows;
}

inline std::string evaluation_csv(std::span<const EvalRow> rows, const std::string& comment = "") {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "model,feature_set,mode,class,score\n";
  for (const auto& r : rows)
    out += csv::join({r.model, r.feature_set, std::string(to_string(r.mode)), r.cls, format_double(r.score)});
  return out;
}

}  // namespace turncourt::classify
