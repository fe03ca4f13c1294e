// Copyright 2026 The freshrec Authors.
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

// Independent reference computations used to freeze expected values and to
// cross-check the production code paths. Nothing here calls into the code
// under test.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

namespace freshrec::oracle {

/// Scalar-loop Adagrad, one coordinate at a time, in double.
struct ScalarAdagrad {
  std::vector<double> weights;
  std::vector<double> accum;

  void step(const std::vector<double>& grad, double lr, double eps = 1e-8) {
    for (size_t i = 0; i < weights.size(); ++i) {
      accum[i] = accum[i] + grad[i] * grad[i];
      weights[i] = weights[i] - lr * grad[i] / (std::sqrt(accum[i]) + eps);
    }
  }
};

/// AUC by counting every positive/negative pair.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Sum over slot pairs i < j of <v_i, v_j>; `slots[i]` is slot i's vector.
inline double pairwise_fm(const std::vector<std::vector<double>>& slots) {
  double total = 0.0;
  for (size_t i = 0; i < slots.size(); ++i)
    for (size_t j = i + 1; j < slots.size(); ++j)
      for (size_t d = 0; d < slots[i].size(); ++d) total += slots[i][d] * slots[j][d];
  return total;
}

/// Central difference of f at x along coordinate `*param`.
template <typename F>
double central_difference(F&& f, double* param, double h) {
  const double saved = *param;
  *param = saved + h;
  const double up = f();
  *param = saved - h;
  const double down = f();
  *param = saved;
  return (up - down) / (2.0 * h);
}

/// Expected number of occupied bins after throwing n balls into m bins.
inline double expected_occupied(double n, double m) {
  return m * (1.0 - std::pow(1.0 - 1.0 / m, n));
}

/// Variance of the occupied-bin count (exact, for n balls into m bins).
inline double occupied_variance(double n, double m) {
  const double a = std::pow(1.0 - 1.0 / m, n);
  const double b = std::pow(1.0 - 2.0 / m, n);
  return m * (m - 1.0) * b + m * a - m * m * a * a;
}

/// Two-sided normal-approximation interval for a binomial proportion.
struct Interval {
  double lo;
  double hi;
};
inline Interval binomial_interval(double p, double n, double z) {
  const double half = z * std::sqrt(p * (1.0 - p) / n);
  return {p - half, p + half};
}

}  // namespace freshrec::oracle
