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

#include <cmath>
#include <cstdint>

#include "freshrec/deepfm.h"

namespace freshrec {

/// Adam over DenseParams. Moments share the parameter layout.
template <typename Scalar>
struct AdamState {
  DenseParams<Scalar> first;
  DenseParams<Scalar> second;
  int64_t step = 0;

  static AdamState zeros(const DeepFMConfig& config) {
    return {DenseParams<Scalar>::zeros(config), DenseParams<Scalar>::zeros(config), 0};
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Elementwise Adam update of `p` with moments `m`, `v` at 1-based `step`.
/// Bias correction is folded into the step size.
template <typename Scalar>
void adam_update(Eigen::Ref<Vector<Scalar>> p, const Eigen::Ref<const Vector<Scalar>>& g,
                 Eigen::Ref<Vector<Scalar>> m, Eigen::Ref<Vector<Scalar>> v, int64_t step,
                 const AdamOptions& opt) {
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ContractViolation("adam: parameter and gradient shapes differ");
  }
  const Scalar b1 = static_cast<Scalar>(opt.beta1);
  const Scalar b2 = static_cast<Scalar>(opt.beta2);
  const Scalar lr = static_cast<Scalar>(
      opt.learning_rate * std::sqrt(1.0 - std::pow(opt.beta2, static_cast<double>(step))) /
      (1.0 - std::pow(opt.beta1, static_cast<double>(step))));
  const Scalar eps = static_cast<Scalar>(opt.epsilon);
  // Scalar loop: Eigen's packet sqrt is approximate for float, which would
  // make results depend on how the vector is sliced across shards.
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (Scalar(1) - b1) * g[i];
    v[i] = b2 * v[i] + (Scalar(1) - b2) * g[i] * g[i];
    p[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
  }
}

template <typename Scalar>
void adam_step(DenseParams<Scalar>& params, const DenseParams<Scalar>& grads,
               AdamState<Scalar>& state, const AdamOptions& opt) {
  ++state.step;
  // Walk the four tensor lists in lockstep.
  std::vector<Eigen::Map<Vector<Scalar>>> p, m, v;
  std::vector<Eigen::Map<const Vector<Scalar>>> g;
  params.for_each_tensor([&](auto t) { p.push_back(t); });
  state.first.for_each_tensor([&](auto t) { m.push_back(t); });
  state.second.for_each_tensor([&](auto t) { v.push_back(t); });
  grads.for_each_tensor([&](auto t) { g.push_back(t); });
  if (p.size() != g.size() || p.size() != m.size()) {
    throw ContractViolation("adam: parameter and gradient shapes differ");
  }
  for (size_t i = 0; i < p.size(); ++i) adam_update<Scalar>(p[i], g[i], m[i], v[i], state.step, opt);
}

}  // namespace freshrec
