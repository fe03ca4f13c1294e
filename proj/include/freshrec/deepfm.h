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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "freshrec/core.h"

namespace freshrec {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Shape of a DeepFM model. An empty `mlp_layers` disables the deep part;
/// otherwise hidden layers use ReLU and the last width must be 1.
struct DeepFMConfig {
  int num_slots = 2;
  int dim = 8;
  std::vector<int> mlp_layers{64, 32, 1};

  int input_width() const { return num_slots * dim; }
};

inline void validate(const DeepFMConfig& c) {
  if (c.num_slots < 1) throw ContractViolation("deepfm: num_slots must be >= 1");
  if (c.dim < 1) throw ContractViolation("deepfm: dim must be >= 1");
  for (int w : c.mlp_layers)
    if (w < 1) throw ContractViolation("deepfm: layer widths must be positive");
  if (!c.mlp_layers.empty() && c.mlp_layers.back() != 1)
    throw ContractViolation("deepfm: final MLP layer width must be 1");
}

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
};

/// Dense (non-embedding) parameters: the global bias and the MLP. First-order
/// weights live in width-1 sparse tables, not here.
template <typename Scalar>
struct DenseParams {
  Scalar bias = 0;
  std::vector<DenseLayer<Scalar>> layers;

  static DenseParams zeros(const DeepFMConfig& config) {
    validate(config);
    DenseParams p;
    int in = config.input_width();
    for (int out : config.mlp_layers) {
      p.layers.push_back({Matrix<Scalar>::Zero(out, in), Vector<Scalar>::Zero(out)});
      in = out;
    }
    return p;
  }

  /// He-uniform weights for hidden layers, zero biases, zero global bias.
  static DenseParams init(const DeepFMConfig& config, uint64_t seed) {
    DenseParams p = zeros(config);
    std::mt19937_64 rng(seed);
    for (auto& layer : p.layers) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        layer.weight.data()[i] = static_cast<Scalar>((2.0 * u - 1.0) * limit);
      }
    }
    return p;
  }

  /// Visits every parameter tensor as a flat mutable array, in a fixed order:
  /// global bias, then (weight, bias) for each layer.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(Eigen::Map<Vector<Scalar>>(&bias, 1));
    for (auto& layer : layers) {
      fn(Eigen::Map<Vector<Scalar>>(layer.weight.data(), layer.weight.size()));
      fn(Eigen::Map<Vector<Scalar>>(layer.bias.data(), layer.bias.size()));
    }
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn(Eigen::Map<const Vector<Scalar>>(&bias, 1));
    for (const auto& layer : layers) {
      fn(Eigen::Map<const Vector<Scalar>>(layer.weight.data(), layer.weight.size()));
      fn(Eigen::Map<const Vector<Scalar>>(layer.bias.data(), layer.bias.size()));
    }
  }

  /// All tensors concatenated in for_each_tensor order.
  Vector<Scalar> flatten() const {
    Vector<Scalar> out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index at = 0;
    for_each_tensor([&](const auto& t) {
      out.segment(at, t.size()) = t;
      at += t.size();
    });
    return out;
  }

  /// Inverse of flatten() for a model of shape `config`.
  static DenseParams unflatten(const DeepFMConfig& config, const Eigen::Ref<const Vector<Scalar>>& flat) {
    DenseParams p = zeros(config);
    if (static_cast<size_t>(flat.size()) != p.parameter_count()) {
      throw ContractViolation("dense unflatten: expected " + std::to_string(p.parameter_count()) +
                              " values, got " + std::to_string(flat.size()));
    }
    Eigen::Index at = 0;
    p.for_each_tensor([&](auto t) {
      t = flat.segment(at, t.size());
      at += t.size();
    });
    return p;
  }

  size_t parameter_count() const {
    size_t n = 0;
    for_each_tensor([&](const auto& t) { n += static_cast<size_t>(t.size()); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  template <typename Other>
  DenseParams<Other> cast() const {
    DenseParams<Other> out;
    out.bias = static_cast<Other>(bias);
    for (const auto& layer : layers)
      out.layers.push_back({layer.weight.template cast<Other>(), layer.bias.template cast<Other>()});
    return out;
  }

  friend bool operator==(const DenseParams& a, const DenseParams& b) {
    if (a.bias != b.bias || a.layers.size() != b.layers.size()) return false;
    for (size_t i = 0; i < a.layers.size(); ++i) {
      const auto& x = a.layers[i];
      const auto& y = b.layers[i];
      if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
          x.weight != y.weight || x.bias != y.bias)
        return false;
    }
    return true;
  }
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
struct Prediction {
  Scalar logit = 0;
  Scalar probability = Scalar(0.5);
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary log loss with p clamped to [1e-7, 1 - 1e-7].
template <typename Scalar>
Scalar log_loss(Scalar p, int label) {
  const Scalar lo = static_cast<Scalar>(kProbabilityClamp);
  const Scalar q = std::clamp(p, lo, Scalar(1) - lo);
  return label ? -std::log(q) : -std::log(Scalar(1) - q);
}

/// Second-order FM term for one example. Columns of `slots` are the per-slot
/// embedding vectors: 1/2 * sum_d [(sum_i v_id)^2 - sum_i v_id^2].
template <typename Derived>
typename Derived::Scalar fm_interaction(const Eigen::MatrixBase<Derived>& slots) {
  using Scalar = typename Derived::Scalar;
  const auto sum = slots.rowwise().sum().eval();
  return Scalar(0.5) * (sum.squaredNorm() - slots.squaredNorm());
}

/// Activations of a batch forward pass, kept for backward().
///
/// `embeddings` is (num_slots*dim) x batch: column b is the concatenation of
/// example b's slot vectors. `linear` is num_slots x batch.
template <typename Scalar>
struct ForwardPass {
  Matrix<Scalar> embeddings;
  Matrix<Scalar> linear;
  std::vector<Matrix<Scalar>> pre;   // pre-activation per MLP layer
  std::vector<Matrix<Scalar>> post;  // post-activation per hidden layer
  RowVector<Scalar> logits;
  RowVector<Scalar> probabilities;

  Eigen::Index batch_size() const { return embeddings.cols(); }
  Prediction<Scalar> prediction(Eigen::Index b) const { return {logits[b], probabilities[b]}; }
};

template <typename Scalar>
ForwardPass<Scalar> forward(const DeepFMConfig& config, const DenseParams<Scalar>& dense,
                            const Eigen::Ref<const Matrix<Scalar>>& embeddings,
                            const Eigen::Ref<const Matrix<Scalar>>& linear) {
  const Eigen::Index batch = embeddings.cols();
  if (embeddings.rows() != config.input_width() || linear.rows() != config.num_slots ||
      linear.cols() != batch) {
    throw ContractViolation("deepfm forward: expected embeddings " +
                            std::to_string(config.input_width()) + "xB and linear " +
                            std::to_string(config.num_slots) + "xB");
  }
  if (dense.layers.size() != config.mlp_layers.size()) {
    throw ContractViolation("deepfm forward: dense params do not match config");
  }
  ForwardPass<Scalar> pass;
  pass.embeddings = embeddings;
  pass.linear = linear;
  RowVector<Scalar> logits = linear.colwise().sum();
  logits.array() += dense.bias;
  for (Eigen::Index b = 0; b < batch; ++b) {
    Eigen::Map<const Matrix<Scalar>> slots(pass.embeddings.col(b).data(), config.dim,
                                           config.num_slots);
    logits[b] += fm_interaction(slots);
  }
  const Matrix<Scalar>* input = &pass.embeddings;
  for (size_t l = 0; l < dense.layers.size(); ++l) {
    const auto& layer = dense.layers[l];
    pass.pre.push_back((layer.weight * *input).colwise() + layer.bias);
    if (l + 1 < dense.layers.size()) {
      pass.post.push_back(pass.pre.back().cwiseMax(Scalar(0)));
      input = &pass.post.back();
    }
  }
  if (!pass.pre.empty()) logits += pass.pre.back().row(0);
  pass.logits = logits;
  pass.probabilities = logits.unaryExpr([](Scalar x) { return sigmoid(x); });
  return pass;
}

/// Single-example convenience: `slot_vectors` is dim x num_slots.
template <typename Scalar>
Prediction<Scalar> forward_one(const DeepFMConfig& config, const DenseParams<Scalar>& dense,
                               const Eigen::Ref<const Matrix<Scalar>>& slot_vectors,
                               const Eigen::Ref<const Vector<Scalar>>& linear_terms) {
  if (slot_vectors.rows() != config.dim || slot_vectors.cols() != config.num_slots) {
    throw ContractViolation("deepfm forward: slot matrix must be dim x num_slots");
  }
  const Matrix<Scalar> emb = slot_vectors.reshaped(config.input_width(), 1);
  auto pass = forward<Scalar>(config, dense, emb, linear_terms);
  return pass.prediction(0);
}

template <typename Scalar>
struct Gradients {
  DenseParams<Scalar> dense;
  Matrix<Scalar> embeddings;  // same layout as ForwardPass::embeddings
  Matrix<Scalar> linear;      // num_slots x batch
};

/// Gradients of the summed log loss over the batch. d loss / d logit is
/// p - y per example.
template <typename Scalar>
Gradients<Scalar> backward(const DeepFMConfig& config, const DenseParams<Scalar>& dense,
                           const ForwardPass<Scalar>& pass, std::span<const int> labels) {
  const Eigen::Index batch = pass.batch_size();
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw ContractViolation("deepfm backward: one label per example required");
  }
  RowVector<Scalar> dlogit(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    dlogit[b] = pass.probabilities[b] - static_cast<Scalar>(labels[static_cast<size_t>(b)]);
  }

  Gradients<Scalar> g;
  g.dense = DenseParams<Scalar>::zeros(config);
  g.dense.bias = dlogit.sum();
  g.linear = dlogit.replicate(config.num_slots, 1);
  g.embeddings.resize(config.input_width(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Eigen::Map<const Matrix<Scalar>> slots(pass.embeddings.col(b).data(), config.dim,
                                           config.num_slots);
    Eigen::Map<Matrix<Scalar>> grad(g.embeddings.col(b).data(), config.dim, config.num_slots);
    const Vector<Scalar> sum = slots.rowwise().sum();
    grad = (-slots).colwise() + sum;
    grad *= dlogit[b];
  }

  if (!dense.layers.empty()) {
    Matrix<Scalar> delta = dlogit;
    for (size_t l = dense.layers.size(); l-- > 0;) {
      const Matrix<Scalar>& input = l == 0 ? pass.embeddings : pass.post[l - 1];
      g.dense.layers[l].weight = delta * input.transpose();
      g.dense.layers[l].bias = delta.rowwise().sum();
      Matrix<Scalar> back = dense.layers[l].weight.transpose() * delta;
      if (l == 0) {
        g.embeddings += back;
      } else {
        delta = back.cwiseProduct((pass.pre[l - 1].array() > Scalar(0)).matrix().template cast<Scalar>());
      }
    }
  }
  return g;
}

}  // namespace freshrec
