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

#include <gtest/gtest.h>

#include <random>

#include "freshrec/adam.h"
#include "freshrec/deepfm.h"
#include "freshrec/metrics.h"
#include "oracles.h"

namespace freshrec {
namespace {

using Md = Matrix<double>;
using Vd = Vector<double>;

TEST(DeepFMTest, ZeroInputsGiveBias) {
  DeepFMConfig c{3, 4, {8, 1}};
  auto dense = DenseParams<double>::zeros(c);
  dense.bias = 0.75;
  auto p = forward_one<double>(c, dense, Md::Zero(4, 3), Vd::Zero(3));
  EXPECT_DOUBLE_EQ(p.logit, 0.75);
  EXPECT_DOUBLE_EQ(p.probability, sigmoid(0.75));
}

TEST(DeepFMTest, HandComputedInteraction) {
  DeepFMConfig c{2, 1, {}};
  auto dense = DenseParams<double>::zeros(c);
  Md v(1, 2);
  v << 2.0, 3.0;
  auto p = forward_one<double>(c, dense, v, Vd::Zero(2));
  EXPECT_DOUBLE_EQ(p.logit, 6.0);
}

TEST(DeepFMTest, InteractionMatchesPairwiseSum) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int slots = 2 + static_cast<int>(rng() % 6);
    const int dim = 1 + static_cast<int>(rng() % 8);
    Md v(dim, slots);
    std::vector<std::vector<double>> cols(slots, std::vector<double>(dim));
    for (int s = 0; s < slots; ++s)
      for (int d = 0; d < dim; ++d) cols[s][d] = v(d, s) = n(rng);
    EXPECT_NEAR(fm_interaction(v), oracle::pairwise_fm(cols), 1e-6);
  }
}

TEST(DeepFMTest, ShapeMismatchIsContractViolation) {
  DeepFMConfig c{2, 3, {4, 1}};
  auto dense = DenseParams<double>::zeros(c);
  EXPECT_THROW(forward<double>(c, dense, Md::Zero(5, 1), Md::Zero(2, 1)), ContractViolation);
  EXPECT_THROW(validate(DeepFMConfig{2, 3, {4, 2}}), ContractViolation);
}

TEST(DeepFMTest, BackwardLogitGradientIsPMinusY) {
  DeepFMConfig c{2, 2, {}};
  auto dense = DenseParams<double>::zeros(c);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int label : {0, 1}) {
    dense.bias = n(rng);
    Md emb = Md::Random(4, 1);
    Md lin = Md::Random(2, 1);
    auto pass = forward<double>(c, dense, emb, lin);
    std::vector<int> labels{label};
    auto g = backward<double>(c, dense, pass, labels);
    EXPECT_NEAR(g.dense.bias, pass.probabilities[0] - label, 1e-15);
    EXPECT_NEAR(g.linear(0, 0), pass.probabilities[0] - label, 1e-15);
  }
}

TEST(DeepFMTest, PerfectPredictionHasNearZeroGradients) {
  DeepFMConfig c{2, 2, {4, 1}};
  auto dense = DenseParams<double>::init(c, 5);
  dense.bias = 40.0;  // p rounds to 1
  Md emb = 0.1 * Md::Ones(4, 1);
  auto pass = forward<double>(c, dense, emb, Md::Zero(2, 1));
  std::vector<int> labels{1};
  auto g = backward<double>(c, dense, pass, labels);
  EXPECT_LT(std::abs(g.dense.bias), 1e-12);
  EXPECT_LT(g.embeddings.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DeepFMTest, GradientsMatchFiniteDifferences) {
  DeepFMConfig c{3, 2, {5, 3, 1}};
  std::mt19937_64 rng(11);
  auto dense = DenseParams<double>::init(c, 21);
  dense.bias = 0.1;
  for (auto& layer : dense.layers) layer.bias = Vd::Random(layer.bias.size()) * 0.1;
  const int batch = 4;
  Md emb = Md::Random(c.input_width(), batch);
  Md lin = 0.3 * Md::Random(c.num_slots, batch);
  std::vector<int> labels{1, 0, 0, 1};

  auto loss = [&] {
    auto pass = forward<double>(c, dense, emb, lin);
    double total = 0;
    for (int b = 0; b < batch; ++b) total += log_loss(pass.probabilities[b], labels[b]);
    return total;
  };
  auto pass = forward<double>(c, dense, emb, lin);
  auto g = backward<double>(c, dense, pass, labels);

  auto check = [&](double analytic, double* param) {
    const double numeric = oracle::central_difference(loss, param, 1e-4);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
    EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-3)
        << "analytic " << analytic << " numeric " << numeric;
  };
  check(g.dense.bias, &dense.bias);
  for (size_t l = 0; l < dense.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < dense.layers[l].weight.size(); ++i)
      check(g.dense.layers[l].weight.data()[i], dense.layers[l].weight.data() + i);
    for (Eigen::Index i = 0; i < dense.layers[l].bias.size(); ++i)
      check(g.dense.layers[l].bias[i], dense.layers[l].bias.data() + i);
  }
  for (Eigen::Index i = 0; i < emb.size(); ++i) check(g.embeddings.data()[i], emb.data() + i);
  for (Eigen::Index i = 0; i < lin.size(); ++i) check(g.linear.data()[i], lin.data() + i);
}

TEST(LogLossTest, NonNegativeAndZeroOnlyAtClampedCertainty) {
  EXPECT_GE(log_loss(0.3, 1), 0.0);
  EXPECT_GE(log_loss(0.3, 0), 0.0);
  EXPECT_NEAR(log_loss(1.0, 1), -std::log(1.0 - 1e-7), 1e-15);
  EXPECT_NEAR(log_loss(0.0, 1), -std::log(1e-7), 1e-9);
  EXPECT_TRUE(std::isfinite(log_loss(0.0, 1)));
}

TEST(AucTest, PerfectSeparation) {
  std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc(s, y), 1.0);
}

TEST(AucTest, AllTiedIsHalf) {
  std::vector<double> s(10, 0.3);
  std::vector<int> y{0, 1, 0, 1, 1, 0, 0, 0, 1, 0};
  EXPECT_DOUBLE_EQ(auc(s, y), 0.5);
}

TEST(AucTest, SingleClassIsUndefined) {
  std::vector<double> s{0.1, 0.2};
  std::vector<int> y{1, 1};
  EXPECT_THROW(auc(s, y), UndefinedMetric);
}

TEST(AucTest, MatchesPairCountingWithTies) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(50);
    std::vector<int> y(50);
    for (int i = 0; i < 50; ++i) {
      s[i] = static_cast<double>(rng() % 12);  // force ties
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(auc(s, y), oracle::pairwise_auc(s, y), 1e-9);
  }
}

TEST(AucTest, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> s(300), t(300);
  std::vector<int> y(300);
  for (int i = 0; i < 300; ++i) {
    s[i] = n(rng);
    t[i] = std::exp(3 * s[i]) + 7;
    y[i] = n(rng) + s[i] > 0;
  }
  EXPECT_DOUBLE_EQ(auc(s, y), auc(t, y));
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  DeepFMConfig c{1, 1, {}};
  auto p = DenseParams<double>::zeros(c);
  auto g = DenseParams<double>::zeros(c);
  g.bias = 0.37;
  auto st = AdamState<double>::zeros(c);
  adam_step(p, g, st, AdamOptions{0.01});
  EXPECT_NEAR(p.bias, -0.01, 1e-7);
  EXPECT_EQ(st.step, 1);
}

}  // namespace
}  // namespace freshrec
