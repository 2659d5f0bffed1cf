// Copyright 2026 The defnam Authors.
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

#include "defnam/losses.h"

#include <cmath>

#include "defnam/errors.h"
#include "defnam/grad_check.h"
#include "gtest/gtest.h"
#include "oracle.h"

namespace defnam {
namespace {

BiasLabels Labels(std::vector<double> d) { return BiasLabels{std::move(d)}; }

double CeRef(const std::vector<double>& z, const std::vector<double>& target) {
  const std::vector<double> p = oracle::SoftmaxRef(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (target[i] > 0) loss -= target[i] * std::log(p[i]);
  return loss;
}

TEST(PhraseCeLoss, Examples) {
  EXPECT_NEAR(PhraseCeLoss(Constant(Tensor::Vector({0, 0})), Labels({0, 1}))
                  .value()
                  .item(),
              std::log(2.0), 1e-15);
  EXPECT_LT(PhraseCeLoss(Constant(Tensor::Vector({50, 0, 0})), Labels({1, 0, 0}))
                .value()
                .item(),
            1e-20);
  EXPECT_NEAR(PhraseCeLoss(Constant(Tensor::Vector({0, 0, std::log(3.0)})),
                           Labels({0, 0, 1}))
                  .value()
                  .item(),
              -std::log(3.0 / 5.0), 1e-15);
  EXPECT_NEAR(-std::log(3.0 / 5.0), 0.5108, 1e-4);
  EXPECT_THROW(PhraseCeLoss(Constant(Tensor::Vector({0, 0})), Labels({1, 0, 0})),
               ValidationError);
}

TEST(PhraseCeLoss, ShiftInvariant) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(5), shifted(5);
    for (std::size_t i = 0; i < 5; ++i) {
      z[i] = UniformReal(rng, -3, 3);
      shifted[i] = z[i] + 17.5;
    }
    const BiasLabels l = Labels({0, 0.5, 0, 0.5, 0});
    EXPECT_NEAR(PhraseCeLoss(Constant(Tensor::Vector(z)), l).value().item(),
                PhraseCeLoss(Constant(Tensor::Vector(shifted)), l).value().item(),
                1e-12);
  }
}

TEST(PerPhraseAvg, Examples) {
  auto run = [](std::vector<double> zw, std::vector<int> lengths,
                std::size_t L) {
    const Tensor t = PerPhraseAvg(Constant(Tensor::Vector(zw)), lengths, L).value();
    return std::vector<double>(t.values().begin(), t.values().end());
  };
  EXPECT_EQ(run({1, 3}, {2}, 2), (std::vector<double>{2.0}));
  EXPECT_EQ(run({4, 1e9}, {1}, 2), (std::vector<double>{4.0}));
  EXPECT_EQ(run({6, -7, 2, 4}, {1, 2}, 2), (std::vector<double>{6, 3}));
  EXPECT_THROW(run({1, 2}, {0}, 2), ValidationError);
}

TEST(PerPhraseAvg, PadLogitsIgnored) {
  Rng rng(2);
  const std::vector<int> lengths = {1, 3, 2};
  std::vector<double> zw(12);
  for (double& x : zw) x = UniformReal(rng, -1, 1);
  const Tensor base = PerPhraseAvg(Constant(Tensor::Vector(zw)), lengths, 4).value();
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> fuzzed = zw;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t j = lengths[n]; j < 4; ++j)
        fuzzed[n * 4 + j] = UniformReal(rng, -1e6, 1e6);
    const Tensor t = PerPhraseAvg(Constant(Tensor::Vector(fuzzed)), lengths, 4).value();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(t[i], base[i]);
  }
}

TEST(WpCeLoss, Examples) {
  // Degenerate averaging: a two-class problem.
  EXPECT_NEAR(WpCeLoss(Constant(Tensor::Vector({0.3, 1.2})), std::vector<int>{1},
                       1, Labels({0, 1}))
                  .value()
                  .item(),
              CeRef({0.3, 1.2}, {0, 1}), 1e-15);
  // All equal: uniform over 1 + N.
  EXPECT_NEAR(WpCeLoss(Constant(Tensor::Vector({2, 2, 2, 2, 2})),
                       std::vector<int>{1, 2}, 2, Labels({0, 1, 0}))
                  .value()
                  .item(),
              std::log(3.0), 1e-15);
  // Lengths [1, 2] with a PAD logit that must not count.
  // Averages: phrase 0 -> 1.0, phrase 1 -> (0.5 + 2.5) / 2 = 1.5.
  const double expect = -std::log(std::exp(1.5) /
                                  (std::exp(0.2) + std::exp(1.0) + std::exp(1.5)));
  EXPECT_NEAR(WpCeLoss(Constant(Tensor::Vector({0.2, 1.0, 99.0, 0.5, 2.5})),
                       std::vector<int>{1, 2}, 2, Labels({0, 0, 1}))
                  .value()
                  .item(),
              expect, 1e-14);
  EXPECT_THROW(WpCeLoss(Constant(Tensor::Vector({0.2, 1.0})),
                        std::vector<int>{1, 2}, 2, Labels({0, 0, 1})),
               ValidationError);
}

TEST(WpCeLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> zw(1 + 3 * 4);
    for (double& x : zw) x = UniformReal(rng, -2, 2);
    const std::vector<int> lengths = {1 + static_cast<int>(UniformIndex(rng, 4)),
                                      1 + static_cast<int>(UniformIndex(rng, 4)),
                                      1 + static_cast<int>(UniformIndex(rng, 4))};
    const BiasLabels l = Labels({0.25, 0.25, 0.0, 0.5});
    EXPECT_LT(FiniteDiffCheck(
                  [&](const Var& z) { return WpCeLoss(z, lengths, 4, l); },
                  Tensor::Vector(zw)),
              1e-8);
  }
}

TEST(CeLosses, ConfidentNoBiasGoesToZero) {
  const BiasLabels nb = Labels({1, 0, 0});
  EXPECT_LT(PhraseCeLoss(Constant(Tensor::Vector({1e3, 1, 2})), nb).value().item(),
            1e-300);
  EXPECT_LT(WpCeLoss(Constant(Tensor::Vector({1e3, 1, 2, 3, 4})),
                     std::vector<int>{2, 2}, 2, nb)
                .value()
                .item(),
            1e-300);
}

TEST(SurrogateAsrLoss, PerfectAndRandomHeads) {
  ParamStore s;
  // Identity-like head: logits = 40 * x, x one-hot on the target.
  std::vector<double> w(3 * 3, 0.0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 40.0;
  s.Add("asr.w", Tensor::Matrix(3, 3, w));
  s.Add("asr.b", Tensor::Zeros({3}));
  const Tensor x = Tensor::Matrix(2, 3, {1, 0, 0, 0, 0, 1});
  const std::vector<int> targets = {0, 2};
  EXPECT_LT(SurrogateAsrLoss(Constant(x), targets, ParamScope(s)).value().item(),
            1e-16);

  Rng rng(4);
  const std::size_t V = 64, d = 16, T = 200;
  double mean = 0.0;
  const int batches = 20;
  for (int b = 0; b < batches; ++b) {
    ParamStore r;
    InitAsrHead(d, V, r, rng);
    std::vector<double> xv(T * d);
    for (double& e : xv) e = UniformReal(rng, -1, 1);
    std::vector<int> tg(T);
    for (int& t : tg) t = static_cast<int>(UniformIndex(rng, V));
    mean += SurrogateAsrLoss(Constant(Tensor({T, d}, xv)), tg, ParamScope(r))
                .value()
                .item();
  }
  mean /= batches;
  EXPECT_NEAR(mean, std::log(static_cast<double>(V)),
              0.1 * std::log(static_cast<double>(V)));
}

TEST(TotalLoss, PresetFormulas) {
  const Var a = Constant(Tensor::Scalar(1.7));
  const Var p = Constant(Tensor::Scalar(0.9));
  const Var w = Constant(Tensor::Scalar(2.3));
  EXPECT_EQ(TotalLoss(a, p, w, 0.0, 0.0).total_value, 1.7);
  EXPECT_EQ(TotalLoss(a, p, w, 0.1, 0.0).total_value, 1.7 + 0.1 * 0.9);
  EXPECT_EQ(TotalLoss(a, p, w, 0.1, 0.1).total_value, 1.7 + 0.1 * 0.9 + 0.1 * 2.3);
  const LossBundle b = TotalLoss(a, p, w, 0.1, 0.1);
  EXPECT_EQ(b.l_asr, 1.7);
  EXPECT_EQ(b.l_p, 0.9);
  EXPECT_EQ(b.l_w, 2.3);
  EXPECT_THROW(TotalLoss(a, p, w, -0.1, 0.0), ConfigError);
  EXPECT_THROW(TotalLoss(a, p, w, 0.0, -1.0), ConfigError);
}

TEST(TotalLoss, GradientsReachEveryBranch) {
  Tape tape;
  const Var a = tape.Leaf(Tensor::Scalar(1.0));
  const Var p = tape.Leaf(Tensor::Scalar(2.0));
  const Var w = tape.Leaf(Tensor::Scalar(3.0));
  tape.Backward(TotalLoss(a, p, w, 0.1, 0.2).total);
  EXPECT_EQ(tape.Grad(a).item(), 1.0);
  EXPECT_EQ(tape.Grad(p).item(), 0.1);
  EXPECT_EQ(tape.Grad(w).item(), 0.2);
}

}  // namespace
}  // namespace defnam
