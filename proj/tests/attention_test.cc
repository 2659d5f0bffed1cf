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

#include "defnam/attention.h"

#include <algorithm>

#include "defnam/errors.h"
#include "defnam/grad_check.h"
#include "defnam/retrieval.h"
#include "gtest/gtest.h"
#include "oracle.h"

namespace defnam {
namespace {

using oracle::Mat;

Tensor RandomTensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = UniformReal(rng, -scale, scale);
  return Tensor(std::move(shape), std::move(v));
}

std::vector<double> Values(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

ParamStore MakeStore(const AttentionDims& dims, std::uint64_t seed) {
  ParamStore s;
  Rng rng(seed);
  InitAttention("att", dims, s, rng);
  return s;
}

AttentionDims Dims(std::size_t heads, std::size_t head_dim, std::size_t d) {
  AttentionDims a;
  a.heads = heads;
  a.head_dim = head_dim;
  a.d_q = a.d_k = a.d_v = d;
  return a;
}

TEST(NoBiasLogits, HandEvaluatedSingleHead) {
  ParamStore s;
  s.Add("att.wq", Tensor::Matrix(1, 1, {1}));
  s.Add("att.wk", Tensor::Matrix(1, 1, {1}));
  s.Add("att.nb", Tensor::Matrix(1, 1, {1}));
  const AttentionLogits z =
      NoBiasLogits(Constant(Tensor::Matrix(1, 1, {2})),
                   Constant(Tensor::Matrix(1, 1, {3})), ParamScope(s), "att", 1);
  EXPECT_EQ(Values(z.per_frame.value()), (std::vector<double>{2, 6}));
  EXPECT_EQ(Values(z.pooled.value()), (std::vector<double>{2, 6}));
}

TEST(NoBiasLogits, MatchesPerHeadOracle) {
  Rng rng(1);
  for (std::size_t heads : {1, 2, 4}) {
    const AttentionDims dims = Dims(heads, 3, 6);
    const ParamStore s = MakeStore(dims, heads);
    const Tensor q = RandomTensor({5, 6}, rng);
    const Tensor keys = RandomTensor({4, 6}, rng);
    const AttentionLogits z =
        NoBiasLogits(Constant(q), Constant(keys), ParamScope(s), "att", heads);
    const Mat ref = oracle::NoBiasLogitsRef(
        Mat(q), Mat(keys), oracle::Get(s, "att.wq"), oracle::Get(s, "att.wk"),
        oracle::Get(s, "att.nb"), heads);
    EXPECT_LT(oracle::MaxAbsDiff(Values(z.per_frame.value()), ref.v), 1e-13);
    EXPECT_EQ(Values(z.pooled.value()),
              oracle::MaxOverFrames(Mat(z.per_frame.value())));
  }
}

TEST(NoBiasLogits, SingleFramePoolsToItself) {
  Rng rng(2);
  const ParamStore s = MakeStore(Dims(1, 4, 4), 2);
  const AttentionLogits z =
      NoBiasLogits(Constant(RandomTensor({1, 4}, rng)),
                   Constant(RandomTensor({3, 4}, rng)), ParamScope(s), "att", 1);
  EXPECT_EQ(Values(z.per_frame.value()), Values(z.pooled.value()));
}

TEST(NoBiasLogits, NoKeysLeavesOnlyNoBias) {
  Rng rng(3);
  const ParamStore s = MakeStore(Dims(2, 2, 4), 3);
  const AttentionLogits z =
      NoBiasLogits(Constant(RandomTensor({3, 4}, rng)),
                   Constant(Tensor::Zeros({0, 4})), ParamScope(s), "att", 2);
  EXPECT_EQ(z.per_frame.shape(), (Shape{3, 1}));
  EXPECT_EQ(z.pooled.shape(), (Shape{1}));
}

TEST(NoBiasLogits, FrameDuplicationAndPermutation) {
  Rng rng(4);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 4);
  const Tensor q = RandomTensor({4, 6}, rng);
  const Var keys = Constant(RandomTensor({5, 6}, rng));
  const std::vector<double> base = Values(
      NoBiasLogits(Constant(q), keys, ParamScope(s), "att", 2).pooled.value());
  const Var dup = ConcatRows(Constant(q), SliceRows(Constant(q), 1, 3));
  EXPECT_EQ(Values(NoBiasLogits(dup, keys, ParamScope(s), "att", 2).pooled.value()),
            base);
  const std::vector<int> perm = {2, 0, 3, 1};
  const Var shuffled = GatherRows(Constant(q), perm);
  EXPECT_EQ(
      Values(NoBiasLogits(shuffled, keys, ParamScope(s), "att", 2).pooled.value()),
      base);
}

TEST(NoBiasLogits, PositiveScalingPreservesRankingAndMask) {
  Rng rng(5);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = RandomTensor({3, 6}, rng);
    const Var keys = Constant(RandomTensor({7, 6}, rng));
    const double alpha = UniformReal(rng, 0.1, 10.0);
    const AttentionLogits a =
        NoBiasLogits(Constant(q), keys, ParamScope(s), "att", 2);
    const AttentionLogits b =
        NoBiasLogits(Scale(Constant(q), alpha), keys, ParamScope(s), "att", 2);
    const std::vector<double> za = Values(a.per_frame.value());
    const std::vector<double> zb = Values(b.per_frame.value());
    for (std::size_t i = 0; i < za.size(); ++i) {
      EXPECT_NEAR(zb[i], alpha * za[i], 1e-12 * (1 + std::abs(zb[i])));
    }
    EXPECT_EQ(ActiveMask(a.per_frame.value()), ActiveMask(b.per_frame.value()));
    EXPECT_EQ(PerFrameTopK(a.per_frame.value(), 3),
              PerFrameTopK(b.per_frame.value(), 3));
    EXPECT_EQ(GlobalTopK(a.pooled.value().values(), 3).indices,
              GlobalTopK(b.pooled.value().values(), 3).indices);
  }
}

TEST(NoBiasLogits, AppendingAKeyKeepsExistingLogits) {
  Rng rng(6);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 6);
  const Var q = Constant(RandomTensor({3, 6}, rng));
  const Tensor keys = RandomTensor({4, 6}, rng);
  const Tensor more = RandomTensor({1, 6}, rng);
  const Tensor a = NoBiasLogits(q, Constant(keys), ParamScope(s), "att", 2)
                       .per_frame.value();
  const Tensor b =
      NoBiasLogits(q, ConcatRows(Constant(keys), Constant(more)), ParamScope(s),
                   "att", 2)
          .per_frame.value();
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(a.at(t, c), b.at(t, c));
}

TEST(NoBiasLogits, DimensionMismatch) {
  const ParamStore s = MakeStore(Dims(1, 2, 4), 7);
  EXPECT_THROW(NoBiasLogits(Constant(Tensor::Zeros({2, 3})),
                            Constant(Tensor::Zeros({1, 4})), ParamScope(s), "att",
                            1),
               DimensionError);
}

struct WpCase {
  Tensor q, ew;
  std::vector<int> lengths;
};

WpCase RandomWpCase(Rng& rng, std::size_t T, std::size_t N, std::size_t L,
                    std::size_t d) {
  WpCase c;
  c.q = RandomTensor({T, d}, rng);
  c.ew = RandomTensor({N, L, d}, rng);
  for (std::size_t n = 0; n < N; ++n)
    c.lengths.push_back(1 + static_cast<int>(UniformIndex(rng, L)));
  return c;
}

Mat WpOracle(const WpCase& c, const ParamStore& s, std::size_t heads) {
  const std::size_t N = c.ew.dim(0), L = c.ew.dim(1), d = c.ew.dim(2);
  const Mat keys(c.ew.Reshaped({N * L, d}));
  const Mat z = oracle::NoBiasLogitsRef(Mat(c.q), keys, oracle::Get(s, "att.wq"),
                                        oracle::Get(s, "att.wk"),
                                        oracle::Get(s, "att.nb"), heads);
  std::vector<bool> keep(1 + N * L, true);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = c.lengths[n]; j < L; ++j) keep[1 + n * L + j] = false;
  return oracle::AttendRef(z, keep, oracle::Mul(keys, oracle::Get(s, "att.wv")),
                           oracle::Get(s, "att.wo"));
}

TEST(WpAttention, MatchesOracle) {
  Rng rng(8);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 8);
  for (int trial = 0; trial < 10; ++trial) {
    const WpCase c = RandomWpCase(rng, 4, 3, 5, 6);
    const AttentionOutput out = WpAttention(Constant(c.q), Constant(c.ew),
                                            c.lengths, ParamScope(s), "att", 2);
    EXPECT_LT(oracle::MaxAbsDiff(Values(out.context.value()), WpOracle(c, s, 2).v),
              1e-13);
  }
}

TEST(WpAttention, EmptySetGivesZeroContext) {
  Rng rng(9);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 9);
  const AttentionOutput out =
      WpAttention(Constant(RandomTensor({3, 6}, rng)),
                  Constant(Tensor::Zeros({0, 4, 6})), std::vector<int>{},
                  ParamScope(s), "att", 2);
  EXPECT_EQ(out.context.shape(), (Shape{3, 6}));
  for (double v : Values(out.context.value())) EXPECT_EQ(v, 0.0);
}

TEST(WpAttention, SaturatedLogitSelectsOnePiece) {
  Rng rng(10);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 10);
  const WpCase c = RandomWpCase(rng, 3, 2, 3, 6);
  const std::size_t target = 1 + 1 * 3 + 0;  // phrase 1, first piece
  std::vector<double> boost(3 * (1 + 6), 0.0);
  for (std::size_t t = 0; t < 3; ++t) boost[t * 7 + target] = 1e6;
  const Tensor fm({3, 7}, boost);
  const AttentionOutput out =
      WpAttention(Constant(c.q), Constant(c.ew), c.lengths, ParamScope(s), "att",
                  2, nullptr, &fm);
  const Mat ew(c.ew.Reshaped({6, 6}));
  Mat row(1, 6);
  for (std::size_t k = 0; k < 6; ++k) row.v[k] = ew(3, k);
  const Mat expect =
      oracle::Mul(oracle::Mul(row, oracle::Get(s, "att.wv")), oracle::Get(s, "att.wo"));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 6; ++k)
      EXPECT_NEAR(out.context.value().at(t, k), expect.v[k], 1e-12);
}

TEST(WpAttention, PadPositionsNeverMatter) {
  Rng rng(11);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 11);
  WpCase c = RandomWpCase(rng, 4, 3, 4, 6);
  c.lengths = {1, 2, 4};
  const Tensor base = WpAttention(Constant(c.q), Constant(c.ew), c.lengths,
                                  ParamScope(s), "att", 2)
                          .context.value();
  std::vector<double> ew = Values(c.ew);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t j = c.lengths[n]; j < 4; ++j)
      for (std::size_t k = 0; k < 6; ++k) ew[(n * 4 + j) * 6 + k] = 50.0 * (k + 1);
  const AttentionOutput out =
      WpAttention(Constant(c.q), Constant(Tensor(c.ew.shape(), ew)), c.lengths,
                  ParamScope(s), "att", 2);
  EXPECT_EQ(Values(out.context.value()), Values(base));
  const Tensor probs = SoftmaxLastAxis(out.logits.per_frame).value();
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t j = c.lengths[n]; j < 4; ++j)
        EXPECT_EQ(probs.at(t, 1 + n * 4 + j), 0.0);
}

TEST(WpAttention, AllActiveGateIsBitIdentical) {
  Rng rng(12);
  const ParamStore s = MakeStore(Dims(2, 3, 6), 12);
  const WpCase c = RandomWpCase(rng, 4, 3, 4, 6);
  const std::vector<bool> all(3, true), none(3, false);
  const Tensor plain = WpAttention(Constant(c.q), Constant(c.ew), c.lengths,
                                   ParamScope(s), "att", 2)
                           .context.value();
  const Tensor gated = WpAttention(Constant(c.q), Constant(c.ew), c.lengths,
                                   ParamScope(s), "att", 2, &all)
                           .context.value();
  EXPECT_EQ(Values(plain), Values(gated));
  const Tensor zero = WpAttention(Constant(c.q), Constant(c.ew), c.lengths,
                                  ParamScope(s), "att", 2, &none)
                          .context.value();
  for (double v : Values(zero)) EXPECT_EQ(v, 0.0);
}

TEST(WpAttention, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  const ParamStore s = MakeStore(Dims(2, 2, 4), 13);
  const WpCase c = RandomWpCase(rng, 3, 2, 3, 4);
  const Tensor w = RandomTensor({3, 4}, rng);
  auto loss = [&](const Var& ctx) { return Sum(Mul(ctx, Constant(w))); };
  EXPECT_LT(FiniteDiffCheck(
                [&](const Var& q) {
                  return loss(WpAttention(q, Constant(c.ew), c.lengths,
                                          ParamScope(s), "att", 2)
                                  .context);
                },
                c.q),
            1e-7);
  EXPECT_LT(FiniteDiffCheck(
                [&](const Var& ew) {
                  return loss(WpAttention(Constant(c.q), ew, c.lengths,
                                          ParamScope(s), "att", 2)
                                  .context);
                },
                c.ew),
            1e-7);
  for (const char* name : {"att.wq", "att.wk", "att.nb", "att.wv", "att.wo"}) {
    EXPECT_LT(FiniteDiffCheck(
                  [&](const Var& p) {
                    ParamScope scope(s);
                    scope.Bind(name, p);
                    return loss(WpAttention(Constant(c.q), Constant(c.ew),
                                            c.lengths, scope, "att", 2)
                                    .context);
                  },
                  s.Get(name)),
              1e-7)
        << name;
  }
}

TEST(ApplyBias, Contract) {
  Rng rng(14);
  const Var x = Constant(RandomTensor({3, 4}, rng));
  const Var c = Constant(RandomTensor({3, 4}, rng));
  EXPECT_EQ(Values(ApplyBias(x, c, 0.0).value()), Values(x.value()));
  EXPECT_EQ(Values(ApplyBias(x, Constant(Tensor::Zeros({3, 4})), 0.6).value()),
            Values(x.value()));
  const Tensor b = ApplyBias(x, c, 0.6).value();
  for (std::size_t i = 0; i < 12; ++i)
    EXPECT_DOUBLE_EQ(b[i], x.value()[i] + 0.6 * c.value()[i]);
  EXPECT_THROW(ApplyBias(x, Constant(Tensor::Zeros({2, 4})), 1.0),
               DimensionError);
}

}  // namespace
}  // namespace defnam
