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

#include "defnam/pipelines.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "defnam/errors.h"
#include "defnam/grad_check.h"
#include "defnam/retrieval.h"

namespace defnam {
namespace {

CorpusParams SmallCorpusParams() {
  CorpusParams p;
  p.n_utts = 24;
  p.n_phrases = 10;
  p.pool_size = 300;
  return p;
}

const Corpus& SmallCorpus() {
  static const Corpus c = GenerateCorpus(3, SmallCorpusParams());
  return c;
}

PipelineConfig SmallConfig(const std::string& preset) {
  PipelineConfig c = PipelineConfig::Preset(preset);
  c.enc.d = 16;
  c.enc.d_q = 16;
  c.enc.ffn_hidden = 24;
  c.enc.dan_layers = 2;
  c.att_head_dim = 8;
  return c;
}

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() /
          ("defnam_pipelines_test_" + name))
      .string();
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

bool AllZero(const Tensor& t) {
  for (double v : t.values())
    if (v != 0.0) return false;
  return true;
}

TEST(PipelineConfig, Presets) {
  const PipelineConfig d1 = PipelineConfig::Preset("d1");
  EXPECT_EQ(d1.variant, Variant::kDeferred);
  EXPECT_DOUBLE_EQ(d1.sampling_p, 0.3);
  EXPECT_DOUBLE_EQ(d1.lambda_p, 0.0);
  EXPECT_DOUBLE_EQ(d1.lambda_w, 0.0);
  const PipelineConfig d2 = PipelineConfig::Preset("d2");
  EXPECT_DOUBLE_EQ(d2.sampling_p, 0.0);
  EXPECT_DOUBLE_EQ(d2.lambda_p, 0.1);
  EXPECT_DOUBLE_EQ(d2.lambda_w, 0.0);
  const PipelineConfig d3 = PipelineConfig::Preset("d3");
  EXPECT_DOUBLE_EQ(d3.lambda_p, 0.1);
  EXPECT_DOUBLE_EQ(d3.lambda_w, 0.1);
  EXPECT_EQ(PipelineConfig::Preset("b1").enc.ctx_layers, 3u);
  EXPECT_EQ(PipelineConfig::Preset("b2").enc.ctx_layers, 1u);
  EXPECT_EQ(PipelineConfig::Preset("dualmode").variant, Variant::kDualMode);
  EXPECT_THROW(PipelineConfig::Preset("d9"), ConfigError);
  EXPECT_THROW(ParseFilter("m3"), ConfigError);
  EXPECT_EQ(ParseFilter("M2"), FilterMode::kM2);
  PipelineConfig bad = d3;
  bad.sampling_p = 1.5;
  EXPECT_THROW(bad.Validate(), ConfigError);
}

TEST(CreateModel, ParameterLayoutPerVariant) {
  const Model d = CreateModel(SmallConfig("d3"), SmallCorpus().vocab, 1);
  const Model b = CreateModel(SmallConfig("b2"), SmallCorpus().vocab, 1);
  EXPECT_TRUE(d.params.Has("dan.0.w"));
  EXPECT_FALSE(b.params.Has("dan.0.w"));
  for (const char* n : {"pa.wq", "wa.wq", "ctx.0.wq", "query.noise",
                        "asr.w", "wp_embedding"}) {
    EXPECT_TRUE(d.params.Has(n)) << n;
    EXPECT_TRUE(b.params.Has(n)) << n;
  }
  EXPECT_EQ(d.params.Get("query.noise").shape(), (Shape{1, 16}));
}

class DeferredInference : public ::testing::Test {
 protected:
  DeferredInference()
      : model_(CreateModel(SmallConfig("d3"), SmallCorpus().vocab, 11)) {}
  const Utterance& Utt(std::size_t i) const {
    return SmallCorpus().utterances[i];
  }
  Model model_;
};

TEST_F(DeferredInference, ExhaustiveSelectionMatchesReference) {
  for (std::size_t u = 0; u < 4; ++u) {
    const PhraseSet ps = SmallCorpus().PhrasesFor(Utt(u));
    InferenceOptions o;
    o.k_p = ps.size() + 5;
    const InferenceTrace t = DeferredInfer(Utt(u).audio_proxy, ps, model_, o);
    EXPECT_EQ(t.selected.size(), ps.size());
    EXPECT_EQ(t.context_encoded, ps.size());
    const Tensor ref =
        DeferredReference(Utt(u).audio_proxy, ps, model_, o.lambda);
    EXPECT_LT(MaxAbsDiff(t.biased, ref), 1e-12);
  }
}

TEST_F(DeferredInference, SelectsGlobalTopK) {
  const PhraseSet ps = SmallCorpus().PhrasesFor(Utt(0));
  InferenceOptions o;
  o.k_p = 3;
  const InferenceTrace t = DeferredInfer(Utt(0).audio_proxy, ps, model_, o);
  ASSERT_EQ(t.selected.size(), 3u);
  EXPECT_EQ(t.context_encoded, 3u);
  EXPECT_TRUE(std::is_sorted(t.selected.begin(), t.selected.end()));
  double min_sel = 1e300;
  for (double s : t.selected_scores) min_sel = std::min(min_sel, s);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (std::find(t.selected.begin(), t.selected.end(), i) == t.selected.end())
      EXPECT_LE(t.pooled[1 + i], min_sel);
  }
  ASSERT_EQ(t.stages.size(), 5u);
  EXPECT_EQ(t.stages[0].stage, kStageQuery);
  EXPECT_EQ(t.stages[1].stage, kStageLight);
  EXPECT_EQ(t.stages[2].stage, kStagePhraseAttention);
  EXPECT_EQ(t.stages[3].stage, kStageContext);
  EXPECT_EQ(t.stages[4].stage, kStageWpAttention);
  for (const StageTiming& s : t.stages) EXPECT_GE(s.ms, 0.0);
}

TEST_F(DeferredInference, SelectionDependsOnlyOnScoresNotOrder) {
  const PhraseSet ps = SmallCorpus().PhrasesFor(Utt(1));
  std::vector<std::size_t> rev(ps.size());
  std::iota(rev.rbegin(), rev.rend(), 0);
  InferenceOptions o;
  o.k_p = 4;
  const InferenceTrace a = DeferredInfer(Utt(1).audio_proxy, ps, model_, o);
  const InferenceTrace b =
      DeferredInfer(Utt(1).audio_proxy, ps.Select(rev), model_, o);
  std::vector<std::size_t> mapped;
  for (std::size_t i : b.selected) mapped.push_back(rev[i]);
  std::sort(mapped.begin(), mapped.end());
  EXPECT_EQ(mapped, a.selected);
  EXPECT_LT(MaxAbsDiff(a.biased, b.biased), 1e-12);
}

TEST_F(DeferredInference, M1KeepsOnlyActivePhrases) {
  for (std::size_t u = 0; u < 6; ++u) {
    const PhraseSet ps = SmallCorpus().PhrasesFor(Utt(u));
    InferenceOptions o;
    o.k_p = 6;
    o.filter = FilterMode::kM1;
    const InferenceTrace m1 = DeferredInfer(Utt(u).audio_proxy, ps, model_, o);
    o.filter = FilterMode::kNone;
    const InferenceTrace none =
        DeferredInfer(Utt(u).audio_proxy, ps, model_, o);
    std::vector<std::size_t> expect;
    for (std::size_t i : none.selected)
      if (none.active[i]) expect.push_back(i);
    EXPECT_EQ(m1.selected, expect);
    EXPECT_EQ(m1.context_encoded, expect.size());
  }
}

TEST_F(DeferredInference, M2GatesValuesOfInactivePhrases) {
  for (std::size_t u = 0; u < 6; ++u) {
    const PhraseSet ps = SmallCorpus().PhrasesFor(Utt(u));
    InferenceOptions o;
    o.k_p = 6;
    o.filter = FilterMode::kM2;
    const InferenceTrace m2 = DeferredInfer(Utt(u).audio_proxy, ps, model_, o);
    o.filter = FilterMode::kNone;
    const InferenceTrace none =
        DeferredInfer(Utt(u).audio_proxy, ps, model_, o);
    EXPECT_EQ(m2.selected, none.selected);
    const bool all_active =
        std::all_of(m2.selected.begin(), m2.selected.end(),
                    [&](std::size_t i) { return m2.active[i]; });
    if (all_active) {
      EXPECT_EQ(MaxAbsDiff(m2.biased, none.biased), 0.0);
    }
    // Independent recomputation with an explicit gate.
    const ParamScope p(model_.params);
    const PhraseSet sub = ps.Select(m2.selected);
    std::vector<bool> gate;
    for (std::size_t i : m2.selected) gate.push_back(m2.active[i]);
    const Var x = QueryEncode(Utt(u).audio_proxy, p, model_.config.enc);
    const Var ew = ContextEncode(sub, p, model_.config.enc);
    const Var c = WpAttention(x, ew, sub.lengths, p, "wa",
                              model_.config.att_heads, &gate)
                      .context;
    EXPECT_LT(MaxAbsDiff(ApplyBias(x, c, o.lambda).value(), m2.biased), 1e-12);
  }
}

TEST_F(DeferredInference, M2WithAllTrueMaskIsIdentity) {
  const PhraseSet ps = SmallCorpus().PhrasesFor(Utt(2));
  const ParamScope p(model_.params);
  const Var x = QueryEncode(Utt(2).audio_proxy, p, model_.config.enc);
  const Var ew = ContextEncode(ps, p, model_.config.enc);
  const std::vector<bool> all(ps.size(), true);
  const Tensor gated =
      WpAttention(x, ew, ps.lengths, p, "wa", 2, &all).context.value();
  const Tensor plain = WpAttention(x, ew, ps.lengths, p, "wa", 2).context.value();
  EXPECT_EQ(MaxAbsDiff(gated, plain), 0.0);
}

TEST_F(DeferredInference, EmptyPhraseSetLeavesFeaturesUnbiased) {
  PhraseSet empty;
  empty.max_len = 16;
  const InferenceTrace t =
      DeferredInfer(Utt(0).audio_proxy, empty, model_, InferenceOptions{});
  EXPECT_TRUE(t.selected.empty());
  EXPECT_EQ(t.context_encoded, 0u);
  EXPECT_TRUE(AllZero(t.context));
  EXPECT_EQ(MaxAbsDiff(t.biased, t.features), 0.0);
}

TEST_F(DeferredInference, RejectsZeroK) {
  const PhraseSet ps = SmallCorpus().PhrasesFor(Utt(0));
  InferenceOptions o;
  o.k_p = 0;
  EXPECT_THROW(DeferredInfer(Utt(0).audio_proxy, ps, model_, o), ConfigError);
}

class DualModeInference : public ::testing::Test {
 protected:
  DualModeInference()
      : model_(CreateModel(SmallConfig("b2"), SmallCorpus().vocab, 12)) {}
  Model model_;
};

TEST_F(DualModeInference, LargeKMatchesUnrestrictedAttention) {
  for (std::size_t u = 0; u < 4; ++u) {
    const Utterance& utt = SmallCorpus().utterances[u];
    const PhraseSet ps = SmallCorpus().PhrasesFor(utt);
    InferenceOptions o;
    o.k_p = ps.size();
    const InferenceTrace t = DualModeInfer(utt.audio_proxy, ps, model_, o);
    EXPECT_EQ(t.selected.size(), ps.size());
    EXPECT_EQ(t.context_encoded, ps.size());
    const ParamScope p(model_.params);
    const Var x = QueryEncode(utt.audio_proxy, p, model_.config.enc);
    const DualEncodings e = DualModeContextEncode(ps, p, model_.config.enc);
    const Var c = WpAttention(x, e.wp, ps.lengths, p, "wa", 2).context;
    EXPECT_LT(MaxAbsDiff(ApplyBias(x, c, o.lambda).value(), t.biased), 1e-12);
  }
}

TEST_F(DualModeInference, ChunkSizeDoesNotChangeOutput) {
  const Utterance& utt = SmallCorpus().utterances[5];
  const PhraseSet ps = SmallCorpus().PhrasesFor(utt);
  InferenceOptions o;
  o.k_p = 2;
  const InferenceTrace a = DualModeInfer(utt.audio_proxy, ps, model_, o);
  o.chunk = 3;
  const InferenceTrace b = DualModeInfer(utt.audio_proxy, ps, model_, o);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_LT(MaxAbsDiff(a.biased, b.biased), 1e-12);
}

TEST_F(DualModeInference, PerFrameSelectionRestrictsEachFrame) {
  const Utterance& utt = SmallCorpus().utterances[6];
  const PhraseSet ps = SmallCorpus().PhrasesFor(utt);
  InferenceOptions o;
  o.k_p = 1;
  const InferenceTrace t = DualModeInfer(utt.audio_proxy, ps, model_, o);
  // The union of per-frame winners never exceeds one phrase per frame.
  EXPECT_GE(t.selected.size(), 1u);
  EXPECT_LE(t.selected.size(), std::min(ps.size(), utt.audio_proxy.size()));
  // Oracle: frame t attends only over its own top-1 phrase.
  const ParamScope p(model_.params);
  const Var x = QueryEncode(utt.audio_proxy, p, model_.config.enc);
  const DualEncodings e = DualModeContextEncode(ps, p, model_.config.enc);
  const AttentionLogits lg = NoBiasLogits(x, e.phrase, p, "pa", 2, nullptr);
  const auto lists = PerFrameTopK(lg.per_frame.value(), 1);
  const Tensor mask = FrameSelectionMask(lists, ps.size(), ps.max_len);
  const Var c = WpAttention(x, e.wp, ps.lengths, p, "wa", 2, nullptr, &mask)
                    .context;
  EXPECT_LT(MaxAbsDiff(ApplyBias(x, c, o.lambda).value(), t.biased), 1e-12);
}

TEST_F(DualModeInference, EmptyPhraseSet) {
  PhraseSet empty;
  const Utterance& utt = SmallCorpus().utterances[0];
  const InferenceTrace t =
      DualModeInfer(utt.audio_proxy, empty, model_, InferenceOptions{});
  EXPECT_TRUE(t.selected.empty());
  EXPECT_TRUE(AllZero(t.context));
}

std::vector<TrainExample> Batch(std::size_t first, std::size_t n) {
  std::vector<TrainExample> out;
  for (std::size_t i = first; i < first + n; ++i)
    out.push_back(MakeExample(SmallCorpus(), SmallCorpus().utterances[i],
                              LabelRule::kLongestMatch));
  return out;
}

bool PrefixGradsZero(const StepResult& r, const std::string& prefix) {
  for (const auto& [name, g] : r.grads)
    if (name.rfind(prefix, 0) == 0 && !AllZero(g)) return false;
  return true;
}

TEST(Training, D1TotalIsAsrLoss) {
  Model m = CreateModel(SmallConfig("d1"), SmallCorpus().vocab, 2);
  const auto batch = Batch(0, 3);
  const ParamScope p(m.params);
  for (const TrainExample& ex : batch) {
    for (bool branch : {false, true}) {
      const LossBundle l = UtteranceLoss(ex, m, p, branch);
      EXPECT_EQ(l.total_value, l.l_asr);
      EXPECT_GT(l.l_p, 0.0);
      EXPECT_GT(l.l_w, 0.0);
    }
  }
}

TEST(Training, TrimmedPaddingLeavesLossUnchanged) {
  for (const char* preset : {"d3", "b2"}) {
    const Model m = CreateModel(SmallConfig(preset), SmallCorpus().vocab, 3);
    const Utterance& utt = SmallCorpus().utterances[4];
    TrainExample full = MakeExample(SmallCorpus(), utt, LabelRule::kLongestMatch);
    full.phrases = SmallCorpus().PhrasesFor(utt);
    const TrainExample trimmed =
        MakeExample(SmallCorpus(), utt, LabelRule::kLongestMatch);
    ASSERT_LT(trimmed.phrases.max_len, full.phrases.max_len);
    const ParamScope p(m.params);
    for (bool branch : {false, true}) {
      const LossBundle a = UtteranceLoss(full, m, p, branch);
      const LossBundle b = UtteranceLoss(trimmed, m, p, branch);
      EXPECT_EQ(a.total_value, b.total_value) << preset;
      EXPECT_EQ(a.l_p, b.l_p) << preset;
      EXPECT_EQ(a.l_w, b.l_w) << preset;
    }
  }
}

TEST(Training, SamplingOneNeverUsesWpContext) {
  PipelineConfig c = SmallConfig("d1");
  c.sampling_p = 1.0;
  Model m = CreateModel(c, SmallCorpus().vocab, 2);
  Optimizer opt(c.lr, c.momentum);
  Rng rng(1);
  const auto batch = Batch(0, 4);
  for (int s = 0; s < 3; ++s) {
    const StepResult r = TrainStep(batch, m, opt, rng);
    EXPECT_EQ(r.phrase_context_count, 4u);
    EXPECT_TRUE(PrefixGradsZero(r, "wa."));
    EXPECT_TRUE(PrefixGradsZero(r, "ctx."));
    EXPECT_FALSE(PrefixGradsZero(r, "pa."));
  }
}

TEST(Training, SamplingZeroNeverUsesPhraseContext) {
  PipelineConfig c = SmallConfig("d1");
  c.sampling_p = 0.0;
  Model m = CreateModel(c, SmallCorpus().vocab, 2);
  Optimizer opt(c.lr, c.momentum);
  Rng rng(1);
  const StepResult r = TrainStep(Batch(0, 4), m, opt, rng);
  EXPECT_EQ(r.phrase_context_count, 0u);
  EXPECT_TRUE(PrefixGradsZero(r, "pa."));
  EXPECT_TRUE(PrefixGradsZero(r, "dan."));
  EXPECT_FALSE(PrefixGradsZero(r, "wa."));
}

TEST(Training, D3StepReachesEveryBranch) {
  Model m = CreateModel(SmallConfig("d3"), SmallCorpus().vocab, 4);
  Optimizer opt(0.05, 0.9);
  Rng rng(1);
  const StepResult r = TrainStep(Batch(0, 2), m, opt, rng);
  for (const char* prefix :
       {"pa.", "wa.", "dan.", "ctx.", "query.", "asr.", "wp_embedding"}) {
    EXPECT_FALSE(PrefixGradsZero(r, prefix)) << prefix;
  }
  for (const auto& [name, g] : r.grads)
    for (double v : g.values()) ASSERT_TRUE(std::isfinite(v)) << name;
}

TEST(Training, UtteranceLossGradientMatchesFiniteDifferences) {
  const Model m = CreateModel(SmallConfig("d3"), SmallCorpus().vocab, 5);
  const TrainExample ex = Batch(7, 1)[0];
  for (const char* name : {"pa.nb", "wa.wo", "dan.1.b", "asr.b"}) {
    const ScalarFn f = [&](const Var& x) {
      ParamScope scope(m.params);
      scope.Bind(name, x);
      return UtteranceLoss(ex, m, scope, false).total;
    };
    EXPECT_LT(FiniteDiffCheck(f, m.params.Get(name), 1e-6), 1e-6) << name;
  }
}

TEST(Training, StepIsBatchMeanAndThreadInvariant) {
  const auto batch = Batch(0, 4);
  Model a = CreateModel(SmallConfig("d3"), SmallCorpus().vocab, 6);
  Model b = a;
  Optimizer oa(0.05, 0.9), ob(0.05, 0.9);
  Rng ra(9), rb(9);
  const StepResult x = TrainStep(batch, a, oa, ra, 1);
  const StepResult y = TrainStep(batch, b, ob, rb, 3);
  EXPECT_EQ(x.total, y.total);
  for (const auto& [name, g] : x.grads)
    EXPECT_EQ(MaxAbsDiff(g, y.grads.at(name)), 0.0) << name;
  double mean = 0.0;
  const Model fresh = CreateModel(SmallConfig("d3"), SmallCorpus().vocab, 6);
  const ParamScope p(fresh.params);
  for (const TrainExample& ex : batch)
    mean += UtteranceLoss(ex, fresh, p, false).total_value / 4.0;
  EXPECT_NEAR(x.total, mean, 1e-12);
}

TEST(Training, MomentumUpdate) {
  ParamStore s;
  s.Add("w", Tensor({2}, {1.0, 2.0}));
  Optimizer opt(0.5, 0.9);
  opt.Apply(s, {{"w", Tensor({2}, {1.0, -2.0})}});
  EXPECT_DOUBLE_EQ(s.Get("w").values()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.Get("w").values()[1], 3.0);
  opt.Apply(s, {{"w", Tensor({2}, {1.0, -2.0})}});
  // v = 0.9 * 1 + 1 = 1.9
  EXPECT_DOUBLE_EQ(s.Get("w").values()[0], 0.5 - 0.5 * 1.9);
}

TEST(Training, D3LossDecreasesOnToyCorpus) {
  CorpusParams cp = SmallCorpusParams();
  cp.n_utts = 50;
  const Corpus toy = GenerateCorpus(17, cp);
  constexpr std::size_t kSteps = 100, kWindow = 10;
  std::vector<double> total(kSteps, 0.0), asr(kSteps, 0.0);
  for (std::uint64_t seed : {1, 2, 3}) {
    Model m = CreateModel(SmallConfig("d3"), toy.vocab, seed);
    TrainOptions o;
    o.steps = kSteps;
    o.seed = seed;
    const auto rows = Train(m, toy, o);
    ASSERT_EQ(rows.size(), kSteps);
    for (std::size_t i = 0; i < kSteps; ++i) {
      total[i] += rows[i].total / 3.0;
      asr[i] += rows[i].l_asr / 3.0;
    }
  }
  // Means over successive 10-step windows.
  auto window = [&](const std::vector<double>& v, std::size_t w) {
    double s = 0.0;
    for (std::size_t i = w * kWindow; i < (w + 1) * kWindow; ++i) s += v[i];
    return s / kWindow;
  };
  for (std::size_t w = 1; w < kSteps / kWindow; ++w) {
    EXPECT_LT(window(total, w), window(total, w - 1)) << "window " << w;
  }
  EXPECT_LT(window(asr, kSteps / kWindow - 1), window(asr, 0));
}

TEST(Training, SameSeedSameTrajectory) {
  TrainOptions o;
  o.steps = 5;
  Model a = CreateModel(SmallConfig("d2"), SmallCorpus().vocab, 8);
  Model b = CreateModel(SmallConfig("d2"), SmallCorpus().vocab, 8);
  EXPECT_EQ(LossCsv(Train(a, SmallCorpus(), o)),
            LossCsv(Train(b, SmallCorpus(), o)));
}

TEST(Checkpoint, RoundTripPreservesInference) {
  Model m = CreateModel(SmallConfig("d3"), SmallCorpus().vocab, 9);
  TrainOptions o;
  o.steps = 3;
  Train(m, SmallCorpus(), o);
  const std::string path = TempPath("rt.ckpt");
  SaveCheckpoint(m, path);
  const Model r = LoadCheckpoint(path, Variant::kDeferred);
  EXPECT_EQ(r.params.Names(), m.params.Names());
  for (const std::string& n : m.params.Names())
    EXPECT_EQ(MaxAbsDiff(r.params.Get(n), m.params.Get(n)), 0.0) << n;
  EXPECT_EQ(r.vocab.Pieces(), m.vocab.Pieces());
  EXPECT_EQ(r.config.name, "d3");
  const Utterance& utt = SmallCorpus().utterances[0];
  const PhraseSet ps = SmallCorpus().PhrasesFor(utt);
  InferenceOptions io;
  io.k_p = 4;
  EXPECT_EQ(MaxAbsDiff(DeferredInfer(utt.audio_proxy, ps, m, io).biased,
                       DeferredInfer(utt.audio_proxy, ps, r, io).biased),
            0.0);
}

TEST(Checkpoint, Failures) {
  const Model m = CreateModel(SmallConfig("b2"), SmallCorpus().vocab, 10);
  const std::string path = TempPath("bad.ckpt");
  SaveCheckpoint(m, path);
  try {
    LoadCheckpoint(path, Variant::kDeferred);
    FAIL() << "variant mismatch accepted";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("config mismatch"), std::string::npos);
  }
  EXPECT_NO_THROW(LoadCheckpoint(path, Variant::kDualMode));

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  const std::string cut = TempPath("cut.ckpt");
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 40);
  EXPECT_THROW(LoadCheckpoint(cut), LoadError);
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, 30);
  EXPECT_THROW(LoadCheckpoint(cut), LoadError);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x5a;
  std::ofstream(cut, std::ios::binary) << flipped;
  EXPECT_THROW(LoadCheckpoint(cut), LoadError);
  std::string edited = bytes;
  const std::size_t lr = edited.find("\"lr\":");
  ASSERT_NE(lr, std::string::npos);
  edited[lr + 5] = edited[lr + 5] == '9' ? '8' : '9';
  std::ofstream(cut, std::ios::binary) << edited;
  EXPECT_THROW(LoadCheckpoint(cut), LoadError);
  std::ofstream(cut, std::ios::binary) << "not a checkpoint at all";
  EXPECT_THROW(LoadCheckpoint(cut), LoadError);
  EXPECT_THROW(LoadCheckpoint(TempPath("missing.ckpt")), IoError);
}

}  // namespace
}  // namespace defnam
