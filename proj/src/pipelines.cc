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

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "defnam/errors.h"
#include "defnam/retrieval.h"
#include "json.hpp"

namespace defnam {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr char kMagic[8] = {'D', 'N', 'A', 'M', 'C', 'K', 'P', 'T'};

double MsSince(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

std::vector<double> ToVector(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::string VariantName(Variant v) {
  return v == Variant::kDualMode ? "dual_mode" : "deferred";
}

Variant ParseVariant(const std::string& s) {
  if (s == "dual_mode" || s == "dualmode") return Variant::kDualMode;
  if (s == "deferred") return Variant::kDeferred;
  throw ConfigError("unknown variant '" + s + "'");
}

std::string FilterName(FilterMode f) {
  switch (f) {
    case FilterMode::kM1:
      return "m1";
    case FilterMode::kM2:
      return "m2";
    default:
      return "none";
  }
}

FilterMode ParseFilter(const std::string& s) {
  if (s == "none") return FilterMode::kNone;
  if (s == "m1" || s == "M1") return FilterMode::kM1;
  if (s == "m2" || s == "M2") return FilterMode::kM2;
  throw ConfigError("unknown filter mode '" + s + "'");
}

void PipelineConfig::Validate() const {
  if (k_p < 1) throw ConfigError("PipelineConfig: k_p must be >= 1");
  if (!(sampling_p >= 0.0 && sampling_p <= 1.0)) {
    throw ConfigError("PipelineConfig: sampling_p outside [0, 1]");
  }
  if (!(lambda_p >= 0.0) || !(lambda_w >= 0.0)) {
    throw ConfigError("PipelineConfig: loss weights must be non-negative");
  }
  if (!(lr > 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("PipelineConfig: bad optimizer settings");
  }
  if (max_len < 1) throw ConfigError("PipelineConfig: max_len must be >= 1");
  if (att_heads == 0 || att_head_dim == 0) {
    throw ConfigError("PipelineConfig: attention heads and width must be > 0");
  }
  enc.Validate();
}

AttentionDims PipelineConfig::Attention() const {
  AttentionDims a;
  a.heads = att_heads;
  a.head_dim = att_head_dim;
  a.d_q = enc.d_q;
  a.d_k = enc.d;
  a.d_v = enc.d;
  return a;
}

PipelineConfig PipelineConfig::Preset(const std::string& name) {
  PipelineConfig c;
  c.name = name;
  if (name == "d1") {
    c.sampling_p = 0.3;
    c.lambda_p = 0.0;
    c.lambda_w = 0.0;
  } else if (name == "d2") {
    c.lambda_p = 0.1;
    c.lambda_w = 0.0;
  } else if (name == "d3") {
    c.lambda_p = 0.1;
    c.lambda_w = 0.1;
  } else if (name == "b1" || name == "b2" || name == "dualmode") {
    c.variant = Variant::kDualMode;
    c.sampling_p = 0.3;
    c.lambda_p = 0.0;
    c.lambda_w = 0.0;
    c.enc.ctx_layers = name == "b1" ? 3 : 1;
  } else {
    throw ConfigError("unknown config preset '" + name + "'");
  }
  return c;
}

Model CreateModel(const PipelineConfig& config, const Vocabulary& vocab,
                  std::uint64_t seed) {
  Model m;
  m.config = config;
  m.config.enc.vocab_size = vocab.size();
  m.config.Validate();
  m.vocab = vocab;
  Rng rng(MixSeed(seed, 0));
  const EncoderDims& e = m.config.enc;
  InitEmbedding(e, m.params, rng);
  if (m.config.variant == Variant::kDeferred) InitDan(e, m.params, rng);
  InitContextEncoder(e, m.params, rng);
  InitQueryEncoder(e, m.params, rng);
  InitAttention("pa", m.config.Attention(), m.params, rng);
  InitAttention("wa", m.config.Attention(), m.params, rng);
  InitAsrHead(e.d_q, e.vocab_size, m.params, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Inference

InferenceOptions InferenceOptions::From(const PipelineConfig& config) {
  InferenceOptions o;
  o.k_p = config.k_p;
  o.filter = config.filter;
  o.lambda = config.lambda;
  return o;
}

double InferenceTrace::StageMs(const std::string& stage) const {
  for (const StageTiming& s : stages) {
    if (s.stage == stage) return s.ms;
  }
  return 0.0;
}

InferenceTrace DeferredInfer(std::span<const int> audio,
                             const PhraseSet& phrases, const Model& model,
                             const InferenceOptions& options) {
  if (options.k_p < 1) throw ConfigError("DeferredInfer: k_p must be >= 1");
  const PipelineConfig& cfg = model.config;
  const ParamScope p(model.params);
  InferenceTrace trace;

  auto start = Clock::now();
  const Var x = QueryEncode(audio, p, cfg.enc);
  trace.stages.push_back({kStageQuery, MsSince(start)});

  start = Clock::now();
  const Var ep = LightPhraseEncode(phrases, p, cfg.enc.dan_layers);
  trace.stages.push_back({kStageLight, MsSince(start)});

  start = Clock::now();
  const AttentionLogits logits =
      NoBiasLogits(x, ep, p, "pa", cfg.att_heads);
  trace.pooled = ToVector(logits.pooled.value());
  RetrievalResult sel = GlobalTopK(trace.pooled, options.k_p);
  trace.active = ActiveMask(logits.per_frame.value());
  if (options.filter == FilterMode::kM1) sel = FilterM1(sel, trace.active);
  trace.selected = sel.indices;
  trace.selected_scores = sel.scores;
  trace.stages.push_back({kStagePhraseAttention, MsSince(start)});

  start = Clock::now();
  const PhraseSet sub = phrases.Select(sel.indices);
  const Var ew = ContextEncode(sub, p, cfg.enc);
  trace.context_encoded = sub.size();
  trace.stages.push_back({kStageContext, MsSince(start)});

  start = Clock::now();
  std::vector<bool> gate;
  for (std::size_t i : sel.indices) gate.push_back(trace.active[i]);
  const Var c = WpAttention(x, ew, sub.lengths, p, "wa", cfg.att_heads,
                            options.filter == FilterMode::kM2 ? &gate : nullptr)
                    .context;
  const Var biased = ApplyBias(x, c, options.lambda);
  trace.stages.push_back({kStageWpAttention, MsSince(start)});

  trace.features = x.value();
  trace.context = c.value();
  trace.biased = biased.value();
  return trace;
}

InferenceTrace DualModeInfer(std::span<const int> audio,
                             const PhraseSet& phrases, const Model& model,
                             const InferenceOptions& options) {
  if (options.k_p < 1) throw ConfigError("DualModeInfer: k_p must be >= 1");
  const PipelineConfig& cfg = model.config;
  const ParamScope p(model.params);
  const std::size_t N = phrases.size(), L = phrases.max_len, d = cfg.enc.d;
  InferenceTrace trace;

  auto start = Clock::now();
  const Var x = QueryEncode(audio, p, cfg.enc);
  trace.stages.push_back({kStageQuery, MsSince(start)});

  start = Clock::now();
  std::vector<double> ep_all, ew_all;
  ep_all.reserve(N * d);
  ew_all.reserve(N * L * d);
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
  for (std::size_t begin = 0; begin < N; begin += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(N, begin + chunk); ++i)
      idx.push_back(i);
    const DualEncodings e = DualModeContextEncode(phrases.Select(idx), p, cfg.enc);
    const auto pv = e.phrase.value().values();
    const auto wv = e.wp.value().values();
    ep_all.insert(ep_all.end(), pv.begin(), pv.end());
    ew_all.insert(ew_all.end(), wv.begin(), wv.end());
  }
  const Tensor ep({N, d}, std::move(ep_all));
  const Tensor ew({N, L, d}, std::move(ew_all));
  trace.context_encoded = N;
  trace.stages.push_back({kStageContext, MsSince(start)});

  start = Clock::now();
  const AttentionLogits logits =
      NoBiasLogits(x, Constant(ep), p, "pa", cfg.att_heads);
  trace.pooled = ToVector(logits.pooled.value());
  trace.active = ActiveMask(logits.per_frame.value());
  std::vector<std::vector<std::size_t>> lists =
      N == 0 ? std::vector<std::vector<std::size_t>>(x.dim(0))
             : PerFrameTopK(logits.per_frame.value(), options.k_p);
  if (options.filter == FilterMode::kM1) {
    for (auto& list : lists) {
      std::erase_if(list, [&](std::size_t i) { return !trace.active[i]; });
    }
  }
  std::vector<std::size_t> pos(N, N);
  for (const auto& list : lists)
    for (std::size_t i : list) pos[i] = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (pos[i] == 0) {
      pos[i] = trace.selected.size();
      trace.selected.push_back(i);
      trace.selected_scores.push_back(trace.pooled[1 + i]);
    }
  }
  trace.stages.push_back({kStagePhraseAttention, MsSince(start)});

  start = Clock::now();
  const std::size_t U = trace.selected.size();
  std::vector<int> rows(trace.selected.begin(), trace.selected.end());
  std::vector<int> lengths;
  std::vector<bool> gate;
  for (std::size_t i : trace.selected) {
    lengths.push_back(phrases.lengths[i]);
    gate.push_back(trace.active[i]);
  }
  for (auto& list : lists)
    for (std::size_t& i : list) i = pos[i];
  const Tensor frame_mask = FrameSelectionMask(lists, U, L);
  const Var ew_sel =
      U == 0 ? Constant(Tensor::Zeros({0, L, d}))
             : Reshape(GatherRows(Constant(ew.Reshaped({N, L * d})), rows),
                       {U, L, d});
  const Var c = WpAttention(x, ew_sel, lengths, p, "wa", cfg.att_heads,
                            options.filter == FilterMode::kM2 ? &gate : nullptr,
                            &frame_mask)
                    .context;
  const Var biased = ApplyBias(x, c, options.lambda);
  trace.stages.push_back({kStageWpAttention, MsSince(start)});

  trace.features = x.value();
  trace.context = c.value();
  trace.biased = biased.value();
  return trace;
}

InferenceTrace Infer(std::span<const int> audio, const PhraseSet& phrases,
                     const Model& model, const InferenceOptions& options) {
  return model.config.variant == Variant::kDeferred
             ? DeferredInfer(audio, phrases, model, options)
             : DualModeInfer(audio, phrases, model, options);
}

Tensor DeferredReference(std::span<const int> audio, const PhraseSet& phrases,
                         const Model& model, double lambda) {
  const PipelineConfig& cfg = model.config;
  const ParamScope p(model.params);
  const Var x = QueryEncode(audio, p, cfg.enc);
  const Var ew = ContextEncode(phrases, p, cfg.enc);
  const Var c =
      WpAttention(x, ew, phrases.lengths, p, "wa", cfg.att_heads).context;
  return ApplyBias(x, c, lambda).value();
}

std::vector<double> PhraseScores(std::span<const int> audio,
                                 const PhraseSet& phrases, const Model& model) {
  const PipelineConfig& cfg = model.config;
  const ParamScope p(model.params);
  const Var x = QueryEncode(audio, p, cfg.enc);
  const Var ep = cfg.variant == Variant::kDeferred
                     ? LightPhraseEncode(phrases, p, cfg.enc.dan_layers)
                     : DualModeContextEncode(phrases, p, cfg.enc).phrase;
  return ToVector(NoBiasLogits(x, ep, p, "pa", cfg.att_heads).pooled.value());
}

// ---------------------------------------------------------------------------
// Training

TrainExample MakeExample(const Corpus& corpus, const Utterance& utt,
                         LabelRule rule) {
  TrainExample ex;
  ex.audio = utt.audio_proxy;
  ex.targets = utt.targets;
  ex.phrases = corpus.PhrasesFor(utt).Trimmed();
  ex.labels = MakeLabels(utt.transcript, ex.phrases, rule);
  return ex;
}

LossBundle UtteranceLoss(const TrainExample& ex, const Model& model,
                         const ParamScope& p, bool use_phrase_context) {
  const PipelineConfig& cfg = model.config;
  const Var x = QueryEncode(ex.audio, p, cfg.enc);
  Var ep, ew;
  if (cfg.variant == Variant::kDeferred) {
    ep = LightPhraseEncode(ex.phrases, p, cfg.enc.dan_layers);
    ew = ContextEncode(ex.phrases, p, cfg.enc);
  } else {
    const DualEncodings e = DualModeContextEncode(ex.phrases, p, cfg.enc);
    ep = e.phrase;
    ew = e.wp;
  }
  const AttentionOutput pa = CrossAttention(x, ep, p, "pa", cfg.att_heads);
  const Var l_p = PhraseCeLoss(pa.logits.pooled, ex.labels);
  const AttentionOutput wa =
      WpAttention(x, ew, ex.phrases.lengths, p, "wa", cfg.att_heads);
  const Var l_w = WpCeLoss(wa.logits.pooled, ex.phrases.lengths,
                           ex.phrases.max_len, ex.labels);
  const Var c = use_phrase_context ? pa.context : wa.context;
  const Var l_asr =
      SurrogateAsrLoss(ApplyBias(x, c, cfg.train_lambda), ex.targets, p);
  return TotalLoss(l_asr, l_p, l_w, cfg.lambda_p, cfg.lambda_w);
}

void Optimizer::Apply(ParamStore& params,
                      const std::map<std::string, Tensor>& grads) {
  for (const auto& [name, g] : grads) {
    const Tensor& cur = params.Get(name);
    std::vector<double>& v = velocity_[name];
    if (v.empty()) v.assign(cur.size(), 0.0);
    std::vector<double> next(cur.values().begin(), cur.values().end());
    for (std::size_t i = 0; i < next.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      next[i] -= lr_ * v[i];
    }
    params.Set(name, Tensor(cur.shape(), std::move(next)));
  }
}

StepResult TrainStep(std::span<const TrainExample> batch, Model& model,
                     Optimizer& optimizer, Rng& rng, std::size_t num_threads) {
  if (batch.empty()) throw ValidationError("TrainStep: empty batch");
  const std::size_t B = batch.size();
  std::vector<char> branch(B);
  for (std::size_t b = 0; b < B; ++b) {
    branch[b] = Bernoulli(rng, model.config.sampling_p);
  }

  struct Partial {
    LossBundle loss;
    std::vector<Tensor> grads;
  };
  std::vector<Partial> parts(B);
  const std::vector<std::string>& names = model.params.Names();
  const double inv_b = 1.0 / static_cast<double>(B);
  auto run = [&](std::size_t b) {
    Tape tape;
    ParamScope scope(model.params, tape);
    parts[b].loss = UtteranceLoss(batch[b], model, scope, branch[b] != 0);
    tape.Backward(Scale(parts[b].loss.total, inv_b));
    parts[b].grads.reserve(names.size());
    for (const std::string& n : names) parts[b].grads.push_back(scope.Grad(n));
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(num_threads, B));
  if (workers == 1) {
    for (std::size_t b = 0; b < B; ++b) run(b);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < B; b += workers) run(b);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  StepResult r;
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<double> sum(parts[0].grads[i].size(), 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto g = parts[b].grads[i].values();
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
    }
    r.grads.emplace(names[i], Tensor(parts[0].grads[i].shape(), std::move(sum)));
  }
  for (std::size_t b = 0; b < B; ++b) {
    r.l_asr += parts[b].loss.l_asr;
    r.l_p += parts[b].loss.l_p;
    r.l_w += parts[b].loss.l_w;
    r.total += parts[b].loss.total_value;
    r.phrase_context_count += branch[b] != 0;
  }
  r.l_asr *= inv_b;
  r.l_p *= inv_b;
  r.l_w *= inv_b;
  r.total *= inv_b;
  optimizer.Apply(model.params, r.grads);
  return r;
}

std::vector<LossRow> Train(Model& model, const Corpus& corpus,
                           const TrainOptions& options,
                           const std::function<void(const LossRow&)>& on_step) {
  if (corpus.utterances.empty()) throw ValidationError("Train: empty corpus");
  if (options.batch_size < 1) throw ConfigError("Train: batch_size must be >= 1");
  std::vector<TrainExample> examples;
  examples.reserve(corpus.utterances.size());
  for (const Utterance& u : corpus.utterances) {
    examples.push_back(MakeExample(corpus, u, model.config.label_rule));
  }
  Optimizer opt(model.config.lr, model.config.momentum);
  Rng order(MixSeed(options.seed, 1001));
  Rng branch(MixSeed(options.seed, 1002));
  std::vector<LossRow> rows;
  std::vector<TrainExample> batch(options.batch_size);
  for (std::size_t step = 1; step <= options.steps; ++step) {
    for (TrainExample& ex : batch) {
      ex = examples[UniformIndex(order, examples.size())];
    }
    const StepResult r =
        TrainStep(batch, model, opt, branch, options.num_threads);
    rows.push_back({step, r.l_asr, r.l_p, r.l_w, r.total});
    if (on_step) on_step(rows.back());
  }
  return rows;
}

std::string LossCsv(const std::vector<LossRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "step,l_asr,l_p,l_w,total\n";
  for (const LossRow& r : rows) {
    out << r.step << ',' << r.l_asr << ',' << r.l_p << ',' << r.l_w << ','
        << r.total << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::uint64_t Fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void AppendF64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(bits >> (8 * i)));
}

double ReadF64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

json ConfigToJson(const PipelineConfig& c) {
  json j;
  j["name"] = c.name;
  j["variant"] = VariantName(c.variant);
  j["k_p"] = c.k_p;
  j["lambda"] = c.lambda;
  j["train_lambda"] = c.train_lambda;
  j["sampling_p"] = c.sampling_p;
  j["lambda_p"] = c.lambda_p;
  j["lambda_w"] = c.lambda_w;
  j["filter"] = FilterName(c.filter);
  j["label_rule"] =
      c.label_rule == LabelRule::kLongestMatch ? "longest" : "all";
  j["max_len"] = c.max_len;
  j["att_heads"] = c.att_heads;
  j["att_head_dim"] = c.att_head_dim;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["enc"] = {{"vocab_size", c.enc.vocab_size},
              {"d", c.enc.d},
              {"d_q", c.enc.d_q},
              {"dan_layers", c.enc.dan_layers},
              {"ctx_layers", c.enc.ctx_layers},
              {"ctx_heads", c.enc.ctx_heads},
              {"query_layers", c.enc.query_layers},
              {"query_heads", c.enc.query_heads},
              {"ffn_hidden", c.enc.ffn_hidden}};
  return j;
}

PipelineConfig ConfigFromJson(const json& j) {
  PipelineConfig c;
  c.name = j.at("name").get<std::string>();
  c.variant = ParseVariant(j.at("variant").get<std::string>());
  c.k_p = j.at("k_p").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.train_lambda = j.at("train_lambda").get<double>();
  c.sampling_p = j.at("sampling_p").get<double>();
  c.lambda_p = j.at("lambda_p").get<double>();
  c.lambda_w = j.at("lambda_w").get<double>();
  c.filter = ParseFilter(j.at("filter").get<std::string>());
  c.label_rule = j.at("label_rule").get<std::string>() == "all"
                     ? LabelRule::kAllMatches
                     : LabelRule::kLongestMatch;
  c.max_len = j.at("max_len").get<std::size_t>();
  c.att_heads = j.at("att_heads").get<std::size_t>();
  c.att_head_dim = j.at("att_head_dim").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  const json& e = j.at("enc");
  c.enc.vocab_size = e.at("vocab_size").get<std::size_t>();
  c.enc.d = e.at("d").get<std::size_t>();
  c.enc.d_q = e.at("d_q").get<std::size_t>();
  c.enc.dan_layers = e.at("dan_layers").get<std::size_t>();
  c.enc.ctx_layers = e.at("ctx_layers").get<std::size_t>();
  c.enc.ctx_heads = e.at("ctx_heads").get<std::size_t>();
  c.enc.query_layers = e.at("query_layers").get<std::size_t>();
  c.enc.query_heads = e.at("query_heads").get<std::size_t>();
  c.enc.ffn_hidden = e.at("ffn_hidden").get<std::size_t>();
  return c;
}

}  // namespace

void SaveCheckpoint(const Model& model, const std::string& path) {
  std::string data;
  json index = json::array();
  for (const std::string& name : model.params.Names()) {
    const Tensor& t = model.params.Get(name);
    index.push_back({{"name", name}, {"shape", t.shape()},
                     {"offset", data.size()}});
    for (double v : t.values()) AppendF64(data, v);
  }
  json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = ConfigToJson(model.config);
  header["vocab"] = model.vocab.Pieces();
  header["tensors"] = index;
  header["data_bytes"] = data.size();
  header["checksum"] = Fnv1a(header.dump() + data);
  const std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  const std::uint64_t len = h.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(len >> (8 * i)));
  out += h;
  out += data;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.flush()) throw IoError("write failed for '" + path + "'");
}

Model LoadCheckpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  const std::string where = "checkpoint '" + path + "': ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw LoadError(where + "not a checkpoint file (bad magic)");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i]))
           << (8 * i);
  }
  if (len > bytes.size() - 16) {
    throw LoadError(where + "truncated header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(16, len));
  } catch (const json::exception& e) {
    throw LoadError(where + "malformed header: " + e.what());
  }
  Model m;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError(where + "format version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::string data = bytes.substr(16 + len);
    const std::size_t data_bytes = header.at("data_bytes").get<std::size_t>();
    if (data.size() != data_bytes) {
      throw LoadError(where +
                      (data.size() < data_bytes ? "truncated" : "oversized") +
                      " tensor data: " + std::to_string(data.size()) +
                      " bytes, header declares " + std::to_string(data_bytes));
    }
    json unsigned_header = header;
    unsigned_header.erase("checksum");
    if (Fnv1a(unsigned_header.dump() + data) !=
        header.at("checksum").get<std::uint64_t>()) {
      throw LoadError(where + "checksum mismatch, file is corrupt");
    }
    m.config = ConfigFromJson(header.at("config"));
    m.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
    std::map<std::string, Tensor> loaded;
    for (const json& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t n = NumElements(shape);
      if (offset > data.size() || n * 8 > data.size() - offset) {
        throw LoadError(where + "tensor '" + name + "' runs past the data");
      }
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = ReadF64(data.data() + offset + 8 * i);
      loaded.emplace(name, Tensor(shape, std::move(v)));
    }
    // Rebuild the expected parameter layout, then fill it.
    const Model fresh = CreateModel(m.config, m.vocab, 0);
    for (const std::string& name : fresh.params.Names()) {
      auto it = loaded.find(name);
      if (it == loaded.end()) {
        throw LoadError(where + "missing tensor '" + name + "'");
      }
      if (it->second.shape() != fresh.params.Get(name).shape()) {
        throw LoadError(where + "tensor '" + name + "' has shape " +
                        ShapeToString(it->second.shape()) + ", expected " +
                        ShapeToString(fresh.params.Get(name).shape()));
      }
      m.params.Add(name, it->second);
    }
  } catch (const json::exception& e) {
    throw LoadError(where + "malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(where + "invalid config: " + e.what());
  }
  return m;
}

Model LoadCheckpoint(const std::string& path, Variant expected) {
  Model m = LoadCheckpoint(path);
  if (m.config.variant != expected) {
    throw LoadError("checkpoint '" + path + "': config mismatch, file holds a " +
                    VariantName(m.config.variant) + " model but a " +
                    VariantName(expected) + " model was requested");
  }
  return m;
}

}  // namespace defnam
