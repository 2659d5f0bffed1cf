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

// End-to-end deferred and dual-mode biasing: configuration presets, model
// construction, inference with per-stage timing, training and checkpoints.

#ifndef DEFNAM_PIPELINES_H_
#define DEFNAM_PIPELINES_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "defnam/attention.h"
#include "defnam/corpus.h"
#include "defnam/encoders.h"
#include "defnam/losses.h"
#include "defnam/params.h"
#include "defnam/random.h"
#include "defnam/tokenizer.h"

namespace defnam {

enum class Variant { kDualMode, kDeferred };
enum class FilterMode { kNone, kM1, kM2 };

std::string VariantName(Variant v);
Variant ParseVariant(const std::string& s);  // ConfigError when unknown
std::string FilterName(FilterMode f);
FilterMode ParseFilter(const std::string& s);

struct PipelineConfig {
  std::string name = "d3";
  Variant variant = Variant::kDeferred;
  std::size_t k_p = 32;
  double lambda = 0.6;        // bias strength at inference
  double train_lambda = 1.0;  // bias strength during training
  double sampling_p = 0.0;    // chance of the phrase-level context in training
  double lambda_p = 0.1;
  double lambda_w = 0.1;
  FilterMode filter = FilterMode::kNone;
  LabelRule label_rule = LabelRule::kLongestMatch;
  std::size_t max_len = 16;
  EncoderDims enc;
  std::size_t att_heads = 2;
  std::size_t att_head_dim = 16;
  double lr = 0.05;
  double momentum = 0.9;

  // Throws ConfigError.
  void Validate() const;
  AttentionDims Attention() const;

  // d1, d2, d3 (deferred); b1 (3-layer context encoder), b2 and its alias
  // dualmode (1 layer). ConfigError for other names.
  static PipelineConfig Preset(const std::string& name);
};

struct Model {
  PipelineConfig config;
  Vocabulary vocab;
  ParamStore params;
};

// Fresh parameters for config and vocabulary, drawn from seed.
Model CreateModel(const PipelineConfig& config, const Vocabulary& vocab,
                  std::uint64_t seed);

struct InferenceOptions {
  std::size_t k_p = 32;
  FilterMode filter = FilterMode::kNone;
  double lambda = 0.6;
  // Phrases per context-encoder call in dual-mode inference.
  std::size_t chunk = 1024;

  static InferenceOptions From(const PipelineConfig& config);
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct InferenceTrace {
  std::vector<std::size_t> selected;   // phrase indices, ascending
  std::vector<double> selected_scores;
  std::vector<double> pooled;          // phrase-attention pooled logits, 1 + N
  std::vector<bool> active;            // size N
  std::size_t context_encoded = 0;     // phrases given to the context encoder
  std::vector<StageTiming> stages;
  Tensor features;  // [T, d_q] before biasing
  Tensor context;   // [T, d_q]
  Tensor biased;    // features + lambda * context

  double StageMs(const std::string& stage) const;
};

// Stage names used in traces and reports.
inline constexpr const char* kStageQuery = "QueryEncoder";
inline constexpr const char* kStageLight = "LightPhraseEncoder";
inline constexpr const char* kStagePhraseAttention = "PhraseAttention";
inline constexpr const char* kStageContext = "ContextEncoder";
inline constexpr const char* kStageWpAttention = "WPAttention";

InferenceTrace DeferredInfer(std::span<const int> audio,
                             const PhraseSet& phrases, const Model& model,
                             const InferenceOptions& options);

InferenceTrace DualModeInfer(std::span<const int> audio,
                             const PhraseSet& phrases, const Model& model,
                             const InferenceOptions& options);

// Dispatches on model.config.variant.
InferenceTrace Infer(std::span<const int> audio, const PhraseSet& phrases,
                     const Model& model, const InferenceOptions& options);

// Deferred reference path: context-encodes every phrase up front and runs WP
// attention over all of them.
Tensor DeferredReference(std::span<const int> audio, const PhraseSet& phrases,
                         const Model& model, double lambda);

// First-pass pooled phrase logits [1 + N] (index 0 is NO_BIAS), from the
// light encoder for deferred models and the CLS encodings for dual-mode ones.
std::vector<double> PhraseScores(std::span<const int> audio,
                                 const PhraseSet& phrases, const Model& model);

struct TrainExample {
  std::vector<int> audio;
  std::vector<int> targets;
  PhraseSet phrases;
  BiasLabels labels;
};

// Phrases are trimmed to their longest effective length; padding is masked
// everywhere, so losses are unchanged.
TrainExample MakeExample(const Corpus& corpus, const Utterance& utt,
                         LabelRule rule);

// Training loss of one utterance. use_phrase_context selects the
// phrase-level context in place of the WP-level one.
LossBundle UtteranceLoss(const TrainExample& ex, const Model& model,
                         const ParamScope& params, bool use_phrase_context);

struct StepResult {
  double l_asr = 0.0;  // batch means
  double l_p = 0.0;
  double l_w = 0.0;
  double total = 0.0;
  std::size_t phrase_context_count = 0;  // utterances on the sampling branch
  std::map<std::string, Tensor> grads;   // summed batch-mean gradients
};

// SGD with momentum.
class Optimizer {
 public:
  Optimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
  void Apply(ParamStore& params, const std::map<std::string, Tensor>& grads);

 private:
  double lr_, momentum_;
  std::map<std::string, std::vector<double>> velocity_;
};

// One update on the batch. Each utterance draws its sampling branch from rng
// in batch order. Gradients are reduced in batch order, so the result does
// not depend on num_threads.
StepResult TrainStep(std::span<const TrainExample> batch, Model& model,
                     Optimizer& optimizer, Rng& rng,
                     std::size_t num_threads = 1);

struct TrainOptions {
  std::size_t steps = 100;
  std::size_t batch_size = 4;
  std::uint64_t seed = 1;
  std::size_t num_threads = 1;
};

struct LossRow {
  std::size_t step = 0;
  double l_asr = 0.0, l_p = 0.0, l_w = 0.0, total = 0.0;
};

// Batches are drawn uniformly with replacement from the corpus.
std::vector<LossRow> Train(Model& model, const Corpus& corpus,
                           const TrainOptions& options,
                           const std::function<void(const LossRow&)>& on_step =
                               nullptr);

std::string LossCsv(const std::vector<LossRow>& rows);

inline constexpr int kCheckpointVersion = 1;

// Throws IoError.
void SaveCheckpoint(const Model& model, const std::string& path);
// Throws IoError or LoadError (corrupt, truncated, version or variant
// mismatch, missing tensors).
Model LoadCheckpoint(const std::string& path);
Model LoadCheckpoint(const std::string& path, Variant expected);

}  // namespace defnam

#endif  // DEFNAM_PIPELINES_H_
