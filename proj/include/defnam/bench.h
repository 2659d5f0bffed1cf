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

// Stage latency benchmarks, retrieval recall and their JSON reports.

#ifndef DEFNAM_BENCH_H_
#define DEFNAM_BENCH_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "defnam/corpus.h"
#include "defnam/pipelines.h"
#include "json.hpp"

namespace defnam {

inline constexpr const char* kBenchSchema = "defnam.bench/1";
inline constexpr const char* kRecallSchema = "defnam.recall/1";
inline constexpr const char* kTraceSchema = "defnam.trace/1";
inline constexpr const char* kStageTotal = "Total";

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t reps = 0;
};

// Nearest-rank percentiles. ValidationError on an empty sample.
LatencyStats Summarize(std::vector<double> samples_ms);

struct BenchOptions {
  std::vector<std::size_t> num_phrases = {1000, 3000, 10000};
  std::size_t k_p = 32;
  std::size_t phrase_len = 16;
  std::size_t frames = 128;
  std::size_t reps = 10;
  std::size_t warmup = 3;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  // ConfigError when reps < 10 or any size is zero.
  void Validate() const;
};

struct BenchCell {
  Variant variant = Variant::kDeferred;
  std::size_t num_phrases = 0;
  // Stages in pipeline order, then kStageTotal.
  std::vector<std::pair<std::string, LatencyStats>> stages;

  const LatencyStats& Stage(const std::string& name) const;
};

struct BenchReport {
  BenchOptions options;
  PipelineConfig config;
  std::vector<BenchCell> cells;
};

// Random phrases of exactly phrase_len pieces and a random frames-long audio
// sequence are drawn once per N; each rep reruns full inference on every N
// in turn.
BenchReport RunBench(const Model& model, const BenchOptions& options);

// Relative spread (max - min) / mean. Zero for fewer than two values.
double RelativeSpread(const std::vector<double>& values);
// Coefficient of determination of the least-squares line through (x, y).
double LinearR2(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json BenchReportJson(const BenchReport& report);
std::string BenchTable(const BenchReport& report);

struct RecallReport {
  std::string testset;
  std::string model_name;
  std::vector<std::size_t> ks;
  std::vector<double> recall_pct;  // aligned with ks
  std::size_t evaluated = 0;
  std::size_t skipped = 0;         // utterances without exactly one true phrase
  std::size_t num_phrases = 0;     // largest phrase list seen
};

// recall@k: share of in-context utterances whose true phrase is in the global
// top-k of the first-pass scores. ks are sorted and deduplicated.
RecallReport EvalRecall(const Model& model, const Corpus& corpus,
                        std::vector<std::size_t> ks,
                        const std::string& testset = "test");

nlohmann::json RecallReportJson(const RecallReport& report);
std::string RecallTable(const RecallReport& report);

// Inference trace as JSON. texts may be empty.
nlohmann::json TraceJson(const InferenceTrace& trace, const PhraseSet& phrases,
                         const InferenceOptions& options);

// Schema checks; empty result means valid.
std::vector<std::string> ValidateBenchJson(const nlohmann::json& j);
std::vector<std::string> ValidateRecallJson(const nlohmann::json& j);
std::vector<std::string> ValidateTraceJson(const nlohmann::json& j);
// Dispatches on the "schema" field.
std::vector<std::string> ValidateReportJson(const nlohmann::json& j);

}  // namespace defnam

#endif  // DEFNAM_BENCH_H_
