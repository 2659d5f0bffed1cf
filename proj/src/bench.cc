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

#include "defnam/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "defnam/errors.h"
#include "defnam/retrieval.h"

#ifndef DEFNAM_BUILD_FLAGS
#define DEFNAM_BUILD_FLAGS "unknown"
#endif

namespace defnam {

namespace {

using json = nlohmann::json;

std::string CpuName() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        std::string name = line.substr(colon + 1);
        name.erase(0, name.find_first_not_of(' '));
        return name;
      }
    }
  }
  return "unknown";
}

PhraseSet RandomPhrases(Rng& rng, std::size_t n, std::size_t len,
                        std::size_t vocab) {
  PhraseSet ps;
  ps.max_len = len;
  ps.token_ids.reserve(n * len);
  const std::size_t span = vocab - Vocabulary::kNumReserved;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      ps.token_ids.push_back(static_cast<int>(Vocabulary::kNumReserved +
                                              UniformIndex(rng, span)));
    }
    ps.lengths.push_back(static_cast<int>(len));
  }
  return ps;
}

}  // namespace

LatencyStats Summarize(std::vector<double> samples) {
  if (samples.empty()) throw ValidationError("Summarize: no samples");
  std::sort(samples.begin(), samples.end());
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(samples.size())));
    return samples[std::max<std::size_t>(r, 1) - 1];
  };
  LatencyStats s;
  s.reps = samples.size();
  s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) /
              static_cast<double>(samples.size());
  s.p50_ms = rank(0.50);
  s.p95_ms = rank(0.95);
  return s;
}

void BenchOptions::Validate() const {
  if (reps < 10) throw ConfigError("bench: reps must be >= 10");
  if (num_phrases.empty()) throw ConfigError("bench: no phrase counts given");
  for (std::size_t n : num_phrases)
    if (n == 0) throw ConfigError("bench: phrase count must be >= 1");
  if (k_p < 1) throw ConfigError("bench: topk must be >= 1");
  if (phrase_len < 1 || frames < 1) {
    throw ConfigError("bench: phrase-len and frames must be >= 1");
  }
}

const LatencyStats& BenchCell::Stage(const std::string& name) const {
  for (const auto& [stage, stats] : stages)
    if (stage == name) return stats;
  throw ValidationError("BenchCell: no stage '" + name + "'");
}

BenchReport RunBench(const Model& model, const BenchOptions& options) {
  options.Validate();
  BenchReport report;
  report.options = options;
  report.config = model.config;
  InferenceOptions io = InferenceOptions::From(model.config);
  io.k_p = options.k_p;
  io.filter = FilterMode::kNone;
  const std::size_t vocab = model.config.enc.vocab_size;
  struct Input {
    PhraseSet phrases;
    std::vector<int> audio;
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> samples;
  };
  std::vector<Input> inputs;
  for (std::size_t n : options.num_phrases) {
    Rng rng(MixSeed(options.seed, n));
    Input in;
    in.phrases = RandomPhrases(rng, n, options.phrase_len, vocab);
    in.audio.resize(options.frames);
    for (int& a : in.audio) {
      a = static_cast<int>(Vocabulary::kNumReserved +
                           UniformIndex(rng, vocab - Vocabulary::kNumReserved));
    }
    inputs.push_back(std::move(in));
  }
  for (Input& in : inputs) {
    for (std::size_t w = 0; w < options.warmup; ++w) {
      Infer(in.audio, in.phrases, model, io);
    }
  }
  // Reps are interleaved across sizes so slow drifts in machine speed hit
  // every size alike.
  for (std::size_t r = 0; r < options.reps; ++r) {
    for (Input& in : inputs) {
      const InferenceTrace t = Infer(in.audio, in.phrases, model, io);
      double total = 0.0;
      for (const StageTiming& st : t.stages) {
        if (r == 0) in.order.push_back(st.stage);
        in.samples[st.stage].push_back(st.ms);
        total += st.ms;
      }
      in.samples[kStageTotal].push_back(total);
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Input& in = inputs[i];
    in.order.push_back(kStageTotal);
    BenchCell cell;
    cell.variant = model.config.variant;
    cell.num_phrases = options.num_phrases[i];
    for (const std::string& st : in.order) {
      cell.stages.emplace_back(st, Summarize(in.samples[st]));
    }
    report.cells.push_back(std::move(cell));
  }
  return report;
}

double RelativeSpread(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
  return mean == 0.0 ? 0.0 : (*hi - *lo) / mean;
}

double LinearR2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ValidationError("LinearR2: need two or more paired points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy * sxy / (sxx * syy);
}

json BenchReportJson(const BenchReport& report) {
  const BenchOptions& o = report.options;
  json j;
  j["schema"] = kBenchSchema;
  j["environment"] = {{"cpu", CpuName()},
                      {"threads", o.threads},
                      {"build_flags", DEFNAM_BUILD_FLAGS},
                      {"compiler", __VERSION__}};
  j["config"] = {{"name", report.config.name},
                 {"variant", VariantName(report.config.variant)},
                 {"topk", o.k_p},
                 {"phrase_len", o.phrase_len},
                 {"frames", o.frames},
                 {"reps", o.reps},
                 {"warmup", o.warmup},
                 {"seed", o.seed},
                 {"d", report.config.enc.d},
                 {"ctx_layers", report.config.enc.ctx_layers},
                 {"num_phrases", o.num_phrases}};
  json cells = json::array();
  for (const BenchCell& c : report.cells) {
    json stages = json::array();
    for (const auto& [name, s] : c.stages) {
      stages.push_back({{"stage", name},
                        {"mean_ms", s.mean_ms},
                        {"p50_ms", s.p50_ms},
                        {"p95_ms", s.p95_ms},
                        {"reps", s.reps}});
    }
    cells.push_back({{"variant", VariantName(c.variant)},
                     {"num_phrases", c.num_phrases},
                     {"stages", stages}});
  }
  j["cells"] = cells;
  return j;
}

std::string BenchTable(const BenchReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "variant " << VariantName(report.config.variant) << ", topk "
      << report.options.k_p << ", phrase-len " << report.options.phrase_len
      << ", frames " << report.options.frames << ", reps "
      << report.options.reps << " (mean / p50 / p95 ms)\n";
  if (report.cells.empty()) return out.str();
  out << std::left << std::setw(20) << "stage";
  for (const BenchCell& c : report.cells) {
    out << std::right << std::setw(34) << ("N=" + std::to_string(c.num_phrases));
  }
  out << '\n';
  for (const auto& [name, unused] : report.cells.front().stages) {
    out << std::left << std::setw(20) << name;
    for (const BenchCell& c : report.cells) {
      const LatencyStats& s = c.Stage(name);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << s.mean_ms << " / "
           << s.p50_ms << " / " << s.p95_ms;
      out << std::right << std::setw(34) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

RecallReport EvalRecall(const Model& model, const Corpus& corpus,
                        std::vector<std::size_t> ks,
                        const std::string& testset) {
  if (ks.empty()) throw ConfigError("EvalRecall: empty k list");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() < 1) throw ConfigError("EvalRecall: k must be >= 1");
  RecallReport r;
  r.testset = testset;
  r.model_name = model.config.name;
  r.ks = ks;
  std::vector<std::size_t> hits(ks.size(), 0);
  for (const Utterance& u : corpus.utterances) {
    const PhraseSet phrases = corpus.PhrasesFor(u);
    const BiasLabels labels =
        MakeLabels(u.transcript, phrases, LabelRule::kAllMatches);
    std::size_t positives = 0, truth = 0;
    for (std::size_t i = 1; i < labels.distribution.size(); ++i) {
      if (labels.distribution[i] > 0.0) {
        ++positives;
        truth = i - 1;
      }
    }
    if (positives != 1) {
      ++r.skipped;
      continue;
    }
    ++r.evaluated;
    r.num_phrases = std::max(r.num_phrases, phrases.size());
    const std::vector<double> pooled = PhraseScores(u.audio_proxy, phrases, model);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const RetrievalResult top = GlobalTopK(pooled, ks[i]);
      if (std::binary_search(top.indices.begin(), top.indices.end(), truth))
        ++hits[i];
    }
  }
  for (std::size_t h : hits) {
    r.recall_pct.push_back(r.evaluated == 0 ? 0.0
                                            : 100.0 * static_cast<double>(h) /
                                                  static_cast<double>(r.evaluated));
  }
  return r;
}

json RecallReportJson(const RecallReport& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.ks.size(); ++i)
    rows.push_back({{"k", r.ks[i]}, {"recall_pct", r.recall_pct[i]}});
  return {{"schema", kRecallSchema},
          {"model", r.model_name},
          {"testsets",
           json::array({{{"name", r.testset},
                         {"evaluated", r.evaluated},
                         {"skipped", r.skipped},
                         {"num_phrases", r.num_phrases},
                         {"recall", rows}}})}};
}

std::string RecallTable(const RecallReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(16) << "testset";
  for (std::size_t k : r.ks) out << std::right << std::setw(10) << ("k=" + std::to_string(k));
  out << '\n' << std::left << std::setw(16) << r.testset;
  for (double v : r.recall_pct) out << std::right << std::setw(10) << v;
  out << "\nevaluated " << r.evaluated << ", skipped " << r.skipped << '\n';
  return out.str();
}

json TraceJson(const InferenceTrace& t, const PhraseSet& phrases,
               const InferenceOptions& o) {
  json selected = json::array();
  for (std::size_t i = 0; i < t.selected.size(); ++i) {
    json s = {{"index", t.selected[i]}, {"score", t.selected_scores[i]}};
    if (!phrases.texts.empty()) s["text"] = phrases.texts[t.selected[i]];
    selected.push_back(s);
  }
  json stages = json::array();
  for (const StageTiming& s : t.stages)
    stages.push_back({{"stage", s.stage}, {"ms", s.ms}});
  double max_shift = 0.0;
  for (std::size_t i = 0; i < t.biased.size(); ++i) {
    max_shift = std::max(max_shift,
                         std::abs(t.biased.values()[i] - t.features.values()[i]));
  }
  json j = {{"schema", kTraceSchema},
            {"num_phrases", phrases.size()},
            {"topk", o.k_p},
            {"filter", FilterName(o.filter)},
            {"lambda", o.lambda},
            {"frames", t.features.dim(0)},
            {"selected", selected},
            {"active", t.active},
            {"num_active", std::count(t.active.begin(), t.active.end(), true)},
            {"context_encoded", t.context_encoded},
            {"stages", stages},
            {"biased_equals_unbiased", max_shift == 0.0},
            {"max_abs_bias_shift", max_shift}};
  if (phrases.size() == 0) {
    j["note"] = "empty phrase list; context is NO_BIAS only";
  }
  return j;
}

namespace {

class Checker {
 public:
  explicit Checker(std::vector<std::string>& errors) : errors_(errors) {}

  bool Has(const json& j, const std::string& key, json::value_t type,
           const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
      errors_.push_back(where + ": missing '" + key + "'");
      return false;
    }
    const json::value_t t = j.at(key).type();
    const bool number = type == json::value_t::number_float &&
                        (t == json::value_t::number_integer ||
                         t == json::value_t::number_unsigned);
    const bool unsigned_ok = type == json::value_t::number_unsigned &&
                             t == json::value_t::number_integer &&
                             j.at(key).get<long long>() >= 0;
    if (t != type && !number && !unsigned_ok) {
      errors_.push_back(where + ": '" + key + "' has type " +
                        j.at(key).type_name());
      return false;
    }
    return true;
  }

  void Fail(const std::string& msg) { errors_.push_back(msg); }

 private:
  std::vector<std::string>& errors_;
};

bool SchemaIs(const json& j, const char* schema,
              std::vector<std::string>& errors) {
  if (!j.is_object()) {
    errors.push_back("report is not a JSON object");
    return false;
  }
  if (!j.contains("schema") || j["schema"] != schema) {
    errors.push_back(std::string("schema is not ") + schema);
    return false;
  }
  return true;
}

using VT = json::value_t;

}  // namespace

std::vector<std::string> ValidateBenchJson(const json& j) {
  std::vector<std::string> errors;
  if (!SchemaIs(j, kBenchSchema, errors)) return errors;
  Checker c(errors);
  if (c.Has(j, "environment", VT::object, "report")) {
    c.Has(j["environment"], "cpu", VT::string, "environment");
    c.Has(j["environment"], "threads", VT::number_unsigned, "environment");
    c.Has(j["environment"], "build_flags", VT::string, "environment");
  }
  c.Has(j, "config", VT::object, "report");
  if (!c.Has(j, "cells", VT::array, "report")) return errors;
  std::vector<std::string> first_order;
  for (std::size_t i = 0; i < j["cells"].size(); ++i) {
    const json& cell = j["cells"][i];
    const std::string where = "cells[" + std::to_string(i) + "]";
    c.Has(cell, "variant", VT::string, where);
    c.Has(cell, "num_phrases", VT::number_unsigned, where);
    if (!c.Has(cell, "stages", VT::array, where)) continue;
    std::vector<std::string> order;
    for (const json& s : cell["stages"]) {
      const std::string sw = where + ".stages";
      if (!c.Has(s, "stage", VT::string, sw)) continue;
      order.push_back(s["stage"]);
      bool ok = true;
      for (const char* k : {"mean_ms", "p50_ms", "p95_ms"})
        ok = c.Has(s, k, VT::number_float, sw) && ok;
      ok = c.Has(s, "reps", VT::number_unsigned, sw) && ok;
      if (!ok) continue;
      if (s["reps"].get<std::size_t>() < 10) c.Fail(sw + ": reps < 10");
      if (s["mean_ms"].get<double>() < 0.0 || s["p50_ms"].get<double>() < 0.0 ||
          s["p95_ms"].get<double>() < s["p50_ms"].get<double>()) {
        c.Fail(sw + ": inconsistent latency statistics for " +
               s["stage"].get<std::string>());
      }
    }
    if (i == 0) first_order = order;
    else if (order != first_order) c.Fail(where + ": stage order differs");
  }
  return errors;
}

std::vector<std::string> ValidateRecallJson(const json& j) {
  std::vector<std::string> errors;
  if (!SchemaIs(j, kRecallSchema, errors)) return errors;
  Checker c(errors);
  if (!c.Has(j, "testsets", VT::array, "report")) return errors;
  for (const json& t : j["testsets"]) {
    if (!c.Has(t, "name", VT::string, "testset")) continue;
    const std::string where = "testset " + t["name"].get<std::string>();
    c.Has(t, "evaluated", VT::number_unsigned, where);
    c.Has(t, "skipped", VT::number_unsigned, where);
    if (!c.Has(t, "recall", VT::array, where)) continue;
    double prev_k = 0.0, prev_r = -1.0;
    for (const json& row : t["recall"]) {
      if (!c.Has(row, "k", VT::number_unsigned, where) ||
          !c.Has(row, "recall_pct", VT::number_float, where))
        continue;
      const double k = row["k"].get<double>(), r = row["recall_pct"].get<double>();
      if (r < 0.0 || r > 100.0) c.Fail(where + ": recall outside [0, 100]");
      if (k <= prev_k) c.Fail(where + ": k values not increasing");
      if (r < prev_r) c.Fail(where + ": recall decreases with k");
      prev_k = k;
      prev_r = r;
    }
  }
  return errors;
}

std::vector<std::string> ValidateTraceJson(const json& j) {
  std::vector<std::string> errors;
  if (!SchemaIs(j, kTraceSchema, errors)) return errors;
  Checker c(errors);
  const bool has_n = c.Has(j, "num_phrases", VT::number_unsigned, "trace");
  c.Has(j, "lambda", VT::number_float, "trace");
  c.Has(j, "biased_equals_unbiased", VT::boolean, "trace");
  if (c.Has(j, "selected", VT::array, "trace") && has_n) {
    const std::size_t n = j["num_phrases"];
    for (const json& s : j["selected"]) {
      if (c.Has(s, "index", VT::number_unsigned, "selected") &&
          s["index"].get<std::size_t>() >= n) {
        c.Fail("selected index out of range");
      }
      c.Has(s, "score", VT::number_float, "selected");
    }
  }
  if (c.Has(j, "active", VT::array, "trace") && has_n &&
      j["active"].size() != j["num_phrases"].get<std::size_t>()) {
    c.Fail("active mask size differs from num_phrases");
  }
  if (c.Has(j, "stages", VT::array, "trace")) {
    for (const json& s : j["stages"]) {
      c.Has(s, "stage", VT::string, "stages");
      if (c.Has(s, "ms", VT::number_float, "stages") && s["ms"].get<double>() < 0.0)
        c.Fail("negative stage duration");
    }
  }
  return errors;
}

std::vector<std::string> ValidateReportJson(const json& j) {
  const std::string schema =
      j.is_object() && j.contains("schema") && j["schema"].is_string()
          ? j["schema"].get<std::string>()
          : "";
  if (schema == kBenchSchema) return ValidateBenchJson(j);
  if (schema == kRecallSchema) return ValidateRecallJson(j);
  if (schema == kTraceSchema) return ValidateTraceJson(j);
  return {"unknown or missing schema '" + schema + "'"};
}

}  // namespace defnam
