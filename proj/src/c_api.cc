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

#include "defnam/c_api.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>
#include <vector>

#include "defnam/bench.h"
#include "defnam/corpus.h"
#include "defnam/errors.h"
#include "defnam/pipelines.h"

struct defnam_corpus {
  defnam::Corpus corpus;
};

struct defnam_model {
  defnam::Model model;
};

namespace {

thread_local std::string g_last_error;

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

defnam_status Fail(defnam_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs body, mapping library exceptions to status codes.
template <typename F>
defnam_status Guard(F&& body) {
  try {
    body();
    g_last_error.clear();
    return DEFNAM_OK;
  } catch (const defnam::ConfigError& e) {
    return Fail(DEFNAM_ERR_CONFIG, e.what());
  } catch (const defnam::ValidationError& e) {
    return Fail(DEFNAM_ERR_VALIDATION, e.what());
  } catch (const defnam::DimensionError& e) {
    return Fail(DEFNAM_ERR_DIMENSION, e.what());
  } catch (const defnam::IndexError& e) {
    return Fail(DEFNAM_ERR_INDEX, e.what());
  } catch (const defnam::NumericError& e) {
    return Fail(DEFNAM_ERR_NUMERIC, e.what());
  } catch (const defnam::IoError& e) {
    return Fail(DEFNAM_ERR_IO, e.what());
  } catch (const defnam::LoadError& e) {
    return Fail(DEFNAM_ERR_LOAD, e.what());
  } catch (const std::bad_alloc&) {
    return Fail(DEFNAM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Fail(DEFNAM_ERR_INTERNAL, e.what());
  }
}

#define DEFNAM_REQUIRE(cond, what) \
  if (!(cond)) return Fail(DEFNAM_ERR_ARGUMENT, what)

defnam::CorpusParams ToParams(const defnam_corpus_params& p) {
  defnam::CorpusParams c;
  c.n_utts = p.n_utts;
  c.n_phrases = p.n_phrases;
  c.min_phrase_words = p.min_phrase_words;
  c.max_phrase_words = p.max_phrase_words;
  c.in_context_fraction = p.in_context_fraction;
  c.noise_rate = p.noise_rate;
  c.pool_seed = p.pool_seed;
  c.pool_size = p.pool_size;
  c.vocab_size = p.vocab_size;
  c.max_len = p.max_len;
  return c;
}

}  // namespace

extern "C" {

const char* defnam_version(void) { return "1.0.0"; }

const char* defnam_last_error(void) { return g_last_error.c_str(); }

const char* defnam_status_name(defnam_status status) {
  switch (status) {
    case DEFNAM_OK: return "ok";
    case DEFNAM_ERR_ARGUMENT: return "argument error";
    case DEFNAM_ERR_CONFIG: return "config error";
    case DEFNAM_ERR_VALIDATION: return "validation error";
    case DEFNAM_ERR_DIMENSION: return "dimension error";
    case DEFNAM_ERR_INDEX: return "index error";
    case DEFNAM_ERR_NUMERIC: return "numeric error";
    case DEFNAM_ERR_IO: return "i/o error";
    case DEFNAM_ERR_LOAD: return "load error";
    case DEFNAM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void defnam_string_free(char* s) { std::free(s); }

void defnam_corpus_params_default(defnam_corpus_params* params) {
  if (!params) return;
  const defnam::CorpusParams d;
  params->n_utts = d.n_utts;
  params->n_phrases = d.n_phrases;
  params->min_phrase_words = d.min_phrase_words;
  params->max_phrase_words = d.max_phrase_words;
  params->in_context_fraction = d.in_context_fraction;
  params->noise_rate = d.noise_rate;
  params->pool_seed = d.pool_seed;
  params->pool_size = d.pool_size;
  params->vocab_size = d.vocab_size;
  params->max_len = d.max_len;
}

defnam_status defnam_corpus_generate(uint64_t seed,
                                     const defnam_corpus_params* params,
                                     defnam_corpus** out) {
  DEFNAM_REQUIRE(params && out, "defnam_corpus_generate: null argument");
  return Guard([&] {
    *out = new defnam_corpus{defnam::GenerateCorpus(seed, ToParams(*params))};
  });
}

defnam_status defnam_corpus_load(const char* path, defnam_corpus** out) {
  DEFNAM_REQUIRE(path && out, "defnam_corpus_load: null argument");
  return Guard([&] { *out = new defnam_corpus{defnam::LoadCorpus(path)}; });
}

defnam_status defnam_corpus_save(const defnam_corpus* corpus,
                                 const char* path) {
  DEFNAM_REQUIRE(corpus && path, "defnam_corpus_save: null argument");
  return Guard([&] { defnam::SaveCorpus(corpus->corpus, path); });
}

defnam_status defnam_corpus_size(const defnam_corpus* corpus,
                                 size_t* num_utterances) {
  DEFNAM_REQUIRE(corpus && num_utterances, "defnam_corpus_size: null argument");
  *num_utterances = corpus->corpus.utterances.size();
  return DEFNAM_OK;
}

void defnam_corpus_free(defnam_corpus* corpus) { delete corpus; }

defnam_status defnam_model_create(const char* preset,
                                  const defnam_corpus* vocab_source,
                                  uint64_t seed, defnam_model** out) {
  DEFNAM_REQUIRE(preset && out, "defnam_model_create: null argument");
  return Guard([&] {
    defnam::PipelineConfig config = defnam::PipelineConfig::Preset(preset);
    defnam::Vocabulary vocab;
    if (vocab_source) {
      vocab = vocab_source->corpus.vocab;
      config.max_len = vocab_source->corpus.max_len;
    } else {
      defnam::CorpusParams p;
      p.n_utts = 1;
      vocab = defnam::GenerateCorpus(0, p).vocab;
    }
    *out = new defnam_model{defnam::CreateModel(config, vocab, seed)};
  });
}

defnam_status defnam_model_load(const char* path, defnam_model** out) {
  DEFNAM_REQUIRE(path && out, "defnam_model_load: null argument");
  return Guard([&] { *out = new defnam_model{defnam::LoadCheckpoint(path)}; });
}

defnam_status defnam_model_save(const defnam_model* model, const char* path) {
  DEFNAM_REQUIRE(model && path, "defnam_model_save: null argument");
  return Guard([&] { defnam::SaveCheckpoint(model->model, path); });
}

defnam_status defnam_model_variant(const defnam_model* model,
                                   const char** variant) {
  DEFNAM_REQUIRE(model && variant, "defnam_model_variant: null argument");
  *variant = model->model.config.variant == defnam::Variant::kDeferred
                 ? "deferred"
                 : "dual_mode";
  return DEFNAM_OK;
}

void defnam_model_free(defnam_model* model) { delete model; }

void defnam_train_params_default(defnam_train_params* params) {
  if (!params) return;
  const defnam::TrainOptions d;
  params->steps = d.steps;
  params->batch_size = d.batch_size;
  params->seed = d.seed;
  params->num_threads = d.num_threads;
}

defnam_status defnam_train(defnam_model* model, const defnam_corpus* corpus,
                           const defnam_train_params* params,
                           char** loss_csv) {
  DEFNAM_REQUIRE(model && corpus && params, "defnam_train: null argument");
  return Guard([&] {
    defnam::TrainOptions o;
    o.steps = params->steps;
    o.batch_size = params->batch_size;
    o.seed = params->seed;
    o.num_threads = params->num_threads;
    const auto rows = defnam::Train(model->model, corpus->corpus, o);
    if (loss_csv) *loss_csv = Dup(defnam::LossCsv(rows));
  });
}

defnam_status defnam_eval_recall(const defnam_model* model,
                                 const defnam_corpus* testset,
                                 const char* testset_name, const size_t* ks,
                                 size_t num_ks, char** report_json) {
  DEFNAM_REQUIRE(model && testset && ks && report_json,
                 "defnam_eval_recall: null argument");
  return Guard([&] {
    const defnam::RecallReport r = defnam::EvalRecall(
        model->model, testset->corpus, std::vector<size_t>(ks, ks + num_ks),
        testset_name ? testset_name : "test");
    *report_json = Dup(defnam::RecallReportJson(r).dump(2));
  });
}

void defnam_bench_params_default(defnam_bench_params* params) {
  if (!params) return;
  static const size_t kSizes[] = {1000, 3000, 10000};
  const defnam::BenchOptions d;
  params->num_phrases = kSizes;
  params->num_phrases_count = 3;
  params->topk = d.k_p;
  params->phrase_len = d.phrase_len;
  params->frames = d.frames;
  params->reps = d.reps;
  params->warmup = d.warmup;
  params->seed = d.seed;
  params->threads = d.threads;
}

defnam_status defnam_bench(const defnam_model* model,
                           const defnam_bench_params* params,
                           char** report_json, char** table) {
  DEFNAM_REQUIRE(model && params && report_json, "defnam_bench: null argument");
  DEFNAM_REQUIRE(params->num_phrases || params->num_phrases_count == 0,
                 "defnam_bench: null phrase counts");
  return Guard([&] {
    defnam::BenchOptions o;
    o.num_phrases.assign(params->num_phrases,
                         params->num_phrases + params->num_phrases_count);
    o.k_p = params->topk;
    o.phrase_len = params->phrase_len;
    o.frames = params->frames;
    o.reps = params->reps;
    o.warmup = params->warmup;
    o.seed = params->seed;
    o.threads = params->threads;
    const defnam::BenchReport r = defnam::RunBench(model->model, o);
    *report_json = Dup(defnam::BenchReportJson(r).dump(2));
    if (table) *table = Dup(defnam::BenchTable(r));
  });
}

void defnam_infer_params_default(defnam_infer_params* params) {
  if (!params) return;
  const defnam::InferenceOptions d;
  params->topk = d.k_p;
  params->filter = "none";
  params->lambda = d.lambda;
}

defnam_status defnam_infer(const defnam_model* model,
                           const char* const* phrases, size_t num_phrases,
                           const char* utterance,
                           const defnam_infer_params* params,
                           char** trace_json) {
  DEFNAM_REQUIRE(model && utterance && params && trace_json,
                 "defnam_infer: null argument");
  DEFNAM_REQUIRE(phrases || num_phrases == 0, "defnam_infer: null phrases");
  return Guard([&] {
    const defnam::Model& m = model->model;
    std::vector<std::string> texts(phrases, phrases + num_phrases);
    const defnam::PhraseSet ps =
        defnam::MakePhraseSet(texts, m.vocab, m.config.max_len);
    const std::vector<int> audio = m.vocab.Tokenize(utterance);
    if (audio.empty()) {
      throw defnam::ValidationError("defnam_infer: utterance is empty");
    }
    defnam::InferenceOptions o = defnam::InferenceOptions::From(m.config);
    o.k_p = params->topk;
    o.filter = defnam::ParseFilter(params->filter ? params->filter : "none");
    o.lambda = params->lambda;
    const defnam::InferenceTrace t = defnam::Infer(audio, ps, m, o);
    nlohmann::json j = defnam::TraceJson(t, ps, o);
    j["variant"] = defnam::VariantName(m.config.variant);
    *trace_json = Dup(j.dump(2));
  });
}

defnam_status defnam_validate_report(const char* json_text, size_t* num_errors,
                                     char** errors) {
  DEFNAM_REQUIRE(json_text && num_errors,
                 "defnam_validate_report: null argument");
  return Guard([&] {
    std::vector<std::string> found;
    const nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
    if (j.is_discarded()) found.push_back("not valid JSON");
    else found = defnam::ValidateReportJson(j);
    *num_errors = found.size();
    if (errors) {
      std::string all;
      for (const std::string& e : found) all += e + "\n";
      *errors = Dup(all);
    }
  });
}

}  // extern "C"
