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

/* C interface to the defnam library. Handles are opaque; every call returns
 * a defnam_status and details of the last failure on the calling thread are
 * available from defnam_last_error(). Strings returned through char** out
 * parameters are heap-allocated and must be released with
 * defnam_string_free(). */

#ifndef DEFNAM_C_API_H_
#define DEFNAM_C_API_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define DEFNAM_API __attribute__((visibility("default")))
#else
#define DEFNAM_API
#endif

typedef enum {
  DEFNAM_OK = 0,
  DEFNAM_ERR_ARGUMENT = 1, /* null pointer or malformed argument */
  DEFNAM_ERR_CONFIG = 2,
  DEFNAM_ERR_VALIDATION = 3,
  DEFNAM_ERR_DIMENSION = 4,
  DEFNAM_ERR_INDEX = 5,
  DEFNAM_ERR_NUMERIC = 6,
  DEFNAM_ERR_IO = 7,
  DEFNAM_ERR_LOAD = 8,
  DEFNAM_ERR_INTERNAL = 9
} defnam_status;

typedef struct defnam_corpus defnam_corpus;
typedef struct defnam_model defnam_model;

typedef struct {
  size_t n_utts;
  size_t n_phrases;
  int min_phrase_words;
  int max_phrase_words;
  double in_context_fraction;
  double noise_rate;
  uint64_t pool_seed;
  size_t pool_size;
  size_t vocab_size;
  size_t max_len;
} defnam_corpus_params;

typedef struct {
  size_t steps;
  size_t batch_size;
  uint64_t seed;
  size_t num_threads;
} defnam_train_params;

typedef struct {
  const size_t* num_phrases;
  size_t num_phrases_count;
  size_t topk;
  size_t phrase_len;
  size_t frames;
  size_t reps;
  size_t warmup;
  uint64_t seed;
  size_t threads;
} defnam_bench_params;

typedef struct {
  size_t topk;
  const char* filter; /* "none", "m1" or "m2" */
  double lambda;
} defnam_infer_params;

DEFNAM_API const char* defnam_version(void);
DEFNAM_API const char* defnam_last_error(void);
DEFNAM_API const char* defnam_status_name(defnam_status status);
DEFNAM_API void defnam_string_free(char* s);

DEFNAM_API void defnam_corpus_params_default(defnam_corpus_params* params);
DEFNAM_API defnam_status defnam_corpus_generate(
    uint64_t seed, const defnam_corpus_params* params, defnam_corpus** out);
DEFNAM_API defnam_status defnam_corpus_load(const char* path,
                                            defnam_corpus** out);
DEFNAM_API defnam_status defnam_corpus_save(const defnam_corpus* corpus,
                                            const char* path);
DEFNAM_API defnam_status defnam_corpus_size(const defnam_corpus* corpus,
                                            size_t* num_utterances);
DEFNAM_API void defnam_corpus_free(defnam_corpus* corpus);

/* preset: d1, d2, d3, b1, b2 or dualmode. The vocabulary is taken from
 * vocab_source, or the default synthetic vocabulary when it is null. */
DEFNAM_API defnam_status defnam_model_create(const char* preset,
                                             const defnam_corpus* vocab_source,
                                             uint64_t seed, defnam_model** out);
DEFNAM_API defnam_status defnam_model_load(const char* path,
                                           defnam_model** out);
DEFNAM_API defnam_status defnam_model_save(const defnam_model* model,
                                           const char* path);
/* Writes "deferred" or "dual_mode" into *variant (static storage). */
DEFNAM_API defnam_status defnam_model_variant(const defnam_model* model,
                                              const char** variant);
DEFNAM_API void defnam_model_free(defnam_model* model);

DEFNAM_API void defnam_train_params_default(defnam_train_params* params);
/* Trains in place. loss_csv may be null. */
DEFNAM_API defnam_status defnam_train(defnam_model* model,
                                      const defnam_corpus* corpus,
                                      const defnam_train_params* params,
                                      char** loss_csv);

/* Recall report JSON. */
DEFNAM_API defnam_status defnam_eval_recall(const defnam_model* model,
                                            const defnam_corpus* testset,
                                            const char* testset_name,
                                            const size_t* ks, size_t num_ks,
                                            char** report_json);

DEFNAM_API void defnam_bench_params_default(defnam_bench_params* params);
/* Bench report JSON and its text table; table may be null. */
DEFNAM_API defnam_status defnam_bench(const defnam_model* model,
                                      const defnam_bench_params* params,
                                      char** report_json, char** table);

DEFNAM_API void defnam_infer_params_default(defnam_infer_params* params);
/* Inference trace JSON for one utterance text against a phrase list.
 * The utterance is tokenized into a clean audio proxy. */
DEFNAM_API defnam_status defnam_infer(const defnam_model* model,
                                      const char* const* phrases,
                                      size_t num_phrases,
                                      const char* utterance,
                                      const defnam_infer_params* params,
                                      char** trace_json);

/* Checks a report produced by this library. On success *num_errors is 0;
 * otherwise *errors (may be null) receives newline-separated messages. */
DEFNAM_API defnam_status defnam_validate_report(const char* json_text,
                                                size_t* num_errors,
                                                char** errors);

#ifdef __cplusplus
}
#endif

#endif /* DEFNAM_C_API_H_ */
