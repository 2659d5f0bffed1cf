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

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace {

std::string Temp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("defnam_c_api_" + name))
      .string();
}

std::string Take(char* s) {
  std::string out = s ? s : "";
  defnam_string_free(s);
  return out;
}

defnam_corpus* SmallCorpus(uint64_t seed) {
  defnam_corpus_params p;
  defnam_corpus_params_default(&p);
  p.n_utts = 12;
  p.n_phrases = 8;
  p.pool_size = 200;
  defnam_corpus* c = nullptr;
  EXPECT_EQ(defnam_corpus_generate(seed, &p, &c), DEFNAM_OK)
      << defnam_last_error();
  return c;
}

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(defnam_version(), "1.0.0");
  EXPECT_STREQ(defnam_status_name(DEFNAM_OK), "ok");
  EXPECT_STREQ(defnam_status_name(DEFNAM_ERR_LOAD), "load error");
}

TEST(CApi, NullArgumentsAreRejected) {
  defnam_model* m = nullptr;
  EXPECT_EQ(defnam_model_create(nullptr, nullptr, 1, &m), DEFNAM_ERR_ARGUMENT);
  EXPECT_EQ(defnam_model_create("d3", nullptr, 1, nullptr),
            DEFNAM_ERR_ARGUMENT);
  EXPECT_NE(std::string(defnam_last_error()), "");
  size_t n = 0;
  EXPECT_EQ(defnam_corpus_size(nullptr, &n), DEFNAM_ERR_ARGUMENT);
  defnam_corpus_free(nullptr);
  defnam_model_free(nullptr);
  defnam_string_free(nullptr);
}

TEST(CApi, UnknownPresetIsAConfigError) {
  defnam_model* m = nullptr;
  EXPECT_EQ(defnam_model_create("d9", nullptr, 1, &m), DEFNAM_ERR_CONFIG);
  EXPECT_EQ(m, nullptr);
  EXPECT_NE(std::string(defnam_last_error()).find("d9"), std::string::npos);
}

TEST(CApi, CorpusRoundTrip) {
  defnam_corpus* c = SmallCorpus(3);
  size_t n = 0;
  ASSERT_EQ(defnam_corpus_size(c, &n), DEFNAM_OK);
  EXPECT_EQ(n, 12u);
  const std::string path = Temp("corpus.jsonl");
  ASSERT_EQ(defnam_corpus_save(c, path.c_str()), DEFNAM_OK);
  defnam_corpus* back = nullptr;
  ASSERT_EQ(defnam_corpus_load(path.c_str(), &back), DEFNAM_OK);
  ASSERT_EQ(defnam_corpus_size(back, &n), DEFNAM_OK);
  EXPECT_EQ(n, 12u);
  EXPECT_EQ(defnam_corpus_load(Temp("missing.jsonl").c_str(), &back),
            DEFNAM_ERR_IO);
  defnam_corpus_free(back);
  defnam_corpus_free(c);
}

TEST(CApi, TrainIsDeterministicAndCheckpointsRoundTrip) {
  defnam_corpus* c = SmallCorpus(5);
  defnam_train_params tp;
  defnam_train_params_default(&tp);
  tp.steps = 3;
  tp.batch_size = 2;
  std::string csv[2];
  defnam_model* models[2] = {nullptr, nullptr};
  for (int i = 0; i < 2; ++i) {
    ASSERT_EQ(defnam_model_create("d3", c, 7, &models[i]), DEFNAM_OK);
    char* out = nullptr;
    ASSERT_EQ(defnam_train(models[i], c, &tp, &out), DEFNAM_OK)
        << defnam_last_error();
    csv[i] = Take(out);
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(csv[0].rfind("step,l_asr,l_p,l_w,total\n", 0), 0u);

  const std::string path = Temp("model.ckpt");
  ASSERT_EQ(defnam_model_save(models[0], path.c_str()), DEFNAM_OK);
  defnam_model* back = nullptr;
  ASSERT_EQ(defnam_model_load(path.c_str(), &back), DEFNAM_OK);
  const char* variant = nullptr;
  ASSERT_EQ(defnam_model_variant(back, &variant), DEFNAM_OK);
  EXPECT_STREQ(variant, "deferred");

  const char* phrases[] = {"kolo", "mabe ri"};
  defnam_infer_params ip;
  defnam_infer_params_default(&ip);
  ip.topk = 1;
  char* a = nullptr;
  char* b = nullptr;
  ASSERT_EQ(defnam_infer(models[0], phrases, 2, "ba kolo", &ip, &a),
            DEFNAM_OK)
      << defnam_last_error();
  ASSERT_EQ(defnam_infer(back, phrases, 2, "ba kolo", &ip, &b), DEFNAM_OK);
  const std::string ta = Take(a), tb = Take(b);
  auto strip = [](nlohmann::json j) {
    j.erase("stages");
    return j;
  };
  EXPECT_EQ(strip(nlohmann::json::parse(ta)), strip(nlohmann::json::parse(tb)));
  size_t errors = 1;
  EXPECT_EQ(defnam_validate_report(ta.c_str(), &errors, nullptr), DEFNAM_OK);
  EXPECT_EQ(errors, 0u);

  std::FILE* f = std::fopen(path.c_str(), "r+b");
  ASSERT_NE(f, nullptr);
  std::fseek(f, -3, SEEK_END);
  std::fputc('x', f);
  std::fclose(f);
  defnam_model* broken = nullptr;
  EXPECT_EQ(defnam_model_load(path.c_str(), &broken), DEFNAM_ERR_LOAD);
  EXPECT_EQ(broken, nullptr);
  EXPECT_NE(std::string(defnam_last_error()).find("checksum"),
            std::string::npos);

  defnam_model_free(back);
  for (defnam_model* m : models) defnam_model_free(m);
  defnam_corpus_free(c);
}

TEST(CApi, InferRejectsUnknownFilter) {
  defnam_model* m = nullptr;
  ASSERT_EQ(defnam_model_create("d3", nullptr, 1, &m), DEFNAM_OK);
  defnam_infer_params ip;
  defnam_infer_params_default(&ip);
  ip.filter = "m7";
  const char* phrases[] = {"kolo"};
  char* out = nullptr;
  EXPECT_EQ(defnam_infer(m, phrases, 1, "ba kolo", &ip, &out),
            DEFNAM_ERR_CONFIG);
  EXPECT_EQ(out, nullptr);
  defnam_model_free(m);
}

TEST(CApi, RecallAndBenchReportsValidate) {
  defnam_corpus* c = SmallCorpus(9);
  defnam_model* m = nullptr;
  ASSERT_EQ(defnam_model_create("d2", c, 2, &m), DEFNAM_OK);
  const size_t ks[] = {1, 8};
  char* recall = nullptr;
  ASSERT_EQ(defnam_eval_recall(m, c, "toy", ks, 2, &recall), DEFNAM_OK)
      << defnam_last_error();
  const nlohmann::json r = nlohmann::json::parse(Take(recall));
  EXPECT_EQ(r["testsets"][0]["recall"][1]["recall_pct"].get<double>(), 100.0);

  defnam_bench_params bp;
  defnam_bench_params_default(&bp);
  const size_t sizes[] = {6, 12};
  bp.num_phrases = sizes;
  bp.num_phrases_count = 2;
  bp.topk = 3;
  bp.phrase_len = 4;
  bp.frames = 8;
  bp.warmup = 1;
  char* report = nullptr;
  char* table = nullptr;
  ASSERT_EQ(defnam_bench(m, &bp, &report, &table), DEFNAM_OK)
      << defnam_last_error();
  const std::string text = Take(report);
  EXPECT_FALSE(Take(table).empty());
  size_t errors = 1;
  ASSERT_EQ(defnam_validate_report(text.c_str(), &errors, nullptr), DEFNAM_OK);
  EXPECT_EQ(errors, 0u);

  bp.reps = 0;
  EXPECT_EQ(defnam_bench(m, &bp, &report, nullptr), DEFNAM_ERR_CONFIG);

  char* why = nullptr;
  ASSERT_EQ(defnam_validate_report("{\"schema\": \"defnam.bench/1\"}", &errors,
                                   &why),
            DEFNAM_OK);
  EXPECT_GT(errors, 0u);
  EXPECT_FALSE(Take(why).empty());
  ASSERT_EQ(defnam_validate_report("not json", &errors, nullptr), DEFNAM_OK);
  EXPECT_EQ(errors, 1u);

  defnam_model_free(m);
  defnam_corpus_free(c);
}

}  // namespace
