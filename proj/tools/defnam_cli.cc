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

// defnam command-line tool: corpus generation, training, recall evaluation,
// latency benchmarks and single-utterance inference.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "defnam/c_api.h"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;

int ExitCodeFor(defnam_status s) {
  switch (s) {
    case DEFNAM_OK: return kExitOk;
    case DEFNAM_ERR_ARGUMENT:
    case DEFNAM_ERR_CONFIG: return kExitUsage;
    default: return kExitIo;
  }
}

// Reports a failed call and yields the exit code.
int Report(defnam_status s, const std::string& what) {
  std::cerr << "defnam: " << what << ": " << defnam_status_name(s) << ": "
            << defnam_last_error() << "\n";
  return ExitCodeFor(s);
}

struct Text {
  char* p = nullptr;
  ~Text() { defnam_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

bool WriteFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  return static_cast<bool>(out.flush());
}

std::size_t ResolveThreads(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("DEFNAM_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
    std::cerr << "defnam: ignoring invalid DEFNAM_THREADS='" << env << "'\n";
  }
  return 1;
}

std::vector<std::string> ReadLines(const std::string& path, bool& ok) {
  std::ifstream in(path);
  ok = static_cast<bool>(in);
  std::vector<std::string> lines;
  std::string line;
  while (ok && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

std::string RecallTable(const nlohmann::json& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  for (const auto& t : report["testsets"]) {
    out << std::left << std::setw(16) << "testset";
    for (const auto& row : t["recall"])
      out << std::right << std::setw(10)
          << ("k=" + std::to_string(row["k"].get<std::size_t>()));
    out << "\n" << std::left << std::setw(16) << t["name"].get<std::string>();
    for (const auto& row : t["recall"])
      out << std::right << std::setw(10) << row["recall_pct"].get<double>();
    out << "\nevaluated " << t["evaluated"] << ", skipped " << t["skipped"]
        << "\n";
  }
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"defnam: deferred and dual-mode contextual biasing toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", defnam_version());
  std::size_t threads = 0;

  // gen-corpus
  defnam_corpus_params cp;
  defnam_corpus_params_default(&cp);
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen->add_option("--seed", gen_seed, "Utterance seed");
  gen->add_option("--n-utts", cp.n_utts, "Utterances")->capture_default_str();
  gen->add_option("--n-phrases", cp.n_phrases, "Phrases per utterance")
      ->capture_default_str();
  gen->add_option("--in-context-fraction", cp.in_context_fraction,
                  "Share of utterances whose true phrase is listed")
      ->capture_default_str();
  gen->add_option("--noise-rate", cp.noise_rate, "Corrupted frame rate")
      ->capture_default_str();
  gen->add_option("--pool-seed", cp.pool_seed, "Phrase pool and vocab seed")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "Output JSONL path")->required();

  // train
  std::string train_config, train_corpus, ckpt_out, loss_csv;
  defnam_train_params tp;
  defnam_train_params_default(&tp);
  std::uint64_t init_seed = 0;
  bool init_seed_set = false;
  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  train->add_option("--config", train_config, "Loss/variant preset")
      ->required()
      ->check(CLI::IsMember({"d1", "d2", "d3", "dualmode", "b1", "b2"}));
  train->add_option("--corpus", train_corpus, "Corpus JSONL")->required();
  train->add_option("--steps", tp.steps, "Update steps")->capture_default_str();
  train->add_option("--batch-size", tp.batch_size, "Utterances per step")
      ->capture_default_str();
  train->add_option("--seed", tp.seed, "Training seed")->capture_default_str();
  train->add_option("--init-seed", init_seed,
                    "Parameter init seed (defaults to --seed)")
      ->each([&](const std::string&) { init_seed_set = true; });
  train->add_option("--checkpoint-out", ckpt_out, "Checkpoint path")->required();
  train->add_option("--loss-csv", loss_csv,
                    "Loss log path (default: checkpoint path + .loss.csv)");
  train->add_option("--threads", threads, "Worker threads");

  // eval-recall
  std::string rec_ckpt, rec_testset, rec_out, rec_random;
  std::vector<std::size_t> rec_ks = {1, 5, 32};
  std::uint64_t rec_seed = 1;
  auto* rec = app.add_subcommand("eval-recall", "First-pass recall@k");
  auto* rec_ckpt_opt =
      rec->add_option("--checkpoint", rec_ckpt, "Trained checkpoint");
  rec->add_option("--random-init", rec_random,
                  "Evaluate an untrained model of this preset instead")
      ->excludes(rec_ckpt_opt)
      ->check(CLI::IsMember({"d1", "d2", "d3", "dualmode", "b1", "b2"}));
  rec->add_option("--seed", rec_seed, "Init seed for --random-init");
  rec->add_option("--testset", rec_testset, "Test corpus JSONL")->required();
  rec->add_option("--topk-list", rec_ks, "k values")
      ->delimiter(',')
      ->capture_default_str();
  rec->add_option("--out", rec_out, "Report JSON path");

  // bench
  std::string bench_variant, bench_ckpt, bench_out;
  bool bench_random = false;
  std::vector<std::size_t> bench_ns;
  defnam_bench_params bp;
  defnam_bench_params_default(&bp);
  auto* bench = app.add_subcommand("bench", "Per-stage inference latency");
  bench->add_option("--variant", bench_variant, "deferred or dual_mode")
      ->required();
  bench->add_option("--num-phrases", bench_ns, "Phrase counts (repeatable)")
      ->allow_extra_args();
  bench->add_option("--topk", bp.topk, "k_p")->capture_default_str();
  bench->add_option("--phrase-len", bp.phrase_len, "Wordpieces per phrase")
      ->capture_default_str();
  bench->add_option("--frames", bp.frames, "Audio frames")->capture_default_str();
  bench->add_option("--reps", bp.reps, "Timed repetitions")->capture_default_str();
  bench->add_option("--warmup", bp.warmup, "Untimed repetitions")
      ->capture_default_str();
  bench->add_option("--seed", bp.seed, "Input and init seed");
  auto* bench_ckpt_opt =
      bench->add_option("--checkpoint", bench_ckpt, "Model checkpoint");
  bench->add_flag("--random-init", bench_random, "Use fresh parameters")
      ->excludes(bench_ckpt_opt);
  bench->add_option("--out", bench_out, "Report JSON path");
  bench->add_option("--threads", threads, "Threads (default 1)");

  // infer
  std::string inf_ckpt, inf_phrases, inf_utt, inf_filter = "none";
  defnam_infer_params ip;
  defnam_infer_params_default(&ip);
  auto* infer = app.add_subcommand("infer", "Bias one utterance");
  infer->add_option("--checkpoint", inf_ckpt, "Model checkpoint")->required();
  infer->add_option("--phrases-file", inf_phrases, "One phrase per line")
      ->required();
  infer->add_option("--utterance", inf_utt, "Utterance text")->required();
  infer->add_option("--topk", ip.topk, "k_p")->capture_default_str();
  infer->add_option("--filter", inf_filter, "NO_BIAS filter")
      ->check(CLI::IsMember({"none", "m1", "m2"}))
      ->capture_default_str();
  infer->add_option("--lambda", ip.lambda, "Bias strength")->capture_default_str();

  // validate-report
  std::string val_path;
  auto* val = app.add_subcommand("validate-report", "Schema-check a report");
  val->add_option("report", val_path, "Report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*gen) {
    defnam_corpus* c = nullptr;
    defnam_status s = defnam_corpus_generate(gen_seed, &cp, &c);
    if (s != DEFNAM_OK) return Report(s, "gen-corpus");
    s = defnam_corpus_save(c, gen_out.c_str());
    defnam_corpus_free(c);
    if (s != DEFNAM_OK) return Report(s, "gen-corpus");
    std::cout << "wrote " << cp.n_utts << " utterances to " << gen_out << "\n";
    return kExitOk;
  }

  if (*train) {
    tp.num_threads = ResolveThreads(threads);
    defnam_corpus* c = nullptr;
    defnam_status s = defnam_corpus_load(train_corpus.c_str(), &c);
    if (s != DEFNAM_OK) return Report(s, "train");
    defnam_model* m = nullptr;
    s = defnam_model_create(train_config.c_str(), c,
                            init_seed_set ? init_seed : tp.seed, &m);
    if (s != DEFNAM_OK) {
      defnam_corpus_free(c);
      return Report(s, "train");
    }
    Text csv;
    s = defnam_train(m, c, &tp, &csv.p);
    defnam_corpus_free(c);
    if (s == DEFNAM_OK) s = defnam_model_save(m, ckpt_out.c_str());
    defnam_model_free(m);
    if (s != DEFNAM_OK) return Report(s, "train");
    if (loss_csv.empty()) loss_csv = ckpt_out + ".loss.csv";
    if (!WriteFile(loss_csv, csv.str())) {
      std::cerr << "defnam: train: cannot write " << loss_csv << "\n";
      return kExitIo;
    }
    std::cout << "trained " << train_config << " for " << tp.steps
              << " steps; checkpoint " << ckpt_out << ", losses " << loss_csv
              << "\n";
    return kExitOk;
  }

  if (*rec) {
    if (rec_ckpt.empty() && rec_random.empty()) {
      std::cerr << "defnam: eval-recall: need --checkpoint or --random-init\n";
      return kExitUsage;
    }
    defnam_corpus* c = nullptr;
    defnam_status s = defnam_corpus_load(rec_testset.c_str(), &c);
    if (s != DEFNAM_OK) return Report(s, "eval-recall");
    defnam_model* m = nullptr;
    s = rec_ckpt.empty()
            ? defnam_model_create(rec_random.c_str(), c, rec_seed, &m)
            : defnam_model_load(rec_ckpt.c_str(), &m);
    Text report;
    if (s == DEFNAM_OK) {
      s = defnam_eval_recall(m, c, rec_testset.c_str(), rec_ks.data(),
                             rec_ks.size(), &report.p);
    }
    defnam_model_free(m);
    defnam_corpus_free(c);
    if (s != DEFNAM_OK) return Report(s, "eval-recall");
    const nlohmann::json j = nlohmann::json::parse(report.str());
    std::cout << RecallTable(j);
    const std::size_t skipped = j["testsets"][0]["skipped"];
    if (skipped > 0) {
      std::cerr << "warning: skipped " << skipped
                << " utterances without exactly one true phrase\n";
    }
    if (!rec_out.empty() && !WriteFile(rec_out, report.str() + "\n")) {
      std::cerr << "defnam: eval-recall: cannot write " << rec_out << "\n";
      return kExitIo;
    }
    return kExitOk;
  }

  if (*bench) {
    std::string preset;
    if (bench_variant == "deferred") preset = "d3";
    else if (bench_variant == "dual_mode" || bench_variant == "dualmode")
      preset = "b2";
    else {
      std::cerr << "defnam: bench: unknown variant '" << bench_variant
                << "' (expected deferred or dual_mode)\n";
      return kExitUsage;
    }
    if (bench_ckpt.empty() && !bench_random) {
      std::cerr << "defnam: bench: need --checkpoint or --random-init\n";
      return kExitUsage;
    }
    if (!bench_ns.empty()) {
      bp.num_phrases = bench_ns.data();
      bp.num_phrases_count = bench_ns.size();
    }
    bp.threads = ResolveThreads(threads);
    defnam_model* m = nullptr;
    defnam_status s = bench_ckpt.empty()
                          ? defnam_model_create(preset.c_str(), nullptr,
                                                bp.seed, &m)
                          : defnam_model_load(bench_ckpt.c_str(), &m);
    if (s != DEFNAM_OK) return Report(s, "bench");
    const char* variant = nullptr;
    defnam_model_variant(m, &variant);
    if ((preset == "d3") != (std::string(variant) == "deferred")) {
      defnam_model_free(m);
      std::cerr << "defnam: bench: checkpoint holds a " << variant
                << " model but --variant is " << bench_variant << "\n";
      return kExitUsage;
    }
    Text report, table;
    s = defnam_bench(m, &bp, &report.p, &table.p);
    defnam_model_free(m);
    if (s != DEFNAM_OK) return Report(s, "bench");
    std::cout << table.str();
    if (!bench_out.empty() && !WriteFile(bench_out, report.str() + "\n")) {
      std::cerr << "defnam: bench: cannot write " << bench_out << "\n";
      return kExitIo;
    }
    return kExitOk;
  }

  if (*infer) {
    bool ok = false;
    const std::vector<std::string> lines = ReadLines(inf_phrases, ok);
    if (!ok) {
      std::cerr << "defnam: infer: cannot read " << inf_phrases << "\n";
      return kExitIo;
    }
    std::vector<const char*> ptrs;
    for (const std::string& l : lines) ptrs.push_back(l.c_str());
    defnam_model* m = nullptr;
    defnam_status s = defnam_model_load(inf_ckpt.c_str(), &m);
    if (s != DEFNAM_OK) return Report(s, "infer");
    ip.filter = inf_filter.c_str();
    Text trace;
    s = defnam_infer(m, ptrs.data(), ptrs.size(), inf_utt.c_str(), &ip,
                     &trace.p);
    defnam_model_free(m);
    if (s != DEFNAM_OK) return Report(s, "infer");
    std::cout << trace.str() << "\n";
    return kExitOk;
  }

  if (*val) {
    std::ifstream in(val_path);
    if (!in) {
      std::cerr << "defnam: validate-report: cannot read " << val_path << "\n";
      return kExitIo;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    std::size_t n = 0;
    Text errors;
    const defnam_status s =
        defnam_validate_report(ss.str().c_str(), &n, &errors.p);
    if (s != DEFNAM_OK) return Report(s, "validate-report");
    if (n > 0) {
      std::cerr << errors.str();
      return kExitIo;
    }
    std::cout << val_path << ": valid\n";
    return kExitOk;
  }
  return kExitUsage;
}
