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

#include "defnam/corpus.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "defnam/errors.h"
#include "defnam/random.h"
#include "json.hpp"

namespace defnam {

namespace {

using json = nlohmann::json;

constexpr char kConsonants[] = "bdfgklmnprstvz";
constexpr char kVowels[] = "aeiou";
constexpr std::size_t kNumCarriers = 48;
constexpr int kMaxAttempts = 1000000;

std::string Word(Rng& rng, int min_syllables, int max_syllables) {
  const int n = min_syllables + static_cast<int>(UniformIndex(
                                    rng, max_syllables - min_syllables + 1));
  std::string w;
  for (int i = 0; i < n; ++i) {
    w += kConsonants[UniformIndex(rng, sizeof(kConsonants) - 1)];
    w += kVowels[UniformIndex(rng, sizeof(kVowels) - 1)];
  }
  return w;
}

struct Lexicon {
  std::vector<std::string> carriers;
  std::vector<std::string> phrases;
};

Lexicon MakeLexicon(const CorpusParams& p) {
  Rng rng(MixSeed(p.pool_seed, 0));
  Lexicon lex;
  std::set<std::string> used;
  for (int attempt = 0; lex.carriers.size() < kNumCarriers; ++attempt) {
    if (attempt > kMaxAttempts) throw ConfigError("GenerateCorpus: carriers");
    std::string w = Word(rng, 1, 2);
    if (used.insert(w).second) lex.carriers.push_back(std::move(w));
  }
  std::vector<std::string> entities;
  const std::size_t n_entities = std::max<std::size_t>(64, p.pool_size);
  for (int attempt = 0; entities.size() < n_entities; ++attempt) {
    if (attempt > kMaxAttempts) throw ConfigError("GenerateCorpus: entities");
    std::string w = Word(rng, 2, 3);
    if (used.insert(w).second) entities.push_back(std::move(w));
  }
  std::set<std::string> phrases;
  for (int attempt = 0; lex.phrases.size() < p.pool_size; ++attempt) {
    if (attempt > kMaxAttempts) {
      throw ConfigError("GenerateCorpus: cannot draw " +
                        std::to_string(p.pool_size) + " distinct phrases");
    }
    const int words = p.min_phrase_words +
                      static_cast<int>(UniformIndex(
                          rng, p.max_phrase_words - p.min_phrase_words + 1));
    std::string text;
    for (int i = 0; i < words; ++i) {
      if (i) text += ' ';
      text += entities[UniformIndex(rng, entities.size())];
    }
    if (phrases.insert(text).second) lex.phrases.push_back(std::move(text));
  }
  return lex;
}

void CheckParams(const CorpusParams& p) {
  if (p.n_utts < 1) throw ConfigError("GenerateCorpus: n_utts must be >= 1");
  if (p.n_phrases < 1) {
    throw ConfigError("GenerateCorpus: n_phrases must be >= 1");
  }
  if (p.min_phrase_words < 1 || p.min_phrase_words > p.max_phrase_words) {
    throw ConfigError("GenerateCorpus: empty phrase length range [" +
                      std::to_string(p.min_phrase_words) + ", " +
                      std::to_string(p.max_phrase_words) + "]");
  }
  if (!(p.in_context_fraction >= 0.0 && p.in_context_fraction <= 1.0)) {
    throw ConfigError("GenerateCorpus: in_context_fraction outside [0, 1]");
  }
  if (!(p.noise_rate >= 0.0 && p.noise_rate < 1.0)) {
    throw ConfigError("GenerateCorpus: noise_rate outside [0, 1)");
  }
  if (p.max_len < 1) throw ConfigError("GenerateCorpus: max_len must be >= 1");
  if (p.pool_size < p.n_phrases + 1) {
    throw ConfigError("GenerateCorpus: pool of " + std::to_string(p.pool_size) +
                      " phrases cannot supply lists of " +
                      std::to_string(p.n_phrases) + " plus a target");
  }
}

Utterance MakeUtterance(Rng& rng, const CorpusParams& p, const Lexicon& lex,
                        const Vocabulary& vocab, int noise_id) {
  const bool in_context = Bernoulli(rng, p.in_context_fraction);
  const std::size_t spoken = UniformIndex(rng, lex.phrases.size());

  std::vector<std::string> words;
  const std::size_t before = 1 + UniformIndex(rng, 3);
  const std::size_t after = UniformIndex(rng, 3);
  for (std::size_t i = 0; i < before; ++i)
    words.push_back(lex.carriers[UniformIndex(rng, lex.carriers.size())]);
  words.push_back(lex.phrases[spoken]);
  for (std::size_t i = 0; i < after; ++i)
    words.push_back(lex.carriers[UniformIndex(rng, lex.carriers.size())]);
  Utterance utt;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) utt.transcript += ' ';
    utt.transcript += words[i];
  }

  // Distractors never occur inside the transcript.
  std::vector<std::size_t> order(lex.phrases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Shuffle(order, rng);
  const std::size_t n_distractors = p.n_phrases - (in_context ? 1 : 0);
  for (std::size_t idx : order) {
    if (utt.phrase_indices.size() == n_distractors) break;
    if (idx == spoken) continue;
    if (utt.transcript.find(lex.phrases[idx]) != std::string::npos) continue;
    utt.phrase_indices.push_back(idx);
  }
  if (utt.phrase_indices.size() < n_distractors) {
    throw ConfigError("GenerateCorpus: not enough non-matching distractors");
  }
  if (in_context) {
    const std::size_t pos = UniformIndex(rng, utt.phrase_indices.size() + 1);
    utt.phrase_indices.insert(utt.phrase_indices.begin() + pos, spoken);
  }

  utt.targets = vocab.Tokenize(utt.transcript);
  utt.audio_proxy = utt.targets;
  for (int& id : utt.audio_proxy) {
    if (Bernoulli(rng, p.noise_rate)) id = noise_id;
  }
  return utt;
}

void WriteFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out.flush()) throw IoError("write failed for '" + path + "'");
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> SplitLines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

PhraseSet Corpus::PhrasesFor(const Utterance& utt) const {
  return table.Select(utt.phrase_indices);
}

Corpus GenerateCorpus(std::uint64_t seed, const CorpusParams& params) {
  CheckParams(params);
  const Lexicon lex = MakeLexicon(params);
  std::vector<std::string> vocab_corpus = lex.phrases;
  vocab_corpus.insert(vocab_corpus.end(), lex.carriers.begin(),
                      lex.carriers.end());

  Corpus corpus;
  corpus.vocab = BuildVocab(vocab_corpus, params.vocab_size);
  corpus.max_len = params.max_len;
  corpus.phrase_table = lex.phrases;
  corpus.table = MakePhraseSet(corpus.phrase_table, corpus.vocab,
                               params.max_len);
  corpus.utterances.reserve(params.n_utts);
  for (std::size_t u = 0; u < params.n_utts; ++u) {
    Rng rng(MixSeed(seed, u + 1));
    corpus.utterances.push_back(
        MakeUtterance(rng, params, lex, corpus.vocab, corpus.noise_id()));
  }
  return corpus;
}

void FinalizeUtterance(const Vocabulary& vocab, Utterance& utt) {
  if (NormalizeText(utt.transcript).empty()) {
    throw ValidationError("utterance has an empty transcript");
  }
  utt.targets = vocab.Tokenize(utt.transcript);
  if (utt.audio_proxy.size() != utt.targets.size()) {
    throw ValidationError("audio_proxy has " +
                          std::to_string(utt.audio_proxy.size()) +
                          " frames but the transcript has " +
                          std::to_string(utt.targets.size()) + " wordpieces");
  }
  const int noise = static_cast<int>(vocab.size());
  for (int id : utt.audio_proxy) {
    if (id < 0 || id > noise) {
      throw ValidationError("audio_proxy id " + std::to_string(id) +
                            " out of range");
    }
  }
}

void SaveCorpus(const Corpus& corpus, const std::string& path) {
  std::string lines;
  for (const Utterance& utt : corpus.utterances) {
    json j;
    j["transcript"] = utt.transcript;
    j["audio_proxy"] = utt.audio_proxy;
    j["phrase_indices"] = utt.phrase_indices;
    lines += j.dump() + "\n";
  }
  WriteFile(path, lines);
  std::string phrases;
  for (const std::string& p : corpus.phrase_table) phrases += p + "\n";
  WriteFile(path + ".phrases", phrases);
  json meta;
  meta["format_version"] = 1;
  meta["max_len"] = corpus.max_len;
  meta["vocab"] = corpus.vocab.Pieces();
  WriteFile(path + ".meta.json", meta.dump(1) + "\n");
}

Corpus LoadCorpus(const std::string& path) {
  Corpus corpus;
  const std::string body = ReadFile(path);
  try {
    const json meta = json::parse(ReadFile(path + ".meta.json"));
    if (meta.at("format_version").get<int>() != 1) {
      throw ValidationError("unsupported corpus format version");
    }
    corpus.max_len = meta.at("max_len").get<std::size_t>();
    corpus.vocab = Vocabulary(meta.at("vocab").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw ValidationError("corpus metadata: " + std::string(e.what()));
  }
  corpus.phrase_table = ReadPhraseList(path + ".phrases");
  corpus.table = MakePhraseSet(corpus.phrase_table, corpus.vocab,
                               corpus.max_len);
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(body)) {
    ++line_no;
    if (line.empty()) continue;
    Utterance utt;
    try {
      const json j = json::parse(line);
      utt.transcript = j.at("transcript").get<std::string>();
      utt.audio_proxy = j.at("audio_proxy").get<std::vector<int>>();
      utt.phrase_indices =
          j.at("phrase_indices").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " +
                            e.what());
    }
    for (std::size_t idx : utt.phrase_indices) {
      if (idx >= corpus.phrase_table.size()) {
        throw ValidationError(path + ":" + std::to_string(line_no) +
                              ": phrase index out of range");
      }
    }
    FinalizeUtterance(corpus.vocab, utt);
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

std::vector<std::string> ReadPhraseList(const std::string& path) {
  std::vector<std::string> out;
  for (std::string& line : SplitLines(ReadFile(path))) {
    if (!NormalizeText(line).empty()) out.push_back(NormalizeText(line));
  }
  return out;
}

}  // namespace defnam
