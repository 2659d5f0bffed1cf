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

// Synthetic biasing corpus: utterances built from carrier words around one
// entity phrase, each with its own list of candidate phrases.

#ifndef DEFNAM_CORPUS_H_
#define DEFNAM_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "defnam/tokenizer.h"

namespace defnam {

struct CorpusParams {
  std::size_t n_utts = 100;
  // Size of each utterance's phrase list.
  std::size_t n_phrases = 32;
  // Entity words per phrase, inclusive.
  int min_phrase_words = 1;
  int max_phrase_words = 3;
  double in_context_fraction = 1.0;
  // Fraction of audio frames replaced by the noise id.
  double noise_rate = 0.3;

  // The phrase pool, carrier lexicon and vocabulary depend only on these, so
  // corpora generated with different seeds share them.
  std::uint64_t pool_seed = 1;
  std::size_t pool_size = 2000;
  std::size_t vocab_size = 256;
  std::size_t max_len = 16;
};

struct Utterance {
  std::string transcript;
  // One id per frame: a transcript wordpiece, or the corpus noise id.
  std::vector<int> audio_proxy;
  // Transcript wordpieces aligned with audio_proxy.
  std::vector<int> targets;
  // Indices into the corpus phrase table.
  std::vector<std::size_t> phrase_indices;
};

struct Corpus {
  Vocabulary vocab;
  std::size_t max_len = 16;
  std::vector<std::string> phrase_table;
  PhraseSet table;  // phrase_table tokenized
  std::vector<Utterance> utterances;

  // Audio frames use ids [0, V] where V marks a corrupted frame.
  int noise_id() const { return static_cast<int>(vocab.size()); }
  PhraseSet PhrasesFor(const Utterance& utt) const;
};

Corpus GenerateCorpus(std::uint64_t seed, const CorpusParams& params);

// Fills targets from the transcript and checks alignment and id ranges.
// Throws ValidationError.
void FinalizeUtterance(const Vocabulary& vocab, Utterance& utt);

// JSON lines at path, phrase table at path + ".phrases", vocabulary and
// max_len at path + ".meta.json". Throws IoError / ValidationError.
void SaveCorpus(const Corpus& corpus, const std::string& path);
Corpus LoadCorpus(const std::string& path);

// UTF-8 text, one phrase per line; blank lines are skipped.
std::vector<std::string> ReadPhraseList(const std::string& path);

}  // namespace defnam

#endif  // DEFNAM_CORPUS_H_
