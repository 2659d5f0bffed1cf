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

#ifndef DEFNAM_TOKENIZER_H_
#define DEFNAM_TOKENIZER_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace defnam {

// Wordpiece vocabulary with three reserved ids. Ids are dense in [0, size).
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kNumReserved = 3;

  // Reserved tokens only.
  Vocabulary();
  // `pieces` are the non-reserved tokens in id order starting at 3.
  explicit Vocabulary(std::vector<std::string> pieces);

  std::size_t size() const { return tokens_.size(); }
  const std::string& Token(int id) const;
  // -1 when absent. Reserved tokens are never found by text lookup.
  int Find(std::string_view piece) const;

  // Greedy longest-match over normalized text; unknown characters become UNK.
  std::vector<int> Tokenize(std::string_view text) const;
  // Concatenates pieces, skipping PAD and CLS.
  std::string Detokenize(std::span<const int> ids) const;

  // Non-reserved tokens in id order.
  std::vector<std::string> Pieces() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_piece_bytes_ = 0;
};

// Lowercases ASCII, collapses whitespace runs to one space, trims.
std::string NormalizeText(std::string_view text);

// Frequency-driven pair-merge induction. The vocabulary holds the reserved
// tokens, every character in the corpus (sorted), then merged pieces in the
// order they were learned until `target_size` is reached or nothing is left
// to merge. Merges never cross whitespace. Deterministic for a fixed input.
Vocabulary BuildVocab(std::span<const std::string> corpus,
                      std::size_t target_size);

struct TokenizedPhrase {
  std::vector<int> ids;  // exactly max_len entries, PAD-filled
  int length = 0;        // pieces before padding
};

// Tokenizes, truncates to `max_len`, pads. Empty text is a ValidationError.
TokenizedPhrase TokenizePhrase(std::string_view text, const Vocabulary& vocab,
                               std::size_t max_len);

// N phrases padded to max_len wordpieces.
struct PhraseSet {
  std::size_t max_len = 16;
  std::vector<int> token_ids;  // N * max_len, row-major
  std::vector<int> lengths;    // effective lengths, 1 <= length <= max_len
  std::vector<std::string> texts;

  std::size_t size() const { return lengths.size(); }
  std::span<const int> Row(std::size_t n) const;
  PhraseSet Select(std::span<const std::size_t> indices) const;
  // Same phrases with max_len cut to the longest effective length (>= 1).
  PhraseSet Trimmed() const;
  // Throws ValidationError when a padding or length invariant is broken.
  void Validate() const;
};

PhraseSet MakePhraseSet(std::span<const std::string> texts,
                        const Vocabulary& vocab, std::size_t max_len = 16);

enum class LabelRule {
  kLongestMatch,  // only maximal-length substring matches are positive
  kAllMatches,    // every substring match is positive
};

// Target distribution over {NO_BIAS} + phrases. Index 0 is NO_BIAS.
struct BiasLabels {
  std::vector<double> distribution;

  bool IsNoBias() const { return distribution.at(0) == 1.0; }
};

// A phrase is a match when its normalized text is a substring of the
// normalized transcript. No match puts all mass on NO_BIAS; otherwise the
// positive phrases share the mass uniformly.
BiasLabels MakeLabels(std::string_view transcript, const PhraseSet& phrases,
                      LabelRule rule = LabelRule::kLongestMatch);

}  // namespace defnam

#endif  // DEFNAM_TOKENIZER_H_
