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

#include "defnam/tokenizer.h"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <utility>

#include "defnam/errors.h"

namespace defnam {

namespace {

const char* const kReserved[] = {"<pad>", "<unk>", "<cls>"};

std::size_t Utf8Length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte
}

std::vector<std::string> SplitCodePoints(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const std::size_t n =
        std::min(Utf8Length(static_cast<unsigned char>(s[i])), s.size() - i);
    out.emplace_back(s.substr(i, n));
    i += n;
  }
  return out;
}

std::size_t CodePointCount(std::string_view s) {
  return SplitCodePoints(s).size();
}

}  // namespace

std::string NormalizeText(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u == ' ' || u == '\t' || u == '\n' || u == '\r' || u == '\f' ||
        u == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> pieces) {
  for (const char* r : kReserved) tokens_.emplace_back(r);
  for (auto& p : pieces) {
    if (p.empty()) throw ValidationError("Vocabulary: empty piece");
    if (index_.count(p)) {
      throw ValidationError("Vocabulary: duplicate piece '" + p + "'");
    }
    index_.emplace(p, static_cast<int>(tokens_.size()));
    max_piece_bytes_ = std::max(max_piece_bytes_, p.size());
    tokens_.push_back(std::move(p));
  }
}

const std::string& Vocabulary::Token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("Vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

int Vocabulary::Find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> Vocabulary::Tokenize(std::string_view text) const {
  const std::string norm = NormalizeText(text);
  std::vector<int> ids;
  std::size_t i = 0;
  while (i < norm.size()) {
    const std::size_t longest = std::min(max_piece_bytes_, norm.size() - i);
    int found = -1;
    std::size_t used = 0;
    for (std::size_t len = longest; len > 0; --len) {
      auto it = index_.find(norm.substr(i, len));
      if (it != index_.end()) {
        found = it->second;
        used = len;
        break;
      }
    }
    if (found < 0) {
      found = kUnk;
      used = std::min(Utf8Length(static_cast<unsigned char>(norm[i])),
                      norm.size() - i);
    }
    ids.push_back(found);
    i += used;
  }
  return ids;
}

std::string Vocabulary::Detokenize(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kCls) continue;
    out += Token(id);
  }
  return out;
}

std::vector<std::string> Vocabulary::Pieces() const {
  return {tokens_.begin() + kNumReserved, tokens_.end()};
}

Vocabulary BuildVocab(std::span<const std::string> corpus,
                      std::size_t target_size) {
  std::map<std::string, long> word_counts;
  std::set<std::string> alphabet;
  for (const std::string& line : corpus) {
    const std::string norm = NormalizeText(line);
    std::size_t start = 0;
    while (start <= norm.size()) {
      std::size_t end = norm.find(' ', start);
      if (end == std::string::npos) end = norm.size();
      if (end > start) ++word_counts[norm.substr(start, end - start)];
      if (end < norm.size()) alphabet.insert(" ");
      start = end + 1;
    }
  }
  if (word_counts.empty()) throw ValidationError("BuildVocab: empty corpus");

  // Each word as a symbol sequence, weighted by its count.
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [w, c] : word_counts) {
    auto symbols = SplitCodePoints(w);
    alphabet.insert(symbols.begin(), symbols.end());
    words.emplace_back(std::move(symbols), c);
  }
  if (target_size < Vocabulary::kNumReserved + alphabet.size()) {
    throw ConfigError("BuildVocab: target size " + std::to_string(target_size) +
                      " cannot cover the " + std::to_string(alphabet.size()) +
                      "-character alphabet plus reserved tokens");
  }

  std::vector<std::string> pieces(alphabet.begin(), alphabet.end());
  std::set<std::string> known(alphabet.begin(), alphabet.end());
  while (Vocabulary::kNumReserved + pieces.size() < target_size) {
    std::map<std::pair<std::string, std::string>, long> pair_counts;
    for (const auto& [symbols, count] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i)
        pair_counts[{symbols[i], symbols[i + 1]}] += count;
    if (pair_counts.empty()) break;
    // Highest count wins; ties resolve to the lexicographically first pair
    // because the map iterates in order and only a strictly larger count
    // replaces the current best.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [left, right] = best->first;
    const std::string merged = left + right;
    for (auto& [symbols, count] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == left &&
            symbols[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(symbols[i]);
        }
      }
      symbols = std::move(next);
    }
    if (known.insert(merged).second) pieces.push_back(merged);
  }
  return Vocabulary(std::move(pieces));
}

// ---------------------------------------------------------------------------
// Phrases

TokenizedPhrase TokenizePhrase(std::string_view text, const Vocabulary& vocab,
                               std::size_t max_len) {
  if (max_len == 0) throw ConfigError("TokenizePhrase: max_len must be >= 1");
  std::vector<int> ids = vocab.Tokenize(text);
  if (ids.empty()) throw ValidationError("TokenizePhrase: empty phrase text");
  TokenizedPhrase out;
  out.length = static_cast<int>(std::min(ids.size(), max_len));
  ids.resize(max_len, Vocabulary::kPad);
  out.ids = std::move(ids);
  return out;
}

std::span<const int> PhraseSet::Row(std::size_t n) const {
  return std::span<const int>(token_ids).subspan(n * max_len, max_len);
}

PhraseSet PhraseSet::Select(std::span<const std::size_t> indices) const {
  PhraseSet out;
  out.max_len = max_len;
  out.token_ids.reserve(indices.size() * max_len);
  for (std::size_t i : indices) {
    if (i >= size()) {
      throw IndexError("PhraseSet::Select: index " + std::to_string(i) +
                       " out of range");
    }
    const auto row = Row(i);
    out.token_ids.insert(out.token_ids.end(), row.begin(), row.end());
    out.lengths.push_back(lengths[i]);
    if (!texts.empty()) out.texts.push_back(texts[i]);
  }
  return out;
}

PhraseSet PhraseSet::Trimmed() const {
  std::size_t longest = 1;
  for (int len : lengths) longest = std::max(longest, static_cast<std::size_t>(len));
  PhraseSet out;
  out.max_len = std::min(longest, max_len);
  out.lengths = lengths;
  out.texts = texts;
  out.token_ids.reserve(size() * out.max_len);
  for (std::size_t n = 0; n < size(); ++n) {
    const auto row = Row(n).first(out.max_len);
    out.token_ids.insert(out.token_ids.end(), row.begin(), row.end());
  }
  return out;
}

void PhraseSet::Validate() const {
  if (token_ids.size() != size() * max_len) {
    throw ValidationError("PhraseSet: token matrix does not match N x L");
  }
  if (!texts.empty() && texts.size() != size()) {
    throw ValidationError("PhraseSet: texts do not match phrase count");
  }
  for (std::size_t n = 0; n < size(); ++n) {
    if (lengths[n] < 1 || static_cast<std::size_t>(lengths[n]) > max_len) {
      throw ValidationError("PhraseSet: phrase " + std::to_string(n) +
                            " has length " + std::to_string(lengths[n]));
    }
    const auto row = Row(n);
    for (std::size_t j = 0; j < max_len; ++j) {
      const bool pad = row[j] == Vocabulary::kPad;
      if (pad != (j >= static_cast<std::size_t>(lengths[n]))) {
        throw ValidationError("PhraseSet: phrase " + std::to_string(n) +
                              " has misplaced padding");
      }
    }
  }
}

PhraseSet MakePhraseSet(std::span<const std::string> texts,
                        const Vocabulary& vocab, std::size_t max_len) {
  PhraseSet out;
  out.max_len = max_len;
  out.token_ids.reserve(texts.size() * max_len);
  for (const std::string& t : texts) {
    TokenizedPhrase tp = TokenizePhrase(t, vocab, max_len);
    out.token_ids.insert(out.token_ids.end(), tp.ids.begin(), tp.ids.end());
    out.lengths.push_back(tp.length);
    out.texts.push_back(NormalizeText(t));
  }
  return out;
}

BiasLabels MakeLabels(std::string_view transcript, const PhraseSet& phrases,
                      LabelRule rule) {
  const std::string truth = NormalizeText(transcript);
  if (phrases.texts.size() != phrases.size()) {
    throw ValidationError("MakeLabels: phrase set carries no source texts");
  }
  std::vector<std::size_t> matches;
  std::size_t longest = 0;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    const std::string text = NormalizeText(phrases.texts[i]);
    if (text.empty() || truth.find(text) == std::string::npos) continue;
    const std::size_t len = CodePointCount(text);
    if (rule == LabelRule::kLongestMatch) {
      if (len > longest) {
        matches.clear();
        longest = len;
      } else if (len < longest) {
        continue;
      }
    }
    matches.push_back(i);
  }
  BiasLabels labels;
  labels.distribution.assign(phrases.size() + 1, 0.0);
  if (matches.empty()) {
    labels.distribution[0] = 1.0;
  } else {
    const double w = 1.0 / static_cast<double>(matches.size());
    for (std::size_t i : matches) labels.distribution[i + 1] = w;
  }
  return labels;
}

}  // namespace defnam
