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

#include "defnam/encoders.h"

#include <cmath>
#include <vector>

#include "defnam/errors.h"

namespace defnam {

namespace {

std::string Key(const std::string& prefix, std::size_t i,
                const std::string& leaf) {
  return prefix + "." + std::to_string(i) + "." + leaf;
}

void InitBlocks(const std::string& prefix, std::size_t layers,
                std::size_t width, std::size_t hidden, ParamStore& store,
                Rng& rng) {
  for (std::size_t i = 0; i < layers; ++i) {
    store.Add(Key(prefix, i, "ln1.g"), Tensor::Filled({width}, 1.0));
    store.Add(Key(prefix, i, "ln1.b"), Tensor::Zeros({width}));
    for (const char* m : {"wq", "wk", "wv", "wo"}) {
      store.Add(Key(prefix, i, m), WeightInit({width, width}, width, rng));
    }
    store.Add(Key(prefix, i, "ln2.g"), Tensor::Filled({width}, 1.0));
    store.Add(Key(prefix, i, "ln2.b"), Tensor::Zeros({width}));
    store.Add(Key(prefix, i, "w1"), WeightInit({width, hidden}, width, rng));
    store.Add(Key(prefix, i, "b1"), UniformInit({hidden}, width, rng));
    store.Add(Key(prefix, i, "w2"), WeightInit({hidden, width}, hidden, rng));
    store.Add(Key(prefix, i, "b2"), UniformInit({width}, hidden, rng));
  }
  store.Add(prefix + ".ln.g", Tensor::Filled({width}, 1.0));
  store.Add(prefix + ".ln.b", Tensor::Zeros({width}));
}

// Pre-norm residual blocks over packed rows, then a final LayerNorm.
Var Stack(Var x, std::span<const std::size_t> segments,
          const ParamScope& p, const std::string& prefix, std::size_t layers,
          std::size_t heads) {
  for (std::size_t i = 0; i < layers; ++i) {
    Var h = LayerNorm(x, p(Key(prefix, i, "ln1.g")), p(Key(prefix, i, "ln1.b")));
    Var a = SegmentAttention(MatMul(h, p(Key(prefix, i, "wq"))),
                             MatMul(h, p(Key(prefix, i, "wk"))),
                             MatMul(h, p(Key(prefix, i, "wv"))), segments,
                             heads);
    x = Add(x, MatMul(a, p(Key(prefix, i, "wo"))));
    h = LayerNorm(x, p(Key(prefix, i, "ln2.g")), p(Key(prefix, i, "ln2.b")));
    Var f = Relu(Add(MatMul(h, p(Key(prefix, i, "w1"))),
                     p(Key(prefix, i, "b1"))));
    x = Add(x, Add(MatMul(f, p(Key(prefix, i, "w2"))), p(Key(prefix, i, "b2"))));
  }
  return LayerNorm(x, p(prefix + ".ln.g"), p(prefix + ".ln.b"));
}

void CheckIds(const PhraseSet& phrases, std::size_t vocab_size) {
  for (int id : phrases.token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw IndexError("phrase token id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(vocab_size));
    }
  }
}

struct Packed {
  std::vector<int> ids;
  std::vector<std::size_t> segments;
  std::vector<double> positions;  // rows of position codes, flattened
  std::vector<std::size_t> wp_rows;  // destination of each WP row in N*L
  std::vector<std::size_t> cls_rows;  // packed row of each CLS token
};

Packed Pack(const PhraseSet& phrases, std::size_t width, bool with_cls) {
  const std::size_t L = phrases.max_len;
  const Tensor codes = PositionCodes(L + 1, width);
  Packed p;
  for (std::size_t n = 0; n < phrases.size(); ++n) {
    const std::size_t len = static_cast<std::size_t>(phrases.lengths[n]);
    if (len < 1 || len > L) {
      throw ValidationError("phrase " + std::to_string(n) + " has length " +
                            std::to_string(len));
    }
    const auto row = phrases.Row(n);
    std::size_t pos = 0;
    if (with_cls) {
      p.cls_rows.push_back(p.ids.size());
      p.ids.push_back(Vocabulary::kCls);
      p.positions.insert(p.positions.end(), codes.data(),
                         codes.data() + width);
      ++pos;
    }
    for (std::size_t j = 0; j < len; ++j, ++pos) {
      p.wp_rows.push_back(n * L + j);
      p.ids.push_back(row[j]);
      p.positions.insert(p.positions.end(), codes.data() + pos * width,
                         codes.data() + (pos + 1) * width);
    }
    p.segments.push_back(pos);
  }
  return p;
}

}  // namespace

void EncoderDims::Validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kNumReserved) ||
      d == 0 || d_q == 0 || ffn_hidden == 0 || dan_layers == 0 ||
      ctx_heads == 0 || query_heads == 0 || d % ctx_heads != 0 ||
      d_q % query_heads != 0 || d_q != d) {
    throw ConfigError("EncoderDims: inconsistent encoder dimensions");
  }
}

void InitEmbedding(const EncoderDims& dims, ParamStore& store, Rng& rng) {
  store.Add("wp_embedding", UniformInit({dims.vocab_size, dims.d}, 1, rng));
}

void InitDan(const EncoderDims& dims, ParamStore& store, Rng& rng) {
  for (std::size_t i = 0; i < dims.dan_layers; ++i) {
    store.Add(Key("dan", i, "w"), WeightInit({dims.d, dims.d}, dims.d, rng));
    store.Add(Key("dan", i, "b"), UniformInit({dims.d}, dims.d, rng));
  }
}

void InitContextEncoder(const EncoderDims& dims, ParamStore& store, Rng& rng) {
  InitBlocks("ctx", dims.ctx_layers, dims.d, dims.ffn_hidden, store, rng);
}

void InitQueryEncoder(const EncoderDims& dims, ParamStore& store, Rng& rng) {
  store.Add("query.noise", UniformInit({1, dims.d_q}, 1, rng));
  InitBlocks("query", dims.query_layers, dims.d_q, dims.ffn_hidden, store,
             rng);
}

Tensor PositionCodes(std::size_t positions, std::size_t width) {
  std::vector<double> v(positions * width);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) /
                                                static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      v[pos * width + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({positions, width}, std::move(v));
}

Var Embed(const PhraseSet& phrases, const Var& table) {
  const std::size_t d = table.dim(1);
  if (phrases.size() == 0) {
    return Constant(Tensor::Zeros({0, phrases.max_len, d}));
  }
  CheckIds(phrases, table.dim(0));
  return Reshape(GatherRows(table, phrases.token_ids),
                 {phrases.size(), phrases.max_len, d});
}

Var LightPhraseEncode(const PhraseSet& phrases, const ParamScope& params,
                      std::size_t layers) {
  if (layers == 0) throw ConfigError("LightPhraseEncode: depth must be >= 1");
  const Var table = params("wp_embedding");
  const std::size_t d = table.dim(1);
  if (phrases.size() == 0) return Constant(Tensor::Zeros({0, d}));
  CheckIds(phrases, table.dim(0));
  for (std::size_t n = 0; n < phrases.size(); ++n) {
    if (phrases.lengths[n] < 1) {
      throw ValidationError("LightPhraseEncode: phrase " + std::to_string(n) +
                            " has length 0");
    }
  }
  Var h = EmbeddingBagMean(StopGradient(table), phrases.token_ids,
                           phrases.max_len, phrases.lengths);
  for (std::size_t i = 0; i < layers; ++i) {
    h = Tanh(Add(MatMul(h, params(Key("dan", i, "w"))),
                 params(Key("dan", i, "b"))));
  }
  return h;
}

Var ContextEncode(const PhraseSet& phrases, const ParamScope& params,
                  const EncoderDims& dims) {
  const std::size_t N = phrases.size(), L = phrases.max_len;
  if (N == 0) return Constant(Tensor::Zeros({0, L, dims.d}));
  CheckIds(phrases, dims.vocab_size);
  const Packed p = Pack(phrases, dims.d, false);
  const std::size_t rows = p.ids.size();
  Var x = Add(GatherRows(params("wp_embedding"), p.ids),
              Constant(Tensor({rows, dims.d}, p.positions)));
  x = Stack(x, p.segments, params, "ctx", dims.ctx_layers, dims.ctx_heads);
  return Reshape(ScatterRows(x, p.wp_rows, N * L), {N, L, dims.d});
}

DualEncodings DualModeContextEncode(const PhraseSet& phrases,
                                    const ParamScope& params,
                                    const EncoderDims& dims) {
  const std::size_t N = phrases.size(), L = phrases.max_len;
  if (N == 0) {
    return {Constant(Tensor::Zeros({0, dims.d})),
            Constant(Tensor::Zeros({0, L, dims.d}))};
  }
  CheckIds(phrases, dims.vocab_size);
  const Packed p = Pack(phrases, dims.d, true);
  const std::size_t rows = p.ids.size();
  Var x = Add(GatherRows(params("wp_embedding"), p.ids),
              Constant(Tensor({rows, dims.d}, p.positions)));
  x = Stack(x, p.segments, params, "ctx", dims.ctx_layers, dims.ctx_heads);

  // Split packed rows back into CLS rows and WP rows.
  std::vector<int> cls_src(p.cls_rows.begin(), p.cls_rows.end());
  std::vector<int> wp_src;
  wp_src.reserve(rows - N);
  std::size_t c = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (c < N && p.cls_rows[c] == r) {
      ++c;
    } else {
      wp_src.push_back(static_cast<int>(r));
    }
  }
  DualEncodings out;
  out.phrase = GatherRows(x, cls_src);
  out.wp = Reshape(ScatterRows(GatherRows(x, wp_src), p.wp_rows, N * L),
                   {N, L, dims.d});
  return out;
}

Var QueryEncode(std::span<const int> audio, const ParamScope& params,
                const EncoderDims& dims) {
  if (audio.empty()) throw ValidationError("QueryEncode: empty audio proxy");
  const std::size_t T = audio.size();
  for (int id : audio) {
    if (id < 0 || static_cast<std::size_t>(id) > dims.vocab_size) {
      throw IndexError("QueryEncode: frame id " + std::to_string(id) +
                       " out of range");
    }
  }
  const std::vector<int> ids(audio.begin(), audio.end());
  const Var table = ConcatRows(params("wp_embedding"), params("query.noise"));
  Var x = Add(GatherRows(table, ids),
              Constant(PositionCodes(T, dims.d_q)));
  const std::size_t segments[] = {T};
  return Stack(x, segments, params, "query", dims.query_layers,
               dims.query_heads);
}

}  // namespace defnam
