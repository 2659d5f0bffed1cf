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

// Wordpiece embedding table, the averaging phrase encoder, the
// self-attention context encoder (per-phrase and CLS-augmented) and the
// query encoder over audio proxy frames.
//
// Parameter names:
//   wp_embedding                      [V, d]
//   dan.<i>.w / dan.<i>.b             [d, d] / [d]
//   ctx.<i>.* , ctx.ln.*              context encoder blocks, width d
//   query.noise                       [1, d], embedding of the noise frame
//   query.<i>.* , query.ln.*          query encoder blocks, width d_q
// A block holds ln1.g, ln1.b, wq, wk, wv, wo, ln2.g, ln2.b, w1, b1, w2, b2.

#ifndef DEFNAM_ENCODERS_H_
#define DEFNAM_ENCODERS_H_

#include <cstddef>
#include <span>
#include <string>

#include "defnam/params.h"
#include "defnam/random.h"
#include "defnam/tensor.h"
#include "defnam/tokenizer.h"

namespace defnam {

struct EncoderDims {
  std::size_t vocab_size = 256;
  std::size_t d = 32;
  std::size_t d_q = 32;
  std::size_t dan_layers = 4;
  std::size_t ctx_layers = 1;
  std::size_t ctx_heads = 2;
  std::size_t query_layers = 1;
  std::size_t query_heads = 2;
  std::size_t ffn_hidden = 64;

  // Throws ConfigError.
  void Validate() const;
};

void InitEmbedding(const EncoderDims& dims, ParamStore& store, Rng& rng);
void InitDan(const EncoderDims& dims, ParamStore& store, Rng& rng);
void InitContextEncoder(const EncoderDims& dims, ParamStore& store, Rng& rng);
void InitQueryEncoder(const EncoderDims& dims, ParamStore& store, Rng& rng);

// Sinusoidal position codes, [positions, width].
Tensor PositionCodes(std::size_t positions, std::size_t width);

// Row gather of every token, PAD included: [N, L, d]. IndexError on bad ids.
Var Embed(const PhraseSet& phrases, const Var& table);

// Masked mean of stop-gradient embeddings followed by a stack of tanh layers.
// Returns [N, d].
Var LightPhraseEncode(const PhraseSet& phrases, const ParamScope& params,
                      std::size_t layers);

// Runs the pre-norm self-attention stack independently per phrase over its
// real positions. Returns [N, L, d]; PAD positions hold zeros.
Var ContextEncode(const PhraseSet& phrases, const ParamScope& params,
                  const EncoderDims& dims);

struct DualEncodings {
  Var phrase;  // [N, d], encoding at the CLS position
  Var wp;      // [N, L, d]
};

// Same stack over [CLS; w_1 .. w_len] per phrase.
DualEncodings DualModeContextEncode(const PhraseSet& phrases,
                                    const ParamScope& params,
                                    const EncoderDims& dims);

// Audio proxy ids in [0, V]; ids below V share wp_embedding rows and id V
// uses query.noise. Returns [T, d_q]. ValidationError when empty.
Var QueryEncode(std::span<const int> audio, const ParamScope& params,
                const EncoderDims& dims);

}  // namespace defnam

#endif  // DEFNAM_ENCODERS_H_
