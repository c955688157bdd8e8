// Copyright 2026 The densevg Authors.
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

// Encoder-decoder grounding network with sentences as decoder queries.
//
//   clips (N x d_video) --linear--> + sinusoidal PE --> encoder layers
//   sentences (K x d_query) --linear--> + sinusoidal PE (paragraph slot)
//       --> decoder layers (self-attention over sentences, cross-attention
//           into the encoded clips, FFN) --> shared 3-layer regression head
//       --> one (start, end) per sentence.
//
// Every sub-layer is post-norm: x = LayerNorm(x + Sublayer(x)).

#ifndef DENSEVG_MODEL_H_
#define DENSEVG_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "densevg/matrix.h"
#include "densevg/moment.h"
#include "densevg/random.h"
#include "densevg/tensor.h"

namespace densevg {

struct ModelConfig {
  std::size_t video_dim = 32;  // raw clip feature width
  std::size_t query_dim = 32;  // raw sentence feature width
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t ffn_dim = 256;
  // Off by default: at desk scale it slows fitting more than it helps.
  double dropout = 0.0;
  // Clips per video. Training and inference resample other clip counts
  // uniformly to this many.
  std::size_t max_clips = 32;
  std::size_t max_queries = 8;  // sentences per decoder pass
  bool positional_encoding = true;
  std::uint64_t seed = 0;  // weight initialization

  void Validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
};

// Closed-form number of learnable scalars:
//   inputs   (v + 1) d + (q + 1) d
//   encoder  L_enc (4 d^2 + 2 f d + f + d + 4 d)
//   decoder  L_dec (8 d^2 + 2 f d + f + d + 6 d)
//   head     2 (d^2 + d) + 2 d + 2
std::size_t ParameterCount(const ModelConfig& config);

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
Matrix PositionalEncoding(std::size_t length, std::size_t d_model);

// How the sentences of one decoder pass relate to each other.
struct QueryLayout {
  Mask valid;                          // empty: all valid
  std::vector<std::size_t> positions;  // paragraph slot per row; empty: 0..K-1
  // Each sentence attends only to itself, which is equivalent to running
  // K single-sentence passes against the same encoded video.
  bool isolated = false;
};

struct QueryBatch {
  Tensor features;  // K x d_model
  QueryLayout layout;
};

struct ForwardOptions {
  // Dropout is active only when a generator is supplied.
  Rng* dropout_rng = nullptr;
  // When set, receives every attention matrix (one per head and layer).
  std::vector<Tensor>* attention_trace = nullptr;
};

struct DecoderOutput {
  Tensor representations;  // K x d_model
  Tensor attention;        // K x N, final decoder layer, averaged over heads
  Tensor spans;            // K x 2, start <= end

  std::vector<MomentSpan> Spans() const;
  Matrix AttentionMatrix() const { return attention.ToMatrix(); }
};

class GroundingModel {
 public:
  // Glorot-uniform weights, zero biases, unit norm gains; seeded by
  // config.seed.
  explicit GroundingModel(const ModelConfig& config);

  GroundingModel(const GroundingModel&) = delete;
  GroundingModel& operator=(const GroundingModel&) = delete;
  GroundingModel(GroundingModel&&) = default;
  GroundingModel& operator=(GroundingModel&&) = default;

  // Deep copy of configuration and parameter values.
  GroundingModel Clone() const;

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  Tensor ProjectVideo(const Matrix& clips) const;
  Tensor ProjectQueries(const Matrix& queries) const;

  // Adds clip positional encoding (when enabled) and runs the encoder.
  Tensor Encode(const Tensor& video, const ForwardOptions& options = {}) const;

  // Adds sentence positional encoding (when enabled) and runs the decoder
  // and regression head. Throws when no query is valid.
  DecoderOutput Decode(const QueryBatch& queries, const Tensor& encoded,
                       const ForwardOptions& options = {}) const;

  // Shared head applied row by row: d -> d -> d -> 2, ReLU in between,
  // sigmoid on the output, then (min, max) of the pair.
  Tensor Regress(const Tensor& decoded) const;

  DecoderOutput Forward(const Matrix& clips, const Matrix& queries,
                        const QueryLayout& layout = {},
                        const ForwardOptions& options = {}) const;

 private:
  // Handles share storage with the entries of params_.
  struct Linear {
    Tensor weight;
    Tensor bias;  // undefined when the map has no bias
  };
  struct Attention {
    Linear query, key, value, output;
  };
  struct Norm {
    Tensor gain;
    Tensor bias;
  };
  struct FeedForward {
    Linear fc1, fc2;
  };
  struct EncoderLayer {
    Attention self_attention;
    Norm norm1, norm2;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Attention self_attention, cross_attention;
    Norm norm1, norm2, norm3;
    FeedForward ffn;
  };

  void Build(Rng* init_rng);
  Linear MakeLinear(const std::string& name, std::size_t in, std::size_t out,
                    bool bias, Rng* rng);
  Norm MakeNorm(const std::string& name, std::size_t d);
  Attention MakeAttention(const std::string& name, Rng* rng);
  FeedForward MakeFeedForward(const std::string& name, Rng* rng);

  Tensor Apply(const Linear& linear, const Tensor& x) const;
  Tensor ApplyNorm(const Norm& norm, const Tensor& x) const;
  Tensor ApplyFeedForward(const FeedForward& ffn, const Tensor& x) const;
  Tensor MultiHeadAttention(const Attention& attention, const Tensor& queries,
                            const Tensor& keys, const Mask* mask,
                            const ForwardOptions& options,
                            Tensor* mean_attention) const;
  Tensor MaybeDropout(const Tensor& x, const ForwardOptions& options) const;

  ModelConfig config_;
  ParameterSet params_;
  Linear video_in_, query_in_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Linear head1_, head2_, head3_;
};

// Checkpoints are a JSON manifest (<base>.json: config plus the ordered
// parameter list with shapes) and a blob (<base>.bin) holding every
// parameter as little-endian float64 values, concatenated in manifest order.
void SaveCheckpoint(const GroundingModel& model,
                    const std::filesystem::path& base);
GroundingModel LoadCheckpoint(const std::filesystem::path& base);

}  // namespace densevg

#endif  // DENSEVG_MODEL_H_
