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

#include "densevg/model.h"

#include <algorithm>
#include <cmath>

#include "densevg/error.h"

namespace densevg {
namespace {

std::string LayerName(const char* stack, std::size_t index) {
  return std::string(stack) + "." + std::to_string(index);
}

}  // namespace

void ModelConfig::Validate() const {
  if (video_dim == 0) throw ConfigError("video-dim", "must be at least 1");
  if (query_dim == 0) throw ConfigError("query-dim", "must be at least 1");
  if (d_model < 2 || d_model % 2 != 0) {
    throw ConfigError("d-model", "must be even and at least 2");
  }
  if (n_heads == 0) throw ConfigError("heads", "must be at least 1");
  if (d_model % n_heads != 0) {
    throw ConfigError("heads", "d-model (" + std::to_string(d_model) +
                                   ") is not divisible by heads (" +
                                   std::to_string(n_heads) + ")");
  }
  if (n_enc_layers == 0) throw ConfigError("enc-layers", "must be at least 1");
  if (n_dec_layers == 0) throw ConfigError("dec-layers", "must be at least 1");
  if (ffn_dim == 0) throw ConfigError("ffn-dim", "must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout", "must lie in [0, 1)");
  }
  if (max_clips == 0) throw ConfigError("n-clips", "must be at least 1");
  if (max_queries == 0) throw ConfigError("max-queries", "must be at least 1");
}

std::size_t ParameterCount(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.ffn_dim;
  const std::size_t inputs = (c.video_dim + 1) * d + (c.query_dim + 1) * d;
  const std::size_t ffn = 2 * f * d + f + d;
  const std::size_t encoder = c.n_enc_layers * (4 * d * d + ffn + 4 * d);
  const std::size_t decoder = c.n_dec_layers * (8 * d * d + ffn + 6 * d);
  const std::size_t head = 2 * (d * d + d) + 2 * d + 2;
  return inputs + encoder + decoder + head;
}

Matrix PositionalEncoding(std::size_t length, std::size_t d_model) {
  if (length == 0) throw ConfigError("length", "positional encoding needs length >= 1");
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("d-model", "positional encoding needs an even width");
  }
  Matrix pe(length, d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

std::vector<MomentSpan> DecoderOutput::Spans() const {
  std::vector<MomentSpan> out;
  for (std::size_t i = 0; i < spans.rows(); ++i) {
    out.push_back(MomentSpan{spans.at(i, 0), spans.at(i, 1)});
  }
  return out;
}

GroundingModel::GroundingModel(const ModelConfig& config) : config_(config) {
  config_.Validate();
  Rng rng(config_.seed);
  Build(&rng);
}

GroundingModel GroundingModel::Clone() const {
  GroundingModel copy(config_);
  auto dst = copy.params_.begin();
  for (const auto& [name, tensor] : params_) {
    std::copy(tensor.data().begin(), tensor.data().end(),
              dst->second.mutable_data().begin());
    ++dst;
  }
  return copy;
}

GroundingModel::Linear GroundingModel::MakeLinear(const std::string& name,
                                                  std::size_t in,
                                                  std::size_t out, bool bias,
                                                  Rng* rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out, 0.0);
  if (rng) {
    for (double& v : w) v = rng->Uniform(-limit, limit);
  }
  Linear linear;
  linear.weight = params_.Add(name + ".weight",
                              Tensor::FromData({in, out}, std::move(w), true));
  if (bias) {
    linear.bias = params_.Add(name + ".bias", Tensor::Zeros({out}, true));
  }
  return linear;
}

GroundingModel::Norm GroundingModel::MakeNorm(const std::string& name,
                                              std::size_t d) {
  Norm norm;
  norm.gain = params_.Add(name + ".gain",
                          Tensor::FromData({d}, std::vector<double>(d, 1.0), true));
  norm.bias = params_.Add(name + ".bias", Tensor::Zeros({d}, true));
  return norm;
}

GroundingModel::Attention GroundingModel::MakeAttention(const std::string& name,
                                                        Rng* rng) {
  const std::size_t d = config_.d_model;
  Attention a;
  a.query = MakeLinear(name + ".query", d, d, false, rng);
  a.key = MakeLinear(name + ".key", d, d, false, rng);
  a.value = MakeLinear(name + ".value", d, d, false, rng);
  a.output = MakeLinear(name + ".output", d, d, false, rng);
  return a;
}

GroundingModel::FeedForward GroundingModel::MakeFeedForward(
    const std::string& name, Rng* rng) {
  FeedForward ffn;
  ffn.fc1 = MakeLinear(name + ".fc1", config_.d_model, config_.ffn_dim, true, rng);
  ffn.fc2 = MakeLinear(name + ".fc2", config_.ffn_dim, config_.d_model, true, rng);
  return ffn;
}

void GroundingModel::Build(Rng* rng) {
  const std::size_t d = config_.d_model;
  video_in_ = MakeLinear("input.video", config_.video_dim, d, true, rng);
  query_in_ = MakeLinear("input.query", config_.query_dim, d, true, rng);
  for (std::size_t l = 0; l < config_.n_enc_layers; ++l) {
    const std::string name = LayerName("encoder", l);
    EncoderLayer layer;
    layer.self_attention = MakeAttention(name + ".self_attn", rng);
    layer.norm1 = MakeNorm(name + ".norm1", d);
    layer.ffn = MakeFeedForward(name + ".ffn", rng);
    layer.norm2 = MakeNorm(name + ".norm2", d);
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < config_.n_dec_layers; ++l) {
    const std::string name = LayerName("decoder", l);
    DecoderLayer layer;
    layer.self_attention = MakeAttention(name + ".self_attn", rng);
    layer.norm1 = MakeNorm(name + ".norm1", d);
    layer.cross_attention = MakeAttention(name + ".cross_attn", rng);
    layer.norm2 = MakeNorm(name + ".norm2", d);
    layer.ffn = MakeFeedForward(name + ".ffn", rng);
    layer.norm3 = MakeNorm(name + ".norm3", d);
    decoder_.push_back(std::move(layer));
  }
  head1_ = MakeLinear("head.fc1", d, d, true, rng);
  head2_ = MakeLinear("head.fc2", d, d, true, rng);
  head3_ = MakeLinear("head.fc3", d, 2, true, rng);
}

Tensor GroundingModel::Apply(const Linear& linear, const Tensor& x) const {
  Tensor y = MatMul(x, linear.weight);
  return linear.bias.defined() ? AddBias(y, linear.bias) : y;
}

Tensor GroundingModel::ApplyNorm(const Norm& norm, const Tensor& x) const {
  return LayerNorm(x, norm.gain, norm.bias, 1e-5);
}

Tensor GroundingModel::ApplyFeedForward(const FeedForward& ffn,
                                        const Tensor& x) const {
  return Apply(ffn.fc2, Relu(Apply(ffn.fc1, x)));
}

Tensor GroundingModel::MaybeDropout(const Tensor& x,
                                    const ForwardOptions& options) const {
  if (options.dropout_rng == nullptr || config_.dropout == 0.0) return x;
  return Dropout(x, config_.dropout, *options.dropout_rng);
}

Tensor GroundingModel::MultiHeadAttention(const Attention& attention,
                                          const Tensor& queries,
                                          const Tensor& keys, const Mask* mask,
                                          const ForwardOptions& options,
                                          Tensor* mean_attention) const {
  const std::size_t heads = config_.n_heads, dk = config_.head_dim();
  const Tensor q = Apply(attention.query, queries);
  const Tensor k = Apply(attention.key, keys);
  const Tensor v = Apply(attention.value, keys);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Tensor> outputs;
  Tensor attention_sum;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * dk, hi = lo + dk;
    const Tensor qh = SliceCols(q, lo, hi);
    const Tensor kh = SliceCols(k, lo, hi);
    const Tensor vh = SliceCols(v, lo, hi);
    const Tensor scores = Scale(MatMul(qh, Transpose(kh)), scale);
    const Tensor weights = mask ? MaskedSoftmax(scores, *mask) : Softmax(scores);
    if (options.attention_trace) options.attention_trace->push_back(weights);
    if (mean_attention) {
      attention_sum = attention_sum.defined() ? attention_sum + weights : weights;
    }
    outputs.push_back(MatMul(weights, vh));
  }
  if (mean_attention) {
    *mean_attention = Scale(attention_sum, 1.0 / static_cast<double>(heads));
  }
  return Apply(attention.output, ConcatCols(outputs));
}

Tensor GroundingModel::ProjectVideo(const Matrix& clips) const {
  if (clips.cols != config_.video_dim) {
    throw ShapeError("clip feature width " + std::to_string(clips.cols) +
                     " does not match the model's video width " +
                     std::to_string(config_.video_dim));
  }
  return Apply(video_in_, Tensor::FromMatrix(clips));
}

Tensor GroundingModel::ProjectQueries(const Matrix& queries) const {
  if (queries.cols != config_.query_dim) {
    throw ShapeError("sentence feature width " + std::to_string(queries.cols) +
                     " does not match the model's query width " +
                     std::to_string(config_.query_dim));
  }
  return Apply(query_in_, Tensor::FromMatrix(queries));
}

Tensor GroundingModel::Encode(const Tensor& video,
                              const ForwardOptions& options) const {
  if (video.rank() != 2 || video.cols() != config_.d_model) {
    throw ShapeError("encoder input " + ShapeToString(video.shape()) +
                     " does not have width " + std::to_string(config_.d_model));
  }
  Tensor x = video;
  if (config_.positional_encoding) {
    x = x + Tensor::FromMatrix(PositionalEncoding(video.rows(), config_.d_model));
  }
  for (const auto& layer : encoder_) {
    x = ApplyNorm(layer.norm1,
                  x + MaybeDropout(MultiHeadAttention(layer.self_attention, x, x,
                                                      nullptr, options, nullptr),
                                   options));
    x = ApplyNorm(layer.norm2,
                  x + MaybeDropout(ApplyFeedForward(layer.ffn, x), options));
  }
  return x;
}

DecoderOutput GroundingModel::Decode(const QueryBatch& queries,
                                     const Tensor& encoded,
                                     const ForwardOptions& options) const {
  const Tensor& features = queries.features;
  const QueryLayout& layout = queries.layout;
  if (features.rank() != 2 || features.cols() != config_.d_model) {
    throw ShapeError("decoder queries " + ShapeToString(features.shape()) +
                     " do not have width " + std::to_string(config_.d_model));
  }
  if (encoded.rank() != 2 || encoded.cols() != config_.d_model) {
    throw ShapeError("encoder output " + ShapeToString(encoded.shape()) +
                     " does not have width " + std::to_string(config_.d_model));
  }
  const std::size_t k = features.rows();
  if (!layout.valid.empty() && layout.valid.size() != k) {
    throw ShapeError("validity mask size does not match query count");
  }
  if (!layout.positions.empty() && layout.positions.size() != k) {
    throw ShapeError("position list size does not match query count");
  }
  const bool all_valid =
      layout.valid.empty() ||
      std::all_of(layout.valid.begin(), layout.valid.end(), [](auto v) { return v != 0; });
  if (!all_valid &&
      std::none_of(layout.valid.begin(), layout.valid.end(), [](auto v) { return v != 0; })) {
    throw Error("decoder needs at least one valid query");
  }

  Tensor y = features;
  if (config_.positional_encoding) {
    std::vector<std::size_t> positions = layout.positions;
    if (positions.empty()) {
      for (std::size_t i = 0; i < k; ++i) positions.push_back(i);
    }
    const std::size_t span = *std::max_element(positions.begin(), positions.end()) + 1;
    const Matrix pe = PositionalEncoding(span, config_.d_model).SelectRows(positions);
    y = y + Tensor::FromMatrix(pe);
  }

  Mask self_mask;
  if (layout.isolated || !all_valid) {
    self_mask.assign(k * k, 0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        self_mask[i * k + j] =
            layout.isolated ? (i == j) : (layout.valid[j] != 0);
      }
    }
  }
  const Mask* mask = self_mask.empty() ? nullptr : &self_mask;

  Tensor cross;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    const bool last = l + 1 == decoder_.size();
    y = ApplyNorm(layer.norm1,
                  y + MaybeDropout(MultiHeadAttention(layer.self_attention, y, y,
                                                      mask, options, nullptr),
                                   options));
    y = ApplyNorm(layer.norm2,
                  y + MaybeDropout(MultiHeadAttention(layer.cross_attention, y,
                                                      encoded, nullptr, options,
                                                      last ? &cross : nullptr),
                                   options));
    y = ApplyNorm(layer.norm3,
                  y + MaybeDropout(ApplyFeedForward(layer.ffn, y), options));
  }
  DecoderOutput out;
  out.representations = y;
  out.attention = cross;
  out.spans = Regress(y);
  return out;
}

Tensor GroundingModel::Regress(const Tensor& decoded) const {
  const Tensor h1 = Relu(Apply(head1_, decoded));
  const Tensor h2 = Relu(Apply(head2_, h1));
  const Tensor raw = Sigmoid(Apply(head3_, h2));
  const Tensor u = SliceCols(raw, 0, 1);
  const Tensor v = SliceCols(raw, 1, 2);
  const Tensor ordered[] = {Minimum(u, v), Maximum(u, v)};
  return ConcatCols(ordered);
}

DecoderOutput GroundingModel::Forward(const Matrix& clips,
                                      const Matrix& queries,
                                      const QueryLayout& layout,
                                      const ForwardOptions& options) const {
  const Tensor encoded = Encode(ProjectVideo(clips), options);
  return Decode(QueryBatch{ProjectQueries(queries), layout}, encoded, options);
}

}  // namespace densevg
