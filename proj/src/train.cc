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

#include "densevg/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "densevg/error.h"

namespace densevg {
namespace {

// Clip features uniformly resampled to the model's clip count.
Matrix ModelClips(const GroundingModel& model, const Matrix& clips) {
  if (clips.rows == model.config().max_clips) return clips;
  return UniformSampleClips(clips, model.config().max_clips);
}

// Decodes a paragraph chunk by chunk against one encoding of the video.
// `visit` receives the original sentence indices of each chunk, in the order
// they were fed, and the decoder output.
template <typename Visit>
void DecodeParagraph(const GroundingModel& model, const GroundingSample& sample,
                     QueryMode mode, Rng* rng, Visit visit) {
  if (mode == QueryMode::kShuffled && rng == nullptr) {
    throw Error("shuffled decoding needs a random generator");
  }
  const Tensor encoded =
      model.Encode(model.ProjectVideo(ModelClips(model, sample.clips)));
  std::size_t offset = 0;
  for (std::size_t chunk :
       SplitSubparagraphs(sample.num_queries(), model.config().max_queries)) {
    std::vector<std::size_t> order(chunk);
    std::iota(order.begin(), order.end(), offset);
    if (mode == QueryMode::kShuffled) rng->Shuffle(order);
    const Tensor features = model.ProjectQueries(sample.queries.SelectRows(order));
    const DecoderOutput out =
        model.Decode(QueryBatch{features, LayoutFor(mode, chunk)}, encoded);
    visit(order, out);
    offset += chunk;
  }
}

}  // namespace

QueryMode ParseQueryMode(std::string_view name) {
  if (name == "ordered") return QueryMode::kOrdered;
  if (name == "shuffled") return QueryMode::kShuffled;
  if (name == "single") return QueryMode::kSingle;
  throw ConfigError("query-mode", "unknown query mode '" + std::string(name) +
                                      "' (expected ordered, shuffled or single)");
}

std::string ToString(QueryMode mode) {
  switch (mode) {
    case QueryMode::kOrdered:
      return "ordered";
    case QueryMode::kShuffled:
      return "shuffled";
    case QueryMode::kSingle:
      return "single";
  }
  return "?";
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("lr", "learning rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch-size", "must be at least 1");
  if (k_min == 0 || k_min > k_max) {
    throw ConfigError("k-min", "need 1 <= k-min <= k-max");
  }
  weights.Validate();
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("thresholds", "must lie in (0, 1)");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("adam", "need beta1, beta2 in [0, 1) and eps > 0");
  }
}

AdamState AdamState::For(const ParameterSet& params, double beta1, double beta2,
                         double eps) {
  AdamState state;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.eps = eps;
  for (const auto& [name, tensor] : params) {
    state.first_moment.emplace_back(tensor.numel(), 0.0);
    state.second_moment.emplace_back(tensor.numel(), 0.0);
  }
  return state;
}

void AdamStep(ParameterSet& params, AdamState& state, double learning_rate) {
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw Error("optimizer state does not match the parameter set");
  }
  for (const auto& [name, tensor] : params) {
    for (double g : tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + name + "'");
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  std::size_t p = 0;
  for (auto& [name, tensor] : params) {
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != tensor.numel()) {
      throw Error("optimizer state shape mismatch for '" + name + "'");
    }
    const auto grad = tensor.grad();
    auto data = tensor.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      data[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    tensor.ZeroGrad();
    ++p;
  }
}

GroundingSample SampleTrainingQueries(const GroundingSample& sample,
                                      std::size_t k_min, std::size_t k_max,
                                      QueryMode mode, Rng& rng) {
  const std::size_t available = sample.num_queries();
  std::vector<std::size_t> indices(available);
  std::iota(indices.begin(), indices.end(), 0);
  if (available >= k_min) {
    const std::size_t k = rng.UniformInt(k_min, std::min(k_max, available));
    rng.Shuffle(indices);
    indices.resize(k);
    if (mode != QueryMode::kShuffled) std::sort(indices.begin(), indices.end());
  } else if (mode == QueryMode::kShuffled) {
    rng.Shuffle(indices);
  }
  return sample.SelectQueries(indices);
}

QueryLayout LayoutFor(QueryMode mode, std::size_t k) {
  QueryLayout layout;
  if (mode == QueryMode::kSingle) {
    layout.isolated = true;
    layout.positions.assign(k, 0);
  }
  return layout;
}

SampleLoss ComputeSampleLoss(const GroundingModel& model,
                             const GroundingSample& sample, QueryMode mode,
                             const TrainConfig& config,
                             const ForwardOptions& options) {
  const Matrix clips = ModelClips(model, sample.clips);
  const DecoderOutput out = model.Forward(
      clips, sample.queries, LayoutFor(mode, sample.num_queries()), options);
  const Tensor regression = RegressionLoss(out.spans, sample.spans,
                                           config.weights, {}, config.iou_loss);
  std::vector<ClipMask> masks;
  for (const auto& span : sample.spans) {
    masks.push_back(GtClipMask(span, clips.rows));
  }
  const Tensor attention =
      AttentionLoss(config.attention_loss, out.attention, masks);
  SampleLoss loss;
  loss.regression = regression.item();
  loss.attention = attention.item();
  loss.total = TotalLoss(regression, attention);
  loss.spans = out.Spans();
  return loss;
}

double AccumulateBatchGradient(GroundingModel& model,
                               std::span<const GroundingSample> batch,
                               const TrainConfig& config) {
  if (batch.empty()) throw Error("empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& sample : batch) {
    const SampleLoss loss = ComputeSampleLoss(model, sample, config.query_mode, config);
    Backward(Scale(loss.total, weight));
    total += loss.total.item();
  }
  return total * weight;
}

std::vector<MomentSpan> PredictParagraph(const GroundingModel& model,
                                         const GroundingSample& sample,
                                         QueryMode mode, Rng* rng) {
  NoGradGuard no_grad;
  std::vector<MomentSpan> spans(sample.num_queries());
  DecodeParagraph(model, sample, mode, rng,
                  [&](const std::vector<std::size_t>& order, const DecoderOutput& out) {
                    const auto predicted = out.Spans();
                    for (std::size_t j = 0; j < order.size(); ++j) {
                      spans[order[j]] = predicted[j];
                    }
                  });
  return spans;
}

EvalReport EvaluateModel(const GroundingModel& model,
                         std::span<const GroundingSample> samples,
                         QueryMode mode, std::span<const double> thresholds,
                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SpanRecord> predictions, truth;
  for (const auto& sample : samples) {
    const auto spans = PredictParagraph(model, sample, mode, &rng);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      predictions.push_back({sample.video_id, i, spans[i]});
      truth.push_back({sample.video_id, i, sample.spans[i]});
    }
  }
  return Evaluate(predictions, truth, thresholds);
}

Matrix ParagraphAttention(const GroundingModel& model,
                          const GroundingSample& sample) {
  NoGradGuard no_grad;
  Matrix attention;
  DecodeParagraph(
      model, sample, QueryMode::kOrdered, nullptr,
      [&](const std::vector<std::size_t>& order, const DecoderOutput& out) {
        const Matrix chunk = out.AttentionMatrix();
        if (attention.rows == 0) attention = Matrix(sample.num_queries(), chunk.cols);
        for (std::size_t j = 0; j < order.size(); ++j) {
          std::copy(chunk.Row(j).begin(), chunk.Row(j).end(),
                    attention.Row(order[j]).begin());
        }
      });
  return attention;
}

std::vector<double> InWindowMass(const Matrix& attention,
                                 std::span<const MomentSpan> spans) {
  if (spans.size() != attention.rows) {
    throw ShapeError("attention rows do not match the number of spans");
  }
  std::vector<double> mass(spans.size(), 0.0);
  for (std::size_t j = 0; j < spans.size(); ++j) {
    const ClipMask mask = GtClipMask(spans[j], attention.cols);
    for (std::size_t i = 0; i < attention.cols; ++i) {
      if (mask[i]) mass[j] += attention(j, i);
    }
  }
  return mass;
}

double MeanInWindowAttention(const GroundingModel& model,
                             std::span<const GroundingSample> samples) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& sample : samples) {
    for (double m : InWindowMass(ParagraphAttention(model, sample), sample.spans)) {
      total += m;
      ++count;
    }
  }
  if (count == 0) throw Error("no sentences to measure attention on");
  return total / static_cast<double>(count);
}

TrainResult Train(const TrainConfig& config, const ModelConfig& model_config,
                  std::span<const GroundingSample> dataset,
                  const EpochObserver& on_epoch) {
  config.Validate();
  model_config.Validate();
  if (dataset.empty()) throw Error("training needs a non-empty dataset");

  TrainResult result{GroundingModel(model_config), std::nullopt, 0, -1.0, {}};
  GroundingModel& model = result.model;
  AdamState adam = AdamState::For(model.parameters(), config.adam_beta1,
                                  config.adam_beta2, config.adam_eps);
  Rng rng = Rng::Stream(config.seed, 0);
  Rng dropout_rng = Rng::Stream(config.seed, 1);
  const ForwardOptions options{&dropout_rng, nullptr};

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.Shuffle(order);
    double regression_sum = 0.0, attention_sum = 0.0;
    double iou_sum = 0.0;
    std::size_t iou_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double weight = 1.0 / static_cast<double>(end - begin);
      for (std::size_t b = begin; b < end; ++b) {
        const GroundingSample& full = dataset[order[b]];
        const GroundingSample sample = SampleTrainingQueries(
            full, config.k_min, config.k_max, config.query_mode, rng);
        SampleLoss loss;
        try {
          loss = ComputeSampleLoss(model, sample, config.query_mode, config, options);
        } catch (const NumericError& e) {
          throw NumericError("step " + std::to_string(step) + ", sample '" +
                             full.video_id + "': " + e.what());
        }
        Backward(Scale(loss.total, weight));
        regression_sum += loss.regression;
        attention_sum += loss.attention;
        for (std::size_t j = 0; j < loss.spans.size(); ++j) {
          iou_sum += TemporalIou(loss.spans[j], sample.spans[j]);
          ++iou_count;
        }
      }
      double lr = config.learning_rate;
      if (config.warmup_steps > 0) {
        lr *= std::min(1.0, static_cast<double>(step + 1) /
                                static_cast<double>(config.warmup_steps));
      }
      try {
        AdamStep(model.parameters(), adam, lr);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      ++step;
    }
    EpochLog entry;
    entry.epoch = epoch;
    const double n = static_cast<double>(dataset.size());
    entry.regression_loss = regression_sum / n;
    entry.attention_loss = attention_sum / n;
    entry.total_loss = entry.regression_loss + entry.attention_loss;
    entry.train_miou = iou_sum / static_cast<double>(iou_count);
    if (entry.train_miou > result.best_miou) {
      result.best_miou = entry.train_miou;
      result.best_epoch = epoch;
      result.best_model = model.Clone();
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

const AblationRow& AblationResult::Row(int row) const {
  for (const auto& r : rows) {
    if (r.row == row) return r;
  }
  throw Error("ablation has no row " + std::to_string(row));
}

std::string AblationResult::Table() const {
  auto multiple = [](QueryMode m) { return m == QueryMode::kSingle ? "no" : "yes"; };
  auto ordered = [](QueryMode m) {
    return m == QueryMode::kSingle ? "-" : (m == QueryMode::kOrdered ? "yes" : "no");
  };
  std::ostringstream os;
  os << "+-----+----------------+----------------+--------+\n"
     << "|     |     Train      |      Test      |        |\n"
     << "| Row | Multi  Ordered | Multi  Ordered |  mIoU  |\n"
     << "+-----+----------------+----------------+--------+\n";
  for (const auto& r : rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "| %3d | %-5s  %-7s | %-5s  %-7s | %6.2f |\n",
                  r.row, multiple(r.train_mode), ordered(r.train_mode),
                  multiple(r.test_mode), ordered(r.test_mode),
                  100.0 * r.report.mean_iou);
    os << line;
  }
  os << "+-----+----------------+----------------+--------+\n";
  return os.str();
}

AblationResult RunAblation(std::span<const GroundingSample> train,
                           std::span<const GroundingSample> test,
                           const TrainConfig& config,
                           const ModelConfig& model_config,
                           const EpochObserver& on_epoch) {
  auto train_mode = [&](QueryMode mode) {
    TrainConfig c = config;
    c.query_mode = mode;
    return std::move(Train(c, model_config, train, on_epoch).model);
  };
  const GroundingModel ordered = train_mode(QueryMode::kOrdered);
  const GroundingModel shuffled = train_mode(QueryMode::kShuffled);
  const GroundingModel single = train_mode(QueryMode::kSingle);

  AblationResult result;
  auto add = [&](int row, const GroundingModel& model, QueryMode train_as,
                 QueryMode test_as) {
    result.rows.push_back({row, train_as, test_as,
                           EvaluateModel(model, test, test_as, config.thresholds,
                                         config.seed)});
  };
  add(1, ordered, QueryMode::kOrdered, QueryMode::kOrdered);
  add(2, shuffled, QueryMode::kShuffled, QueryMode::kShuffled);
  add(3, single, QueryMode::kSingle, QueryMode::kSingle);
  add(4, ordered, QueryMode::kOrdered, QueryMode::kSingle);
  add(5, ordered, QueryMode::kOrdered, QueryMode::kShuffled);
  return result;
}

}  // namespace densevg
