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

// Optimization and evaluation loops.

#ifndef DENSEVG_TRAIN_H_
#define DENSEVG_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densevg/data.h"
#include "densevg/losses.h"
#include "densevg/metrics.h"
#include "densevg/model.h"

namespace densevg {

// How sentences of a paragraph are fed to the decoder.
//   kOrdered:  several sentences per pass, in paragraph order.
//   kShuffled: several sentences per pass, in a random order.
//   kSingle:   each sentence on its own.
enum class QueryMode { kOrdered, kShuffled, kSingle };

QueryMode ParseQueryMode(std::string_view name);
std::string ToString(QueryMode mode);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 1;  // paragraphs per optimizer step
  std::size_t epochs = 300;
  LossWeights weights;
  AttentionLossKind attention_loss = AttentionLossKind::kProposal;
  IouLossKind iou_loss = IouLossKind::kGiou;
  std::uint64_t seed = 0;
  std::size_t k_min = 2;
  std::size_t k_max = 8;
  QueryMode query_mode = QueryMode::kOrdered;
  std::vector<double> thresholds = {0.3, 0.5, 0.7};
  std::size_t warmup_steps = 0;  // linear ramp of the learning rate; 0 = off
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void Validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState For(const ParameterSet& params, double beta1 = 0.9,
                       double beta2 = 0.999, double eps = 1e-8);
};

// Bias-corrected Adam update from the accumulated gradients, which are then
// cleared. Parameters without a gradient are treated as having a zero one.
// Throws NumericError naming the first parameter with a non-finite gradient,
// before anything is modified.
void AdamStep(ParameterSet& params, AdamState& state, double learning_rate);

// Draws K uniformly from [k_min, min(k_max, available)] (all sentences when
// fewer than k_min exist), picks K sentences without replacement, then keeps
// paragraph order (kOrdered, kSingle) or a uniform permutation (kShuffled).
GroundingSample SampleTrainingQueries(const GroundingSample& sample,
                                      std::size_t k_min, std::size_t k_max,
                                      QueryMode mode, Rng& rng);

// Decoder layout for a pass over `k` sentences in `mode`.
QueryLayout LayoutFor(QueryMode mode, std::size_t k);

struct SampleLoss {
  Tensor total;
  double regression = 0.0;
  double attention = 0.0;
  std::vector<MomentSpan> spans;
};

// Forward pass plus objective for one paragraph whose sentences are already
// arranged for `mode` (at most max_queries of them).
SampleLoss ComputeSampleLoss(const GroundingModel& model,
                             const GroundingSample& sample, QueryMode mode,
                             const TrainConfig& config,
                             const ForwardOptions& options = {});

// Accumulates into the parameters the gradient of the mean loss over
// `batch` (each sample taken as is, no query sampling, no dropout).
// Returns the mean loss.
double AccumulateBatchGradient(GroundingModel& model,
                               std::span<const GroundingSample> batch,
                               const TrainConfig& config);

// One span per sentence of a whole paragraph. Paragraphs longer than
// max_queries are split into consecutive chunks, each decoded as its own
// paragraph. kShuffled permutes each chunk with `rng` and restores the
// original order of the predictions.
std::vector<MomentSpan> PredictParagraph(const GroundingModel& model,
                                         const GroundingSample& sample,
                                         QueryMode mode, Rng* rng = nullptr);

// Evaluation over full paragraphs; the shuffle stream is seeded by `seed`.
EvalReport EvaluateModel(const GroundingModel& model,
                         std::span<const GroundingSample> samples,
                         QueryMode mode, std::span<const double> thresholds,
                         std::uint64_t seed = 0);

// Head-averaged final-layer cross-attention of every sentence of an ordered
// paragraph, K x N, rows in paragraph order.
Matrix ParagraphAttention(const GroundingModel& model,
                          const GroundingSample& sample);

// Per row, the attention mass on clips inside that row's ground-truth
// window (clip membership as for the attention losses).
std::vector<double> InWindowMass(const Matrix& attention,
                                 std::span<const MomentSpan> spans);

// Mean over all sentences of the final-layer cross-attention mass falling
// inside each ground-truth window (ordered paragraphs).
double MeanInWindowAttention(const GroundingModel& model,
                             std::span<const GroundingSample> samples);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double regression_loss = 0.0;
  double attention_loss = 0.0;
  double total_loss = 0.0;
  double train_miou = 0.0;  // running IoU of the training passes
};

struct TrainResult {
  GroundingModel model;
  std::optional<GroundingModel> best_model;  // highest train_miou epoch
  std::size_t best_epoch = 0;
  double best_miou = -1.0;
  std::vector<EpochLog> log;
};

using EpochObserver = std::function<void(const EpochLog&)>;

// Deterministic for a fixed config, model config and dataset. Aborts with a
// NumericError naming step, sample and loss components on a non-finite loss.
TrainResult Train(const TrainConfig& config, const ModelConfig& model_config,
                  std::span<const GroundingSample> dataset,
                  const EpochObserver& on_epoch = {});

struct AblationRow {
  int row = 0;
  QueryMode train_mode = QueryMode::kOrdered;
  QueryMode test_mode = QueryMode::kOrdered;
  EvalReport report;
};

struct AblationResult {
  std::vector<AblationRow> rows;

  const AblationRow& Row(int row) const;
  std::string Table() const;
};

// Trains ordered, shuffled and single-sentence models with the same seed and
// budget and evaluates them on `test`:
//   row 1 ordered -> ordered, row 2 shuffled -> shuffled,
//   row 3 single -> single,   row 4 ordered -> single,
//   row 5 ordered -> shuffled.
AblationResult RunAblation(std::span<const GroundingSample> train,
                           std::span<const GroundingSample> test,
                           const TrainConfig& config,
                           const ModelConfig& model_config,
                           const EpochObserver& on_epoch = {});

}  // namespace densevg

#endif  // DENSEVG_TRAIN_H_
