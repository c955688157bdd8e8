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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "densevg/error.h"
#include "test_util.h"

namespace densevg {
namespace {

Tensor Param(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::FromData({n}, std::move(v), true);
}

ModelConfig TinyModel() {
  ModelConfig c;
  c.video_dim = 16;
  c.query_dim = 16;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.ffn_dim = 32;
  c.dropout = 0.0;
  c.max_clips = 8;
  return c;
}

GeneratorConfig TinyData() {
  GeneratorConfig g;
  g.n_clips = 8;
  g.feature_dim = 16;
  g.min_events = 2;
  g.max_events = 3;
  g.vocab_size = 4;
  g.min_span_clips = 2;
  return g;
}

TEST(AdamStep, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet params;
  params.Add("w", Param({1.0, -2.0}));
  AdamState state = AdamState::For(params);
  params.Get("w").mutable_grad();  // explicit zeros
  AdamStep(params, state, 0.1);
  EXPECT_EQ(params.Get("w").data()[0], 1.0);
  EXPECT_EQ(params.Get("w").data()[1], -2.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamStep, FirstStepMovesByLearningRate) {
  ParameterSet params;
  params.Add("w", Param({0.5}));
  AdamState state = AdamState::For(params);
  params.Get("w").mutable_grad()[0] = 1.0;
  const double lr = 1e-3;
  AdamStep(params, state, lr);
  EXPECT_NEAR(params.Get("w").data()[0], 0.5 - lr / (1.0 + 1e-8), 1e-15);
  EXPECT_FALSE(params.Get("w").has_grad());
}

TEST(AdamStep, IdenticalParametersFollowIdenticalTrajectories) {
  ParameterSet params;
  params.Add("a", Param({0.3, 0.7}));
  params.Add("b", Param({0.3, 0.7}));
  AdamState state = AdamState::For(params);
  for (int step = 0; step < 50; ++step) {
    Tensor loss = Sum(Sigmoid(params.Get("a")) * Sigmoid(params.Get("a"))) +
                  Sum(Sigmoid(params.Get("b")) * Sigmoid(params.Get("b")));
    Backward(loss);
    AdamStep(params, state, 0.01);
  }
  EXPECT_EQ(params.Get("a").ToMatrix(), params.Get("b").ToMatrix());
}

TEST(AdamStep, ZeroLearningRateStillUpdatesMoments) {
  ParameterSet params;
  params.Add("w", Param({1.0, 2.0}));
  AdamState state = AdamState::For(params);
  params.Get("w").mutable_grad()[0] = 3.0;
  params.Get("w").mutable_grad()[1] = -1.0;
  AdamStep(params, state, 0.0);
  EXPECT_EQ(params.Get("w").data()[0], 1.0);
  EXPECT_EQ(params.Get("w").data()[1], 2.0);
  EXPECT_NEAR(state.first_moment[0][0], 0.3, 1e-15);
  EXPECT_NEAR(state.second_moment[0][1], 0.001, 1e-15);
}

TEST(AdamStep, NonFiniteGradientNamesParameterAndChangesNothing) {
  ParameterSet params;
  params.Add("good", Param({1.0}));
  params.Add("bad", Param({2.0}));
  AdamState state = AdamState::For(params);
  params.Get("good").mutable_grad()[0] = 1.0;
  params.Get("bad").mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    AdamStep(params, state, 0.1);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
  EXPECT_EQ(params.Get("good").data()[0], 1.0);
  EXPECT_EQ(state.step, 0u);
}

TEST(SampleTrainingQueries, TwoQueriesAreBothKeptInOrder) {
  GeneratorConfig g = TinyData();
  g.max_events = 2;
  const GroundingSample s = GenerateDataset(g, 1)[0];
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const GroundingSample out =
        SampleTrainingQueries(s, 2, 8, QueryMode::kOrdered, rng);
    EXPECT_EQ(out.spans, s.spans);
    EXPECT_EQ(out.queries, s.queries);
  }
}

TEST(SampleTrainingQueries, OrderedModeKeepsSpansSorted) {
  GeneratorConfig g;
  g.min_events = 6;
  const auto data = GenerateDataset(g, 20);
  Rng rng(2);
  for (const auto& s : data) {
    const GroundingSample out =
        SampleTrainingQueries(s, 2, 8, QueryMode::kOrdered, rng);
    EXPECT_GE(out.num_queries(), 2u);
    EXPECT_LE(out.num_queries(), s.num_queries());
    for (std::size_t i = 1; i < out.num_queries(); ++i) {
      EXPECT_LT(out.spans[i - 1].start, out.spans[i].start);
    }
    // Query rows stay aligned with their spans.
    for (std::size_t i = 0; i < out.num_queries(); ++i) {
      const auto it = std::find(s.spans.begin(), s.spans.end(), out.spans[i]);
      ASSERT_NE(it, s.spans.end());
      const std::size_t src = it - s.spans.begin();
      EXPECT_TRUE(std::equal(out.queries.Row(i).begin(), out.queries.Row(i).end(),
                             s.queries.Row(src).begin()));
    }
  }
}

TEST(SampleTrainingQueries, ShuffledModeIsReproducible) {
  GeneratorConfig g;
  g.min_events = 8;
  const GroundingSample s = GenerateDataset(g, 1)[0];
  Rng a(7), b(7);
  bool any_unsorted = false;
  for (int i = 0; i < 20; ++i) {
    const GroundingSample x = SampleTrainingQueries(s, 2, 8, QueryMode::kShuffled, a);
    const GroundingSample y = SampleTrainingQueries(s, 2, 8, QueryMode::kShuffled, b);
    EXPECT_EQ(x.spans, y.spans);
    any_unsorted |= !std::is_sorted(
        x.spans.begin(), x.spans.end(),
        [](const MomentSpan& l, const MomentSpan& r) { return l.start < r.start; });
  }
  EXPECT_TRUE(any_unsorted);
}

TEST(QueryMode, Parsing) {
  EXPECT_EQ(ParseQueryMode("ordered"), QueryMode::kOrdered);
  EXPECT_EQ(ParseQueryMode("shuffled"), QueryMode::kShuffled);
  EXPECT_EQ(ParseQueryMode("single"), QueryMode::kSingle);
  EXPECT_THROW(ParseQueryMode("random"), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.Validate();
  c.learning_rate = -1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TrainConfig{};
  c.k_min = 5;
  c.k_max = 3;
  EXPECT_THROW(c.Validate(), ConfigError);
}

std::vector<double> GradientSnapshot(const GroundingModel& model) {
  std::vector<double> g;
  for (const auto& [name, t] : model.parameters()) {
    if (t.has_grad()) {
      g.insert(g.end(), t.grad().begin(), t.grad().end());
    } else {
      g.insert(g.end(), t.numel(), 0.0);
    }
  }
  return g;
}

TEST(AccumulateBatchGradient, EqualsMeanOfPerSampleGradients) {
  GroundingModel model(TinyModel());
  const auto data = GenerateDataset(TinyData(), 3);
  TrainConfig config;
  model.parameters().ZeroGrad();
  AccumulateBatchGradient(model, data, config);
  const std::vector<double> batch = GradientSnapshot(model);

  std::vector<double> mean(batch.size(), 0.0);
  for (const auto& s : data) {
    model.parameters().ZeroGrad();
    AccumulateBatchGradient(model, std::span(&s, 1), config);
    const auto g = GradientSnapshot(model);
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i] / data.size();
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    worst = std::max(worst, testing::RelativeError(batch[i], mean[i]));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const auto data = GenerateDataset(TinyData(), 2);
  TrainConfig config;
  config.epochs = 0;
  const TrainResult result = Train(config, TinyModel(), data);
  const GroundingModel init(TinyModel());
  auto it = init.parameters().begin();
  for (const auto& [name, t] : result.model.parameters()) {
    EXPECT_EQ(t.ToMatrix(), it->second.ToMatrix()) << name;
    ++it;
  }
  EXPECT_TRUE(result.log.empty());
}

TEST(Train, SameSeedGivesBitIdenticalRuns) {
  const auto data = GenerateDataset(TinyData(), 4);
  TrainConfig config;
  config.epochs = 5;
  config.batch_size = 2;
  ModelConfig model = TinyModel();
  model.dropout = 0.1;
  const TrainResult a = Train(config, model, data);
  const TrainResult b = Train(config, model, data);
  ASSERT_EQ(a.log.size(), 5u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.log[i].total_loss, &b.log[i].total_loss,
                          sizeof(double)),
              0);
  }
  auto it = b.model.parameters().begin();
  for (const auto& [name, t] : a.model.parameters()) {
    EXPECT_EQ(t.ToMatrix(), it->second.ToMatrix()) << name;
    ++it;
  }
}

TEST(Train, OverfitsASingleSample) {
  // Two sentences, so every epoch sees the same query set.
  GeneratorConfig g = TinyData();
  g.max_events = 2;
  const auto data = GenerateDataset(g, 1);
  TrainConfig config;
  config.epochs = 300;
  config.learning_rate = 1e-3;
  const TrainResult result = Train(config, TinyModel(), data);
  EXPECT_GE(result.log.back().train_miou, 0.9);
  EXPECT_GE(result.log.front().total_loss / result.log.back().total_loss,
            100.0);
  const std::vector<double> thresholds = {0.5};
  EXPECT_GE(EvaluateModel(result.model, data, QueryMode::kOrdered, thresholds)
                .mean_iou,
            0.9);
}

TEST(PredictParagraph, SplitsLongParagraphs) {
  GeneratorConfig g;
  g.min_events = g.max_events = 9;
  g.n_clips = 32;
  g.min_span_clips = 2;
  const GroundingSample s = GenerateDataset(g, 1)[0];
  ModelConfig m;
  m.dropout = 0.0;
  const GroundingModel model(m);
  const auto spans = PredictParagraph(model, s, QueryMode::kOrdered);
  ASSERT_EQ(spans.size(), 9u);
  // The ninth sentence is decoded alone, as the first slot of a new chunk.
  const std::vector<std::size_t> last = {8};
  const auto alone = PredictParagraph(model, s.SelectQueries(last),
                                      QueryMode::kOrdered);
  EXPECT_EQ(alone[0], spans[8]);
}

TEST(PredictParagraph, ShuffledPredictionsReturnInParagraphOrder) {
  GeneratorConfig g;
  g.min_events = 5;
  const GroundingSample s = GenerateDataset(g, 1)[0];
  ModelConfig m;
  m.positional_encoding = false;
  const GroundingModel model(m);
  // Without positional encoding the decoder is permutation equivariant, so
  // shuffling must not change any prediction.
  Rng rng(3);
  const auto shuffled = PredictParagraph(model, s, QueryMode::kShuffled, &rng);
  const auto ordered = PredictParagraph(model, s, QueryMode::kOrdered);
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    EXPECT_NEAR(shuffled[i].start, ordered[i].start, 1e-12);
    EXPECT_NEAR(shuffled[i].end, ordered[i].end, 1e-12);
  }
}

TEST(PredictParagraph, ResamplesClipCount) {
  GeneratorConfig g;
  g.n_clips = 64;
  const GroundingSample s = GenerateDataset(g, 1)[0];
  const GroundingModel model{ModelConfig{}};
  EXPECT_EQ(PredictParagraph(model, s, QueryMode::kOrdered).size(),
            s.num_queries());
}

TEST(Ablation, RepeatedRunsGiveIdenticalGrids) {
  const auto train = GenerateDataset(TinyData(), 3);
  GeneratorConfig held = TinyData();
  held.seed = 1;
  const auto test = GenerateDataset(held, 2);
  TrainConfig config;
  config.epochs = 2;
  const AblationResult a = RunAblation(train, test, config, TinyModel());
  const AblationResult b = RunAblation(train, test, config, TinyModel());
  ASSERT_EQ(a.rows.size(), 5u);
  for (int row = 1; row <= 5; ++row) {
    EXPECT_EQ(a.Row(row).report.mean_iou, b.Row(row).report.mean_iou);
  }
  EXPECT_EQ(a.Table(), b.Table());
  EXPECT_EQ(a.Row(3).train_mode, QueryMode::kSingle);
  EXPECT_EQ(a.Row(5).test_mode, QueryMode::kShuffled);
}

}  // namespace
}  // namespace densevg
