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

#include "densevg/metrics.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "densevg/data.h"
#include "densevg/error.h"
#include "test_util.h"

namespace densevg {
namespace {

const std::vector<double> kThresholds = {0.3, 0.5, 0.7};

SpanRecord Rec(std::string id, std::size_t q, double s, double e) {
  return {std::move(id), q, MomentSpan::Make(s, e)};
}

// IoUs {0.8, 0.6, 0.2, 0.0} against the full-video span.
std::pair<std::vector<SpanRecord>, std::vector<SpanRecord>> FourQueries() {
  std::vector<SpanRecord> gt, pred;
  const double ends[] = {0.8, 0.6, 0.2, 0.0};
  for (std::size_t q = 0; q < 4; ++q) {
    gt.push_back(Rec("a", q, 0.0, 1.0));
    pred.push_back(Rec("a", q, 0.0, ends[q]));
  }
  return {pred, gt};
}

TEST(RecallAt1, Examples) {
  const std::vector<double> perfect = {1, 1, 1};
  EXPECT_EQ(RecallAt1(perfect, 0.5), 1.0);
  const std::vector<double> mixed = {0.6, 0.4, 0.5};
  EXPECT_NEAR(RecallAt1(mixed, 0.5), 1.0 / 3, 1e-15);
  const std::vector<double> below = {0.2, 0.99, 0.7};
  EXPECT_EQ(RecallAt1(below, 0.999), 0.0);
  EXPECT_THROW(RecallAt1(std::vector<double>{}, 0.5), Error);
}

TEST(RecallAt1, MonotoneInThreshold) {
  Rng rng(1);
  std::vector<double> ious(100);
  for (double& v : ious) v = rng.Uniform();
  double previous = 1.0;
  for (int i = 1; i < 100; ++i) {
    const double r = RecallAt1(ious, i / 100.0);
    EXPECT_LE(r, previous);
    previous = r;
  }
}

TEST(Evaluate, IdentityIsPerfect) {
  std::vector<SpanRecord> gt = {Rec("a", 0, 0.1, 0.4), Rec("a", 1, 0.5, 0.9),
                                Rec("b", 0, 0.0, 0.3)};
  const EvalReport r = Evaluate(gt, gt, kThresholds);
  EXPECT_EQ(r.recalls, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(r.mean_iou, 1.0);
  EXPECT_EQ(r.query_count, 3u);
}

TEST(Evaluate, FourQueryEnumeration) {
  const auto [pred, gt] = FourQueries();
  const EvalReport r = Evaluate(pred, gt, kThresholds);
  EXPECT_NEAR(r.RecallAt(0.3), 0.5, 1e-15);
  EXPECT_NEAR(r.RecallAt(0.5), 0.5, 1e-15);
  EXPECT_NEAR(r.RecallAt(0.7), 0.25, 1e-15);
  EXPECT_NEAR(r.mean_iou, 0.4, 1e-12);
}

TEST(Evaluate, MissingAndDuplicateKeysAreListed) {
  const auto [pred, gt] = FourQueries();
  std::vector<SpanRecord> missing(pred.begin(), pred.end() - 1);
  try {
    Evaluate(missing, gt, kThresholds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("a#3"), std::string::npos) << e.what();
  }
  std::vector<SpanRecord> dup = pred;
  dup.push_back(pred[1]);
  try {
    Evaluate(dup, gt, kThresholds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("a#1"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, InvariantToRecordOrder) {
  auto [pred, gt] = FourQueries();
  const EvalReport base = Evaluate(pred, gt, kThresholds);
  std::reverse(pred.begin(), pred.end());
  std::swap(gt[0], gt[2]);
  const EvalReport again = Evaluate(pred, gt, kThresholds);
  EXPECT_EQ(base.recalls, again.recalls);
  EXPECT_EQ(base.mean_iou, again.mean_iou);
  EXPECT_EQ(base.per_query_iou, again.per_query_iou);
}

// Straight loops over a (video, query) map, written without the library's
// join or IoU code.
EvalReport OracleEvaluate(const std::vector<SpanRecord>& pred,
                          const std::vector<SpanRecord>& gt) {
  std::map<std::pair<std::string, std::size_t>, MomentSpan> p;
  for (const auto& r : pred) p[{r.video_id, r.query_index}] = r.span;
  std::map<std::pair<std::string, std::size_t>, MomentSpan> g;
  for (const auto& r : gt) g[{r.video_id, r.query_index}] = r.span;
  EvalReport out;
  for (const auto& [key, span] : g) {
    const MomentSpan& q = p.at(key);
    out.per_query_iou.push_back(
        testing::OracleIou(q.start, q.end, span.start, span.end));
  }
  double sum = 0.0;
  for (double v : out.per_query_iou) sum += v;
  out.mean_iou = sum / out.per_query_iou.size();
  for (double t : kThresholds) {
    std::size_t hits = 0;
    for (double v : out.per_query_iou) hits += v > t;
    out.recalls.push_back(static_cast<double>(hits) / out.per_query_iou.size());
  }
  return out;
}

TEST(Evaluate, MatchesBruteForceOnSyntheticSamples) {
  GeneratorConfig config;
  config.seed = 5;
  const auto samples = GenerateDataset(config, 50);
  Rng rng(3);
  std::vector<SpanRecord> gt, pred;
  for (const auto& s : samples) {
    for (std::size_t q = 0; q < s.num_queries(); ++q) {
      gt.push_back({s.video_id, q, s.spans[q]});
      // Jitter the truth so IoUs cover the whole range.
      double a = std::clamp(s.spans[q].start + rng.Uniform(-0.2, 0.2), 0.0, 1.0);
      double b = std::clamp(s.spans[q].end + rng.Uniform(-0.2, 0.2), 0.0, 1.0);
      if (a > b) std::swap(a, b);
      pred.push_back(Rec(s.video_id, q, a, b));
    }
  }
  std::reverse(pred.begin(), pred.end());
  const EvalReport r = Evaluate(pred, gt, kThresholds);
  const EvalReport o = OracleEvaluate(pred, gt);
  ASSERT_EQ(r.per_query_iou.size(), o.per_query_iou.size());
  EXPECT_EQ(r.query_count, gt.size());
  for (std::size_t i = 0; i < o.per_query_iou.size(); ++i) {
    EXPECT_NEAR(r.per_query_iou[i], o.per_query_iou[i], 1e-12);
  }
  for (std::size_t i = 0; i < kThresholds.size(); ++i) {
    EXPECT_NEAR(r.recalls[i], o.recalls[i], 1e-12);
  }
  EXPECT_NEAR(r.mean_iou, o.mean_iou, 1e-12);
  const auto [lo, hi] =
      std::minmax_element(r.per_query_iou.begin(), r.per_query_iou.end());
  EXPECT_GE(r.mean_iou, *lo);
  EXPECT_LE(r.mean_iou, *hi);
}

TEST(ReportTable, IdentityShowsHundreds) {
  const std::vector<SpanRecord> gt = {Rec("a", 0, 0.1, 0.4)};
  const std::string table = ReportTable(Evaluate(gt, gt, kThresholds));
  std::size_t count = 0;
  for (std::size_t pos = table.find("100.00"); pos != std::string::npos;
       pos = table.find("100.00", pos + 1)) {
    ++count;
  }
  EXPECT_EQ(count, 4u) << table;
}

TEST(ReportTable, FourQueryCells) {
  const auto [pred, gt] = FourQueries();
  const std::string table = ReportTable(Evaluate(pred, gt, kThresholds));
  const std::size_t p1 = table.find("50.00");
  ASSERT_NE(p1, std::string::npos) << table;
  const std::size_t p2 = table.find("50.00", p1 + 1);
  ASSERT_NE(p2, std::string::npos) << table;
  const std::size_t p3 = table.find("25.00", p2);
  ASSERT_NE(p3, std::string::npos) << table;
  EXPECT_NE(table.find("40.00", p3), std::string::npos) << table;
  EXPECT_NE(table.find("R@1,IoU=0.3"), std::string::npos);
  EXPECT_NE(table.find("mIoU"), std::string::npos);
  EXPECT_EQ(table, ReportTable(Evaluate(pred, gt, kThresholds)));
}

TEST(ReportJson, CarriesAllFields) {
  const auto [pred, gt] = FourQueries();
  const std::string json = ReportJson(Evaluate(pred, gt, kThresholds));
  EXPECT_NE(json.find("\"miou\""), std::string::npos) << json;
  EXPECT_NE(json.find("\"query_count\": 4"), std::string::npos) << json;
}

}  // namespace
}  // namespace densevg
