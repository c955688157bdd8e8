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

#ifndef DENSEVG_METRICS_H_
#define DENSEVG_METRICS_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "densevg/moment.h"

namespace densevg {

// One span for one sentence of one video; used for both predictions and
// ground truth.
struct SpanRecord {
  std::string video_id;
  std::size_t query_index = 0;
  MomentSpan span;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> recalls;  // aligned with thresholds, fractions in [0,1]
  double mean_iou = 0.0;
  std::size_t query_count = 0;
  // Per-query IoU, ordered by (video_id, query_index).
  std::vector<double> per_query_iou;

  double RecallAt(double threshold) const;
};

// Fraction of queries with IoU strictly greater than theta.
double RecallAt1(std::span<const double> ious, double theta);

// Builds a report from per-query IoUs (reduction in the given order).
EvalReport ReportFromIous(std::vector<double> ious,
                          std::span<const double> thresholds);

// Joins predictions to ground truth by (video_id, query_index). Every
// ground-truth key needs exactly one prediction; missing, duplicate or
// unmatched keys raise an Error that lists them.
EvalReport Evaluate(std::span<const SpanRecord> predictions,
                    std::span<const SpanRecord> ground_truth,
                    std::span<const double> thresholds);

// Fixed-width text table, percentages with two decimals.
std::string ReportTable(const EvalReport& report);

// Machine-readable rendering (JSON object).
std::string ReportJson(const EvalReport& report);

}  // namespace densevg

#endif  // DENSEVG_METRICS_H_
