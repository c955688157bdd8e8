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

// Training objectives for parallel span regression.
//
// The total objective is regression + attention. Regression combines an L1
// term on the two boundaries with an interval-overlap term (1 - GIoU by
// default). The attention term supervises the decoder's query-to-clip
// cross-attention using the ground-truth window, either per clip
// (position-wise) or as a single in-window mass (proposal-level).

#ifndef DENSEVG_LOSSES_H_
#define DENSEVG_LOSSES_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densevg/moment.h"
#include "densevg/tensor.h"

namespace densevg {

// Floor applied to attention values before taking logs.
inline constexpr double kAttentionLogFloor = 1e-12;

struct LossWeights {
  double lambda = 2.0;  // L1 boundary term
  double beta = 2.0;    // interval-overlap term

  void Validate() const;
};

enum class IouLossKind { kGiou, kIou };
enum class AttentionLossKind { kProposal, kPositionWise, kNone };

// Accepts "pl"/"proposal", "pw"/"position-wise" and "none".
AttentionLossKind ParseAttentionLossKind(std::string_view name);
std::string ToString(AttentionLossKind kind);
IouLossKind ParseIouLossKind(std::string_view name);
std::string ToString(IouLossKind kind);

// Per-clip membership in a ground-truth window; nonzero means inside.
using ClipMask = std::vector<std::uint8_t>;

// Intersection over union. Two coinciding zero-length spans give 1; any
// other zero-length union gives 0.
double TemporalIou(const MomentSpan& a, const MomentSpan& b);

// IoU minus the uncovered fraction of the smallest enclosing interval.
double Giou1d(const MomentSpan& pred, const MomentSpan& gt);

// Clip i covers [i/N, (i+1)/N) and is inside when its center lies in
// [start, end]. When no center qualifies, the clip whose center is nearest
// the span midpoint is marked instead.
ClipMask GtClipMask(const MomentSpan& gt, std::size_t n_clips);

// `spans` is K x 2 (start, end). `valid` may be empty (all valid); the mean
// runs over valid rows only. Throws when no row is valid.
Tensor RegressionLoss(const Tensor& spans, std::span<const MomentSpan> gts,
                      const LossWeights& weights, const Mask& valid = {},
                      IouLossKind iou_kind = IouLossKind::kGiou);

// Mean over valid queries of -sum_i m_i log a_i / sum_i m_i.
Tensor PositionWiseAttentionLoss(const Tensor& attention,
                                 std::span<const ClipMask> masks,
                                 const Mask& valid = {});

// Mean over valid queries of -log(sum_{i in window} a_i).
Tensor ProposalAttentionLoss(const Tensor& attention,
                             std::span<const ClipMask> masks,
                             const Mask& valid = {});

// Dispatches on `kind`; kNone yields a constant zero.
Tensor AttentionLoss(AttentionLossKind kind, const Tensor& attention,
                     std::span<const ClipMask> masks, const Mask& valid = {});

// regression + attention. Throws NumericError if either is not finite.
Tensor TotalLoss(const Tensor& regression, const Tensor& attention);

}  // namespace densevg

#endif  // DENSEVG_LOSSES_H_
