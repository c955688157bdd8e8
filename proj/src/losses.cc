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

#include "densevg/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace densevg {
namespace {

std::vector<std::size_t> ValidRows(std::size_t k, const Mask& valid) {
  if (!valid.empty() && valid.size() != k) {
    throw ShapeError("validity mask has " + std::to_string(valid.size()) +
                     " entries for " + std::to_string(k) + " queries");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < k; ++i) {
    if (valid.empty() || valid[i]) rows.push_back(i);
  }
  if (rows.empty()) throw Error("loss needs at least one valid query");
  return rows;
}

Tensor Column(const std::vector<double>& values) {
  return Tensor::FromData({values.size(), 1}, values);
}

// Valid rows of the attention map plus a matching constant 0/1 mask tensor.
struct MaskedAttention {
  Tensor attention;
  Tensor mask;
  std::vector<double> counts;
};

MaskedAttention PrepareAttention(const Tensor& attention,
                                 std::span<const ClipMask> masks,
                                 const Mask& valid) {
  if (attention.rank() != 2) {
    throw ShapeError("attention map must be K x N, got " +
                     ShapeToString(attention.shape()));
  }
  const std::size_t k = attention.shape()[0], n = attention.shape()[1];
  if (masks.size() != k) {
    throw ShapeError("got " + std::to_string(masks.size()) +
                     " clip masks for " + std::to_string(k) + " queries");
  }
  const auto rows = ValidRows(k, valid);
  std::vector<double> mask_values;
  mask_values.reserve(rows.size() * n);
  std::vector<double> counts;
  for (std::size_t r : rows) {
    if (masks[r].size() != n) {
      throw ShapeError("clip mask for query " + std::to_string(r) + " has " +
                       std::to_string(masks[r].size()) + " entries, expected " +
                       std::to_string(n));
    }
    double count = 0.0;
    for (std::uint8_t m : masks[r]) {
      mask_values.push_back(m ? 1.0 : 0.0);
      count += m ? 1.0 : 0.0;
    }
    if (count == 0.0) {
      throw Error("clip mask for query " + std::to_string(r) + " is empty");
    }
    counts.push_back(count);
  }
  return {GatherRows(attention, rows),
          Tensor::FromData({rows.size(), n}, std::move(mask_values)),
          std::move(counts)};
}

}  // namespace

void LossWeights::Validate() const {
  if (lambda < 0.0 || beta < 0.0) {
    throw ConfigError("lambda/beta", "loss weights must be nonnegative");
  }
  if (lambda == 0.0 && beta == 0.0) {
    throw ConfigError("lambda/beta", "at least one loss weight must be positive");
  }
}

AttentionLossKind ParseAttentionLossKind(std::string_view name) {
  if (name == "pl" || name == "proposal") return AttentionLossKind::kProposal;
  if (name == "pw" || name == "position-wise") {
    return AttentionLossKind::kPositionWise;
  }
  if (name == "none") return AttentionLossKind::kNone;
  throw ConfigError("attn-loss", "unknown attention loss '" +
                                     std::string(name) +
                                     "' (expected pl, pw or none)");
}

std::string ToString(AttentionLossKind kind) {
  switch (kind) {
    case AttentionLossKind::kProposal:
      return "pl";
    case AttentionLossKind::kPositionWise:
      return "pw";
    case AttentionLossKind::kNone:
      return "none";
  }
  return "?";
}

IouLossKind ParseIouLossKind(std::string_view name) {
  if (name == "giou") return IouLossKind::kGiou;
  if (name == "iou") return IouLossKind::kIou;
  throw ConfigError("iou-loss", "unknown overlap loss '" + std::string(name) +
                                    "' (expected giou or iou)");
}

std::string ToString(IouLossKind kind) {
  return kind == IouLossKind::kGiou ? "giou" : "iou";
}

double TemporalIou(const MomentSpan& a, const MomentSpan& b) {
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.Length() + b.Length() - inter;
  if (uni <= 0.0) return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  return inter / uni;
}

double Giou1d(const MomentSpan& pred, const MomentSpan& gt) {
  const double iou = TemporalIou(pred, gt);
  const double enclosure =
      std::max(pred.end, gt.end) - std::min(pred.start, gt.start);
  if (enclosure <= 0.0) return iou;
  const double inter =
      std::min(pred.end, gt.end) - std::max(pred.start, gt.start);
  // Overlapping intervals fill their enclosure, so the penalty vanishes.
  if (inter > 0.0) return iou;
  const double uni = pred.Length() + gt.Length();
  return iou - (enclosure - uni) / enclosure;
}

ClipMask GtClipMask(const MomentSpan& gt, std::size_t n_clips) {
  if (n_clips == 0) throw Error("clip mask needs at least one clip");
  const double n = static_cast<double>(n_clips);
  ClipMask mask(n_clips, 0);
  bool any = false;
  for (std::size_t i = 0; i < n_clips; ++i) {
    const double center = (static_cast<double>(i) + 0.5) / n;
    if (center >= gt.start && center <= gt.end) {
      mask[i] = 1;
      any = true;
    }
  }
  if (!any) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_clips; ++i) {
      const double dist =
          std::abs((static_cast<double>(i) + 0.5) / n - gt.Center());
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    mask[best] = 1;
  }
  return mask;
}

Tensor RegressionLoss(const Tensor& spans, std::span<const MomentSpan> gts,
                      const LossWeights& weights, const Mask& valid,
                      IouLossKind iou_kind) {
  if (spans.rank() != 2 || spans.shape()[1] != 2) {
    throw ShapeError("predicted spans must be K x 2, got " +
                     ShapeToString(spans.shape()));
  }
  const std::size_t k = spans.shape()[0];
  if (gts.size() != k) {
    throw ShapeError("got " + std::to_string(gts.size()) +
                     " ground-truth spans for " + std::to_string(k) +
                     " predictions");
  }
  const auto rows = ValidRows(k, valid);
  std::vector<double> gt_start, gt_end;
  for (std::size_t r : rows) {
    gt_start.push_back(gts[r].start);
    gt_end.push_back(gts[r].end);
  }
  const Tensor pred = GatherRows(spans, rows);
  const Tensor ps = SliceCols(pred, 0, 1);
  const Tensor pe = SliceCols(pred, 1, 2);
  const Tensor gs = Column(gt_start);
  const Tensor ge = Column(gt_end);

  const Tensor l1 = Abs(ps - gs) + Abs(pe - ge);

  // The 1e-12 guards only matter for degenerate zero-length unions, which
  // ground-truth spans of positive length never produce.
  const Tensor inter = Relu(Minimum(pe, ge) - Maximum(ps, gs));
  const Tensor uni = (pe - ps) + (ge - gs) - inter;
  Tensor overlap = inter / ClampMin(uni, 1e-12);
  if (iou_kind == IouLossKind::kGiou) {
    const Tensor enclosure = Maximum(pe, ge) - Minimum(ps, gs);
    overlap = overlap - (enclosure - uni) / ClampMin(enclosure, 1e-12);
  }
  const Tensor overlap_loss = AddScalar(Scale(overlap, -1.0), 1.0);
  return Mean(Scale(l1, weights.lambda) + Scale(overlap_loss, weights.beta));
}

Tensor PositionWiseAttentionLoss(const Tensor& attention,
                                 std::span<const ClipMask> masks,
                                 const Mask& valid) {
  auto prepared = PrepareAttention(attention, masks, valid);
  std::vector<double> inv_counts;
  for (double c : prepared.counts) inv_counts.push_back(1.0 / c);
  const Tensor log_attention =
      Log(ClampMin(prepared.attention, kAttentionLogFloor));
  const Tensor per_query =
      RowSum(prepared.mask * log_attention) * Column(inv_counts);
  return Scale(Mean(per_query), -1.0);
}

Tensor ProposalAttentionLoss(const Tensor& attention,
                             std::span<const ClipMask> masks,
                             const Mask& valid) {
  auto prepared = PrepareAttention(attention, masks, valid);
  const Tensor mass = RowSum(prepared.attention * prepared.mask);
  return Scale(Mean(Log(ClampMin(mass, kAttentionLogFloor))), -1.0);
}

Tensor AttentionLoss(AttentionLossKind kind, const Tensor& attention,
                     std::span<const ClipMask> masks, const Mask& valid) {
  switch (kind) {
    case AttentionLossKind::kProposal:
      return ProposalAttentionLoss(attention, masks, valid);
    case AttentionLossKind::kPositionWise:
      return PositionWiseAttentionLoss(attention, masks, valid);
    case AttentionLossKind::kNone:
      break;
  }
  return Tensor::Scalar(0.0);
}

Tensor TotalLoss(const Tensor& regression, const Tensor& attention) {
  if (!std::isfinite(regression.item()) || !std::isfinite(attention.item())) {
    std::ostringstream os;
    os << "non-finite loss component: regression=" << regression.item()
       << " attention=" << attention.item();
    throw NumericError(os.str());
  }
  return regression + attention;
}

}  // namespace densevg
