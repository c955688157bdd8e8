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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <utility>

#include "densevg/losses.h"
#include "json.hpp"

namespace densevg {
namespace {

using Key = std::pair<std::string, std::size_t>;

std::string KeyString(const Key& key) {
  return key.first + "#" + std::to_string(key.second);
}

std::string FormatPercent(double fraction) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", 100.0 * fraction);
  return buffer;
}

std::string FormatThreshold(double theta) {
  std::ostringstream os;
  os << theta;
  return os.str();
}

}  // namespace

double EvalReport::RecallAt(double threshold) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] == threshold) return recalls[i];
  }
  throw Error("threshold " + FormatThreshold(threshold) + " not in report");
}

double RecallAt1(std::span<const double> ious, double theta) {
  if (ious.empty()) throw Error("recall over an empty IoU list");
  std::size_t hits = 0;
  for (double iou : ious) {
    if (iou > theta) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ious.size());
}

EvalReport ReportFromIous(std::vector<double> ious,
                          std::span<const double> thresholds) {
  if (ious.empty()) throw Error("cannot evaluate zero queries");
  EvalReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double theta : thresholds) report.recalls.push_back(RecallAt1(ious, theta));
  double total = 0.0;
  for (double iou : ious) total += iou;
  report.mean_iou = total / static_cast<double>(ious.size());
  report.query_count = ious.size();
  report.per_query_iou = std::move(ious);
  return report;
}

EvalReport Evaluate(std::span<const SpanRecord> predictions,
                    std::span<const SpanRecord> ground_truth,
                    std::span<const double> thresholds) {
  std::map<Key, MomentSpan> gts;
  std::vector<std::string> problems;
  for (const auto& r : ground_truth) {
    if (!gts.emplace(Key{r.video_id, r.query_index}, r.span).second) {
      problems.push_back("duplicate ground truth " +
                         KeyString({r.video_id, r.query_index}));
    }
  }
  std::map<Key, MomentSpan> preds;
  for (const auto& r : predictions) {
    const Key key{r.video_id, r.query_index};
    if (!preds.emplace(key, r.span).second) {
      problems.push_back("duplicate prediction " + KeyString(key));
    } else if (!gts.contains(key)) {
      problems.push_back("prediction without ground truth " + KeyString(key));
    }
  }
  for (const auto& [key, span] : gts) {
    if (!preds.contains(key)) problems.push_back("missing prediction " + KeyString(key));
  }
  if (!problems.empty()) {
    std::string message = "evaluation keys do not match:";
    for (const auto& p : problems) message += "\n  " + p;
    throw Error(message);
  }
  std::vector<double> ious;
  ious.reserve(gts.size());
  for (const auto& [key, gt] : gts) ious.push_back(TemporalIou(preds.at(key), gt));
  return ReportFromIous(std::move(ious), thresholds);
}

std::string ReportTable(const EvalReport& report) {
  std::vector<std::string> headers;
  std::vector<std::string> cells;
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    headers.push_back("R@1,IoU=" + FormatThreshold(report.thresholds[i]));
    cells.push_back(FormatPercent(report.recalls[i]));
  }
  headers.push_back("mIoU");
  cells.push_back(FormatPercent(report.mean_iou));

  std::ostringstream os;
  std::string rule = "+";
  for (const auto& h : headers) rule += std::string(h.size() + 2, '-') + "+";
  os << rule << '\n' << '|';
  for (const auto& h : headers) os << ' ' << h << " |";
  os << '\n' << rule << '\n' << '|';
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::size_t pad = headers[i].size() - std::min(headers[i].size(), cells[i].size());
    os << ' ' << std::string(pad, ' ') << cells[i] << " |";
  }
  os << '\n' << rule << '\n';
  os << "queries: " << report.query_count << '\n';
  return os.str();
}

std::string ReportJson(const EvalReport& report) {
  nlohmann::json j;
  nlohmann::json recalls = nlohmann::json::object();
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    recalls[FormatThreshold(report.thresholds[i])] = report.recalls[i];
  }
  j["recall_at_1"] = recalls;
  j["thresholds"] = report.thresholds;
  j["miou"] = report.mean_iou;
  j["query_count"] = report.query_count;
  j["per_query_iou"] = report.per_query_iou;
  return j.dump(2);
}

}  // namespace densevg
