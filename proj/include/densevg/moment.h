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

#ifndef DENSEVG_MOMENT_H_
#define DENSEVG_MOMENT_H_

#include <string>

#include "densevg/error.h"

namespace densevg {

// Normalized temporal interval, 0 <= start <= end <= 1.
struct MomentSpan {
  double start = 0.0;
  double end = 0.0;

  // Throws Error unless the bounds form a valid normalized interval.
  static MomentSpan Make(double start, double end);

  bool IsValid() const {
    return 0.0 <= start && start <= end && end <= 1.0;
  }
  double Length() const { return end - start; }
  double Center() const { return 0.5 * (start + end); }

  std::string ToString() const;

  bool operator==(const MomentSpan&) const = default;
};

}  // namespace densevg

#endif  // DENSEVG_MOMENT_H_
