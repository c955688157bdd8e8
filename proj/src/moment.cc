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

#include "densevg/moment.h"

#include <sstream>

namespace densevg {

MomentSpan MomentSpan::Make(double start, double end) {
  MomentSpan span{start, end};
  if (!span.IsValid()) {
    throw Error("invalid span " + span.ToString() +
                ": need 0 <= start <= end <= 1");
  }
  return span;
}

std::string MomentSpan::ToString() const {
  std::ostringstream os;
  os.precision(6);
  os << '(' << start << ", " << end << ')';
  return os.str();
}

}  // namespace densevg
