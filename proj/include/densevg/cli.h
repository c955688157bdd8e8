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

// Command-line front end. One binary, one subcommand per invocation:
//
//   gen-data   synthetic dataset directory
//   train      checkpoint, epoch log
//   eval       recall / mIoU report on a dataset directory
//   predict    spans for one video's sentences
//   gradcheck  analytic vs finite-difference gradients on a tiny model
//   attn-dump  cross-attention matrices and in-window attention mass
//   ablation   query-mode training/testing grid
//   replay     re-runs a command from the manifest it wrote
//
// Every command writes <out>/manifest.json holding its fully resolved
// options before doing any work. The DENSEVG_LOG environment variable
// (quiet, info, debug) controls progress output on stderr.
#ifndef DENSEVG_CLI_H_
#define DENSEVG_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace densevg {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime error or failed check
inline constexpr int kExitUsage = 2;    // bad flags or configuration

// `args` excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

int RunCli(int argc, char** argv);

}  // namespace densevg

#endif  // DENSEVG_CLI_H_
