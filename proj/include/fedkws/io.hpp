// Copyright 2026 The fedkws Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fedkws/evalkit.hpp"
#include "fedkws/fedsim.hpp"
#include "fedkws/jointtrain.hpp"
#include "fedkws/nn.hpp"

namespace fedkws {

// Shortest decimal string that round-trips the double; keeps CSVs exact and
// byte-stable.
std::string format_double(double v);

// Checkpoint file: a fixed magic, format version, architecture hash,
// parameter count, round index, then raw little-endian 64-bit values.
struct Checkpoint {
  std::uint64_t arch_hash = 0;
  std::uint64_t round = 0;
  ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, std::uint64_t arch_hash,
                     std::uint64_t round, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_fed_history_csv(const std::filesystem::path& path, std::span<const RoundReport> rounds);
void write_central_history_csv(const std::filesystem::path& path,
                               std::span<const CentralStepRecord> steps);
void write_eval_curve_csv(const std::filesystem::path& path, const EvalReport& report);
void write_eval_summary_csv(const std::filesystem::path& path, const EvalReport& report);

struct EvalSummaryRow {
  std::string slice;
  double auc = 0.0;
  bool extrapolated = false;
  bool supported = true;
};
std::vector<EvalSummaryRow> read_eval_summary_csv(const std::filesystem::path& path);

}  // namespace fedkws
