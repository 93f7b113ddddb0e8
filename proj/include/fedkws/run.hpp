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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedkws/config.hpp"
#include "fedkws/evalkit.hpp"
#include "fedkws/filtering.hpp"
#include "fedkws/io.hpp"

namespace fedkws {

inline constexpr const char* kVersionString = "fedkws 0.1.0";

enum class Regime { kCentral, kFl, kFlFiltered, kJointFiltered };

const char* regime_name(Regime regime);
Regime regime_from_string(const std::string& name);

// Trains the central supervised model (which doubles as the distillation
// teacher). With a cache directory, the result is stored under a hash of the
// teacher-relevant configuration and reused.
Model train_teacher(const ExperimentConfig& cfg, const KeywordUniverse& universe,
                    const std::optional<std::filesystem::path>& cache_dir, std::size_t workers,
                    std::vector<CentralStepRecord>* history = nullptr);

struct RunResult {
  ModelParams final_params;
  EvalReport eval;
  std::filesystem::path dir;
  std::size_t fed_rounds_run = 0;
};

// Runs one training regime end to end and writes every artifact (manifest,
// resolved config, histories, checkpoints, evaluation CSVs) under out_dir.
RunResult run_regime(Regime regime, const ExperimentConfig& cfg,
                     const std::filesystem::path& out_dir,
                     const std::optional<std::filesystem::path>& teacher_cache_dir,
                     std::size_t workers);

// Evaluates a checkpoint against the configured evaluation set; the
// checkpoint's architecture hash must match the config.
EvalReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& ckpt,
                               const std::filesystem::path& out_dir, std::size_t workers);

struct StudyReport {
  std::size_t annotations = 0;
  std::vector<RuleAccuracy> rules;
};

// Synthesizes an annotated sample of (feedback, true label) pairs and
// estimates per-condition accuracy. `repetition` varies the stream so
// repeated studies are independent.
StudyReport annotation_study(const ExperimentConfig& cfg, std::size_t annotations,
                             std::uint64_t repetition = 0);

struct CompareRow {
  std::string regime;
  std::uint64_t seed = 0;
  double auc = 0.0;
  double federated_auc = 0.0;
  std::filesystem::path dir;
};

std::vector<CompareRow> collect_compare_rows(std::span<const std::filesystem::path> run_dirs);

struct EnsembleRow {
  std::string regime;
  double min_auc = 0.0;
  double min_federated_auc = 0.0;
  std::size_t runs = 0;
};

// Per-regime minimum AUC across seeds (the ensemble summary used for regime
// comparisons).
std::vector<EnsembleRow> ensemble_summary(std::span<const CompareRow> rows);

}  // namespace fedkws
