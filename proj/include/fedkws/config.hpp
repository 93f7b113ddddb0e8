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
#include <string>
#include <vector>

#include "json.hpp"

#include "fedkws/datasim.hpp"
#include "fedkws/evalkit.hpp"
#include "fedkws/fedsim.hpp"
#include "fedkws/filtering.hpp"
#include "fedkws/jointtrain.hpp"
#include "fedkws/model.hpp"

namespace fedkws {

struct FilterConfig {
  double score_threshold = 0.96;
  bool one_sided_adjustment = false;
  std::vector<SelectionRule> custom_rules;  // empty: built-in table

  std::vector<SelectionRule> rules() const {
    return custom_rules.empty() ? default_rules(score_threshold) : custom_rules;
  }
};

struct EvalConfig {
  EvalSpec set;
  std::size_t loss_eval_examples = 120;
};

// Which regimes post-process their final weights with checkpoint averaging.
struct CheckpointPolicy {
  std::size_t snapshot_every = 10;
  std::size_t average_count = 5;
  bool average_central = false;
  bool average_fl = true;
  bool average_fl_filtered = false;
  bool average_joint_filtered = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  ArchShape arch;
  LossConfig loss;
  DataConfig data = default_data_config();
  PopulationConfig population;
  CalibrationConfig calibration;
  FilterConfig filter;
  FedConfig fed;
  CentralConfig central;
  std::size_t central_dataset_size = 3000;
  JointConfig joint;
  EvalConfig eval;
  CheckpointPolicy checkpoints;
  std::size_t annotation_count = 11908;

  void validate() const;
  ModelArch model_arch() const;
  std::uint64_t hash() const;
  // Hash over the inputs that determine the teacher (and central regime).
  std::uint64_t teacher_hash() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// The documented default configuration, with commentary on which production
// values each desk-scale default stands in for.
std::string default_config_text();

}  // namespace fedkws
