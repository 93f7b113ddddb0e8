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
#include <span>
#include <vector>

#include "fedkws/datasim.hpp"
#include "fedkws/fedsim.hpp"
#include "fedkws/model.hpp"

namespace fedkws {

// Linear warm-up to peak over warmup_steps, then exponential decay with the
// given half-life: lr(s) = peak * min(1, s/warmup) * 2^(-max(0, s-warmup)/half_life).
struct CentralLrSchedule {
  std::size_t warmup_steps = 800;
  double peak_lr = 0.06;
  double half_life_steps = 40000.0;
};

double central_lr(const CentralLrSchedule& schedule, std::size_t step);

struct CentralConfig {
  std::size_t steps = 8000;
  std::size_t batch_size = 8;
  CentralLrSchedule lr;

  void validate() const;
};

struct CentralStepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// Mini-batch SGD with the supervised objective on server-side labeled data.
// `step_offset` continues the schedule across successive blocks. A non-finite
// loss aborts with diagnostics.
ModelParams central_train(const ModelArch& arch, ModelParams params,
                          std::span<const LabeledExample> dataset, const CentralConfig& cfg,
                          const LossConfig& loss_cfg, std::size_t n_steps,
                          std::size_t step_offset, Rng& rng,
                          std::vector<CentralStepRecord>* history = nullptr,
                          std::size_t record_every = 25);

struct JointConfig {
  double central_weight = 1.0;
  double fl_weight = 0.1;
  std::size_t central_steps_per_round = 150;
  std::size_t outer_rounds = 200;
  bool normalized_average = true;
  bool reset_yogi_each_round = false;

  void validate() const;
};

// Weighted combination of the two branches. The normalized form is computed
// as w_c + t*(w_f - w_c) with t = fl/(central+fl), so any parameter the
// branches agree on passes through bit-exactly.
ModelParams combine_branches(const ModelParams& central_branch, const ModelParams& fl_branch,
                             const JointConfig& cfg);

// One outer round: a central block and one federated round both start from
// the same snapshot (equivalent to running them in parallel), then the
// weighted average forms the next global model.
ModelParams joint_round(const ModelArch& arch, const ModelParams& global_params,
                        std::span<const LabeledExample> central_dataset, Population& population,
                        std::span<const SelectionRule> rules, const Model& teacher,
                        const LossConfig& loss_cfg, const CentralConfig& central_cfg,
                        const FedConfig& fed_cfg, const JointConfig& joint_cfg, YogiState& yogi,
                        std::size_t round, std::uint64_t run_seed, std::size_t workers,
                        RoundReport* fed_report = nullptr,
                        std::vector<CentralStepRecord>* central_history = nullptr);

struct JointHistory {
  std::vector<RoundReport> fed_rounds;
  std::vector<CentralStepRecord> central_steps;
};

JointHistory run_joint(const ModelArch& arch, ModelParams& params,
                       std::span<const LabeledExample> central_dataset, Population& population,
                       std::span<const SelectionRule> rules, const Model& teacher,
                       const LossConfig& loss_cfg, const CentralConfig& central_cfg,
                       const FedConfig& fed_cfg, const JointConfig& joint_cfg,
                       std::uint64_t run_seed, std::size_t workers,
                       const EvalLossFn& eval_loss = nullptr,
                       const CheckpointSink& checkpoint_sink = nullptr);

// Elementwise mean of parameter snapshots; layouts must match.
ModelParams checkpoint_average(std::span<const ModelParams> checkpoints);

}  // namespace fedkws
