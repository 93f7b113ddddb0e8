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
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fedkws/datasim.hpp"
#include "fedkws/filtering.hpp"
#include "fedkws/model.hpp"

namespace fedkws {

// Linear warm-up to peak_lr over warmup_rounds, then exponential decay by
// decay_factor per decay_period with a continuous exponent.
struct ScheduleSpec {
  std::size_t warmup_rounds = 40;
  double peak_lr = 0.2;
  double decay_factor = 0.9;
  std::size_t decay_period = 1000;
};

double schedule_lr(const ScheduleSpec& spec, std::size_t round);

enum class ServerOptimizer { kAverage, kYogi };

struct YogiConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-3;
};

struct FedConfig {
  std::size_t cohort_size = 20;
  std::size_t max_local_epochs = 2;
  std::size_t max_local_steps = 30;
  double clip_norm = 0.5;
  ScheduleSpec client_lr{40, 0.1, 0.9, 1000};
  ScheduleSpec server_lr{40, 0.05, 0.1, 3000};
  ServerOptimizer server_optimizer = ServerOptimizer::kYogi;
  YogiConfig yogi;
  std::size_t max_rounds = 200;
  bool weight_by_examples = false;
  bool one_sided_adjustment = false;
  SpecAugmentConfig augment;
  double hours_per_round = 6.0;
  bool early_stop = true;
  std::size_t early_stop_window = 50;
  double early_stop_tolerance = 0.0;

  void validate() const;
};

struct ClientUpdate {
  std::vector<double> delta;  // local final weights minus round-start weights
  std::size_t steps_taken = 0;
  std::size_t examples_used = 0;
  double mean_loss = 0.0;
  bool failed = false;
};

struct YogiState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t round = 0;

  static YogiState init(std::size_t n, double epsilon);
};

// One adaptive server step on the negated mean client delta: m is the usual
// first moment, v moves toward g^2 additively (sign update), and the step is
// lr * m / (sqrt(v) + epsilon).
void yogi_step(YogiState& state, std::span<const double> pseudo_gradient, double lr,
               const YogiConfig& cfg, std::vector<double>& params);

// Local distillation training on the client's (optionally filtered) cache.
// Teacher labels are computed on the raw cached features; spectral
// augmentation perturbs only the student's input. An empty post-filter cache
// yields a zero update; a non-finite loss aborts with `failed` set.
ClientUpdate client_train(const ModelArch& arch, const ModelParams& global_params,
                          const ClientDevice& device, std::span<const SelectionRule> rules,
                          const Model& teacher, const LossConfig& loss_cfg, const FedConfig& cfg,
                          std::size_t round, Rng rng);

// Mean client delta over the cohort; failed updates carry zero weight, and
// with weight_by_examples clients count in proportion to their cache usage.
std::vector<double> aggregate_updates(std::span<const ClientUpdate> updates,
                                      bool weight_by_examples);

struct RoundReport {
  std::size_t round = 0;
  double client_lr = 0.0;
  double server_lr = 0.0;
  double mean_local_loss = 0.0;
  double eval_loss = 0.0;
  std::size_t cohort_size = 0;
  bool skipped = false;
};

using EvalLossFn = std::function<double(const ModelParams&)>;
using CheckpointSink = std::function<void(std::size_t round, const ModelParams&)>;

// One federated round: sample a cohort from the eligible devices, train
// clients in parallel, aggregate deltas over sorted client ids, and apply
// the server optimizer. Skips (with a report) when fewer than cohort_size
// devices are eligible.
RoundReport run_round(const ModelArch& arch, ModelParams& params, YogiState& yogi,
                      Population& population, std::span<const SelectionRule> rules,
                      const Model& teacher, const LossConfig& loss_cfg, const FedConfig& cfg,
                      std::size_t round, std::uint64_t run_seed, std::size_t workers);

struct FedHistory {
  std::vector<RoundReport> rounds;
};

// Runs rounds until max_rounds or until the evaluation loss has not improved
// for early_stop_window rounds.
FedHistory run_federated(const ModelArch& arch, ModelParams& params, Population& population,
                         std::span<const SelectionRule> rules, const Model& teacher,
                         const LossConfig& loss_cfg, const FedConfig& cfg, std::uint64_t run_seed,
                         std::size_t workers, const EvalLossFn& eval_loss = nullptr,
                         const CheckpointSink& checkpoint_sink = nullptr);

}  // namespace fedkws
