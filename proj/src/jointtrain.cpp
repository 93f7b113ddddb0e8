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

#include "fedkws/jointtrain.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedkws/error.hpp"

namespace fedkws {

double central_lr(const CentralLrSchedule& schedule, std::size_t step) {
  double lr = schedule.peak_lr;
  if (schedule.warmup_steps > 0 && step < schedule.warmup_steps) {
    lr *= static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  }
  if (step > schedule.warmup_steps) {
    lr *= std::exp2(-static_cast<double>(step - schedule.warmup_steps) /
                    schedule.half_life_steps);
  }
  return lr;
}

void CentralConfig::validate() const {
  if (batch_size < 1) throw ConfigError("central batch_size must be >= 1");
  if (!(lr.peak_lr > 0.0)) throw ConfigError("central peak_lr must be > 0");
  if (!(lr.half_life_steps > 0.0)) throw ConfigError("central half_life_steps must be > 0");
}

ModelParams central_train(const ModelArch& arch, ModelParams params,
                          std::span<const LabeledExample> dataset, const CentralConfig& cfg,
                          const LossConfig& loss_cfg, std::size_t n_steps,
                          std::size_t step_offset, Rng& rng,
                          std::vector<CentralStepRecord>* history, std::size_t record_every) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("central training needs a nonempty dataset");

  std::vector<double> batch_grad(params.size());
  ModelForwardCache cache;
  for (std::size_t s = 0; s < n_steps; ++s) {
    const std::size_t step = step_offset + s;
    const double lr = central_lr(cfg.lr, step);
    std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const LabeledExample& ex = dataset[rng.uniform_below(dataset.size())];
      const ModelOutput out = model_forward(arch, params, ex.features, &cache);
      const LossResult loss = supervised_loss(out, ex.labels, loss_cfg);
      if (!std::isfinite(loss.value)) {
        throw std::runtime_error(cat("central training diverged at step ", step, " (loss ",
                                     loss.value, ", lr ", lr, ")"));
      }
      batch_loss += loss.value;
      const auto grad = model_backward(arch, params, cache, loss.encoder_grad, loss.decoder_grad);
      axpy(1.0 / static_cast<double>(cfg.batch_size), grad, batch_grad);
    }
    axpy(-lr, batch_grad, params.values);
    if (history && (step % record_every == 0 || s + 1 == n_steps)) {
      history->push_back({step, lr, batch_loss / static_cast<double>(cfg.batch_size)});
    }
  }
  return params;
}

void JointConfig::validate() const {
  if (!(central_weight > 0.0) || !(fl_weight > 0.0)) {
    throw ConfigError("joint branch weights must be > 0");
  }
}

ModelParams combine_branches(const ModelParams& central_branch, const ModelParams& fl_branch,
                             const JointConfig& cfg) {
  cfg.validate();
  if (central_branch.size() != fl_branch.size()) {
    throw std::invalid_argument(cat("joint branches disagree on layout: ", central_branch.size(),
                                    " vs ", fl_branch.size()));
  }
  ModelParams combined = central_branch;
  if (cfg.normalized_average) {
    const double t = cfg.fl_weight / (cfg.central_weight + cfg.fl_weight);
    for (std::size_t i = 0; i < combined.size(); ++i) {
      combined.values[i] += t * (fl_branch.values[i] - central_branch.values[i]);
    }
  } else {
    for (std::size_t i = 0; i < combined.size(); ++i) {
      combined.values[i] = cfg.central_weight * central_branch.values[i] +
                           cfg.fl_weight * fl_branch.values[i];
    }
  }
  return combined;
}

ModelParams joint_round(const ModelArch& arch, const ModelParams& global_params,
                        std::span<const LabeledExample> central_dataset, Population& population,
                        std::span<const SelectionRule> rules, const Model& teacher,
                        const LossConfig& loss_cfg, const CentralConfig& central_cfg,
                        const FedConfig& fed_cfg, const JointConfig& joint_cfg, YogiState& yogi,
                        std::size_t round, std::uint64_t run_seed, std::size_t workers,
                        RoundReport* fed_report, std::vector<CentralStepRecord>* central_history) {
  joint_cfg.validate();
  // Both branches start from the same snapshot; running them sequentially is
  // equivalent to the parallel execution they simulate.
  Rng central_rng = Rng(run_seed).child(0xCE27, round);
  ModelParams central_branch =
      central_train(arch, global_params, central_dataset, central_cfg, loss_cfg,
                    joint_cfg.central_steps_per_round,
                    round * joint_cfg.central_steps_per_round, central_rng, central_history);

  ModelParams fl_branch = global_params;
  RoundReport report = run_round(arch, fl_branch, yogi, population, rules, teacher, loss_cfg,
                                 fed_cfg, round, run_seed, workers);
  if (fed_report != nullptr) *fed_report = report;
  return combine_branches(central_branch, fl_branch, joint_cfg);
}

JointHistory run_joint(const ModelArch& arch, ModelParams& params,
                       std::span<const LabeledExample> central_dataset, Population& population,
                       std::span<const SelectionRule> rules, const Model& teacher,
                       const LossConfig& loss_cfg, const CentralConfig& central_cfg,
                       const FedConfig& fed_cfg, const JointConfig& joint_cfg,
                       std::uint64_t run_seed, std::size_t workers, const EvalLossFn& eval_loss,
                       const CheckpointSink& checkpoint_sink) {
  joint_cfg.validate();
  fed_cfg.validate();
  JointHistory history;
  YogiState yogi = YogiState::init(params.size(), fed_cfg.yogi.epsilon);
  double best_eval = std::numeric_limits<double>::infinity();
  std::size_t best_round = 0;
  for (std::size_t round = 0; round < joint_cfg.outer_rounds; ++round) {
    if (joint_cfg.reset_yogi_each_round) {
      yogi = YogiState::init(params.size(), fed_cfg.yogi.epsilon);
    }
    RoundReport report;
    params = joint_round(arch, params, central_dataset, population, rules, teacher, loss_cfg,
                         central_cfg, fed_cfg, joint_cfg, yogi, round, run_seed, workers, &report,
                         &history.central_steps);
    report.eval_loss =
        eval_loss ? eval_loss(params) : std::numeric_limits<double>::quiet_NaN();
    history.fed_rounds.push_back(report);
    if (checkpoint_sink) checkpoint_sink(round, params);
    if (eval_loss && fed_cfg.early_stop) {
      if (report.eval_loss < best_eval - fed_cfg.early_stop_tolerance) {
        best_eval = report.eval_loss;
        best_round = round;
      } else if (round - best_round >= fed_cfg.early_stop_window) {
        break;
      }
    }
  }
  return history;
}

ModelParams checkpoint_average(std::span<const ModelParams> checkpoints) {
  if (checkpoints.empty()) {
    throw std::invalid_argument("checkpoint_average needs at least one checkpoint");
  }
  const std::size_t n = checkpoints.front().size();
  ModelParams mean;
  mean.values.assign(n, 0.0);
  for (const auto& ckpt : checkpoints) {
    if (ckpt.size() != n) {
      throw std::invalid_argument(cat("checkpoint layout mismatch: ", ckpt.size(), " vs ", n));
    }
    axpy(1.0, ckpt.values, mean.values);
  }
  scale(mean.values, 1.0 / static_cast<double>(checkpoints.size()));
  return mean;
}

}  // namespace fedkws
