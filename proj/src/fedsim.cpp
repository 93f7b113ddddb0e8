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

#include "fedkws/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedkws/error.hpp"
#include "fedkws/parallel.hpp"

namespace fedkws {

namespace {

constexpr std::uint64_t kRoundStream = 0xF3D;
constexpr std::uint64_t kClientTrainStream = 0xC7;

}  // namespace

double schedule_lr(const ScheduleSpec& spec, std::size_t round) {
  if (spec.warmup_rounds > 0 && round <= spec.warmup_rounds) {
    return spec.peak_lr * (static_cast<double>(round) / static_cast<double>(spec.warmup_rounds));
  }
  const double exponent = static_cast<double>(round - spec.warmup_rounds) /
                          static_cast<double>(spec.decay_period);
  return spec.peak_lr * std::pow(spec.decay_factor, exponent);
}

void FedConfig::validate() const {
  if (cohort_size < 1) throw ConfigError("cohort_size must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (!(yogi.beta1 > 0.0 && yogi.beta1 < 1.0 && yogi.beta2 > 0.0 && yogi.beta2 < 1.0)) {
    throw ConfigError("yogi betas must lie in (0,1)");
  }
  if (!(yogi.epsilon > 0.0)) throw ConfigError("yogi epsilon must be > 0");
  if (!(client_lr.peak_lr > 0.0 && server_lr.peak_lr > 0.0)) {
    throw ConfigError("peak learning rates must be > 0");
  }
  if (!(client_lr.decay_factor > 0.0 && client_lr.decay_factor <= 1.0) ||
      !(server_lr.decay_factor > 0.0 && server_lr.decay_factor <= 1.0)) {
    throw ConfigError("decay factors must lie in (0,1]");
  }
  if (!(hours_per_round > 0.0)) throw ConfigError("hours_per_round must be > 0");
}

YogiState YogiState::init(std::size_t n, double epsilon) {
  YogiState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, epsilon * epsilon);
  s.round = 0;
  return s;
}

void yogi_step(YogiState& state, std::span<const double> pseudo_gradient, double lr,
               const YogiConfig& cfg, std::vector<double>& params) {
  if (pseudo_gradient.size() != params.size() || state.m.size() != params.size()) {
    throw std::invalid_argument(cat("yogi_step: size mismatch (grad ", pseudo_gradient.size(),
                                    ", params ", params.size(), ", state ", state.m.size(), ")"));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = pseudo_gradient[i];
    const double g2 = g * g;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double diff = state.v[i] - g2;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    state.v[i] -= (1.0 - cfg.beta2) * g2 * sign;
    params[i] -= lr * state.m[i] / (std::sqrt(state.v[i]) + cfg.epsilon);
  }
  state.round++;
}

std::vector<double> aggregate_updates(std::span<const ClientUpdate> updates,
                                      bool weight_by_examples) {
  if (updates.empty()) throw std::invalid_argument("aggregate_updates: no updates");
  std::vector<double> mean(updates.front().delta.size(), 0.0);
  double weight_total = 0.0;
  for (const ClientUpdate& u : updates) {
    if (u.failed) continue;
    const double w = weight_by_examples ? static_cast<double>(u.examples_used) : 1.0;
    if (w <= 0.0) continue;
    if (u.delta.size() != mean.size()) {
      throw std::invalid_argument("aggregate_updates: delta size mismatch");
    }
    axpy(w, u.delta, mean);
    weight_total += w;
  }
  if (weight_total > 0.0) scale(mean, 1.0 / weight_total);
  return mean;
}

ClientUpdate client_train(const ModelArch& arch, const ModelParams& global_params,
                          const ClientDevice& device, std::span<const SelectionRule> rules,
                          const Model& teacher, const LossConfig& loss_cfg, const FedConfig& cfg,
                          std::size_t round, Rng rng) {
  ClientUpdate update;
  update.delta.assign(global_params.size(), 0.0);

  const auto& cache = device.cache.examples();
  std::vector<std::size_t> training_set;
  std::vector<FilterDecision> decisions;
  if (rules.empty()) {
    training_set.resize(cache.size());
    for (std::size_t i = 0; i < cache.size(); ++i) training_set[i] = i;
  } else {
    for (auto& [index, decision] : filter_cache(cache, rules)) {
      training_set.push_back(index);
      decisions.push_back(std::move(decision));
    }
  }
  if (training_set.empty()) return update;

  // Teacher targets on the raw cached features, memoized across rounds.
  std::vector<TeacherSoftLabels> adjusted;  // used only with one-sided adjustment
  for (std::size_t k = 0; k < training_set.size(); ++k) {
    const CachedExample& ex = cache[training_set[k]];
    if (ex.teacher_memo() == nullptr) {
      ex.store_teacher_memo(
          teacher_soft_labels(teacher.arch, teacher.params, ex.features(), loss_cfg.temperature));
    }
    if (cfg.one_sided_adjustment && !rules.empty()) {
      adjusted.push_back(adjust_one_sided(*ex.teacher_memo(), decisions[k]));
    }
  }

  const double lr = schedule_lr(cfg.client_lr, round);
  const std::size_t max_steps =
      std::min(cfg.max_local_steps, cfg.max_local_epochs * training_set.size());

  ModelParams local = global_params;
  std::vector<std::size_t> order(training_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double loss_sum = 0.0;
  ModelForwardCache cache_fwd;
  for (std::size_t step = 0; step < max_steps; ++step) {
    const std::size_t pos = step % order.size();
    if (pos == 0) {
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[rng.uniform_below(i + 1)]);
      }
    }
    const std::size_t k = order[pos];
    const CachedExample& ex = cache[training_set[k]];
    const TeacherSoftLabels& target =
        (cfg.one_sided_adjustment && !rules.empty()) ? adjusted[k] : *ex.teacher_memo();

    const ModelOutput out =
        cfg.augment.n_masks > 0
            ? model_forward(arch, local, spec_augment(ex.features(), cfg.augment, rng),
                            &cache_fwd)
            : model_forward(arch, local, ex.features(), &cache_fwd);
    const LossResult loss = distillation_loss(out, target);
    if (!std::isfinite(loss.value)) {
      update.failed = true;
      update.steps_taken = step;
      update.examples_used = 0;
      std::fill(update.delta.begin(), update.delta.end(), 0.0);
      return update;
    }
    loss_sum += loss.value;
    const auto grad = model_backward(arch, local, cache_fwd, loss.encoder_grad, loss.decoder_grad);
    axpy(-lr, grad, local.values);
    update.steps_taken = step + 1;
  }

  update.examples_used = training_set.size();
  update.mean_loss = update.steps_taken > 0 ? loss_sum / static_cast<double>(update.steps_taken)
                                            : 0.0;
  for (std::size_t i = 0; i < local.size(); ++i) {
    update.delta[i] = local.values[i] - global_params.values[i];
  }
  const double norm = l2_norm(update.delta);
  if (norm > cfg.clip_norm) {
    scale(update.delta, cfg.clip_norm / norm);
  }
  return update;
}

RoundReport run_round(const ModelArch& arch, ModelParams& params, YogiState& yogi,
                      Population& population, std::span<const SelectionRule> rules,
                      const Model& teacher, const LossConfig& loss_cfg, const FedConfig& cfg,
                      std::size_t round, std::uint64_t run_seed, std::size_t workers) {
  cfg.validate();
  RoundReport report;
  report.round = round;
  report.client_lr = schedule_lr(cfg.client_lr, round);
  report.server_lr = schedule_lr(cfg.server_lr, round);

  const double now_hours = static_cast<double>(round) * cfg.hours_per_round;
  std::vector<std::uint32_t> eligible = eligible_clients(population, now_hours);
  if (eligible.size() < cfg.cohort_size) {
    report.skipped = true;
    report.cohort_size = eligible.size();
    return report;
  }

  // Partial Fisher-Yates over the (sorted) eligible ids, then sort the
  // cohort so the reduction order is independent of the draw order.
  Rng round_rng = Rng(run_seed).child(kRoundStream, round);
  for (std::size_t i = 0; i < cfg.cohort_size; ++i) {
    const std::size_t j = i + round_rng.uniform_below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<std::uint32_t> cohort(eligible.begin(), eligible.begin() + cfg.cohort_size);
  std::sort(cohort.begin(), cohort.end());
  report.cohort_size = cohort.size();

  std::vector<ClientUpdate> updates(cohort.size());
  parallel_for(workers, cohort.size(), [&](std::size_t i) {
    const ClientDevice& device = population.clients[cohort[i]];
    Rng crng = Rng(run_seed).child(kClientTrainStream, round, device.id);
    updates[i] = client_train(arch, params, device, rules, teacher, loss_cfg, cfg, round,
                              std::move(crng));
  });

  // Ordered reduction over sorted cohort ids.
  std::vector<double> mean_delta = aggregate_updates(updates, cfg.weight_by_examples);
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  bool any_weight = false;
  for (const ClientUpdate& u : updates) {
    if (u.failed) continue;
    any_weight = true;
    if (u.examples_used > 0) {
      loss_sum += u.mean_loss;
      loss_count++;
    }
  }
  if (any_weight) {
    if (cfg.server_optimizer == ServerOptimizer::kAverage) {
      axpy(report.server_lr, mean_delta, params.values);
    } else {
      std::vector<double> pseudo_gradient(mean_delta.size());
      for (std::size_t i = 0; i < mean_delta.size(); ++i) pseudo_gradient[i] = -mean_delta[i];
      yogi_step(yogi, pseudo_gradient, report.server_lr, cfg.yogi, params.values);
    }
  }
  report.mean_local_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;

  for (const std::uint32_t id : cohort) {
    population.clients[id].last_participation_hours = now_hours;
  }
  return report;
}

FedHistory run_federated(const ModelArch& arch, ModelParams& params, Population& population,
                         std::span<const SelectionRule> rules, const Model& teacher,
                         const LossConfig& loss_cfg, const FedConfig& cfg, std::uint64_t run_seed,
                         std::size_t workers, const EvalLossFn& eval_loss,
                         const CheckpointSink& checkpoint_sink) {
  cfg.validate();
  FedHistory history;
  YogiState yogi = YogiState::init(params.size(), cfg.yogi.epsilon);
  double best_eval = std::numeric_limits<double>::infinity();
  std::size_t best_round = 0;
  for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
    RoundReport report = run_round(arch, params, yogi, population, rules, teacher, loss_cfg, cfg,
                                   round, run_seed, workers);
    report.eval_loss =
        eval_loss ? eval_loss(params) : std::numeric_limits<double>::quiet_NaN();
    history.rounds.push_back(report);
    if (checkpoint_sink) checkpoint_sink(round, params);
    if (eval_loss && cfg.early_stop) {
      if (report.eval_loss < best_eval - cfg.early_stop_tolerance) {
        best_eval = report.eval_loss;
        best_round = round;
      } else if (round - best_round >= cfg.early_stop_window) {
        break;
      }
    }
  }
  return history;
}

}  // namespace fedkws
