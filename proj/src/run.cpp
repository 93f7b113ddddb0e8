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

#include "fedkws/run.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>

#include "fedkws/error.hpp"
#include "fedkws/parallel.hpp"

namespace fedkws {

namespace {

using nlohmann::json;

// Stream tags for deriving independent generators from the experiment seed.
constexpr std::uint64_t kTeacherInitStream = 0x7EAC;
constexpr std::uint64_t kTeacherTrainStream = 0x7EAD;
constexpr std::uint64_t kCentralDataStream = 0xDA7A;
constexpr std::uint64_t kPopulationStream = 0x9095;
constexpr std::uint64_t kStudentInitStream = 0x57DE;
constexpr std::uint64_t kFedRunStream = 0xF15C;
constexpr std::uint64_t kEvalSetStream = 0xE5E7;
constexpr std::uint64_t kLossSetStream = 0x1055;
constexpr std::uint64_t kStudyStream = 0x57D1;

std::vector<LabeledExample> build_central_dataset(const ExperimentConfig& cfg,
                                                  const KeywordUniverse& universe) {
  Rng rng = Rng(cfg.seed).child(kCentralDataStream);
  return make_central_dataset(universe, cfg.central_dataset_size, rng);
}

// Fixed labeled set for the per-round evaluation loss, spanning all domains.
std::vector<LabeledExample> build_loss_eval_set(const ExperimentConfig& cfg,
                                                const KeywordUniverse& universe) {
  Rng rng = Rng(cfg.seed).child(kLossSetStream);
  std::vector<LabeledExample> set;
  set.reserve(cfg.eval.loss_eval_examples);
  const std::size_t n_domains = cfg.data.domains.size();
  for (std::size_t i = 0; i < cfg.eval.loss_eval_examples; ++i) {
    const std::size_t domain = i % n_domains;
    const bool positive = (i / n_domains) % 2 == 0;
    set.push_back(universe.generate_example(domain, positive, rng));
  }
  return set;
}

EvalLossFn make_eval_loss_fn(const ExperimentConfig& cfg, const ModelArch& arch,
                             const std::vector<LabeledExample>& loss_set, std::size_t workers) {
  const LossConfig loss_cfg = cfg.loss;
  return [&loss_set, arch, loss_cfg, workers](const ModelParams& params) {
    std::vector<double> losses(loss_set.size());
    parallel_for(workers, loss_set.size(), [&](std::size_t i) {
      const ModelOutput out = model_forward(arch, params, loss_set[i].features);
      losses[i] = supervised_loss(out, loss_set[i].labels, loss_cfg).value;
    });
    double total = 0.0;
    for (double v : losses) total += v;
    return total / static_cast<double>(losses.size());
  };
}

void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                    const std::string& regime) {
  json manifest;
  manifest["version"] = kVersionString;
  manifest["regime"] = regime;
  manifest["seed"] = cfg.seed;
  char hash_text[32];
  std::snprintf(hash_text, sizeof(hash_text), "%016llx",
                static_cast<unsigned long long>(cfg.hash()));
  manifest["config_hash"] = hash_text;
  manifest["arch_hash"] = cfg.model_arch().hash();
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  std::ofstream cfg_out(dir / "config.json");
  cfg_out << cfg.to_json().dump(2) << "\n";
}

// Keeps the trailing window of snapshots used for checkpoint averaging.
class SnapshotKeeper {
 public:
  SnapshotKeeper(std::filesystem::path dir, std::uint64_t arch_hash, std::size_t every,
                 std::size_t keep)
      : dir_(std::move(dir)), arch_hash_(arch_hash), every_(every), keep_(keep) {
    std::filesystem::create_directories(dir_);
  }

  void offer(std::size_t round, const ModelParams& params) {
    last_round_ = round;
    last_params_ = params;
    if (round % every_ != 0) return;
    store(round, params);
  }

  // The final round always joins the averaging window.
  void finalize() {
    if (last_params_.size() == 0) return;
    if (snaps_.empty() || snaps_.back().first != last_round_) {
      store(last_round_, last_params_);
    }
  }

  std::vector<ModelParams> window() const {
    std::vector<ModelParams> out;
    for (const auto& [round, params] : snaps_) out.push_back(params);
    return out;
  }

 private:
  void store(std::size_t round, const ModelParams& params) {
    char name[32];
    std::snprintf(name, sizeof(name), "snap_%05zu.ckpt", round);
    save_checkpoint(dir_ / name, arch_hash_, round, params);
    snaps_.emplace_back(round, params);
    while (snaps_.size() > keep_) snaps_.pop_front();
  }

  std::filesystem::path dir_;
  std::uint64_t arch_hash_;
  std::size_t every_;
  std::size_t keep_;
  std::deque<std::pair<std::size_t, ModelParams>> snaps_;
  std::size_t last_round_ = 0;
  ModelParams last_params_;
};

}  // namespace

const char* regime_name(Regime regime) {
  switch (regime) {
    case Regime::kCentral:
      return "central";
    case Regime::kFl:
      return "fl";
    case Regime::kFlFiltered:
      return "fl_filtered";
    case Regime::kJointFiltered:
      return "joint_filtered";
  }
  return "unknown";
}

Regime regime_from_string(const std::string& name) {
  if (name == "central") return Regime::kCentral;
  if (name == "fl") return Regime::kFl;
  if (name == "fl_filtered") return Regime::kFlFiltered;
  if (name == "joint_filtered") return Regime::kJointFiltered;
  throw ConfigError(cat("unknown regime '", name,
                        "' (expected central|fl|fl_filtered|joint_filtered)"));
}

Model train_teacher(const ExperimentConfig& cfg, const KeywordUniverse& universe,
                    const std::optional<std::filesystem::path>& cache_dir, std::size_t workers,
                    std::vector<CentralStepRecord>* history) {
  (void)workers;  // central training is a single sequential stream
  const ModelArch arch = cfg.model_arch();
  std::filesystem::path cache_file;
  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    char name[48];
    std::snprintf(name, sizeof(name), "teacher_%016llx.ckpt",
                  static_cast<unsigned long long>(cfg.teacher_hash()));
    cache_file = *cache_dir / name;
    if (std::filesystem::exists(cache_file)) {
      Checkpoint ckpt = load_checkpoint(cache_file);
      if (ckpt.arch_hash != arch.hash()) {
        throw std::runtime_error(cat("cached teacher ", cache_file.string(),
                                     " does not match the configured architecture"));
      }
      return Model{arch, std::move(ckpt.params)};
    }
  }
  const auto dataset = build_central_dataset(cfg, universe);
  Rng init_rng = Rng(cfg.seed).child(kTeacherInitStream);
  Rng train_rng = Rng(cfg.seed).child(kTeacherTrainStream);
  ModelParams params = random_init(arch, init_rng);
  params = central_train(arch, std::move(params), dataset, cfg.central, cfg.loss,
                         cfg.central.steps, 0, train_rng, history);
  if (!cache_file.empty()) {
    save_checkpoint(cache_file, arch.hash(), cfg.central.steps, params);
  }
  return Model{arch, std::move(params)};
}

RunResult run_regime(Regime regime, const ExperimentConfig& cfg,
                     const std::filesystem::path& out_dir,
                     const std::optional<std::filesystem::path>& teacher_cache_dir,
                     std::size_t workers) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  write_manifest(out_dir, cfg, regime_name(regime));

  const KeywordUniverse universe(cfg.data, cfg.seed);
  const ModelArch arch = cfg.model_arch();
  const std::uint64_t arch_hash = arch.hash();

  std::vector<CentralStepRecord> central_history;
  std::vector<RoundReport> fed_history;

  // The supervised central model is both the distillation teacher and the
  // central-regime product.
  Model teacher = train_teacher(cfg, universe, teacher_cache_dir, workers,
                                regime == Regime::kCentral ? &central_history : nullptr);

  const auto loss_set = build_loss_eval_set(cfg, universe);
  const EvalLossFn eval_loss = make_eval_loss_fn(cfg, arch, loss_set, workers);

  ModelParams final_params;
  if (regime == Regime::kCentral) {
    final_params = teacher.params;
  } else {
    Rng pop_rng = Rng(cfg.seed).child(kPopulationStream);
    Population population =
        build_population(universe, cfg.population, cfg.calibration,
                         model_score_fn(teacher, cfg.population.score_noise), pop_rng);
    const std::vector<SelectionRule> rules =
        regime == Regime::kFl ? std::vector<SelectionRule>{} : cfg.filter.rules();

    Rng student_rng = Rng(cfg.seed).child(kStudentInitStream);
    ModelParams params = random_init(arch, student_rng);
    const std::uint64_t run_seed =
        Rng(cfg.seed).child(kFedRunStream, static_cast<std::uint64_t>(regime)).key();

    const bool average = regime == Regime::kFl        ? cfg.checkpoints.average_fl
                         : regime == Regime::kFlFiltered ? cfg.checkpoints.average_fl_filtered
                                                         : cfg.checkpoints.average_joint_filtered;
    SnapshotKeeper keeper(out_dir / "checkpoints", arch_hash, cfg.checkpoints.snapshot_every,
                          cfg.checkpoints.average_count);
    const CheckpointSink sink = [&](std::size_t round, const ModelParams& p) {
      keeper.offer(round, p);
    };

    if (regime == Regime::kJointFiltered) {
      const auto central_dataset = build_central_dataset(cfg, universe);
      JointHistory history =
          run_joint(arch, params, central_dataset, population, rules, teacher, cfg.loss,
                    cfg.central, cfg.fed, cfg.joint, run_seed, workers, eval_loss, sink);
      fed_history = std::move(history.fed_rounds);
      central_history = std::move(history.central_steps);
    } else {
      FedHistory history = run_federated(arch, params, population, rules, teacher, cfg.loss,
                                         cfg.fed, run_seed, workers, eval_loss, sink);
      fed_history = std::move(history.rounds);
    }
    keeper.finalize();
    if (average) {
      const auto window = keeper.window();
      final_params = checkpoint_average(window);
    } else {
      final_params = std::move(params);
    }
  }

  write_fed_history_csv(out_dir / "history.csv", fed_history);
  write_central_history_csv(out_dir / "central_history.csv", central_history);
  save_checkpoint(out_dir / "final.ckpt", arch_hash, fed_history.size(), final_params);

  // Final quality report on the shared, seed-determined evaluation set.
  const EvalSet eval_set(universe, cfg.eval.set, Rng(cfg.seed).child(kEvalSetStream).key());
  const auto thresholds = default_thresholds(cfg.eval.set.thresholds);
  std::vector<bool> fed_domains(cfg.data.domains.size());
  for (std::size_t i = 0; i < fed_domains.size(); ++i) {
    fed_domains[i] = cfg.data.domains[i].present_in_federated;
  }
  EvalReport report = sweep(arch, final_params, eval_set, thresholds, workers, fed_domains);
  std::filesystem::create_directories(out_dir / "eval");
  write_eval_curve_csv(out_dir / "eval" / "report.csv", report);
  write_eval_summary_csv(out_dir / "eval" / "summary.csv", report);

  RunResult result;
  result.final_params = std::move(final_params);
  result.eval = std::move(report);
  result.dir = out_dir;
  result.fed_rounds_run = fed_history.size();
  return result;
}

EvalReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& ckpt,
                               const std::filesystem::path& out_dir, std::size_t workers) {
  cfg.validate();
  const ModelArch arch = cfg.model_arch();
  Checkpoint checkpoint = load_checkpoint(ckpt);
  if (checkpoint.arch_hash != arch.hash()) {
    throw ConfigError(cat("checkpoint ", ckpt.string(),
                          " was produced by a different architecture"));
  }
  const KeywordUniverse universe(cfg.data, cfg.seed);
  const EvalSet eval_set(universe, cfg.eval.set, Rng(cfg.seed).child(kEvalSetStream).key());
  const auto thresholds = default_thresholds(cfg.eval.set.thresholds);
  std::vector<bool> fed_domains(cfg.data.domains.size());
  for (std::size_t i = 0; i < fed_domains.size(); ++i) {
    fed_domains[i] = cfg.data.domains[i].present_in_federated;
  }
  EvalReport report =
      sweep(arch, checkpoint.params, eval_set, thresholds, workers, fed_domains);
  std::filesystem::create_directories(out_dir);
  write_eval_curve_csv(out_dir / "report.csv", report);
  write_eval_summary_csv(out_dir / "summary.csv", report);
  return report;
}

StudyReport annotation_study(const ExperimentConfig& cfg, std::size_t annotations,
                             std::uint64_t repetition) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).child(kStudyStream, repetition);
  const ScoreFn score = synthetic_score_fn();
  const KeywordUniverse universe(cfg.data, cfg.seed);

  // The study only needs feedback flags and the annotated truth; features
  // are never materialized.
  std::vector<std::pair<FeedbackFeatures, bool>> annotated;
  annotated.reserve(annotations);
  LabeledExample stub;
  for (std::size_t i = 0; i < annotations; ++i) {
    const bool positive = rng.bernoulli(cfg.data.positive_rate);
    stub.labels.is_positive = positive;
    const double s = score(stub, rng);
    annotated.emplace_back(
        feedback_oracle(positive, s, cfg.calibration, cfg.data.positive_rate, rng), positive);
  }
  StudyReport report;
  report.annotations = annotations;
  const auto rules = cfg.filter.rules();
  report.rules = estimate_rule_accuracy(annotated, rules);
  return report;
}

std::vector<CompareRow> collect_compare_rows(std::span<const std::filesystem::path> run_dirs) {
  std::vector<CompareRow> rows;
  std::optional<std::string> arch_hash;
  for (const auto& dir : run_dirs) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw ConfigError(cat("no manifest in ", dir.string()));
    json manifest = json::parse(in);
    CompareRow row;
    row.regime = manifest.at("regime").get<std::string>();
    row.seed = manifest.at("seed").get<std::uint64_t>();
    row.dir = dir;
    const std::string this_hash = manifest.at("arch_hash").dump();
    if (arch_hash && *arch_hash != this_hash) {
      throw ConfigError(cat("run ", dir.string(),
                            " uses a different architecture than the others"));
    }
    arch_hash = this_hash;
    for (const auto& summary : read_eval_summary_csv(dir / "eval" / "summary.csv")) {
      if (summary.slice == "all") row.auc = summary.auc;
      if (summary.slice == "federated") row.federated_auc = summary.auc;
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const CompareRow& a, const CompareRow& b) { return a.auc < b.auc; });
  return rows;
}

std::vector<EnsembleRow> ensemble_summary(std::span<const CompareRow> rows) {
  std::map<std::string, EnsembleRow> by_regime;
  for (const auto& row : rows) {
    auto [it, fresh] = by_regime.try_emplace(row.regime);
    EnsembleRow& agg = it->second;
    if (fresh) {
      agg.regime = row.regime;
      agg.min_auc = row.auc;
      agg.min_federated_auc = row.federated_auc;
    } else {
      agg.min_auc = std::min(agg.min_auc, row.auc);
      agg.min_federated_auc = std::min(agg.min_federated_auc, row.federated_auc);
    }
    agg.runs++;
  }
  std::vector<EnsembleRow> out;
  for (auto& [name, agg] : by_regime) out.push_back(std::move(agg));
  std::sort(out.begin(), out.end(),
            [](const EnsembleRow& a, const EnsembleRow& b) { return a.min_auc < b.min_auc; });
  return out;
}

}  // namespace fedkws
