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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedkws/config.hpp"
#include "fedkws/error.hpp"
#include "fedkws/parallel.hpp"
#include "fedkws/run.hpp"

namespace fs = std::filesystem;
using namespace fedkws;

namespace {

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = ExperimentConfig::load(path);
  if (seed) {
    cfg.seed = *seed;
    cfg.validate();
  }
  return cfg;
}

void print_study(const StudyReport& report) {
  std::printf("%zu synthetic annotations\n", report.annotations);
  std::printf("%-28s %8s %8s %10s %22s\n", "condition", "matched", "correct", "accuracy",
              "95% interval");
  for (const auto& rule : report.rules) {
    if (!rule.supported) {
      std::printf("%-28s %8zu %8s %10s %22s\n", rule.rule_id.c_str(), rule.matched, "-",
                  "unsupported", "-");
      continue;
    }
    char interval[48];
    std::snprintf(interval, sizeof(interval), "[%.4f, %.4f]", rule.wilson_low, rule.wilson_high);
    std::printf("%-28s %8zu %8zu %10.4f %22s\n", rule.rule_id.c_str(), rule.matched, rule.correct,
                rule.accuracy, interval);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated keyword-spotting training simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;

  // train
  auto* train = app.add_subcommand("train", "Run a training regime end to end");
  std::string regime_str = "joint_filtered";
  std::string out_dir = "runs/run";
  std::string teacher_cache;
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--regime", regime_str, "central | fl | fl_filtered | joint_filtered");
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--workers", workers, "Worker threads (0 = all cores)");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--teacher-cache", teacher_cache,
                    "Directory for reusing trained teachers across runs");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ckpt_path;
  std::string eval_out = "eval_out";
  eval->add_option("--config", config_path, "Experiment config (JSON)")->required();
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--seed", seed, "Override the config seed");
  eval->add_option("--workers", workers, "Worker threads (0 = all cores)");
  eval->add_option("--out", eval_out, "Output directory");

  // compare
  auto* compare = app.add_subcommand("compare", "Rank finished runs by AUC");
  std::vector<std::string> run_dirs;
  bool ensemble = false;
  std::string compare_csv;
  compare->add_option("dirs", run_dirs, "Run directories")->required();
  compare->add_flag("--ensemble", ensemble, "Report per-regime minimum AUC across seeds");
  compare->add_option("--out", compare_csv, "Write the table as CSV");

  // annotation-study
  auto* study = app.add_subcommand("annotation-study",
                                   "Estimate selection-condition label accuracy");
  std::size_t annotations = 0;
  study->add_option("--config", config_path, "Experiment config (JSON)")->required();
  study->add_option("--count", annotations, "Number of synthetic annotations");
  study->add_option("--seed", seed, "Override the config seed");

  // export-population
  auto* export_pop = app.add_subcommand("export-population",
                                        "Build and export a client population snapshot");
  std::string pop_out = "population.txt";
  export_pop->add_option("--config", config_path, "Experiment config (JSON)")->required();
  export_pop->add_option("--seed", seed, "Override the config seed");
  export_pop->add_option("--workers", workers, "Worker threads (0 = all cores)");
  export_pop->add_option("--out", pop_out, "Snapshot path (a .blob file is written next to it)");

  // init-config
  auto* init = app.add_subcommand("init-config", "Write the documented default config");
  std::string init_path = "fedkws.json";
  init->add_option("path", init_path, "Destination file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const ExperimentConfig cfg = load_config(config_path, seed);
      const Regime regime = regime_from_string(regime_str);
      std::optional<fs::path> cache;
      if (!teacher_cache.empty()) cache = fs::path(teacher_cache);
      const RunResult result =
          run_regime(regime, cfg, fs::path(out_dir), cache, resolve_workers(workers));
      std::printf("regime=%s seed=%llu rounds=%zu auc=%.6f out=%s\n", regime_name(regime),
                  static_cast<unsigned long long>(cfg.seed), result.fed_rounds_run,
                  result.eval.auc, result.dir.string().c_str());
    } else if (eval->parsed()) {
      const ExperimentConfig cfg = load_config(config_path, seed);
      const EvalReport report =
          evaluate_checkpoint(cfg, ckpt_path, fs::path(eval_out), resolve_workers(workers));
      std::printf("auc=%.6f extrapolated=%d\n", report.auc, report.extrapolated ? 1 : 0);
      for (const auto& slice : report.slices) {
        if (slice.supported) std::printf("  %-20s auc=%.6f\n", slice.slice.c_str(), slice.auc);
      }
    } else if (compare->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const auto rows = collect_compare_rows(dirs);
      std::printf("%-16s %6s %12s %14s\n", "regime", "seed", "auc", "federated_auc");
      for (const auto& row : rows) {
        std::printf("%-16s %6llu %12.6f %14.6f\n", row.regime.c_str(),
                    static_cast<unsigned long long>(row.seed), row.auc, row.federated_auc);
      }
      if (ensemble) {
        std::printf("\nper-regime minimum over seeds:\n");
        for (const auto& row : ensemble_summary(rows)) {
          std::printf("%-16s runs=%zu min_auc=%.6f min_federated_auc=%.6f\n", row.regime.c_str(),
                      row.runs, row.min_auc, row.min_federated_auc);
        }
      }
      if (!compare_csv.empty()) {
        std::ofstream out(compare_csv);
        out << "regime,seed,auc,federated_auc,dir\n";
        for (const auto& row : rows) {
          out << row.regime << ',' << row.seed << ',' << format_double(row.auc) << ','
              << format_double(row.federated_auc) << ',' << row.dir.string() << '\n';
        }
      }
    } else if (study->parsed()) {
      const ExperimentConfig cfg = load_config(config_path, seed);
      const std::size_t count = annotations > 0 ? annotations : cfg.annotation_count;
      print_study(annotation_study(cfg, count));
    } else if (export_pop->parsed()) {
      const ExperimentConfig cfg = load_config(config_path, seed);
      const KeywordUniverse universe(cfg.data, cfg.seed);
      const Model teacher = train_teacher(cfg, universe, std::nullopt, resolve_workers(workers));
      Rng pop_rng = Rng(cfg.seed).child(0x9095);
      const Population population =
          build_population(universe, cfg.population, cfg.calibration,
                           model_score_fn(teacher, cfg.population.score_noise), pop_rng);
      export_population(population, universe, fs::path(pop_out));
      std::size_t examples = 0;
      for (const auto& c : population.clients) examples += c.cache.size();
      std::printf("wrote %zu clients (%zu cached examples) to %s\n", population.clients.size(),
                  examples, pop_out.c_str());
    } else if (init->parsed()) {
      std::ofstream out(init_path);
      if (!out) throw ConfigError(cat("cannot write ", init_path));
      out << default_config_text() << "\n";
      std::printf("wrote %s\n", init_path.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
