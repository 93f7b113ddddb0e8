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

// Acceptance suite: one end-to-end check per release criterion, each printed
// as a PASS/FAIL line. Everything runs on the shipped default configuration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedkws/config.hpp"
#include "fedkws/error.hpp"
#include "fedkws/evalkit.hpp"
#include "fedkws/parallel.hpp"
#include "fedkws/run.hpp"

namespace fs = std::filesystem;
using namespace fedkws;

namespace {

struct Failure {
  std::string what;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), "missing file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor2 t(r, c);
  for (double& x : t.data) x = rng.normal();
  return t;
}

std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x, double eps = 1e-5) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double hi = f(x);
    x[i] = saved - eps;
    const double lo = f(x);
    x[i] = saved;
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// Shared context so expensive artifacts (teacher, population) build once.
struct Context {
  std::size_t workers = 0;
  fs::path scratch;
  ExperimentConfig cfg;  // shipped defaults

  std::optional<KeywordUniverse> universe;
  std::optional<Model> teacher;
  std::optional<Population> population;

  const KeywordUniverse& get_universe() {
    if (!universe) universe.emplace(cfg.data, cfg.seed);
    return *universe;
  }
  const Model& get_teacher() {
    if (!teacher) teacher = train_teacher(cfg, get_universe(), scratch / "teacher_cache", workers);
    return *teacher;
  }
  Population& get_population() {
    if (!population) {
      Rng rng = Rng(cfg.seed).child(0x9095);
      population = build_population(get_universe(), cfg.population, cfg.calibration,
                                    model_score_fn(get_teacher(), cfg.population.score_noise),
                                    rng);
    }
    return *population;
  }
};

// --- criterion 1: gradient correctness ------------------------------------

void criterion_gradients(Context&) {
  Rng rng(20260801);

  // Per layer kind: weighted-output objective against central differences.
  for (const LayerKind kind : {LayerKind::kDense, LayerKind::kSvdf, LayerKind::kBottleneck}) {
    for (int rep = 0; rep < 100; ++rep) {
      LayerSpec spec;
      spec.kind = kind;
      spec.input_dim = 1 + rng.uniform_below(4);
      spec.output_dim = 1 + rng.uniform_below(4);
      spec.memory = kind == LayerKind::kSvdf ? 1 + rng.uniform_below(4) : 1;
      spec.activation = rng.bernoulli(0.5) ? Activation::kRelu : Activation::kLinear;
      const std::size_t t_len = 1 + rng.uniform_below(5);

      std::vector<double> params;
      Tensor2 input;
      for (;;) {  // keep relu pre-activations away from the kink
        params = random_vector(param_count(spec), rng);
        input = random_tensor(t_len, spec.input_dim, rng);
        LayerCache probe;
        layer_forward(spec, params, input, &probe);
        bool near_kink = false;
        for (double z : probe.preact.data) near_kink |= std::abs(z) < 1e-3;
        if (!near_kink) break;
      }
      const Tensor2 weights = random_tensor(t_len, spec.output_dim, rng);
      LayerCache cache;
      layer_forward(spec, params, input, &cache);
      const auto grads = layer_backward(spec, params, cache, weights);
      const auto numeric = finite_difference(
          [&](const std::vector<double>& p) {
            const Tensor2 out = layer_forward(spec, p, input);
            double s = 0.0;
            for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * weights.data[i];
            return s;
          },
          params);
      const double err = max_rel_error(grads.param_grad, numeric);
      require(err < 1e-4, cat("layer gradient error ", err, " for ", layer_name(spec)));
    }
  }

  // Whole network through both training objectives.
  for (int rep = 0; rep < 100; ++rep) {
    ArchShape shape;
    shape.feature_dim = 2 + rng.uniform_below(2);
    shape.encoder_svdf_layers = 1;
    shape.encoder_svdf_dim = 2 + rng.uniform_below(2);
    shape.encoder_svdf_memory = 1 + rng.uniform_below(2);
    shape.encoder_bottleneck_dim = 2;
    shape.encoder_classes = 3;
    shape.decoder_svdf_layers = 1;
    shape.decoder_svdf_dim = 2 + rng.uniform_below(2);
    shape.decoder_svdf_memory = 1 + rng.uniform_below(3);
    const ModelArch arch = make_arch(shape);
    const std::size_t t_len = 4 + rng.uniform_below(3);

    FeatureSequence features{random_tensor(t_len, shape.feature_dim, rng)};
    FrameLabels labels;
    labels.encoder_class.assign(t_len, 0);
    labels.decoder_class.assign(t_len, 0);
    labels.is_positive = rep % 2 == 0;
    if (labels.is_positive) {
      labels.end_of_keyword = t_len - 2;
      labels.decoder_class[t_len - 2] = 1;
      labels.encoder_class[t_len - 3] = 1;
    }
    Rng teacher_rng = rng.child(rep, 1);
    const ModelParams teacher_params = random_init(arch, teacher_rng);
    const TeacherSoftLabels teacher = teacher_soft_labels(arch, teacher_params, features, 0.9);
    LossConfig loss_cfg;
    loss_cfg.maxpool_window = 3;

    ModelParams params;
    for (;;) {
      Rng init_rng = rng.child(rep, 2);
      params = random_init(arch, init_rng);
      ModelForwardCache probe;
      model_forward(arch, params, features, &probe);
      bool near_kink = false;
      for (const auto& lc : probe.encoder) {
        for (double z : lc.preact.data) near_kink |= std::abs(z) < 1e-3;
      }
      for (const auto& lc : probe.decoder) {
        for (double z : lc.preact.data) near_kink |= std::abs(z) < 1e-3;
      }
      if (!near_kink) break;
      rng.next_u64();  // perturb the stream and retry
    }

    const bool distill = rep % 2 == 1;
    ModelForwardCache cache;
    const ModelOutput out = model_forward(arch, params, features, &cache);
    const LossResult res =
        distill ? distillation_loss(out, teacher) : supervised_loss(out, labels, loss_cfg);
    const auto grad = model_backward(arch, params, cache, res.encoder_grad, res.decoder_grad);
    const auto numeric = finite_difference(
        [&](const std::vector<double>& p) {
          ModelParams mp;
          mp.values = p;
          const ModelOutput o = model_forward(arch, mp, features);
          return distill ? distillation_loss(o, teacher).value
                         : supervised_loss(o, labels, loss_cfg).value;
        },
        params.values);
    const double err = max_rel_error(grad, numeric);
    require(err < 1e-4,
            cat("network gradient error ", err, " (", distill ? "distillation" : "supervised",
                " objective, rep ", rep, ")"));
  }
}

// --- criterion 2: selection-condition accuracy replication ------------------

void criterion_annotation_study(Context& ctx) {
  const double expected[] = {0.99, 0.91, 0.89, 0.88};
  // Rules are reported in priority order: server first, then the table rows.
  const std::size_t report_order[] = {3, 0, 1, 2};

  const StudyReport study = annotation_study(ctx.cfg, ctx.cfg.annotation_count);
  require(study.annotations == 11908, "study size must default to 11908");
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& rule = study.rules[k];
    require(rule.supported, cat("rule ", rule.rule_id, " unsupported"));
    const double target = expected[report_order[k] == 3   ? 0
                                   : report_order[k] == 0 ? 1
                                   : report_order[k] == 1 ? 2
                                                          : 3];
    require(std::abs(rule.accuracy - target) < 0.02,
            cat(rule.rule_id, " recovered ", rule.accuracy, ", want ", target, " +/- 0.02"));
  }

  // Interval coverage of the configured truth over repeated studies.
  std::array<int, 4> covered{};
  const int reps = 100;
  std::vector<StudyReport> reports(reps);
  parallel_for(ctx.workers, reps, [&](std::size_t r) {
    reports[r] = annotation_study(ctx.cfg, ctx.cfg.annotation_count, r + 1);
  });
  const double targets_by_priority[] = {0.99, 0.91, 0.89, 0.88};
  for (const auto& report : reports) {
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& rule = report.rules[k];
      if (rule.supported && rule.wilson_low <= targets_by_priority[k] &&
          targets_by_priority[k] <= rule.wilson_high) {
        covered[k]++;
      }
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    require(covered[k] >= 95, cat("interval coverage ", covered[k], "% for rule ", k,
                                  " below the nominal 95%"));
  }
}

// --- criterion 3: filter fraction -------------------------------------------

void criterion_filter_fraction(Context& ctx) {
  Population& population = ctx.get_population();
  const auto rules = ctx.cfg.filter.rules();
  std::size_t total = 0;
  std::size_t kept = 0;
  for (const auto& client : population.clients) {
    total += client.cache.size();
    kept += filter_cache(client.cache.examples(), rules).size();
  }
  require(total >= 5000, cat("population too small: ", total));
  const double fraction = static_cast<double>(kept) / static_cast<double>(total);
  std::printf("        [filter fraction %.3f over %zu cached examples]\n", fraction, total);
  require(fraction > 0.30 && fraction < 0.50,
          cat("retained fraction ", fraction, " outside 0.40 +/- 0.10"));
}

// --- criterion 4: optimizer oracles ----------------------------------------

void criterion_optimizer_oracles(Context&) {
  // Frozen ten-step scalar trace computed with an independent reference.
  {
    const double expected[] = {
        0.70314040964490299,  0.59622244990329809,  0.43688531375882111,
        0.096629999741878303, 0.066778804513336718, -0.094309979852327128,
        -0.29107737462810968, -0.35649489670479556, -0.42389787535615853,
        -0.61599930317276363,
    };
    const double gs[] = {0.5, -0.25, 0.125, 1.0, -1.0, 0.75, 0.3, -0.6, 0.05, 0.9};
    YogiConfig cfg;
    YogiState state = YogiState::init(1, cfg.epsilon);
    std::vector<double> params = {1.0};
    for (int i = 0; i < 10; ++i) {
      yogi_step(state, std::vector<double>{gs[i]}, 0.1, cfg, params);
      require(std::abs(params[0] - expected[i]) < 1e-12,
              cat("yogi trace diverged at step ", i, ": ", params[0], " vs ", expected[i]));
    }
  }

  DataConfig data = default_data_config();
  data.example_frames = 24;
  data.feature_dim = 6;
  data.num_units = 2;
  data.unit_frames = 3;
  data.domains = {{"mini", 0.2, 1.0, true, true}};
  data.federated_mix = {1.0};
  data.central_mix = {1.0};
  const KeywordUniverse universe(data, 17);
  ArchShape shape;
  shape.feature_dim = 6;
  shape.encoder_svdf_layers = 1;
  shape.encoder_svdf_dim = 4;
  shape.encoder_svdf_memory = 2;
  shape.encoder_bottleneck_dim = 3;
  shape.encoder_classes = 3;
  shape.decoder_svdf_layers = 1;
  shape.decoder_svdf_dim = 4;
  shape.decoder_svdf_memory = 3;
  const ModelArch arch = make_arch(shape);
  Rng rng(18);
  const Model teacher{arch, random_init(arch, rng)};

  const auto make_device = [&](std::uint32_t id) {
    ClientDevice device;
    device.id = id;
    Rng crng(300 + id);
    LabeledExample ex = universe.generate_cached_example(0, crng.bernoulli(0.5), crng);
    FeedbackFeatures fb;
    fb.inference_accepted = true;
    fb.server_accepted = true;
    device.cache.add(CachedExample(std::move(ex), fb, ExampleKind::kActivation), 0);
    return device;
  };

  FedConfig cfg;
  cfg.cohort_size = 1;
  cfg.max_local_epochs = 1;
  cfg.max_local_steps = 1;
  cfg.clip_norm = 1e9;
  cfg.client_lr = {0, 0.05, 1.0, 1};
  cfg.server_lr = {0, 1.0, 1.0, 1};
  cfg.server_optimizer = ServerOptimizer::kAverage;
  cfg.augment.n_masks = 0;
  cfg.augment.time_mask_max = 4;
  cfg.augment.freq_mask_max = 2;

  // FedAvg reduction identity: one client, unit server rate.
  {
    ModelParams params = random_init(arch, rng);
    const ModelParams global = params;
    Population pop;
    pop.clients = {make_device(0)};
    YogiState yogi = YogiState::init(params.size(), cfg.yogi.epsilon);
    run_round(arch, params, yogi, pop, {}, teacher, LossConfig{}, cfg, 0, 7, 1);
    const auto update =
        client_train(arch, global, pop.clients[0], {}, teacher, LossConfig{}, cfg, 0, Rng(0));
    for (std::size_t i = 0; i < params.size(); ++i) {
      require(std::abs(params.values[i] - (global.values[i] + update.delta[i])) < 1e-9,
              "FedAvg reduction identity violated");
    }
  }

  // Full participation with one local step equals one global SGD step.
  {
    ModelParams params = random_init(arch, rng);
    const ModelParams global = params;
    Population pop;
    for (std::uint32_t id = 0; id < 3; ++id) pop.clients.push_back(make_device(id));
    FedConfig full = cfg;
    full.cohort_size = 3;
    YogiState yogi = YogiState::init(params.size(), full.yogi.epsilon);
    run_round(arch, params, yogi, pop, {}, teacher, LossConfig{}, full, 0, 7, 1);

    std::vector<double> mean_grad(global.size(), 0.0);
    for (const auto& device : pop.clients) {
      const auto& ex = device.cache.examples()[0];
      const auto target = teacher_soft_labels(teacher.arch, teacher.params, ex.features(),
                                              LossConfig{}.temperature);
      ModelForwardCache fwd;
      const auto out = model_forward(arch, global, ex.features(), &fwd);
      const auto loss = distillation_loss(out, target);
      const auto grad = model_backward(arch, global, fwd, loss.encoder_grad, loss.decoder_grad);
      axpy(1.0 / 3.0, grad, mean_grad);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      require(std::abs(params.values[i] - (global.values[i] - 0.05 * mean_grad[i])) < 1e-9,
              "full-participation round is not one global SGD step");
    }
  }
}

// --- criterion 5: schedule anchors ------------------------------------------

void criterion_schedule_anchors(Context&) {
  const ScheduleSpec client{40, 0.2, 0.9, 1000};
  require(std::abs(schedule_lr(client, 40) - 0.2) < 1e-12, "client lr(40) != 0.2");
  require(std::abs(schedule_lr(client, 1040) - 0.18) < 1e-12, "client lr(1040) != 0.18");

  const CentralLrSchedule central{800, 0.06, 40000.0};
  require(std::abs(central_lr(central, 800) - 0.06) < 1e-12, "central lr(warmup) != peak");
  require(std::abs(central_lr(central, 40800) - 0.03) < 1e-12,
          "central lr(warmup + half_life) != peak/2");
}

// --- criterion 6: regime ordering -------------------------------------------

void criterion_regime_ordering(Context& ctx) {
  const std::vector<Regime> regimes = {Regime::kCentral, Regime::kFl, Regime::kFlFiltered,
                                       Regime::kJointFiltered};
  const fs::path base = ctx.scratch / "regimes";
  std::vector<fs::path> dirs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const Regime regime : regimes) {
      ExperimentConfig cfg = ctx.cfg;
      cfg.seed = seed;
      const fs::path dir =
          base / cat(regime_name(regime), "_seed", seed);
      const auto t0 = std::chrono::steady_clock::now();
      const RunResult result =
          run_regime(regime, cfg, dir, ctx.scratch / "teacher_cache", ctx.workers);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
      std::printf("        [%s seed %llu: auc=%.4f rounds=%zu %.0fs]\n", regime_name(regime),
                  static_cast<unsigned long long>(seed), result.eval.auc, result.fed_rounds_run,
                  wall);
      std::fflush(stdout);
      require(wall < 600.0, cat(regime_name(regime), " run took ", wall, "s (limit 600)"));
      dirs.push_back(dir);
    }
  }
  const auto rows = collect_compare_rows(dirs);
  const auto ensemble = ensemble_summary(rows);
  std::map<std::string, EnsembleRow> by_name;
  for (const auto& row : ensemble) by_name[row.regime] = row;
  const double joint = by_name.at("joint_filtered").min_auc;
  const double filtered = by_name.at("fl_filtered").min_auc;
  const double unfiltered = by_name.at("fl").min_auc;
  const double central_fed = by_name.at("central").min_federated_auc;
  const double filtered_fed = by_name.at("fl_filtered").min_federated_auc;
  std::printf("        [min AUC: joint=%.4f fl_filtered=%.4f fl=%.4f | federated slice: "
              "fl_filtered=%.4f central=%.4f]\n",
              joint, filtered, unfiltered, filtered_fed, central_fed);
  require(joint < filtered, cat("joint_filtered ", joint, " !< fl_filtered ", filtered));
  require(filtered < unfiltered, cat("fl_filtered ", filtered, " !< fl ", unfiltered));
  require(filtered_fed < central_fed, cat("fl_filtered federated slice ", filtered_fed,
                                          " !< central ", central_fed));
}

// --- criterion 7: filtering mechanism ---------------------------------------

void criterion_filtering_mechanism(Context& ctx) {
  const Model& teacher = ctx.get_teacher();
  Population& population = ctx.get_population();
  const auto rules = ctx.cfg.filter.rules();
  std::size_t selected_n = 0, selected_correct = 0;
  std::size_t rejected_n = 0, rejected_teacher_correct = 0;
  for (const auto& client : population.clients) {
    for (const auto& ex : client.cache.examples()) {
      const bool truly_positive = TruthOracle::truth(ex).labels.is_positive;
      const FilterDecision d = classify(ex.feedback(), rules);
      if (d.selected) {
        selected_n++;
        selected_correct += (*d.implied_label == ImpliedLabel::kPositive) == truly_positive;
      } else {
        rejected_n++;
        const double score = keyword_score(teacher.arch, teacher.params, ex.features());
        rejected_teacher_correct += (score >= 0.5) == truly_positive;
      }
    }
  }
  require(selected_n + rejected_n >= 5000, "population too small for the mechanism check");
  const double implied_acc = static_cast<double>(selected_correct) / selected_n;
  const double teacher_acc = static_cast<double>(rejected_teacher_correct) / rejected_n;
  std::printf("        [implied labels on selected: %.3f; teacher hard labels on rejected: "
              "%.3f]\n",
              implied_acc, teacher_acc);
  require(implied_acc >= teacher_acc + 0.05,
          cat("gap ", implied_acc - teacher_acc, " below 5 points"));
}

// --- criterion 8: evaluation kit oracles ------------------------------------

void criterion_eval_oracles(Context&) {
  // Exact FA/h unit arithmetic: 10 negatives of 50 frames are 10 s of
  // negative audio; a single firing is 360 FA/h.
  DataConfig data = default_data_config();
  data.example_frames = 50;
  data.feature_dim = 8;
  data.num_units = 2;
  data.unit_frames = 4;
  data.domains = {{"mini", 0.3, 1.0, true, true}};
  data.federated_mix = {1.0};
  data.central_mix = {1.0};
  const KeywordUniverse universe(data, 31);
  ArchShape shape;
  shape.feature_dim = 8;
  shape.encoder_svdf_layers = 1;
  shape.encoder_svdf_dim = 4;
  shape.encoder_svdf_memory = 2;
  shape.encoder_bottleneck_dim = 3;
  shape.encoder_classes = 3;
  shape.decoder_svdf_layers = 1;
  shape.decoder_svdf_dim = 4;
  shape.decoder_svdf_memory = 3;
  const ModelArch arch = make_arch(shape);
  {
    EvalSpec spec;
    spec.positives_per_domain = 3;
    spec.negatives_per_domain = 10;
    const EvalSet eval_set(universe, spec, 77);
    require(eval_set.negative_seconds() == 10.0, "negative audio must be exactly 10 s");
    Rng rng(5);
    const ModelParams params = random_init(arch, rng);
    std::vector<double> neg_peaks;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
      if (!eval_set.is_positive(i)) {
        neg_peaks.push_back(keyword_score(arch, params, eval_set.make(i).features));
      }
    }
    std::sort(neg_peaks.begin(), neg_peaks.end());
    const std::vector<double> thresholds = {
        0.0, (neg_peaks.back() + neg_peaks[neg_peaks.size() - 2]) / 2.0, 1.0};
    const auto report = sweep(arch, params, eval_set, thresholds, 1);
    require(report.curve[1].fa_per_hour == 360.0,
            cat("single-firing FA/h is ", report.curve[1].fa_per_hour, ", want exactly 360"));
  }

  // Trapezoid oracles, exact to 1e-12.
  {
    const std::vector<OperatingPoint> constant = {{0.1, 2.0, 0.1}, {0.5, 0.01, 0.1}};
    require(std::abs(auc_band(constant, 0.05, 0.5) - 0.1) < 1e-12, "constant-curve auc != 0.1");
    const std::vector<OperatingPoint> linear = {{0.9, 0.05, 0.2}, {0.1, 0.5, 0.0}};
    require(std::abs(auc_band(linear, 0.05, 0.5) - 0.1) < 1e-12, "linear-curve auc != 0.1");
  }

  // Monotonicity across 50 random models.
  EvalSpec spec;
  spec.positives_per_domain = 12;
  spec.negatives_per_domain = 25;
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const ModelParams params = random_init(arch, rng);
    const EvalSet eval_set(universe, spec, 500 + rep);
    const auto thresholds = default_thresholds(50);
    const auto report = sweep(arch, params, eval_set, thresholds, 1);
    for (std::size_t i = 1; i < report.curve.size(); ++i) {
      require(report.curve[i].fa_per_hour <= report.curve[i - 1].fa_per_hour,
              "FA/h increased with the threshold");
      require(report.curve[i].frr >= report.curve[i - 1].frr,
              "FRR decreased with the threshold");
    }
  }
}

// --- criterion 9: determinism ----------------------------------------------

void criterion_determinism(Context& ctx) {
  ExperimentConfig cfg = ctx.cfg;
  cfg.fed.max_rounds = 30;
  cfg.fed.early_stop = false;
  const fs::path base = ctx.scratch / "determinism";
  const fs::path d1 = base / "run1";
  const fs::path d2 = base / "run2";
  const fs::path d4 = base / "run4";
  run_regime(Regime::kFlFiltered, cfg, d1, std::nullopt, 1);
  run_regime(Regime::kFlFiltered, cfg, d2, std::nullopt, 1);
  run_regime(Regime::kFlFiltered, cfg, d4, std::nullopt, 4);

  // Every artifact in the run directory must be byte-identical.
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    files++;
    const fs::path rel = fs::relative(entry.path(), d1);
    const std::string reference = slurp(entry.path());
    require(reference == slurp(d2 / rel), cat(rel.string(), " differs between identical runs"));
    require(reference == slurp(d4 / rel), cat(rel.string(), " differs across worker counts"));
  }
  require(files >= 8, "determinism check saw too few artifacts");
}

// --- criterion 10: cache policy property -------------------------------------

void criterion_cache_policy(Context&) {
  DataConfig data = default_data_config();
  data.example_frames = 24;
  data.feature_dim = 4;
  data.num_units = 2;
  data.unit_frames = 3;
  data.domains = {{"mini", 0.2, 1.0, true, true}};
  data.federated_mix = {1.0};
  data.central_mix = {1.0};
  const KeywordUniverse universe(data, 3);
  Rng rng(99);
  for (int schedule = 0; schedule < 1000; ++schedule) {
    ClientCache cache(20, 63);
    std::map<int, int> near_by_day;
    int day = 0;
    const int ops = 40 + static_cast<int>(rng.uniform_below(40));
    for (int op = 0; op < ops; ++op) {
      if (rng.bernoulli(0.3)) {
        day += static_cast<int>(rng.uniform_below(50));
        cache.advance_to_day(day);
      } else {
        const auto kind = rng.bernoulli(0.8) ? ExampleKind::kNearActivation
                                             : ExampleKind::kActivation;
        LabeledExample ex = universe.generate_cached_example(0, rng.bernoulli(0.5), rng);
        FeedbackFeatures fb;
        fb.inference_accepted = kind == ExampleKind::kActivation;
        if (cache.add(CachedExample(std::move(ex), fb, kind), day) &&
            kind == ExampleKind::kNearActivation) {
          near_by_day[day]++;
        }
      }
      for (const auto& [d, count] : near_by_day) {
        require(count <= 20, cat("day ", d, " accepted ", count, " near-activations"));
      }
      for (const auto& ex : cache.examples()) {
        require(cache.current_day() - ex.day_added() <= 63,
                cat("example aged ", cache.current_day() - ex.day_added(), " days"));
      }
    }
  }
}

struct Criterion {
  int id;
  const char* name;
  void (*fn)(Context&);
};

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.workers = resolve_workers(0);
  ctx.scratch = fs::temp_directory_path() / "fedkws_acceptance";
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--workers") == 0 && i + 1 < argc) {
      ctx.workers = static_cast<std::size_t>(std::atoi(argv[++i]));
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (std::strcmp(argv[i], "--scratch") == 0 && i + 1 < argc) {
      ctx.scratch = argv[++i];
    }
  }
  fs::remove_all(ctx.scratch);
  fs::create_directories(ctx.scratch);

  const Criterion criteria[] = {
      {1, "gradient correctness (finite differences, both objectives)", criterion_gradients},
      {2, "selection-condition accuracy replication and interval coverage",
       criterion_annotation_study},
      {3, "filter retains 40% +/- 10% of the default population", criterion_filter_fraction},
      {4, "optimizer oracles (yogi trace, reduction identities)", criterion_optimizer_oracles},
      {5, "learning-rate schedule anchors", criterion_schedule_anchors},
      {6, "regime ordering over 5-seed ensembles", criterion_regime_ordering},
      {7, "selected labels beat teacher labels on rejects by 5 points",
       criterion_filtering_mechanism},
      {8, "evaluation kit oracles (FA/h, banded AUC, monotonicity)", criterion_eval_oracles},
      {9, "bit-identical runs across repeats and worker counts", criterion_determinism},
      {10, "cache policy holds under 1000 random schedules", criterion_cache_policy},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (only != 0 && only != criterion.id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string verdict = "PASS";
    std::string detail;
    try {
      criterion.fn(ctx);
    } catch (const Failure& f) {
      verdict = "FAIL";
      detail = f.what;
      failures++;
    } catch (const std::exception& e) {
      verdict = "FAIL";
      detail = cat("unexpected error: ", e.what());
      failures++;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %2d: %s (%.1fs)\n", verdict.c_str(), criterion.id, criterion.name, seconds);
    if (!detail.empty()) std::printf("      %s\n", detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
