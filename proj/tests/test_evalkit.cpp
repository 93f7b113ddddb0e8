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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fedkws/error.hpp"
#include "fedkws/evalkit.hpp"

using namespace fedkws;

namespace {

ModelOutput constant_posterior_output(std::size_t t_len, double keyword_logit) {
  ModelOutput out;
  out.encoder_logits = Tensor2(t_len, 3, 0.0);
  out.decoder_logits = Tensor2(t_len, 2, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) out.decoder_logits.at(t, 1) = keyword_logit;
  return out;
}

DataConfig mini_data() {
  DataConfig cfg = default_data_config();
  cfg.example_frames = 50;
  cfg.feature_dim = 8;
  cfg.num_units = 2;
  cfg.unit_frames = 4;
  cfg.domains = {{"mini", 0.3, 1.0, true, true}};
  cfg.federated_mix = {1.0};
  cfg.central_mix = {1.0};
  return cfg;
}

ModelArch mini_arch() {
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
  return make_arch(shape);
}

OperatingPoint op(double threshold, double fa, double frr) { return {threshold, fa, frr}; }

}  // namespace

TEST_CASE("a zero posterior never fires") {
  const auto out = constant_posterior_output(20, -50.0);
  const auto result = detect(out, 0.5);
  CHECK(!result.fired);
  CHECK(!result.frame.has_value());
}

TEST_CASE("a saturated posterior fires at the first full smoothing window") {
  const auto out = constant_posterior_output(20, 50.0);
  const auto result = detect(out, 0.5);
  REQUIRE(result.fired);
  CHECK(*result.frame == 4);
}

TEST_CASE("threshold zero fires on anything long enough") {
  const auto out = constant_posterior_output(6, -50.0);
  const auto result = detect(out, 0.0);
  REQUIRE(result.fired);
  CHECK(*result.frame == 4);
}

TEST_CASE("detection is causal in the firing frame") {
  ModelOutput out = constant_posterior_output(20, -50.0);
  for (std::size_t t = 0; t <= 10; ++t) out.decoder_logits.at(t, 1) = 50.0;
  const auto base = detect(out, 0.5);
  REQUIRE(base.fired);
  // Altering frames after the firing frame must not move the decision.
  ModelOutput altered = out;
  for (std::size_t t = *base.frame + 1; t < 20; ++t) {
    altered.decoder_logits.at(t, 1) = -90.0;
  }
  const auto again = detect(altered, 0.5);
  REQUIRE(again.fired);
  CHECK(*again.frame == *base.frame);
}

TEST_CASE("fa-per-hour arithmetic is exact for the unit case") {
  // One domain, 10 negatives of 50 frames at 50 frames/s = 10 s of negative
  // audio; exactly one firing at a threshold just under the top peak gives
  // 1 / (10/3600 h) = 360 FA/h.
  const DataConfig data = mini_data();
  const KeywordUniverse universe(data, 31);
  EvalSpec spec;
  spec.positives_per_domain = 3;
  spec.negatives_per_domain = 10;
  const EvalSet eval_set(universe, spec, 77);
  CHECK(eval_set.negative_seconds() == 10.0);

  const ModelArch arch = mini_arch();
  Rng rng(5);
  const ModelParams params = random_init(arch, rng);
  std::vector<double> neg_peaks;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    if (!eval_set.is_positive(i)) {
      neg_peaks.push_back(keyword_score(arch, params, eval_set.make(i).features));
    }
  }
  std::sort(neg_peaks.begin(), neg_peaks.end());
  const double top = neg_peaks.back();
  const double second = neg_peaks[neg_peaks.size() - 2];
  REQUIRE(top > second);
  const std::vector<double> thresholds = {0.0, (top + second) / 2.0, 1.0};
  const auto report = sweep(arch, params, eval_set, thresholds, 1);
  CHECK(report.curve[1].fa_per_hour == 360.0);  // exactly one negative fires
}

TEST_CASE("sweep endpoints behave like the trivial thresholds") {
  const DataConfig data = mini_data();
  const KeywordUniverse universe(data, 32);
  EvalSpec spec;
  spec.positives_per_domain = 20;
  spec.negatives_per_domain = 40;
  const EvalSet eval_set(universe, spec, 78);
  const ModelArch arch = mini_arch();
  Rng rng(6);
  const ModelParams params = random_init(arch, rng);
  const std::vector<double> thresholds = {0.0, 0.5, 1.0};
  const auto report = sweep(arch, params, eval_set, thresholds, 1);
  CHECK(report.curve[0].frr == 0.0);  // everything fires at threshold 0
  CHECK(report.curve[0].fa_per_hour ==
        3600.0 * 40.0 / eval_set.negative_seconds());
  CHECK(report.curve[2].fa_per_hour == 0.0);  // nothing reaches 1.0
  CHECK(report.curve[2].frr == 1.0);
}

TEST_CASE("sweep requires both positives and negatives") {
  const DataConfig data = mini_data();
  const KeywordUniverse universe(data, 33);
  EvalSpec spec;
  spec.positives_per_domain = 0;
  spec.negatives_per_domain = 10;
  const EvalSet eval_set(universe, spec, 79);
  const ModelArch arch = mini_arch();
  Rng rng(7);
  const ModelParams params = random_init(arch, rng);
  const auto thresholds = default_thresholds(10);
  CHECK_THROWS_AS(sweep(arch, params, eval_set, thresholds, 1), ConfigError);
}

TEST_CASE("fa never rises and frr never falls as the threshold grows") {
  const DataConfig data = mini_data();
  const KeywordUniverse universe(data, 34);
  EvalSpec spec;
  spec.positives_per_domain = 15;
  spec.negatives_per_domain = 30;
  const ModelArch arch = mini_arch();
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const ModelParams params = random_init(arch, rng);
    const EvalSet eval_set(universe, spec, 100 + rep);
    const auto thresholds = default_thresholds(50);
    const auto report = sweep(arch, params, eval_set, thresholds, 1);
    for (std::size_t i = 1; i < report.curve.size(); ++i) {
      CHECK(report.curve[i].fa_per_hour <= report.curve[i - 1].fa_per_hour);
      CHECK(report.curve[i].frr >= report.curve[i - 1].frr);
    }
  }
}

TEST_CASE("banded auc of a constant curve is that constant") {
  const std::vector<OperatingPoint> curve = {op(0.1, 2.0, 0.1), op(0.5, 0.01, 0.1)};
  CHECK(std::abs(auc_band(curve, 0.05, 0.5) - 0.1) < 1e-12);
}

TEST_CASE("banded auc matches the trapezoid oracle on a linear curve") {
  // FRR falls linearly from 0.2 at FA/h=0.05 to 0.0 at FA/h=0.5.
  const std::vector<OperatingPoint> curve = {op(0.9, 0.05, 0.2), op(0.1, 0.5, 0.0)};
  CHECK(std::abs(auc_band(curve, 0.05, 0.5) - 0.1) < 1e-12);
  // Raw integral: 0.1 * 0.45.
  CHECK(std::abs(auc_band(curve, 0.05, 0.5, false) - 0.045) < 1e-12);
}

TEST_CASE("a perfect separator has zero banded auc") {
  const std::vector<OperatingPoint> curve = {op(0.2, 5.0, 0.0), op(0.5, 0.6, 0.0),
                                             op(0.9, 0.0, 0.0)};
  CHECK(auc_band(curve) == 0.0);
}

TEST_CASE("banded auc ignores redundant collinear points") {
  const std::vector<OperatingPoint> sparse = {op(0.9, 0.05, 0.2), op(0.1, 0.5, 0.0)};
  // Insert collinear interior points.
  const std::vector<OperatingPoint> dense = {op(0.9, 0.05, 0.2), op(0.7, 0.2, 0.2 - 0.2 / 3.0),
                                             op(0.4, 0.35, 0.2 / 3.0), op(0.1, 0.5, 0.0)};
  CHECK(std::abs(auc_band(sparse) - auc_band(dense)) < 1e-12);
}

TEST_CASE("a single-point curve is degenerate") {
  const std::vector<OperatingPoint> curve = {op(0.4, 0.3, 0.5), op(0.6, 0.3, 0.5)};
  CHECK_THROWS_AS(auc_band(curve), std::invalid_argument);
}

TEST_CASE("out-of-band curves extrapolate and are flagged") {
  const std::vector<OperatingPoint> curve = {op(0.2, 1.0, 0.3), op(0.1, 2.0, 0.2)};
  bool extrapolated = false;
  const double value = auc_band(curve, 0.05, 0.5, true, &extrapolated);
  CHECK(extrapolated);
  CHECK(std::isfinite(value));
}
