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

#include "fedkws/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedkws/error.hpp"
#include "fedkws/parallel.hpp"

namespace fedkws {

namespace {

constexpr std::uint64_t kEvalStream = 0xE7A1;

}  // namespace

EvalSet::EvalSet(const KeywordUniverse& universe, EvalSpec spec, std::uint64_t seed)
    : universe_(&universe), spec_(spec), seed_(seed) {
  const auto& domains = universe.config().domains;
  metas_.reserve(domains.size() * (spec_.positives_per_domain + spec_.negatives_per_domain));
  for (std::uint32_t d = 0; d < domains.size(); ++d) {
    for (std::size_t i = 0; i < spec_.positives_per_domain; ++i) {
      metas_.push_back({true, d});
      n_positive_++;
    }
    for (std::size_t i = 0; i < spec_.negatives_per_domain; ++i) metas_.push_back({false, d});
  }
}

LabeledExample EvalSet::make(std::size_t i) const {
  Rng rng = Rng(seed_).child(kEvalStream, i);
  return universe_->generate_example(metas_[i].domain, metas_[i].positive, rng);
}

double EvalSet::negative_seconds() const {
  const double frames = static_cast<double>(universe_->config().example_frames);
  return static_cast<double>(negatives()) * frames / FeatureSequence::kFramesPerSecond;
}

double EvalSet::negative_seconds(std::size_t domain) const {
  std::size_t count = 0;
  for (const auto& m : metas_) {
    if (!m.positive && m.domain == domain) count++;
  }
  const double frames = static_cast<double>(universe_->config().example_frames);
  return static_cast<double>(count) * frames / FeatureSequence::kFramesPerSecond;
}

DetectResult detect(const ModelOutput& output, double threshold, std::size_t smooth_window) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument(cat("detection threshold ", threshold, " outside [0,1]"));
  }
  const auto smoothed = smoothed_keyword_posterior(output.decoder_logits, smooth_window);
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    if (smoothed[i] >= threshold) {
      return {true, i + smooth_window - 1};
    }
  }
  return {false, std::nullopt};
}

std::vector<double> default_thresholds(std::size_t n) {
  if (n < 2) throw std::invalid_argument("threshold sweep needs at least two thresholds");
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return t;
}

EvalReport sweep(const ModelArch& arch, const ModelParams& params, const EvalSet& eval_set,
                 std::span<const double> thresholds, std::size_t workers,
                 const std::vector<bool>& federated_domains) {
  if (thresholds.empty()) throw std::invalid_argument("empty threshold list");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("thresholds must be sorted ascending");
  }
  if (eval_set.positives() == 0 || eval_set.negatives() == 0) {
    throw ConfigError("evaluation set needs both positives and negatives");
  }

  // The detector fires at threshold th exactly when the peak smoothed
  // posterior reaches th, so one forward pass per example covers the whole
  // sweep.
  std::vector<double> peak(eval_set.size());
  parallel_for(workers, eval_set.size(), [&](std::size_t i) {
    const LabeledExample ex = eval_set.make(i);
    peak[i] = keyword_score(arch, params, ex.features, eval_set.spec().smooth_window);
  });

  const std::size_t n_domains = eval_set.n_domains();
  const std::size_t n_th = thresholds.size();
  // fired_at[i] = number of thresholds the example fires for = index of the
  // first non-fired threshold (thresholds sorted ascending).
  std::vector<std::vector<std::size_t>> neg_fired(n_domains,
                                                  std::vector<std::size_t>(n_th, 0));
  std::vector<std::vector<std::size_t>> pos_fired(n_domains,
                                                  std::vector<std::size_t>(n_th, 0));
  std::vector<std::size_t> pos_total(n_domains, 0), neg_total(n_domains, 0);
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const std::size_t d = eval_set.domain_of(i);
    // First threshold index that does NOT fire.
    const std::size_t k = static_cast<std::size_t>(
        std::upper_bound(thresholds.begin(), thresholds.end(), peak[i]) - thresholds.begin());
    auto& bucket = eval_set.is_positive(i) ? pos_fired[d] : neg_fired[d];
    for (std::size_t t = 0; t < k; ++t) bucket[t]++;
    (eval_set.is_positive(i) ? pos_total : neg_total)[d]++;
  }

  const auto curve_for = [&](const std::vector<bool>& in_slice) {
    std::vector<OperatingPoint> curve(n_th);
    double neg_seconds = 0.0;
    std::size_t positives = 0;
    for (std::size_t d = 0; d < n_domains; ++d) {
      if (!in_slice[d]) continue;
      neg_seconds += eval_set.negative_seconds(d);
      positives += pos_total[d];
    }
    for (std::size_t t = 0; t < n_th; ++t) {
      std::size_t neg = 0;
      std::size_t pos = 0;
      for (std::size_t d = 0; d < n_domains; ++d) {
        if (!in_slice[d]) continue;
        neg += neg_fired[d][t];
        pos += pos_fired[d][t];
      }
      curve[t].threshold = thresholds[t];
      curve[t].fa_per_hour =
          neg_seconds > 0.0 ? static_cast<double>(neg) * 3600.0 / neg_seconds : 0.0;
      curve[t].frr = positives > 0
                         ? static_cast<double>(positives - pos) / static_cast<double>(positives)
                         : 0.0;
    }
    return curve;
  };

  EvalReport report;
  const std::vector<bool> all(n_domains, true);
  report.curve = curve_for(all);
  const EvalSpec& spec = eval_set.spec();
  report.auc = auc_band(report.curve, spec.fa_low, spec.fa_high, spec.normalized_auc,
                        &report.extrapolated);

  const auto add_slice = [&](const std::string& name, const std::vector<bool>& mask) {
    SliceReport slice;
    slice.slice = name;
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (std::size_t d = 0; d < n_domains; ++d) {
      if (!mask[d]) continue;
      pos += pos_total[d];
      neg += neg_total[d];
    }
    if (pos > 0 && neg > 0) {
      const auto curve = curve_for(mask);
      slice.auc = auc_band(curve, spec.fa_low, spec.fa_high, spec.normalized_auc,
                           &slice.extrapolated);
      slice.supported = true;
    }
    report.slices.push_back(std::move(slice));
  };
  for (std::size_t d = 0; d < n_domains; ++d) {
    std::vector<bool> mask(n_domains, false);
    mask[d] = true;
    add_slice(eval_set.domain_name(d), mask);
  }
  if (!federated_domains.empty()) {
    add_slice("federated", federated_domains);
  }
  return report;
}

double auc_band(std::span<const OperatingPoint> curve, double fa_low, double fa_high,
                bool normalized, bool* extrapolated) {
  if (!(fa_high > fa_low)) throw std::invalid_argument("auc band must have fa_high > fa_low");
  // FRR as a function of FA/h: collapse duplicate abscissae to their best
  // (lowest) FRR, sorted by FA/h ascending.
  std::vector<std::pair<double, double>> points;
  for (const auto& op : curve) {
    points.emplace_back(op.fa_per_hour, op.frr);
  }
  std::sort(points.begin(), points.end());
  std::vector<std::pair<double, double>> fn;
  for (const auto& p : points) {
    if (!fn.empty() && fn.back().first == p.first) {
      fn.back().second = std::min(fn.back().second, p.second);
    } else {
      fn.push_back(p);
    }
  }
  if (fn.size() < 2) {
    throw std::invalid_argument(cat("degenerate operating curve: ", fn.size(),
                                    " distinct FA/h value(s)"));
  }
  if (extrapolated != nullptr) {
    *extrapolated = fa_low < fn.front().first || fa_high > fn.back().first;
  }

  const auto value_at = [&](double fa) {
    // Segment lookup with linear extrapolation beyond the ends.
    std::size_t hi = 1;
    while (hi + 1 < fn.size() && fn[hi].first < fa) hi++;
    if (fa < fn.front().first) hi = 1;
    const auto& [x0, y0] = fn[hi - 1];
    const auto& [x1, y1] = fn[hi];
    const double t = (fa - x0) / (x1 - x0);
    return y0 + t * (y1 - y0);
  };

  // Piecewise-linear trapezoid over the band: breakpoints are the band ends
  // plus interior curve points.
  std::vector<double> xs = {fa_low};
  for (const auto& [x, y] : fn) {
    if (x > fa_low && x < fa_high) xs.push_back(x);
  }
  xs.push_back(fa_high);
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    integral += 0.5 * (value_at(xs[i]) + value_at(xs[i + 1])) * (xs[i + 1] - xs[i]);
  }
  return normalized ? integral / (fa_high - fa_low) : integral;
}

}  // namespace fedkws
