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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedkws/datasim.hpp"
#include "fedkws/model.hpp"

namespace fedkws {

struct EvalSpec {
  std::size_t positives_per_domain = 500;
  std::size_t negatives_per_domain = 6000;
  std::size_t thresholds = 200;
  double fa_low = 0.05;
  double fa_high = 0.5;
  std::size_t smooth_window = 5;
  bool normalized_auc = true;
};

// Deterministic lazily-generated evaluation set: example i is a pure
// function of (seed, i), so nothing is stored and parallel sweeps stay
// reproducible.
class EvalSet {
 public:
  EvalSet(const KeywordUniverse& universe, EvalSpec spec, std::uint64_t seed);

  std::size_t size() const { return metas_.size(); }
  const EvalSpec& spec() const { return spec_; }
  bool is_positive(std::size_t i) const { return metas_[i].positive; }
  std::uint32_t domain_of(std::size_t i) const { return metas_[i].domain; }
  LabeledExample make(std::size_t i) const;
  std::size_t n_domains() const { return universe_->config().domains.size(); }
  const std::string& domain_name(std::size_t d) const {
    return universe_->config().domain(d).name;
  }

  std::size_t positives() const { return n_positive_; }
  std::size_t negatives() const { return metas_.size() - n_positive_; }
  double negative_seconds() const;
  double negative_seconds(std::size_t domain) const;

 private:
  struct Meta {
    bool positive = false;
    std::uint32_t domain = 0;
  };
  const KeywordUniverse* universe_;
  EvalSpec spec_;
  std::uint64_t seed_;
  std::vector<Meta> metas_;
  std::size_t n_positive_ = 0;
};

struct DetectResult {
  bool fired = false;
  std::optional<std::size_t> frame;
};

// Fires at the first frame whose trailing smoothed keyword posterior reaches
// the threshold; at most one firing per example, and none before a full
// smoothing window has streamed in.
DetectResult detect(const ModelOutput& output, double threshold, std::size_t smooth_window = 5);

struct OperatingPoint {
  double threshold = 0.0;
  double fa_per_hour = 0.0;
  double frr = 0.0;
};

struct SliceReport {
  std::string slice;
  double auc = 0.0;
  bool extrapolated = false;
  bool supported = false;
};

struct EvalReport {
  std::vector<OperatingPoint> curve;  // sorted by threshold ascending
  double auc = 0.0;
  bool extrapolated = false;
  std::vector<SliceReport> slices;  // per-domain plus domain groups
};

std::vector<double> default_thresholds(std::size_t n = 200);

// Per-threshold false accepts per hour of negative audio and false-reject
// rate per keyword instance, plus the banded AUC overall and per slice.
// `federated_domains` marks which domains belong to the on-device slice.
EvalReport sweep(const ModelArch& arch, const ModelParams& params, const EvalSet& eval_set,
                 std::span<const double> thresholds, std::size_t workers = 1,
                 const std::vector<bool>& federated_domains = {});

// Mean false-reject rate over the FA/h band [fa_low, fa_high], integrating
// the piecewise-linear FRR(FA/h) curve; extrapolates linearly from the
// nearest points when the curve does not span the band (flagged). Raw
// (unnormalized) integral available via `normalized = false`.
double auc_band(std::span<const OperatingPoint> curve, double fa_low = 0.05,
                double fa_high = 0.5, bool normalized = true, bool* extrapolated = nullptr);

}  // namespace fedkws
