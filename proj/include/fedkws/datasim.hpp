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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedkws/model.hpp"
#include "fedkws/rng.hpp"

namespace fedkws {

struct DomainSpec {
  std::string name;
  double noise_sigma = 0.25;
  double keyword_gain = 1.0;
  bool present_in_federated = true;
  bool present_in_central = true;
};

// Negative utterances come in three flavours: plain background noise, the
// keyword sub-units in a scrambled order, and a truncated keyword. Device
// caches never hold plain noise (caching only triggers on near activations),
// server-side and evaluation sets do.
struct NegativeMix {
  double noise = 0.34;
  double scramble = 0.33;
  double partial = 0.33;
};

struct DataConfig {
  std::size_t example_frames = 50;
  std::size_t feature_dim = 40;
  std::size_t num_units = 3;  // keyword sub-units; encoder classes = num_units + 1
  std::size_t unit_frames = 5;
  std::size_t decoder_label_tail = 5;
  double positive_rate = 0.5;
  double amplitude_jitter = 0.1;
  std::vector<DomainSpec> domains;
  std::vector<double> federated_mix;  // aligned with domains
  std::vector<double> central_mix;    // aligned with domains
  NegativeMix cached_negatives{0.0, 0.7, 0.3};
  NegativeMix open_negatives{0.85, 0.10, 0.05};

  std::size_t keyword_frames() const { return num_units * unit_frames; }
  std::size_t encoder_classes() const { return num_units + 1; }
  const DomainSpec& domain(std::size_t i) const { return domains.at(i); }
  std::size_t domain_index(const std::string& name) const;
  void validate() const;
};
DataConfig default_data_config();

struct LabeledExample {
  FeatureSequence features;
  FrameLabels labels;
  std::uint32_t domain_index = 0;
  int day = 0;
};

// The fixed keyword of the simulated universe: one sound-unit pattern per
// sub-unit, drawn once from the universe seed and shared by every generator.
class KeywordUniverse {
 public:
  KeywordUniverse(DataConfig config, std::uint64_t seed);

  const DataConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  LabeledExample generate_example(std::size_t domain_index, bool positive,
                                  const NegativeMix& mix, Rng& rng) const;
  // Open-world mix (server/eval sets).
  LabeledExample generate_example(std::size_t domain_index, bool positive, Rng& rng) const;
  // Cache mix (no plain-noise negatives).
  LabeledExample generate_cached_example(std::size_t domain_index, bool positive, Rng& rng) const;

 private:
  DataConfig config_;
  std::uint64_t seed_;
  Tensor2 unit_patterns_;  // num_units x feature_dim, orthonormal rows
};

// Post-hoc signals correlated with label correctness.
struct FeedbackFeatures {
  bool inference_accepted = false;
  double inference_score = 0.0;
  bool reattempt = false;
  bool speaker_id_accepted = false;
  bool server_accepted = false;
};

enum class ExampleKind { kActivation, kNearActivation };

// Table of selection-condition targets. Rows follow the heuristic order:
// 0: inference rejected and no reattempt        -> implied negative
// 1: speaker-id rejected, no reattempt, score > threshold -> implied positive
// 2: speaker-id rejected and reattempt          -> implied positive
// 3: server accepted                            -> implied positive
struct CalibrationConfig {
  std::array<double, 4> rule_accuracy{0.91, 0.89, 0.88, 0.99};
  std::array<double, 4> rule_fraction{0.22, 0.07, 0.07, 0.10};
  // Feedback signals correlate with whether the deployed scorer agreed with
  // the ground truth; selected conditions favour agreement.
  double agree_boost = 1.1;
  double disagree_damp = 0.35;
  double nominal_agreement = 0.85;  // normalizes the multiplier mean to ~1
  double unmatched_accept_rate_positive = 0.7;
  double unmatched_accept_rate_negative = 0.4;
  double score_bump_low = 0.965;  // rule-1 conditions require a score above 0.96

  void validate(double positive_rate) const;
};

// Draws feedback flags so that, in expectation, examples matching each
// selection condition carry its configured label accuracy, for any scorer.
FeedbackFeatures feedback_oracle(bool truth_is_positive, double inference_score,
                                 const CalibrationConfig& calib, double positive_rate, Rng& rng);
FeedbackFeatures feedback_oracle(const LabeledExample& example, double inference_score,
                                 const CalibrationConfig& calib, double positive_rate, Rng& rng);

// Ground truth of cached examples sits behind this key so training paths
// cannot reach it; only the evaluation-side oracle can mint one.
class GroundTruthKey {
  GroundTruthKey() = default;
  friend struct TruthOracle;
};

class CachedExample {
 public:
  CachedExample(LabeledExample example, FeedbackFeatures feedback, ExampleKind kind)
      : example_(std::move(example)), feedback_(feedback), kind_(kind) {}

  const FeatureSequence& features() const { return example_.features; }
  const FeedbackFeatures& feedback() const { return feedback_; }
  ExampleKind kind() const { return kind_; }
  std::uint32_t domain_index() const { return example_.domain_index; }
  int day_added() const { return day_added_; }
  void stamp_day(int day) { day_added_ = day; }

  const LabeledExample& truth(GroundTruthKey) const { return example_; }

  // Teacher soft labels are immutable per run (the teacher is frozen), so
  // they are memoized on first use. Examples are owned by exactly one client
  // and a client trains on one thread at a time.
  const TeacherSoftLabels* teacher_memo() const {
    return teacher_memo_ ? &*teacher_memo_ : nullptr;
  }
  void store_teacher_memo(TeacherSoftLabels labels) const { teacher_memo_ = std::move(labels); }

 private:
  LabeledExample example_;
  FeedbackFeatures feedback_;
  ExampleKind kind_;
  int day_added_ = 0;
  mutable std::optional<TeacherSoftLabels> teacher_memo_;
};

// Evaluation-side accessor for ground truth.
struct TruthOracle {
  static const LabeledExample& truth(const CachedExample& e) { return e.truth(GroundTruthKey{}); }
};

// Per-device example store: at most `near_cap` near-activation examples may
// be added per day, and examples are dropped once older than
// `retention_days`.
class ClientCache {
 public:
  ClientCache() = default;
  ClientCache(int near_cap, int retention_days)
      : near_cap_(near_cap), retention_days_(retention_days) {}

  bool add(CachedExample ex, int day);
  void advance_to_day(int day);

  const std::vector<CachedExample>& examples() const { return examples_; }
  int current_day() const { return current_day_; }
  bool empty() const { return examples_.empty(); }
  std::size_t size() const { return examples_.size(); }
  int near_cap() const { return near_cap_; }
  int retention_days() const { return retention_days_; }

 private:
  std::vector<CachedExample> examples_;
  int near_cap_ = 20;
  int retention_days_ = 63;
  int current_day_ = 0;
  int near_added_today_ = 0;
};

struct ClientDevice {
  std::uint32_t id = 0;
  ClientCache cache;
  bool charging = true;
  bool idle = true;
  bool unmetered = true;
  double last_participation_hours = -1e300;  // never

  bool flags_set() const { return charging && idle && unmetered; }
};

struct PopulationConfig {
  std::size_t n_clients = 200;
  double median_cache_size = 50.0;
  double cache_size_sigma = 0.4;
  std::size_t min_cache_size = 10;
  std::size_t max_cache_size = 120;
  int fill_days = 7;
  double eligibility_rate = 0.95;  // per flag
  int near_cap_per_day = 20;
  int retention_days = 63;
  double score_noise = 0.02;
};

struct Population {
  std::vector<ClientDevice> clients;
  int built_through_day = 0;
};

// Scores an example the way the deployed on-device model would have at
// collection time.
using ScoreFn = std::function<double(const LabeledExample&, Rng&)>;

// Frozen inference-time copy of a trained model plus calibrated noise.
ScoreFn model_score_fn(const Model& inference_model, double noise_sigma);
// Truth-conditioned stand-in used where no trained model exists yet
// (annotation studies, unit tests).
ScoreFn synthetic_score_fn();

Population build_population(const KeywordUniverse& universe, const PopulationConfig& cfg,
                            const CalibrationConfig& calib, const ScoreFn& score_fn, Rng& rng);

std::vector<std::uint32_t> eligible_clients(const Population& population, double sim_time_hours);

std::vector<LabeledExample> make_central_dataset(const KeywordUniverse& universe,
                                                 std::size_t size, Rng& rng);

// Snapshot of a population as a record file plus a feature blob, for
// reproducibility and external inspection.
void export_population(const Population& population, const KeywordUniverse& universe,
                       const std::filesystem::path& records_path);
Population import_population(const std::filesystem::path& records_path);

}  // namespace fedkws
