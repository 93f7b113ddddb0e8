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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedkws/datasim.hpp"

namespace fedkws {

enum class ImpliedLabel { kPositive, kNegative };

// Conjunction over the feedback fields plus an optional score threshold.
struct RulePredicate {
  std::optional<bool> inference_accepted;
  std::optional<bool> reattempt;
  std::optional<bool> speaker_id_accepted;
  std::optional<bool> server_accepted;
  std::optional<double> min_score;

  bool matches(const FeedbackFeatures& fb) const;
};

struct SelectionRule {
  std::string id;
  RulePredicate condition;
  ImpliedLabel implied_label = ImpliedLabel::kPositive;
  double expected_accuracy = 0.0;
};

// The measured high-accuracy conditions, in evaluation priority order:
// server acceptance first (highest accuracy), then the remaining rows.
std::vector<SelectionRule> default_rules(double score_threshold = 0.96);

struct FilterDecision {
  bool selected = false;
  std::optional<std::size_t> rule_index;
  std::optional<std::string> rule_id;
  std::optional<ImpliedLabel> implied_label;
};

// First matching rule wins; no match leaves the example unselected. Total
// and deterministic over all flag combinations.
FilterDecision classify(const FeedbackFeatures& fb, std::span<const SelectionRule> rules);
FilterDecision classify(const FeedbackFeatures& fb, double score_threshold);

// Order-preserving selection over a cache view; returns (index, decision)
// for the selected examples only.
std::vector<std::pair<std::size_t, FilterDecision>> filter_cache(
    std::span<const CachedExample> cache, std::span<const SelectionRule> rules);

struct RuleAccuracy {
  std::string rule_id;
  std::size_t matched = 0;
  std::size_t correct = 0;
  bool supported = false;
  double accuracy = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 0.0;
};

// 95% Wilson score interval (with continuity correction) for a binomial
// proportion.
std::pair<double, double> wilson_interval(std::size_t correct, std::size_t total);

// Fraction of matching annotated examples whose implied label equals the
// annotation, per rule. Rules that match nothing are reported unsupported.
std::vector<RuleAccuracy> estimate_rule_accuracy(
    std::span<const std::pair<FeedbackFeatures, bool>> annotated,
    std::span<const SelectionRule> rules);

// One-sided label adjustment: when the heuristics imply a negative but the
// teacher scores the clip as containing the keyword (max keyword probability
// above 0.5), the teacher's keyword probabilities are forced to zero on all
// frames. The encoder stream is untouched; otherwise the labels pass through.
TeacherSoftLabels adjust_one_sided(const TeacherSoftLabels& teacher,
                                   const FilterDecision& decision);

}  // namespace fedkws
