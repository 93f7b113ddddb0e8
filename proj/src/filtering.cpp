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

#include "fedkws/filtering.hpp"

#include <cmath>

namespace fedkws {

bool RulePredicate::matches(const FeedbackFeatures& fb) const {
  if (inference_accepted && *inference_accepted != fb.inference_accepted) return false;
  if (reattempt && *reattempt != fb.reattempt) return false;
  if (speaker_id_accepted && *speaker_id_accepted != fb.speaker_id_accepted) return false;
  if (server_accepted && *server_accepted != fb.server_accepted) return false;
  if (min_score && !(fb.inference_score > *min_score)) return false;
  return true;
}

std::vector<SelectionRule> default_rules(double score_threshold) {
  std::vector<SelectionRule> rules(4);
  rules[0].id = "server_accepted";
  rules[0].condition.server_accepted = true;
  rules[0].implied_label = ImpliedLabel::kPositive;
  rules[0].expected_accuracy = 0.99;

  rules[1].id = "rejected_no_reattempt";
  rules[1].condition.inference_accepted = false;
  rules[1].condition.reattempt = false;
  rules[1].implied_label = ImpliedLabel::kNegative;
  rules[1].expected_accuracy = 0.91;

  rules[2].id = "spkr_rejected_high_score";
  rules[2].condition.speaker_id_accepted = false;
  rules[2].condition.reattempt = false;
  rules[2].condition.min_score = score_threshold;
  rules[2].implied_label = ImpliedLabel::kPositive;
  rules[2].expected_accuracy = 0.89;

  rules[3].id = "spkr_rejected_reattempt";
  rules[3].condition.speaker_id_accepted = false;
  rules[3].condition.reattempt = true;
  rules[3].implied_label = ImpliedLabel::kPositive;
  rules[3].expected_accuracy = 0.88;
  return rules;
}

FilterDecision classify(const FeedbackFeatures& fb, std::span<const SelectionRule> rules) {
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (rules[i].condition.matches(fb)) {
      FilterDecision d;
      d.selected = true;
      d.rule_index = i;
      d.rule_id = rules[i].id;
      d.implied_label = rules[i].implied_label;
      return d;
    }
  }
  return {};
}

FilterDecision classify(const FeedbackFeatures& fb, double score_threshold) {
  const auto rules = default_rules(score_threshold);
  return classify(fb, rules);
}

std::vector<std::pair<std::size_t, FilterDecision>> filter_cache(
    std::span<const CachedExample> cache, std::span<const SelectionRule> rules) {
  std::vector<std::pair<std::size_t, FilterDecision>> selected;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    FilterDecision d = classify(cache[i].feedback(), rules);
    if (d.selected) selected.emplace_back(i, std::move(d));
  }
  return selected;
}

std::pair<double, double> wilson_interval(std::size_t correct, std::size_t total) {
  if (total == 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double z2 = z * z;
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(correct) / n;
  const double denom = 2.0 * (n + z2);
  // Continuity-corrected Wilson score bounds.
  double low = (2.0 * n * p + z2 - 1.0 - z * std::sqrt(z2 - 2.0 - 1.0 / n + 4.0 * p * (n * (1.0 - p) + 1.0))) / denom;
  double high = (2.0 * n * p + z2 + 1.0 + z * std::sqrt(z2 + 2.0 - 1.0 / n + 4.0 * p * (n * (1.0 - p) - 1.0))) / denom;
  if (p == 0.0) low = 0.0;
  if (p == 1.0) high = 1.0;
  return {std::max(0.0, low), std::min(1.0, high)};
}

std::vector<RuleAccuracy> estimate_rule_accuracy(
    std::span<const std::pair<FeedbackFeatures, bool>> annotated,
    std::span<const SelectionRule> rules) {
  std::vector<RuleAccuracy> report(rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) report[i].rule_id = rules[i].id;
  for (const auto& [fb, truly_positive] : annotated) {
    const FilterDecision d = classify(fb, rules);
    if (!d.selected) continue;
    auto& row = report[*d.rule_index];
    row.matched++;
    const bool implied_positive = *d.implied_label == ImpliedLabel::kPositive;
    if (implied_positive == truly_positive) row.correct++;
  }
  for (auto& row : report) {
    row.supported = row.matched > 0;
    if (!row.supported) continue;
    row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.matched);
    const auto [lo, hi] = wilson_interval(row.correct, row.matched);
    row.wilson_low = lo;
    row.wilson_high = hi;
  }
  return report;
}

TeacherSoftLabels adjust_one_sided(const TeacherSoftLabels& teacher,
                                   const FilterDecision& decision) {
  if (!decision.selected || !decision.implied_label ||
      *decision.implied_label != ImpliedLabel::kNegative) {
    return teacher;
  }
  double max_keyword = 0.0;
  for (std::size_t t = 0; t < teacher.decoder_probs.rows; ++t) {
    max_keyword = std::max(max_keyword, teacher.decoder_probs.at(t, 1));
  }
  if (!(max_keyword > 0.5)) return teacher;
  TeacherSoftLabels adjusted = teacher;
  for (std::size_t t = 0; t < adjusted.decoder_probs.rows; ++t) {
    adjusted.decoder_probs.at(t, 1) = 0.0;
    adjusted.decoder_probs.at(t, 0) = 1.0;
  }
  return adjusted;
}

}  // namespace fedkws
