// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairlora/errors.hpp"

namespace fairlora {

struct GroupMetrics {
  std::string group;
  std::size_t count = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double accuracy = 0.0;
  /// P(ŷ = 1) within the group.
  double positive_rate = 0.0;
  /// Undefined (absent) when the group has no positive / no negative labels.
  std::optional<double> tpr;
  std::optional<double> fpr;
};

/// Hard-prediction evaluation: accuracy parity plus the comparison criteria
/// (equalized odds, demographic parity).
struct FairnessReport {
  std::size_t total = 0;
  double overall_accuracy = 0.0;
  std::vector<GroupMetrics> groups;
  double max_acc_gap = 0.0;
  double tpr_gap = 0.0;
  double fpr_gap = 0.0;
  double demographic_parity_gap = 0.0;
  std::vector<std::string> warnings;

  const GroupMetrics* find(const std::string& group) const;
};

struct EqualizedOddsGaps {
  double tpr_gap = 0.0;
  double fpr_gap = 0.0;
};

/// Max minus min; 0 for fewer than two values.
double spread(std::span<const double> values);

/// `group_order` fixes the group order of the report; groups listed there but
/// absent from the data are omitted with a warning. When empty, groups appear in
/// first-appearance order.
FairnessReport evaluate(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const std::string> groups, std::span<const std::string> group_order = {});

EqualizedOddsGaps equalized_odds_gaps(std::span<const int> predictions, std::span<const int> labels,
                                      std::span<const std::string> groups);

double demographic_parity_gap(std::span<const int> predictions, std::span<const std::string> groups);

/// Relative reduction (baseline − value) / baseline, as a fraction.
double gap_reduction(double baseline_gap, double gap);

}  // namespace fairlora
