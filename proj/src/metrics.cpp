// SPDX-License-Identifier: Apache-2.0
#include "fairlora/metrics.hpp"

#include <algorithm>

#include "fairlora/errors.hpp"

namespace fairlora {

const GroupMetrics* FairnessReport::find(const std::string& group) const {
  for (const GroupMetrics& g : groups)
    if (g.group == group) return &g;
  return nullptr;
}

double spread(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo;
}

FairnessReport evaluate(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const std::string> groups, std::span<const std::string> group_order) {
  if (predictions.size() != labels.size() || labels.size() != groups.size()) {
    throw ContractViolation("evaluate: predictions, labels and groups differ in length");
  }
  FairnessReport r;
  r.total = labels.size();

  std::vector<std::string> order(group_order.begin(), group_order.end());
  if (order.empty()) {
    for (const std::string& g : groups)
      if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
  }
  for (const std::string& name : order) {
    GroupMetrics m;
    m.group = name;
    std::size_t correct = 0, predicted_pos = 0, true_pos = 0, false_pos = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i] != name) continue;
      ++m.count;
      const bool pos = labels[i] == 1;
      const bool pred = predictions[i] == 1;
      if (pos) ++m.positives; else ++m.negatives;
      if (pred == pos) ++correct;
      if (pred) ++predicted_pos;
      if (pred && pos) ++true_pos;
      if (pred && !pos) ++false_pos;
    }
    if (m.count == 0) {
      r.warnings.push_back("group '" + name + "' has no samples; omitted");
      continue;
    }
    const double n = static_cast<double>(m.count);
    m.accuracy = static_cast<double>(correct) / n;
    m.positive_rate = static_cast<double>(predicted_pos) / n;
    if (m.positives > 0) {
      m.tpr = static_cast<double>(true_pos) / static_cast<double>(m.positives);
    } else {
      r.warnings.push_back("group '" + name + "' has no positive labels; excluded from TPR gap");
    }
    if (m.negatives > 0) {
      m.fpr = static_cast<double>(false_pos) / static_cast<double>(m.negatives);
    } else {
      r.warnings.push_back("group '" + name + "' has no negative labels; excluded from FPR gap");
    }
    r.groups.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (std::find(order.begin(), order.end(), groups[i]) == order.end()) {
      throw ContractViolation("evaluate: group '" + groups[i] + "' missing from the group order");
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  r.overall_accuracy = r.total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.total);

  std::vector<double> acc, dp, tpr, fpr;
  for (const GroupMetrics& m : r.groups) {
    acc.push_back(m.accuracy);
    dp.push_back(m.positive_rate);
    if (m.tpr) tpr.push_back(*m.tpr);
    if (m.fpr) fpr.push_back(*m.fpr);
  }
  r.max_acc_gap = spread(acc);
  r.demographic_parity_gap = spread(dp);
  r.tpr_gap = spread(tpr);
  r.fpr_gap = spread(fpr);
  return r;
}

EqualizedOddsGaps equalized_odds_gaps(std::span<const int> predictions, std::span<const int> labels,
                                      std::span<const std::string> groups) {
  const FairnessReport r = evaluate(predictions, labels, groups);
  return {r.tpr_gap, r.fpr_gap};
}

double demographic_parity_gap(std::span<const int> predictions, std::span<const std::string> groups) {
  if (predictions.size() != groups.size()) throw ContractViolation("demographic_parity_gap: length mismatch");
  // Labels do not enter the positive-prediction rate.
  const std::vector<int> labels(predictions.size(), 0);
  return evaluate(predictions, labels, groups).demographic_parity_gap;
}

double gap_reduction(double baseline_gap, double gap) {
  if (baseline_gap == 0.0) throw ContractViolation("gap_reduction: baseline gap is zero");
  return (baseline_gap - gap) / baseline_gap;
}

}  // namespace fairlora
