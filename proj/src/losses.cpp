// SPDX-License-Identifier: Apache-2.0
#include "fairlora/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace fairlora {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::Vanilla: return "vanilla";
    case Objective::FairnessRegularized: return "fr";
    case Objective::GroupReweighted: return "gr";
    case Objective::Hybrid: return "hybrid";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  std::string k = s;
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  if (k == "vanilla") return Objective::Vanilla;
  if (k == "fr" || k == "fr-lora") return Objective::FairnessRegularized;
  if (k == "gr" || k == "gr-lora") return Objective::GroupReweighted;
  if (k == "hybrid" || k == "hybrid-lora") return Objective::Hybrid;
  throw ConfigError("unknown objective '" + s + "'");
}

void LossConfig::validate() const {
  if (uses_lambda() && !(lambda >= 0.0 && std::isfinite(lambda))) throw ConfigError("lambda must be finite and >= 0");
  if (uses_weights() && !(w_max > 0.0)) throw ConfigError("w_max must be positive");
}

double GroupWeights::at(std::size_t group) const {
  if (group >= values.size() || std::isnan(values[group])) {
    throw ContractViolation("no weight for group index " + std::to_string(group));
  }
  return values[group];
}

double GroupWeights::at(const std::string& group) const {
  auto it = std::find(groups.begin(), groups.end(), group);
  if (it == groups.end()) throw ContractViolation("no weight for group '" + group + "'");
  return at(static_cast<std::size_t>(it - groups.begin()));
}

GroupWeights group_weights(std::span<const std::size_t> counts, std::size_t total, double w_max,
                           std::vector<std::string> groups) {
  if (!(w_max > 0.0)) throw ContractViolation("group_weights: w_max must be positive");
  if (!groups.empty() && groups.size() != counts.size()) {
    throw ContractViolation("group_weights: names and counts differ in length");
  }
  std::size_t sum = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      throw ContractViolation("group_weights: group " + (groups.empty() ? std::to_string(i) : "'" + groups[i] + "'") +
                              " has no samples");
    }
    sum += counts[i];
  }
  if (sum != total) throw ContractViolation("group_weights: counts sum to " + std::to_string(sum) + ", not N");
  GroupWeights w;
  w.groups = std::move(groups);
  for (std::size_t c : counts) {
    w.values.push_back(std::min(static_cast<double>(total) / static_cast<double>(c), w_max));
  }
  return w;
}

SoftGroupAccuracy soft_group_accuracy(std::span<const Var> probs, std::span<const std::size_t> groups) {
  if (probs.size() != groups.size()) throw ContractViolation("soft_group_accuracy: length mismatch");
  SoftGroupAccuracy out;
  if (probs.empty()) return out;
  std::vector<std::size_t> present(groups.begin(), groups.end());
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  for (std::size_t g : present) {
    std::vector<Var> members;
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (groups[i] == g) members.push_back(probs[i]);
    out.groups.push_back(g);
    out.counts.push_back(members.size());
    out.accuracy.push_back(mean(members));
  }
  return out;
}

SoftGap soft_maxaccgap(const SoftGroupAccuracy& acc) {
  if (acc.empty()) throw ContractViolation("soft_maxaccgap: no groups present");
  Var values = stack(acc.accuracy);
  Extremum hi = max_with_subgradient(values);
  Extremum lo = min_with_subgradient(values);
  return {sub(hi.value, lo.value), acc.groups[hi.index], acc.groups[lo.index]};
}

namespace {

struct LogProbs {
  std::vector<Var> log_prob;  // log p(y | x)
  std::vector<Var> nll;
};

LogProbs log_probs(std::span<const Var> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) throw ContractViolation("loss: logits and labels differ in length");
  if (logits.empty()) throw ContractViolation("loss: empty batch");
  LogProbs out;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].rows() != 1 || logits[i].cols() != 2) throw ContractViolation("loss: logits must be 1x2");
    if (labels[i] != 0 && labels[i] != 1) throw ContractViolation("loss: labels must be binary");
    Var lp = pick(log_softmax(logits[i]), 0, static_cast<std::size_t>(labels[i]));
    out.log_prob.push_back(lp);
    out.nll.push_back(scale(lp, -1.0));
  }
  return out;
}

Var group_reweighted(const LogProbs& lp, std::span<const std::size_t> groups, const GroupWeights& weights) {
  if (groups.size() != lp.nll.size()) throw ContractViolation("loss: groups and logits differ in length");
  std::vector<std::size_t> present(groups.begin(), groups.end());
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  Var total;
  for (std::size_t g : present) {
    const double w = weights.at(g);
    std::vector<Var> members;
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == g) members.push_back(lp.nll[i]);
    Var term = scale(mean(members), w);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

SoftGap batch_gap(const LogProbs& lp, std::span<const std::size_t> groups) {
  if (groups.size() != lp.log_prob.size()) throw ContractViolation("loss: groups and logits differ in length");
  std::vector<Var> probs;
  probs.reserve(lp.log_prob.size());
  for (Var v : lp.log_prob) probs.push_back(exp(v));
  return soft_maxaccgap(soft_group_accuracy(probs, groups));
}

}  // namespace

std::vector<Var> true_class_probabilities(std::span<const Var> logits, std::span<const int> labels) {
  std::vector<Var> out;
  for (Var v : log_probs(logits, labels).log_prob) out.push_back(exp(v));
  return out;
}

Var loss_vanilla(std::span<const Var> logits, std::span<const int> labels) {
  return mean(log_probs(logits, labels).nll);
}

Var loss_fr(std::span<const Var> logits, std::span<const int> labels, std::span<const std::size_t> groups,
            double lambda) {
  if (!(lambda >= 0.0)) throw ContractViolation("loss_fr: lambda must be >= 0");
  LogProbs lp = log_probs(logits, labels);
  Var ce = mean(lp.nll);
  return add(ce, scale(batch_gap(lp, groups).gap, lambda));
}

Var loss_gr(std::span<const Var> logits, std::span<const int> labels, std::span<const std::size_t> groups,
            const GroupWeights& weights) {
  return group_reweighted(log_probs(logits, labels), groups, weights);
}

Var loss_hybrid(std::span<const Var> logits, std::span<const int> labels, std::span<const std::size_t> groups,
                const GroupWeights& weights, double lambda) {
  if (!(lambda >= 0.0)) throw ContractViolation("loss_hybrid: lambda must be >= 0");
  LogProbs lp = log_probs(logits, labels);
  Var gr = group_reweighted(lp, groups, weights);
  return add(gr, scale(batch_gap(lp, groups).gap, lambda));
}

LossTerms objective_loss(const LossConfig& cfg, const GroupWeights& weights, std::span<const Var> logits,
                         std::span<const int> labels, std::span<const std::size_t> groups) {
  LogProbs lp = log_probs(logits, labels);
  switch (cfg.mode) {
    case Objective::Vanilla:
      return {mean(lp.nll), std::nullopt};
    case Objective::GroupReweighted:
      return {group_reweighted(lp, groups, weights), std::nullopt};
    case Objective::FairnessRegularized: {
      Var gap = batch_gap(lp, groups).gap;
      return {add(mean(lp.nll), scale(gap, cfg.lambda)), gap.scalar()};
    }
    case Objective::Hybrid: {
      Var gr = group_reweighted(lp, groups, weights);
      Var gap = batch_gap(lp, groups).gap;
      return {add(gr, scale(gap, cfg.lambda)), gap.scalar()};
    }
  }
  throw ContractViolation("unknown objective");
}

}  // namespace fairlora
