// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairlora/autodiff.hpp"

namespace fairlora {

enum class Objective { Vanilla, FairnessRegularized, GroupReweighted, Hybrid };

std::string to_string(Objective o);
/// Accepts "vanilla", "fr", "gr", "hybrid" (case-insensitive).
Objective parse_objective(const std::string& s);

struct LossConfig {
  Objective mode = Objective::Vanilla;
  /// Weight of the soft accuracy-gap penalty. Used by FR and Hybrid only.
  double lambda = 0.5;
  /// Upper clip on inverse-frequency group weights. Used by GR and Hybrid only.
  double w_max = 10.0;
  std::vector<std::string> group_set;

  void validate() const;
  bool uses_lambda() const { return mode == Objective::FairnessRegularized || mode == Objective::Hybrid; }
  bool uses_weights() const { return mode == Objective::GroupReweighted || mode == Objective::Hybrid; }
};

/// Per-group weights aligned with a group set.
struct GroupWeights {
  std::vector<std::string> groups;
  std::vector<double> values;

  double at(std::size_t group) const;
  double at(const std::string& group) const;
};

/// w_s = min(N / N_s, w_max). Every count must be positive and sum to `total`.
GroupWeights group_weights(std::span<const std::size_t> counts, std::size_t total, double w_max,
                           std::vector<std::string> groups = {});

/// Differentiable per-group mean of true-class probabilities, ordered by group
/// index. Groups without samples are absent.
struct SoftGroupAccuracy {
  std::vector<std::size_t> groups;
  std::vector<Var> accuracy;
  std::vector<std::size_t> counts;

  bool empty() const { return groups.empty(); }
};

SoftGroupAccuracy soft_group_accuracy(std::span<const Var> true_class_probs, std::span<const std::size_t> groups);

struct SoftGap {
  Var gap;
  std::size_t argmax_group = 0;
  std::size_t argmin_group = 0;
};

/// max_s acc_s − min_s acc_s over the present groups. The adjoint reaches
/// exactly the argmax (+1) and argmin (−1) groups; ties pick the lowest index.
SoftGap soft_maxaccgap(const SoftGroupAccuracy& acc);

/// p(y | x) for each 1×2 logit row.
std::vector<Var> true_class_probabilities(std::span<const Var> logits, std::span<const int> labels);

/// Mean negative log-likelihood of the true class.
Var loss_vanilla(std::span<const Var> logits, std::span<const int> labels);
/// Vanilla CE + λ · soft MaxAccGap over the batch's present groups.
Var loss_fr(std::span<const Var> logits, std::span<const int> labels, std::span<const std::size_t> groups,
            double lambda);
/// Σ_s w_s · (mean CE over the batch's group-s samples).
Var loss_gr(std::span<const Var> logits, std::span<const int> labels, std::span<const std::size_t> groups,
            const GroupWeights& weights);
/// GR + λ · soft MaxAccGap.
Var loss_hybrid(std::span<const Var> logits, std::span<const int> labels, std::span<const std::size_t> groups,
                const GroupWeights& weights, double lambda);

struct LossTerms {
  Var total;
  /// Soft MaxAccGap of the batch, when the objective includes it.
  std::optional<double> soft_gap;
};

/// Dispatches on cfg.mode. `weights` is ignored for Vanilla and FR.
LossTerms objective_loss(const LossConfig& cfg, const GroupWeights& weights, std::span<const Var> logits,
                         std::span<const int> labels, std::span<const std::size_t> groups);

}  // namespace fairlora
