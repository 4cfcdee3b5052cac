// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairlora/data.hpp"
#include "fairlora/losses.hpp"
#include "fairlora/metrics.hpp"
#include "fairlora/model.hpp"

namespace fairlora {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t micro_batch = 2;
  std::size_t accumulation_steps = 4;
  std::size_t epochs = 3;
  std::size_t warmup_steps = 100;
  std::uint64_t seed = 42;
  AdamWConfig adamw;

  void validate() const;
  std::size_t effective_batch() const { return micro_batch * accumulation_steps; }
};

/// Linear warmup to the base rate, constant afterwards.
double lr_at(std::size_t step, const TrainConfig& cfg);

/// Decoupled-weight-decay Adam over a fixed parameter list.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update from each parameter's `grad`. The parameter list must
  /// be the same (and in the same order) on every call.
  void step(std::span<Parameter* const> params, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  std::vector<std::size_t> group_counts;
  std::optional<double> soft_gap;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrainHistory {
  std::vector<std::string> groups;
  std::vector<StepRecord> steps;

  /// Columns: step, loss, lr, soft_gap, then one count column per group.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, double last_loss);
  std::size_t step() const noexcept { return step_; }
  double last_loss() const noexcept { return last_loss_; }

 private:
  std::size_t step_;
  double last_loss_;
};

struct BatchResult {
  double loss = 0.0;
  std::optional<double> soft_gap;
};

/// Forward + backward over one micro-batch; adds `grad_scale` × the batch
/// gradient into every trainable parameter's `grad`.
BatchResult accumulate_batch_gradient(ToyModel& model, const GroupedDataset& data,
                                      std::span<const std::size_t> indices, const LossConfig& loss,
                                      const GroupWeights& weights, std::mt19937_64* dropout_rng,
                                      double grad_scale = 1.0);

/// Weights used by GR/Hybrid, frozen from the training-set counts.
GroupWeights training_weights(const GroupedDataset& train_set, const LossConfig& loss);

/// Trains the model's adapters and head in place. Deterministic for a given
/// (model, data, configs) triple; frozen weights are never written.
TrainHistory train(ToyModel& model, const GroupedDataset& train_set, const LossConfig& loss, const TrainConfig& cfg);

/// Hard argmax predictions (ties to class 0) with dropout disabled.
std::vector<int> predict_all(const ToyModel& model, const GroupedDataset& ds);
FairnessReport evaluate_model(const ToyModel& model, const GroupedDataset& ds);

}  // namespace fairlora
