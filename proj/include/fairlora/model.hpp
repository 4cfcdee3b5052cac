// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fairlora/autodiff.hpp"

namespace fairlora {

enum class Projection { Query = 0, Key = 1, Value = 2, Output = 3 };
enum class Pooling { LastToken, FirstToken, Mean };

std::string to_string(Projection p);
std::string to_string(Pooling p);
Pooling parse_pooling(const std::string& s);

/// Frozen base weight plus a trainable low-rank update (alpha / rank) · B · A.
///
/// `base` is d × k, `down` (A) is r × k and `up` (B) is d × r. Rank 0 means
/// the adapter is absent and only the base weight is applied.
struct LoraAdapter {
  Parameter base;
  Parameter down;
  Parameter up;
  std::size_t rank = 0;
  double alpha = 1.0;

  LoraAdapter() = default;
  /// Base ~ N(0, 1/k), A ~ N(0, 0.02²), B = 0.
  LoraAdapter(std::string name, std::size_t out_dim, std::size_t in_dim, std::size_t rank, double alpha,
              std::mt19937_64& rng);

  std::size_t out_dim() const noexcept { return base.value.rows(); }
  std::size_t in_dim() const noexcept { return base.value.cols(); }
  double scaling() const noexcept { return rank == 0 ? 0.0 : alpha / static_cast<double>(rank); }
  std::size_t trainable_count() const noexcept { return rank * (out_dim() + in_dim()); }

  /// W0·x + (alpha/r)·B·(A·x) for a single column vector.
  std::vector<double> apply(std::span<const double> x) const;
  /// Row-batched version on a tape: X·W0ᵀ + (alpha/r)·(drop(X)·Aᵀ)·Bᵀ.
  /// `dropout_mask`, when given, multiplies the adapter input element-wise.
  Var forward(Tape& tape, Var x, const Matrix* dropout_mask = nullptr, bool use_adapter = true);
};

struct ToyModelConfig {
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t seq_len = 8;
  std::size_t num_layers = 2;
  std::size_t lora_rank = 4;
  double lora_alpha = 8.0;
  std::array<bool, 4> adapted{true, true, true, true};
  double dropout = 0.05;
  Pooling pooling = Pooling::LastToken;
  /// Standard deviation of the randomly initialised classification head.
  double head_init_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
  bool adapts(Projection p) const { return adapted[static_cast<std::size_t>(p)]; }
};

/// Options for a single forward pass.
struct ForwardOptions {
  /// Non-null enables LoRA-branch dropout drawn from this generator.
  std::mt19937_64* dropout_rng = nullptr;
  /// false evaluates the frozen base model (adapters bypassed).
  bool use_adapters = true;
};

struct AttentionLayer {
  std::array<LoraAdapter, 4> proj;

  LoraAdapter& operator[](Projection p) { return proj[static_cast<std::size_t>(p)]; }
  const LoraAdapter& operator[](Projection p) const { return proj[static_cast<std::size_t>(p)]; }
};

/// Single-head causal attention classifier.
///
/// Tokens are embedded by a frozen linear map, then pass through residual
/// attention blocks h ← h + O(softmax_causal(Q Kᵀ / √d) V). Q, K, V and O are
/// LoRA-adapted frozen projections. A trainable 2-way head reads the pooled
/// hidden state. There are no positional encodings: position information
/// only enters through the causal mask.
class ToyModel {
 public:
  explicit ToyModel(const ToyModelConfig& cfg);

  const ToyModelConfig& config() const noexcept { return cfg_; }

  /// `seq` is seq_len × input_dim. Returns seq_len × hidden_dim.
  Var hidden_states(Tape& tape, const Matrix& seq, const ForwardOptions& opts = {});
  /// 1 × 2 logits from the pooled hidden state.
  Var logits(Tape& tape, const Matrix& seq, const ForwardOptions& opts = {});

  // Evaluation-mode conveniences (no dropout, no gradient tracking).
  Matrix hidden_states(const Matrix& seq) const;
  std::array<double, 2> classify(const Matrix& seq) const;
  std::array<double, 2> classify_base(const Matrix& seq) const;
  int predict(const Matrix& seq) const;

  /// Reshapes a flattened sample into the seq_len × input_dim matrix.
  Matrix sequence(std::span<const double> features) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> trainable_parameters();

  std::size_t total_parameter_count() const;
  std::size_t trainable_parameter_count() const;
  double trainable_fraction() const;

  std::vector<AttentionLayer>& layers() noexcept { return layers_; }
  const std::vector<AttentionLayer>& layers() const noexcept { return layers_; }
  Parameter& head_weight() noexcept { return head_w_; }
  Parameter& head_bias() noexcept { return head_b_; }
  Parameter& embedding() noexcept { return embed_; }

  void zero_grad();

 private:
  Var pool(Var hidden);

  ToyModelConfig cfg_;
  Parameter embed_;
  std::vector<AttentionLayer> layers_;
  Parameter head_w_;
  Parameter head_b_;
};

/// Argmax over two logits; ties go to class 0.
int argmax_class(const std::array<double, 2>& logits);

struct ParameterBudget {
  double trainable = 0.0;
  double total = 0.0;
  double fraction() const { return total > 0.0 ? trainable / total : 0.0; }
};

/// LoRA trainable count summed over adapted (out_dim, in_dim) projections.
std::size_t lora_parameter_count(std::size_t rank, std::span<const std::array<std::size_t, 2>> shapes);

/// Text checkpoint: header line, then per parameter "name rows cols" followed
/// by one line of hexadecimal floats. Loading requires matching names and shapes.
void save_checkpoint(const ToyModel& model, const std::filesystem::path& path);
void load_checkpoint(ToyModel& model, const std::filesystem::path& path);

}  // namespace fairlora
