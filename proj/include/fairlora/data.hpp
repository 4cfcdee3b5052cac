// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairlora/errors.hpp"

namespace fairlora {

/// One labelled example. `features` is a flattened token sequence
/// (seq_len × token_dim, token-major) standing in for a fused embedding.
struct Sample {
  std::vector<double> features;
  int label = 0;
  std::string group;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Immutable sample collection with per-group bookkeeping.
///
/// The group set keeps a fixed order (declared, or first appearance when not
/// given); every group index used elsewhere refers to this order.
class GroupedDataset {
 public:
  GroupedDataset() = default;
  /// Validates binary labels, a constant feature dimension and membership of
  /// every sample's group in `group_set`. An empty `group_set` is filled in
  /// first-appearance order.
  explicit GroupedDataset(std::vector<Sample> samples, std::vector<std::string> group_set = {});

  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }

  const std::vector<std::string>& group_set() const noexcept { return group_set_; }
  /// N_s aligned with group_set().
  const std::vector<std::size_t>& group_counts() const noexcept { return counts_; }
  std::size_t count(const std::string& group) const;
  /// Position of `group` in group_set(); throws ContractViolation if unknown.
  std::size_t group_position(const std::string& group) const;
  /// Group position of sample i.
  std::size_t group_of(std::size_t i) const { return group_ids_[i]; }
  const std::vector<std::size_t>& group_ids() const noexcept { return group_ids_; }
  std::vector<std::size_t> indices_of(std::size_t group) const;
  std::size_t feature_dim() const noexcept { return feature_dim_; }

  /// Subset in the given order, keeping this dataset's group set.
  GroupedDataset subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const GroupedDataset& a, const GroupedDataset& b) {
    return a.samples_ == b.samples_ && a.group_set_ == b.group_set_;
  }

 private:
  std::vector<Sample> samples_;
  std::vector<std::string> group_set_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> group_ids_;
  std::size_t feature_dim_ = 0;
};

struct GroupSpec {
  std::string name;
  double fraction = 1.0;
  /// Share of the label signal carried by the direction common to all groups,
  /// in [0, 1]. Lower values make the group harder for a shared classifier.
  double signal = 1.0;
  /// P(label = 1) within the group.
  double positive_rate = 0.5;
};

struct SynthConfig {
  std::vector<GroupSpec> groups;
  std::size_t token_dim = 16;
  std::size_t seq_len = 8;
  std::size_t num_samples = 2000;
  /// Magnitude of the label-dependent mean shift applied to every token.
  double signal_scale = 0.5;
  /// Weight in [0, 1] on the group-specific part of the signal,
  /// sqrt(1 - signal^2) · group_specific. Zero removes it, so low-signal groups
  /// simply carry less label information.
  double group_specific = 1.0;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Group fractions from the imbalanced demographic attributes used throughout
/// the experiments.
std::vector<GroupSpec> gender_groups();
std::vector<GroupSpec> race_groups();
std::vector<GroupSpec> ethnicity_groups();
/// Preset by attribute name ("gender", "race", "ethnicity").
std::vector<GroupSpec> attribute_groups(const std::string& attribute);

/// Largest-remainder apportionment of `total` over `fractions`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& fractions);

GroupedDataset generate_synthetic(const SynthConfig& cfg);

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

struct DatasetSplit {
  GroupedDataset train;
  GroupedDataset validation;
  GroupedDataset test;
  std::vector<std::string> warnings;
};

/// Per-group stratified split. Every cell of the group × split count table is
/// within one sample of its proportional target and split sizes match the
/// largest-remainder rounding of N × ratio. A group too small to reach every
/// partition keeps at least one sample in train and produces a warning.
DatasetSplit stratified_split(const GroupedDataset& ds, const SplitRatios& ratios, std::uint64_t seed);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed JSONL line. `line()` is 1-based.
class ParseError : public DatasetError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

/// Reads one `{"features":[...],"label":0|1,"group":"..."}` record per line.
/// Blank lines are skipped.
GroupedDataset load_jsonl(const std::filesystem::path& path);
GroupedDataset parse_jsonl(const std::string& text);
/// Canonical form: field order features, label, group; shortest round-trip
/// number formatting; one record per line.
void save_jsonl(const GroupedDataset& ds, const std::filesystem::path& path);
std::string to_jsonl(const GroupedDataset& ds);

}  // namespace fairlora
