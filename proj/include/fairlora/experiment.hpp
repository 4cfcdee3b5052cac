// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairlora/data.hpp"
#include "fairlora/losses.hpp"
#include "fairlora/metrics.hpp"
#include "fairlora/model.hpp"
#include "fairlora/trainer.hpp"

namespace fairlora {

struct MethodSpec {
  /// Row label, e.g. "Vanilla", "FR", "GR", "Hybrid".
  std::string name;
  LossConfig loss;
};

MethodSpec make_method(Objective objective, double lambda = 0.5, double w_max = 10.0);
std::string default_method_name(Objective objective);

struct DatasetSource {
  std::optional<SynthConfig> synthetic;
  std::optional<std::filesystem::path> jsonl;
};

struct ExperimentSpec {
  std::string attribute = "ethnicity";
  DatasetSource dataset;
  SplitRatios split;
  ToyModelConfig model;
  TrainConfig train;
  std::vector<MethodSpec> methods;
  std::vector<std::uint64_t> seeds{42};
  /// Grid for run_lambda_sweep.
  std::vector<double> lambdas{0.1, 0.5, 1.0};
  /// Attribute presets for run_attribute_sweep.
  std::vector<std::string> attributes{"gender", "race", "ethnicity"};
  /// Where per-run history CSVs go; empty disables them.
  std::filesystem::path output_dir;
  /// Independent runs executed concurrently.
  std::size_t jobs = 1;

  void validate() const;
};

/// Synthetic analog of an attribute: preset group fractions, the largest group
/// at full shared signal, every other group at 0.6 of it.
SynthConfig reference_synth_config(const std::string& attribute);
/// Toy benchmark: N = 2000, 16-dim tokens, d = 32, L = 8, 2 layers, rank 4 on
/// q/k/v/o, 3 epochs of micro-batch 2 × accumulation 4.
ExperimentSpec reference_spec(const std::string& attribute = "ethnicity");

/// Named sub-seeds of one root seed.
struct RunSeeds {
  std::uint64_t data = 0;
  std::uint64_t split = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;
};
RunSeeds expand_seed(std::uint64_t root);

struct PreparedData {
  GroupedDataset train;
  GroupedDataset validation;
  GroupedDataset test;
  std::vector<std::string> warnings;
};
PreparedData prepare_data(const ExperimentSpec& spec, std::uint64_t seed);

struct ResultRow {
  std::string method;
  Objective objective = Objective::Vanilla;
  std::optional<double> lambda;
  std::optional<double> w_max;
  std::uint64_t seed = 0;
  FairnessReport report;
  /// GR/Hybrid weights aligned with the table's groups; empty otherwise.
  std::vector<double> weights;
  std::optional<double> gap_reduction;
  double seconds = 0.0;
};

struct ResultTable {
  std::string attribute;
  std::vector<std::string> groups;
  std::vector<ResultRow> rows;
  bool has_gap_reduction = false;

  /// method, lambda, w_max, seed, overall_acc, acc_<group>..., max_acc_gap,
  /// tpr_gap, fpr_gap, dp_gap, seconds, w_<group>..., [gap_reduction].
  /// `timing = false` drops the seconds column.
  std::vector<std::string> columns(bool timing = true) const;
  std::string to_csv(bool timing = true) const;
  std::string to_markdown(bool timing = true) const;
};

enum class TableFormat { Csv, Markdown };
TableFormat parse_table_format(const std::string& s);

/// Writes a non-empty table. Throws ContractViolation for an empty table
/// (nothing is written) and IoError when the path cannot be written.
void emit_table(const ResultTable& table, TableFormat format, const std::filesystem::path& path, bool timing = true);

/// Minimal RFC 4180 reader: records of fields, quotes honoured.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

struct RunOutcome {
  ResultRow row;
  TrainHistory history;
};

/// Trains one method on the seed's data split and evaluates it on the test split.
RunOutcome run_single(const ExperimentSpec& spec, const MethodSpec& method, std::uint64_t seed);

/// Raised when a run fails; carries the rows that did complete.
class ExperimentAborted : public std::runtime_error {
 public:
  ExperimentAborted(const std::string& what, ResultTable partial);
  const ResultTable& partial() const noexcept { return partial_; }

 private:
  ResultTable partial_;
};

/// Every method × seed, identically initialised on identical splits.
ResultTable run_method_comparison(const ExperimentSpec& spec);
/// First FR/Hybrid method of the spec swept over λ, plus a Vanilla baseline per
/// seed; gap_reduction is relative to that seed's Vanilla row.
ResultTable run_lambda_sweep(const ExperimentSpec& spec, std::span<const double> lambdas);
/// Vanilla vs Hybrid on each attribute's synthetic analog; one table each.
std::vector<ResultTable> run_attribute_sweep(const ExperimentSpec& spec, std::span<const std::string> attributes);

/// JSON config file. Keys not present keep their reference_spec() values.
ExperimentSpec parse_spec(const std::string& json_text);
ExperimentSpec load_spec(const std::filesystem::path& path);
std::string spec_to_json(const ExperimentSpec& spec);

/// Resolved config, seeds with their sub-seeds, and the produced files.
void write_manifest(const ExperimentSpec& spec, const std::string& command, const std::vector<std::string>& outputs,
                    const std::filesystem::path& path);

}  // namespace fairlora
