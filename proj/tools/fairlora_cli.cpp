// SPDX-License-Identifier: Apache-2.0
// Command-line runner for the method comparison, lambda and attribute sweeps.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairlora/experiment.hpp"

namespace fs = std::filesystem;
using namespace fairlora;

namespace {

struct Overrides {
  std::string config;
  std::vector<std::string> methods;
  std::optional<double> lambda;
  std::optional<double> w_max;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> epochs;
  std::string out = "results";
  std::string format = "both";
  std::optional<std::size_t> jobs;
  bool no_timing = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--method", o.methods, "Methods to run: vanilla, fr, gr, hybrid (repeatable)");
  cmd->add_option("--lambda", o.lambda, "Fairness penalty weight for FR/Hybrid");
  cmd->add_option("--w-max", o.w_max, "Group weight clip for GR/Hybrid");
  cmd->add_option("--seed", o.seeds, "Root seed (repeatable)");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--format", o.format, "Table format")
      ->check(CLI::IsMember({"csv", "markdown", "both"}))
      ->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "Concurrent runs");
  cmd->add_flag("--no-timing", o.no_timing, "Omit the wall-clock column from tables");
}

ExperimentSpec resolve(const Overrides& o) {
  ExperimentSpec spec = o.config.empty() ? reference_spec() : load_spec(o.config);
  if (!o.methods.empty()) {
    spec.methods.clear();
    for (const std::string& m : o.methods) spec.methods.push_back(make_method(parse_objective(m)));
  }
  for (MethodSpec& m : spec.methods) {
    if (o.lambda) m.loss.lambda = *o.lambda;
    if (o.w_max) m.loss.w_max = *o.w_max;
  }
  if (!o.seeds.empty()) spec.seeds = o.seeds;
  if (o.epochs) spec.train.epochs = *o.epochs;
  if (o.jobs) spec.jobs = *o.jobs;
  spec.output_dir = o.out;
  return spec;
}

std::vector<std::string> write_tables(const std::vector<ResultTable>& tables, const Overrides& o) {
  std::vector<std::string> outputs;
  const bool timing = !o.no_timing;
  const bool many = tables.size() > 1;
  for (const ResultTable& t : tables) {
    const std::string stem = many ? "results_" + t.attribute : "results";
    if (o.format != "markdown") {
      emit_table(t, TableFormat::Csv, fs::path(o.out) / (stem + ".csv"), timing);
      outputs.push_back(stem + ".csv");
    }
    if (o.format != "csv") {
      emit_table(t, TableFormat::Markdown, fs::path(o.out) / (stem + ".md"), timing);
      outputs.push_back(stem + ".md");
    }
    if (many) std::cout << "## " << t.attribute << "\n";
    std::cout << t.to_markdown(timing) << '\n';
  }
  std::vector<std::string> histories;
  for (const auto& entry : fs::directory_iterator(o.out)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("history_", 0) == 0) histories.push_back(name);
  }
  std::sort(histories.begin(), histories.end());
  outputs.insert(outputs.end(), histories.begin(), histories.end());
  return outputs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware LoRA fine-tuning experiments on synthetic grouped data"};
  app.require_subcommand(1);

  Overrides o;
  auto* compare = app.add_subcommand("compare", "Train each method on identical data and initialization");
  auto* sweep = app.add_subcommand("lambda-sweep", "Sweep the fairness penalty weight against a Vanilla baseline");
  auto* attrs = app.add_subcommand("attribute-sweep", "Vanilla vs Hybrid for each attribute's group structure");
  std::vector<double> lambdas;
  std::vector<std::string> attributes;
  for (CLI::App* cmd : {compare, sweep, attrs}) add_common(cmd, o);
  sweep->add_option("--lambdas", lambdas, "Grid of lambda values (default from config)");
  attrs->add_option("--attributes", attributes, "Attribute presets (default from config)");

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset as JSONL");
  std::string gen_attribute = "ethnicity";
  std::string gen_out;
  std::uint64_t gen_seed = 42;
  std::size_t gen_samples = 2000;
  generate->add_option("--attribute", gen_attribute, "gender, race or ethnicity")->capture_default_str();
  generate->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  generate->add_option("--samples", gen_samples, "Number of samples")->capture_default_str();
  generate->add_option("--out", gen_out, "Output JSONL path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      SynthConfig cfg = reference_synth_config(gen_attribute);
      cfg.seed = gen_seed;
      cfg.num_samples = gen_samples;
      save_jsonl(generate_synthetic(cfg), gen_out);
      std::cout << "wrote " << gen_samples << " samples to " << gen_out << '\n';
      return EXIT_SUCCESS;
    }

    ExperimentSpec spec = resolve(o);
    fs::create_directories(spec.output_dir);
    std::vector<ResultTable> tables;
    std::string command;
    if (compare->parsed()) {
      command = "compare";
      tables.push_back(run_method_comparison(spec));
    } else if (sweep->parsed()) {
      command = "lambda-sweep";
      if (!lambdas.empty()) spec.lambdas = lambdas;
      if (o.methods.empty()) spec.methods = {make_method(Objective::FairnessRegularized, 0.5, o.w_max.value_or(10.0))};
      tables.push_back(run_lambda_sweep(spec, spec.lambdas));
    } else {
      command = "attribute-sweep";
      if (!attributes.empty()) spec.attributes = attributes;
      tables = run_attribute_sweep(spec, spec.attributes);
    }
    std::vector<std::string> outputs = write_tables(tables, o);
    outputs.push_back("manifest.json");
    write_manifest(spec, command, outputs, fs::path(spec.output_dir) / "manifest.json");
    return EXIT_SUCCESS;
  } catch (const ExperimentAborted& e) {
    std::cerr << "error: " << e.what() << " (" << e.partial().rows.size() << " completed rows saved)\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return EXIT_FAILURE;
}
