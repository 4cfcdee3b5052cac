// SPDX-License-Identifier: Apache-2.0
#include "fairlora/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fairlora/seeds.hpp"

namespace fairlora {

using nlohmann::json;

// ---------------------------------------------------------------- methods and presets

std::string default_method_name(Objective objective) {
  switch (objective) {
    case Objective::Vanilla: return "Vanilla";
    case Objective::FairnessRegularized: return "FR";
    case Objective::GroupReweighted: return "GR";
    case Objective::Hybrid: return "Hybrid";
  }
  return "?";
}

MethodSpec make_method(Objective objective, double lambda, double w_max) {
  MethodSpec m;
  m.name = default_method_name(objective);
  m.loss.mode = objective;
  m.loss.lambda = lambda;
  m.loss.w_max = w_max;
  return m;
}

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ConfigError("experiment: at least one method is required");
  if (seeds.empty()) throw ConfigError("experiment: at least one seed is required");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("experiment: seeds must be distinct");
  if (dataset.synthetic.has_value() == dataset.jsonl.has_value()) {
    throw ConfigError("experiment: exactly one dataset source (synthetic or jsonl) is required");
  }
  if (dataset.synthetic) {
    dataset.synthetic->validate();
    if (dataset.synthetic->token_dim != model.input_dim || dataset.synthetic->seq_len != model.seq_len) {
      throw ConfigError("experiment: synthetic token_dim/seq_len must match the model's input_dim/seq_len");
    }
  }
  for (const MethodSpec& m : methods) m.loss.validate();
  model.validate();
  train.validate();
  if (jobs == 0) throw ConfigError("experiment: jobs must be positive");
}

SynthConfig reference_synth_config(const std::string& attribute) {
  SynthConfig cfg;
  cfg.groups = attribute_groups(attribute);
  auto majority = std::max_element(cfg.groups.begin(), cfg.groups.end(),
                                   [](const GroupSpec& a, const GroupSpec& b) { return a.fraction < b.fraction; });
  for (GroupSpec& g : cfg.groups) g.signal = &g == &*majority ? 1.0 : 0.6;
  cfg.token_dim = 16;
  cfg.seq_len = 8;
  cfg.num_samples = 2000;
  cfg.signal_scale = 1.0;
  cfg.group_specific = 1.0;
  return cfg;
}

ExperimentSpec reference_spec(const std::string& attribute) {
  ExperimentSpec spec;
  spec.attribute = attribute;
  spec.dataset.synthetic = reference_synth_config(attribute);
  spec.model.input_dim = 16;
  spec.model.hidden_dim = 32;
  spec.model.seq_len = 8;
  spec.model.num_layers = 2;
  spec.model.lora_rank = 4;
  spec.model.lora_alpha = 8.0;
  spec.model.dropout = 0.05;
  spec.train.learning_rate = 1e-3;
  spec.train.micro_batch = 2;
  spec.train.accumulation_steps = 4;
  spec.train.epochs = 3;
  spec.train.warmup_steps = 100;
  spec.methods = {make_method(Objective::Vanilla), make_method(Objective::FairnessRegularized, 0.5),
                  make_method(Objective::GroupReweighted, 0.5, 10.0), make_method(Objective::Hybrid, 0.5, 10.0)};
  spec.seeds = {42};
  return spec;
}

RunSeeds expand_seed(std::uint64_t root) {
  return {derive_seed(root, "data"), derive_seed(root, "split"), derive_seed(root, "init"), derive_seed(root, "train")};
}

PreparedData prepare_data(const ExperimentSpec& spec, std::uint64_t seed) {
  const RunSeeds seeds = expand_seed(seed);
  GroupedDataset full;
  if (spec.dataset.synthetic) {
    SynthConfig cfg = *spec.dataset.synthetic;
    cfg.seed = seeds.data;
    full = generate_synthetic(cfg);
  } else {
    full = load_jsonl(*spec.dataset.jsonl);
    if (full.feature_dim() != spec.model.seq_len * spec.model.input_dim) {
      throw ConfigError("dataset feature dimension " + std::to_string(full.feature_dim()) +
                        " does not equal model seq_len × input_dim");
    }
  }
  DatasetSplit split = stratified_split(full, spec.split, seeds.split);
  return {std::move(split.train), std::move(split.validation), std::move(split.test), std::move(split.warnings)};
}

// ---------------------------------------------------------------- result tables

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

double group_accuracy(const ResultRow& row, const std::string& group, bool& present) {
  const GroupMetrics* g = row.report.find(group);
  present = g != nullptr;
  return g ? g->accuracy : 0.0;
}

// Cells of one row in column order; `pct` switches to the percentage layout.
std::vector<std::string> row_cells(const ResultTable& t, const ResultRow& row, bool timing, bool pct) {
  auto rate = [&](double v) { return pct ? fixed(100.0 * v, 2) : num(v); };
  const std::string none = pct ? "-" : "";
  std::vector<std::string> cells;
  cells.push_back(row.method);
  cells.push_back(row.lambda ? num(*row.lambda) : none);
  cells.push_back(row.w_max ? num(*row.w_max) : none);
  cells.push_back(std::to_string(row.seed));
  cells.push_back(rate(row.report.overall_accuracy));
  for (const std::string& g : t.groups) {
    bool present = false;
    const double acc = group_accuracy(row, g, present);
    cells.push_back(present ? rate(acc) : none);
  }
  cells.push_back(rate(row.report.max_acc_gap));
  cells.push_back(rate(row.report.tpr_gap));
  cells.push_back(rate(row.report.fpr_gap));
  cells.push_back(rate(row.report.demographic_parity_gap));
  if (timing) cells.push_back(pct ? fixed(row.seconds, 2) : num(row.seconds));
  for (std::size_t i = 0; i < t.groups.size(); ++i) {
    if (i < row.weights.size()) {
      cells.push_back(pct ? fixed(row.weights[i], 3) : num(row.weights[i]));
    } else {
      cells.push_back(none);
    }
  }
  if (t.has_gap_reduction) {
    if (row.gap_reduction) {
      const double v = *row.gap_reduction;
      cells.push_back(pct ? (v >= 0 ? "+" : "") + fixed(100.0 * v, 2) + "%" : num(v));
    } else {
      cells.push_back(none);
    }
  }
  return cells;
}

}  // namespace

std::vector<std::string> ResultTable::columns(bool timing) const {
  std::vector<std::string> cols{"method", "lambda", "w_max", "seed", "overall_acc"};
  for (const std::string& g : groups) cols.push_back("acc_" + g);
  for (const char* c : {"max_acc_gap", "tpr_gap", "fpr_gap", "dp_gap"}) cols.emplace_back(c);
  if (timing) cols.emplace_back("seconds");
  for (const std::string& g : groups) cols.push_back("w_" + g);
  if (has_gap_reduction) cols.emplace_back("gap_reduction");
  return cols;
}

std::string ResultTable::to_csv(bool timing) const {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_field(cells[i]);
    os << '\n';
  };
  line(columns(timing));
  for (const ResultRow& r : rows) line(row_cells(*this, r, timing, false));
  return os.str();
}

std::string ResultTable::to_markdown(bool timing) const {
  std::ostringstream os;
  const auto cols = columns(timing);
  os << '|';
  for (const std::string& c : cols) os << ' ' << c << " |";
  os << "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i == 0 ? ":---|" : "---:|");
  os << '\n';
  for (const ResultRow& r : rows) {
    os << '|';
    for (const std::string& c : row_cells(*this, r, timing, true)) os << ' ' << c << " |";
    os << '\n';
  }
  return os.str();
}

TableFormat parse_table_format(const std::string& s) {
  if (s == "csv") return TableFormat::Csv;
  if (s == "markdown" || s == "md") return TableFormat::Markdown;
  throw ConfigError("unknown table format '" + s + "'");
}

void emit_table(const ResultTable& table, TableFormat format, const std::filesystem::path& path, bool timing) {
  if (table.rows.empty()) throw ContractViolation("emit_table: table has no rows");
  const std::string text = format == TableFormat::Csv ? table.to_csv(timing) : table.to_markdown(timing);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (any || !field.empty() || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

// ---------------------------------------------------------------- runs

namespace {

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.')) c = '_';
  return s;
}

}  // namespace

RunOutcome run_single(const ExperimentSpec& spec, const MethodSpec& method, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const RunSeeds seeds = expand_seed(seed);
  const PreparedData data = prepare_data(spec, seed);

  ToyModelConfig mcfg = spec.model;
  mcfg.seed = seeds.init;
  ToyModel model(mcfg);

  LossConfig loss = method.loss;
  loss.group_set = data.train.group_set();
  TrainConfig tcfg = spec.train;
  tcfg.seed = seeds.train;

  RunOutcome out;
  if (!data.train.empty()) out.history = train(model, data.train, loss, tcfg);
  out.row.method = method.name;
  out.row.objective = loss.mode;
  if (loss.uses_lambda()) out.row.lambda = loss.lambda;
  if (loss.uses_weights()) {
    out.row.w_max = loss.w_max;
    out.row.weights = training_weights(data.train, loss).values;
  }
  out.row.seed = seed;
  out.row.report = evaluate_model(model, data.test);
  for (const std::string& w : data.warnings) out.row.report.warnings.push_back(w);
  out.row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!spec.output_dir.empty()) {
    std::filesystem::create_directories(spec.output_dir);
    std::string name = "history_" + sanitize(spec.attribute) + "_" + sanitize(method.name);
    if (out.row.lambda) name += "_lambda" + sanitize(num(*out.row.lambda));
    name += "_seed" + std::to_string(seed) + ".csv";
    out.history.write_csv(spec.output_dir / name);
  }
  return out;
}

ExperimentAborted::ExperimentAborted(const std::string& what, ResultTable partial)
    : std::runtime_error(what), partial_(std::move(partial)) {}

namespace {

struct Job {
  MethodSpec method;
  std::uint64_t seed;
};

ResultTable empty_table(const ExperimentSpec& spec) {
  ResultTable t;
  t.attribute = spec.attribute;
  if (spec.dataset.synthetic) {
    for (const GroupSpec& g : spec.dataset.synthetic->groups) t.groups.push_back(g.name);
  } else {
    t.groups = load_jsonl(*spec.dataset.jsonl).group_set();
  }
  return t;
}

// Runs jobs (possibly concurrently) and returns rows in job order.
ResultTable run_jobs(const ExperimentSpec& spec, const std::vector<Job>& jobs) {
  spec.validate();
  ResultTable table = empty_table(spec);
  std::vector<std::optional<ResultRow>> rows(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        rows[i] = run_single(spec, jobs[i].method, jobs[i].seed).row;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(spec.jobs, jobs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::optional<std::string> failure;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (rows[i]) {
      table.rows.push_back(std::move(*rows[i]));
    } else if (errors[i] && !failure) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        failure = "run " + jobs[i].method.name + " seed " + std::to_string(jobs[i].seed) + " failed: " + e.what();
      }
    }
  }
  if (failure) {
    if (!spec.output_dir.empty() && !table.rows.empty()) {
      std::filesystem::create_directories(spec.output_dir);
      emit_table(table, TableFormat::Csv, spec.output_dir / "results.partial.csv");
    }
    throw ExperimentAborted(*failure, std::move(table));
  }
  return table;
}

}  // namespace

ResultTable run_method_comparison(const ExperimentSpec& spec) {
  std::vector<Job> jobs;
  for (const MethodSpec& m : spec.methods)
    for (std::uint64_t seed : spec.seeds) jobs.push_back({m, seed});
  return run_jobs(spec, jobs);
}

ResultTable run_lambda_sweep(const ExperimentSpec& spec, std::span<const double> lambdas) {
  auto base = std::find_if(spec.methods.begin(), spec.methods.end(),
                           [](const MethodSpec& m) { return m.loss.uses_lambda(); });
  if (base == spec.methods.end()) throw ConfigError("lambda sweep needs an FR or Hybrid method");
  if (lambdas.empty()) throw ConfigError("lambda sweep needs at least one lambda");

  std::vector<Job> jobs;
  const MethodSpec vanilla = make_method(Objective::Vanilla);
  for (std::uint64_t seed : spec.seeds) jobs.push_back({vanilla, seed});
  for (double lambda : lambdas) {
    MethodSpec m = *base;
    m.loss.lambda = lambda;
    for (std::uint64_t seed : spec.seeds) jobs.push_back({m, seed});
  }
  ResultTable table = run_jobs(spec, jobs);
  table.has_gap_reduction = true;
  for (ResultRow& row : table.rows) {
    if (row.objective == Objective::Vanilla) continue;
    auto ref = std::find_if(table.rows.begin(), table.rows.end(), [&](const ResultRow& r) {
      return r.objective == Objective::Vanilla && r.seed == row.seed;
    });
    if (ref != table.rows.end() && ref->report.max_acc_gap > 0.0) {
      row.gap_reduction = gap_reduction(ref->report.max_acc_gap, row.report.max_acc_gap);
    }
  }
  return table;
}

std::vector<ResultTable> run_attribute_sweep(const ExperimentSpec& spec, std::span<const std::string> attributes) {
  if (!spec.dataset.synthetic) throw ConfigError("attribute sweep needs a synthetic dataset source");
  auto hybrid = std::find_if(spec.methods.begin(), spec.methods.end(),
                             [](const MethodSpec& m) { return m.loss.mode == Objective::Hybrid; });
  const MethodSpec hybrid_method = hybrid != spec.methods.end() ? *hybrid : make_method(Objective::Hybrid);

  std::vector<ResultTable> tables;
  for (const std::string& attribute : attributes) {
    ExperimentSpec s = spec;
    s.attribute = attribute;
    SynthConfig synth = reference_synth_config(attribute);
    // Keep the caller's generator settings; only the group structure changes.
    const SynthConfig& base = *spec.dataset.synthetic;
    synth.token_dim = base.token_dim;
    synth.seq_len = base.seq_len;
    synth.num_samples = base.num_samples;
    synth.signal_scale = base.signal_scale;
    synth.group_specific = base.group_specific;
    s.dataset.synthetic = synth;
    s.methods = {make_method(Objective::Vanilla), hybrid_method};
    tables.push_back(run_method_comparison(s));
  }
  return tables;
}

// ---------------------------------------------------------------- config file

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const char* projection_keys[4] = {"q", "k", "v", "o"};

SynthConfig synth_from_json(const json& j, SynthConfig cfg) {
  if (j.contains("attribute")) cfg = reference_synth_config(j.at("attribute").get<std::string>());
  if (j.contains("groups")) {
    cfg.groups.clear();
    for (const json& g : j.at("groups")) {
      GroupSpec spec;
      spec.name = g.at("name").get<std::string>();
      read(g, "fraction", spec.fraction);
      read(g, "signal", spec.signal);
      read(g, "positive_rate", spec.positive_rate);
      cfg.groups.push_back(spec);
    }
  }
  read(j, "token_dim", cfg.token_dim);
  read(j, "seq_len", cfg.seq_len);
  read(j, "num_samples", cfg.num_samples);
  read(j, "signal_scale", cfg.signal_scale);
  read(j, "group_specific", cfg.group_specific);
  return cfg;
}

json synth_to_json(const SynthConfig& cfg) {
  json groups = json::array();
  for (const GroupSpec& g : cfg.groups) {
    groups.push_back({{"name", g.name}, {"fraction", g.fraction}, {"signal", g.signal}, {"positive_rate", g.positive_rate}});
  }
  return {{"groups", groups},
          {"token_dim", cfg.token_dim},
          {"seq_len", cfg.seq_len},
          {"num_samples", cfg.num_samples},
          {"signal_scale", cfg.signal_scale},
          {"group_specific", cfg.group_specific}};
}

}  // namespace

ExperimentSpec parse_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    std::string attribute = j.value("attribute", std::string("ethnicity"));
    ExperimentSpec spec = reference_spec(attribute);
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("jsonl")) {
        spec.dataset.synthetic.reset();
        spec.dataset.jsonl = d.at("jsonl").get<std::string>();
      }
      if (d.contains("synthetic")) {
        spec.dataset.jsonl.reset();
        spec.dataset.synthetic = synth_from_json(d.at("synthetic"), reference_synth_config(attribute));
      }
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      read(s, "train", spec.split.train);
      read(s, "validation", spec.split.validation);
      read(s, "test", spec.split.test);
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      read(m, "input_dim", spec.model.input_dim);
      read(m, "hidden_dim", spec.model.hidden_dim);
      read(m, "seq_len", spec.model.seq_len);
      read(m, "num_layers", spec.model.num_layers);
      read(m, "lora_rank", spec.model.lora_rank);
      read(m, "lora_alpha", spec.model.lora_alpha);
      read(m, "dropout", spec.model.dropout);
      read(m, "head_init_std", spec.model.head_init_std);
      if (m.contains("pooling")) spec.model.pooling = parse_pooling(m.at("pooling").get<std::string>());
      if (m.contains("adapted")) {
        spec.model.adapted = {false, false, false, false};
        for (const json& p : m.at("adapted")) {
          const std::string key = p.get<std::string>();
          bool found = false;
          for (std::size_t i = 0; i < 4; ++i) {
            if (key == projection_keys[i]) {
              spec.model.adapted[i] = true;
              found = true;
            }
          }
          if (!found) throw ConfigError("unknown projection '" + key + "' (expected q, k, v or o)");
        }
      }
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      read(t, "learning_rate", spec.train.learning_rate);
      read(t, "micro_batch", spec.train.micro_batch);
      read(t, "accumulation_steps", spec.train.accumulation_steps);
      read(t, "epochs", spec.train.epochs);
      read(t, "warmup_steps", spec.train.warmup_steps);
      if (t.contains("adamw")) {
        const json& a = t.at("adamw");
        read(a, "beta1", spec.train.adamw.beta1);
        read(a, "beta2", spec.train.adamw.beta2);
        read(a, "epsilon", spec.train.adamw.epsilon);
        read(a, "weight_decay", spec.train.adamw.weight_decay);
      }
    }
    if (j.contains("methods")) {
      spec.methods.clear();
      for (const json& m : j.at("methods")) {
        const Objective obj = parse_objective(m.at("objective").get<std::string>());
        MethodSpec method = make_method(obj, m.value("lambda", 0.5), m.value("w_max", 10.0));
        method.name = m.value("name", default_method_name(obj));
        spec.methods.push_back(method);
      }
    }
    read(j, "seeds", spec.seeds);
    read(j, "lambdas", spec.lambdas);
    read(j, "attributes", spec.attributes);
    read(j, "jobs", spec.jobs);
    if (j.contains("output_dir")) spec.output_dir = j.at("output_dir").get<std::string>();
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config schema error: ") + e.what());
  }
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str());
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["attribute"] = spec.attribute;
  if (spec.dataset.synthetic) j["dataset"]["synthetic"] = synth_to_json(*spec.dataset.synthetic);
  if (spec.dataset.jsonl) j["dataset"]["jsonl"] = spec.dataset.jsonl->string();
  j["split"] = {{"train", spec.split.train}, {"validation", spec.split.validation}, {"test", spec.split.test}};
  json adapted = json::array();
  for (std::size_t i = 0; i < 4; ++i)
    if (spec.model.adapted[i]) adapted.push_back(projection_keys[i]);
  j["model"] = {{"input_dim", spec.model.input_dim},   {"hidden_dim", spec.model.hidden_dim},
                {"seq_len", spec.model.seq_len},       {"num_layers", spec.model.num_layers},
                {"lora_rank", spec.model.lora_rank},   {"lora_alpha", spec.model.lora_alpha},
                {"dropout", spec.model.dropout},       {"head_init_std", spec.model.head_init_std},
                {"pooling", to_string(spec.model.pooling)}, {"adapted", adapted}};
  j["train"] = {{"learning_rate", spec.train.learning_rate},
                {"micro_batch", spec.train.micro_batch},
                {"accumulation_steps", spec.train.accumulation_steps},
                {"epochs", spec.train.epochs},
                {"warmup_steps", spec.train.warmup_steps},
                {"adamw",
                 {{"beta1", spec.train.adamw.beta1},
                  {"beta2", spec.train.adamw.beta2},
                  {"epsilon", spec.train.adamw.epsilon},
                  {"weight_decay", spec.train.adamw.weight_decay}}}};
  json methods = json::array();
  for (const MethodSpec& m : spec.methods) {
    methods.push_back(
        {{"name", m.name}, {"objective", to_string(m.loss.mode)}, {"lambda", m.loss.lambda}, {"w_max", m.loss.w_max}});
  }
  j["methods"] = methods;
  j["seeds"] = spec.seeds;
  j["lambdas"] = spec.lambdas;
  j["attributes"] = spec.attributes;
  j["jobs"] = spec.jobs;
  if (!spec.output_dir.empty()) j["output_dir"] = spec.output_dir.string();
  return j.dump(2);
}

void write_manifest(const ExperimentSpec& spec, const std::string& command, const std::vector<std::string>& outputs,
                    const std::filesystem::path& path) {
  json j;
  j["command"] = command;
  j["config"] = json::parse(spec_to_json(spec));
  json seeds = json::array();
  for (std::uint64_t s : spec.seeds) {
    const RunSeeds r = expand_seed(s);
    seeds.push_back({{"seed", s}, {"data", r.data}, {"split", r.split}, {"init", r.init}, {"train", r.train},
                     {"shuffle", derive_seed(r.train, "shuffle")}, {"dropout", derive_seed(r.train, "dropout")}});
  }
  j["seeds"] = seeds;
  j["outputs"] = outputs;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fairlora
