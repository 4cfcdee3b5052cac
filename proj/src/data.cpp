// SPDX-License-Identifier: Apache-2.0
#include "fairlora/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace fairlora {

// ---------------------------------------------------------------- GroupedDataset

GroupedDataset::GroupedDataset(std::vector<Sample> samples, std::vector<std::string> group_set)
    : samples_(std::move(samples)), group_set_(std::move(group_set)) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t g = 0; g < group_set_.size(); ++g) {
    if (!position.emplace(group_set_[g], g).second) {
      throw ContractViolation("GroupedDataset: duplicate group '" + group_set_[g] + "'");
    }
  }
  const bool infer = group_set_.empty();
  feature_dim_ = samples_.empty() ? 0 : samples_.front().features.size();
  group_ids_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.label != 0 && s.label != 1) {
      throw ContractViolation("GroupedDataset: sample " + std::to_string(i) + " has non-binary label");
    }
    if (s.features.size() != feature_dim_) {
      throw ContractViolation("GroupedDataset: sample " + std::to_string(i) + " has feature dimension " +
                              std::to_string(s.features.size()) + ", expected " + std::to_string(feature_dim_));
    }
    auto it = position.find(s.group);
    if (it == position.end()) {
      if (!infer) throw ContractViolation("GroupedDataset: sample group '" + s.group + "' not in group set");
      it = position.emplace(s.group, group_set_.size()).first;
      group_set_.push_back(s.group);
    }
    group_ids_.push_back(it->second);
  }
  counts_.assign(group_set_.size(), 0);
  for (std::size_t g : group_ids_) ++counts_[g];
}

std::size_t GroupedDataset::group_position(const std::string& group) const {
  auto it = std::find(group_set_.begin(), group_set_.end(), group);
  if (it == group_set_.end()) throw ContractViolation("unknown group '" + group + "'");
  return static_cast<std::size_t>(it - group_set_.begin());
}

std::size_t GroupedDataset::count(const std::string& group) const { return counts_[group_position(group)]; }

std::vector<std::size_t> GroupedDataset::indices_of(std::size_t group) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < group_ids_.size(); ++i)
    if (group_ids_[i] == group) out.push_back(i);
  return out;
}

GroupedDataset GroupedDataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Sample> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(samples_.at(i));
  return GroupedDataset(std::move(picked), group_set_);
}

// ---------------------------------------------------------------- synthetic data

void SynthConfig::validate() const {
  if (groups.empty()) throw ConfigError("SynthConfig: no groups");
  double total = 0.0;
  std::vector<std::string> names;
  for (const GroupSpec& g : groups) {
    if (g.name.empty()) throw ConfigError("SynthConfig: empty group name");
    if (std::find(names.begin(), names.end(), g.name) != names.end()) {
      throw ConfigError("SynthConfig: duplicate group '" + g.name + "'");
    }
    names.push_back(g.name);
    if (!(g.fraction >= 0.0)) throw ConfigError("SynthConfig: negative fraction for '" + g.name + "'");
    if (!(g.signal >= 0.0 && g.signal <= 1.0)) throw ConfigError("SynthConfig: signal outside [0,1] for '" + g.name + "'");
    if (!(g.positive_rate >= 0.0 && g.positive_rate <= 1.0)) {
      throw ConfigError("SynthConfig: positive_rate outside [0,1] for '" + g.name + "'");
    }
    total += g.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "SynthConfig: group fractions sum to " << total << ", expected 1";
    throw ConfigError(os.str());
  }
  if (token_dim == 0 || seq_len == 0) throw ConfigError("SynthConfig: token_dim and seq_len must be positive");
  if (!(signal_scale >= 0.0) || !std::isfinite(signal_scale)) throw ConfigError("SynthConfig: invalid signal_scale");
  if (!(group_specific >= 0.0 && group_specific <= 1.0)) throw ConfigError("SynthConfig: group_specific outside [0,1]");
}

std::vector<GroupSpec> gender_groups() { return {{"Male", 0.429}, {"Female", 0.571}}; }

std::vector<GroupSpec> race_groups() { return {{"White", 0.769}, {"Black", 0.149}, {"Asian", 0.082}}; }

std::vector<GroupSpec> ethnicity_groups() {
  return {{"Non-Hispanic", 0.903}, {"Hispanic", 0.043}, {"Unknown", 0.054}};
}

std::vector<GroupSpec> attribute_groups(const std::string& attribute) {
  if (attribute == "gender") return gender_groups();
  if (attribute == "race") return race_groups();
  if (attribute == "ethnicity") return ethnicity_groups();
  throw ConfigError("unknown attribute preset '" + attribute + "'");
}

std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& fractions) {
  std::vector<std::size_t> out(fractions.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k, ++assigned) ++out[remainders[k].second];
  return out;
}

namespace {

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

bool normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n < 1e-12) return false;
  for (double& x : v) x /= n;
  return true;
}

}  // namespace

GroupedDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t dim = cfg.token_dim;

  // Shared label direction, then one near-orthogonal direction per group.
  std::vector<std::vector<double>> basis;
  std::vector<double> shared = random_unit(rng, dim);
  normalize(shared);
  basis.push_back(shared);
  std::vector<std::vector<double>> directions;
  for (const GroupSpec& g : cfg.groups) {
    std::vector<double> own = random_unit(rng, dim);
    // Once the space is exhausted, only stay orthogonal to the shared direction.
    const std::size_t against = basis.size() < dim ? basis.size() : 1;
    for (std::size_t b = 0; b < against; ++b) {
      const double p = dot(own, basis[b]);
      for (std::size_t j = 0; j < dim; ++j) own[j] -= p * basis[b][j];
    }
    if (!normalize(own)) own.assign(dim, 0.0);
    if (basis.size() < dim) basis.push_back(own);
    const double own_weight = cfg.group_specific * std::sqrt(std::max(0.0, 1.0 - g.signal * g.signal));
    std::vector<double> d(dim);
    for (std::size_t j = 0; j < dim; ++j) d[j] = cfg.signal_scale * (g.signal * shared[j] + own_weight * own[j]);
    directions.push_back(std::move(d));
  }

  std::vector<double> fractions;
  for (const GroupSpec& g : cfg.groups) fractions.push_back(g.fraction);
  const auto counts = apportion(cfg.num_samples, fractions);
  std::vector<std::size_t> assignment;
  assignment.reserve(cfg.num_samples);
  for (std::size_t g = 0; g < counts.size(); ++g) assignment.insert(assignment.end(), counts[g], g);
  std::shuffle(assignment.begin(), assignment.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Sample> samples;
  samples.reserve(cfg.num_samples);
  std::vector<std::string> group_set;
  for (const GroupSpec& g : cfg.groups) group_set.push_back(g.name);
  for (std::size_t g : assignment) {
    Sample s;
    s.group = cfg.groups[g].name;
    s.label = std::bernoulli_distribution(cfg.groups[g].positive_rate)(rng) ? 1 : 0;
    const double sign = s.label == 1 ? 1.0 : -1.0;
    s.features.resize(cfg.seq_len * dim);
    for (std::size_t t = 0; t < cfg.seq_len; ++t)
      for (std::size_t j = 0; j < dim; ++j) s.features[t * dim + j] = noise(rng) + sign * directions[g][j];
    samples.push_back(std::move(s));
  }
  return GroupedDataset(std::move(samples), std::move(group_set));
}

// ---------------------------------------------------------------- split

DatasetSplit stratified_split(const GroupedDataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  const std::vector<double> r = {ratios.train, ratios.validation, ratios.test};
  for (double x : r) {
    if (!(x > 0.0)) throw ConfigError("stratified_split: every ratio must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("stratified_split: ratios must sum to 1");

  constexpr std::size_t kParts = 3;
  const std::size_t groups = ds.group_set().size();
  const auto& n = ds.group_counts();
  const auto totals = apportion(ds.size(), r);

  // Floor every cell, then hand out each group's leftover samples to distinct
  // splits with the largest outstanding demand (Ryser's construction).
  std::vector<std::array<std::size_t, kParts>> cells(groups);
  std::vector<std::array<double, kParts>> frac(groups);
  std::array<long long, kParts> demand{};
  for (std::size_t k = 0; k < kParts; ++k) demand[k] = static_cast<long long>(totals[k]);
  std::vector<std::size_t> leftover(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    std::size_t used = 0;
    for (std::size_t k = 0; k < kParts; ++k) {
      const double exact = static_cast<double>(n[g]) * r[k];
      cells[g][k] = static_cast<std::size_t>(std::floor(exact));
      frac[g][k] = exact - std::floor(exact);
      demand[k] -= static_cast<long long>(cells[g][k]);
      used += cells[g][k];
    }
    leftover[g] = n[g] - used;
  }
  for (std::size_t g = 0; g < groups; ++g) {
    std::array<std::size_t, kParts> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (demand[a] != demand[b]) return demand[a] > demand[b];
      return frac[g][a] > frac[g][b];
    });
    for (std::size_t u = 0; u < leftover[g]; ++u) {
      ++cells[g][order[u]];
      --demand[order[u]];
    }
  }

  DatasetSplit out;
  for (std::size_t g = 0; g < groups; ++g) {
    if (n[g] == 0) continue;
    if (std::any_of(cells[g].begin(), cells[g].end(), [](std::size_t c) { return c == 0; })) {
      out.warnings.push_back("group '" + ds.group_set()[g] + "' (" + std::to_string(n[g]) +
                             " samples) is empty in at least one split");
    }
    if (cells[g][0] == 0) {
      const std::size_t donor = cells[g][1] >= cells[g][2] ? 1 : 2;
      --cells[g][donor];
      ++cells[g][0];
    }
  }

  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, kParts> parts;
  for (std::size_t g = 0; g < groups; ++g) {
    auto idx = ds.indices_of(g);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t at = 0;
    for (std::size_t k = 0; k < kParts; ++k) {
      parts[k].insert(parts[k].end(), idx.begin() + static_cast<std::ptrdiff_t>(at),
                      idx.begin() + static_cast<std::ptrdiff_t>(at + cells[g][k]));
      at += cells[g][k];
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  out.train = ds.subset(parts[0]);
  out.validation = ds.subset(parts[1]);
  out.test = ds.subset(parts[2]);
  return out;
}

// ---------------------------------------------------------------- JSONL

ParseError::ParseError(std::size_t line, const std::string& what)
    : DatasetError("line " + std::to_string(line) + ": " + what), line_(line) {}

GroupedDataset parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Sample> samples;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "record is not a JSON object");
    auto schema = [&](const std::string& msg) { return SchemaError("line " + std::to_string(lineno) + ": " + msg); };
    if (!j.contains("features") || !j["features"].is_array()) throw schema("'features' must be an array of numbers");
    if (!j.contains("label") || !j["label"].is_number_integer()) throw schema("'label' must be 0 or 1");
    if (!j.contains("group") || !j["group"].is_string()) throw schema("'group' must be a string");
    Sample s;
    for (const auto& v : j["features"]) {
      if (!v.is_number()) throw schema("'features' must be an array of numbers");
      s.features.push_back(v.get<double>());
    }
    const auto label = j["label"].get<long long>();
    if (label != 0 && label != 1) throw schema("'label' must be 0 or 1");
    s.label = static_cast<int>(label);
    s.group = j["group"].get<std::string>();
    if (samples.empty()) {
      dim = s.features.size();
    } else if (s.features.size() != dim) {
      throw schema("feature dimension " + std::to_string(s.features.size()) + " differs from " + std::to_string(dim));
    }
    samples.push_back(std::move(s));
  }
  return GroupedDataset(std::move(samples));
}

GroupedDataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

std::string to_jsonl(const GroupedDataset& ds) {
  std::string out;
  for (const Sample& s : ds.samples()) {
    nlohmann::ordered_json j;
    j["features"] = s.features;
    j["label"] = s.label;
    j["group"] = s.group;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_jsonl(const GroupedDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_jsonl(ds);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fairlora
