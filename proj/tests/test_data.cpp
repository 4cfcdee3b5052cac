// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "fairlora/data.hpp"
#include "fairlora/experiment.hpp"

using namespace fairlora;

namespace {

SynthConfig three_group(std::size_t n, std::uint64_t seed = 7) {
  SynthConfig cfg;
  cfg.groups = {{"A", 0.903}, {"B", 0.043}, {"C", 0.054}};
  cfg.num_samples = n;
  cfg.seed = seed;
  return cfg;
}

std::size_t total(const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); }

}  // namespace

TEST_CASE("generate_synthetic apportions group counts") {
  const GroupedDataset ds = generate_synthetic(three_group(7000));
  CHECK(ds.size() == 7000);
  CHECK(ds.group_set() == std::vector<std::string>{"A", "B", "C"});
  CHECK(std::abs(static_cast<long>(ds.count("A")) - 6321) <= 1);
  CHECK(std::abs(static_cast<long>(ds.count("B")) - 301) <= 1);
  CHECK(std::abs(static_cast<long>(ds.count("C")) - 378) <= 1);
  CHECK(total(ds.group_counts()) == 7000);
  CHECK(ds.feature_dim() == 16 * 8);
}

TEST_CASE("single-group config") {
  SynthConfig cfg;
  cfg.groups = {{"A", 1.0}};
  cfg.num_samples = 50;
  const GroupedDataset ds = generate_synthetic(cfg);
  CHECK(ds.count("A") == 50);
  for (const Sample& s : ds.samples()) CHECK(s.group == "A");
}

TEST_CASE("generation is a pure function of the config") {
  CHECK(generate_synthetic(three_group(500)) == generate_synthetic(three_group(500)));
  CHECK_FALSE(generate_synthetic(three_group(500, 1)) == generate_synthetic(three_group(500, 2)));
}

TEST_CASE("label balance follows positive_rate") {
  SynthConfig cfg;
  cfg.groups = {{"A", 0.5, 1.0, 0.5}, {"B", 0.5, 1.0, 0.2}};
  cfg.num_samples = 4000;
  const GroupedDataset ds = generate_synthetic(cfg);
  auto rate = [&](const std::string& g) {
    double pos = 0, n = 0;
    for (const Sample& s : ds.samples())
      if (s.group == g) {
        pos += s.label;
        ++n;
      }
    return pos / n;
  };
  CHECK(rate("A") == doctest::Approx(0.5).epsilon(0.1));
  CHECK(rate("B") == doctest::Approx(0.2).epsilon(0.2));
}

TEST_CASE("invalid synthetic configs") {
  SynthConfig cfg;
  cfg.groups = {{"A", 0.5}, {"B", 0.4}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.groups = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.groups = {{"A", 0.5}, {"A", 0.5}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.groups = {{"A", 1.0, 1.5}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("attribute presets") {
  CHECK(gender_groups().size() == 2);
  CHECK(race_groups().size() == 3);
  CHECK(ethnicity_groups()[0].fraction == 0.903);
  CHECK(attribute_groups("race")[2].name == "Asian");
  CHECK_THROWS_AS(attribute_groups("age"), ConfigError);
}

TEST_CASE("apportion is exact and within one of the quota") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> f(1 + trial % 5);
    for (double& v : f) v = u(rng);
    const double s = std::accumulate(f.begin(), f.end(), 0.0);
    for (double& v : f) v /= s;
    const std::size_t n = 1 + trial * 37 % 1000;
    const auto counts = apportion(n, f);
    CHECK(total(counts) == n);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(static_cast<double>(counts[i]) - f[i] * n) < 1.0);
  }
}

TEST_CASE("stratified split sizes and stratification") {
  SynthConfig cfg = three_group(10000);
  cfg.token_dim = 2;
  cfg.seq_len = 1;
  const GroupedDataset ds = generate_synthetic(cfg);
  const DatasetSplit sp = stratified_split(ds, {0.7, 0.1, 0.2}, 3);
  CHECK(sp.train.size() == 7000);
  CHECK(sp.validation.size() == 1000);
  CHECK(sp.test.size() == 2000);
  CHECK(sp.warnings.empty());
  for (const std::string& g : ds.group_set()) {
    const double n = static_cast<double>(ds.count(g));
    CHECK(std::abs(sp.train.count(g) - 0.7 * n) <= 1.0);
    CHECK(std::abs(sp.validation.count(g) - 0.1 * n) <= 1.0);
    CHECK(std::abs(sp.test.count(g) - 0.2 * n) <= 1.0);
    CHECK(sp.train.count(g) + sp.validation.count(g) + sp.test.count(g) == ds.count(g));
  }
  CHECK(sp.train.group_set() == ds.group_set());
}

TEST_CASE("stratified split is a partition and deterministic") {
  SynthConfig cfg = three_group(300);
  cfg.token_dim = 1;
  cfg.seq_len = 1;
  const GroupedDataset ds = generate_synthetic(cfg);
  const DatasetSplit a = stratified_split(ds, {}, 9), b = stratified_split(ds, {}, 9);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  std::multiset<double> seen, all;
  for (const Sample& s : ds.samples()) all.insert(s.features[0]);
  for (const GroupedDataset* part : {&a.train, &a.validation, &a.test})
    for (const Sample& s : part->samples()) seen.insert(s.features[0]);
  CHECK(seen == all);
}

TEST_CASE("50/50 parent splits stay balanced") {
  SynthConfig cfg;
  cfg.groups = {{"A", 0.5}, {"B", 0.5}};
  cfg.num_samples = 1001;
  cfg.token_dim = 1;
  cfg.seq_len = 1;
  const DatasetSplit sp = stratified_split(generate_synthetic(cfg), {}, 4);
  for (const GroupedDataset* part : {&sp.train, &sp.validation, &sp.test}) {
    CHECK(std::abs(static_cast<long>(part->count("A")) - static_cast<long>(part->count("B"))) <= 1);
  }
}

TEST_CASE("degenerate ratios are rejected") {
  const GroupedDataset ds = generate_synthetic(three_group(100));
  CHECK_THROWS_AS(stratified_split(ds, {1.0, 0.0, 0.0}, 1), ConfigError);
  CHECK_THROWS_AS(stratified_split(ds, {0.5, 0.3, 0.3}, 1), ConfigError);
}

TEST_CASE("tiny groups keep a training sample and warn") {
  std::vector<Sample> samples;
  for (int i = 0; i < 40; ++i) samples.push_back({{double(i)}, i % 2, "big"});
  samples.push_back({{100.0}, 1, "tiny"});
  const DatasetSplit sp = stratified_split(GroupedDataset(samples), {}, 1);
  CHECK(sp.train.count("tiny") == 1);
  CHECK_FALSE(sp.warnings.empty());
  CHECK(sp.train.size() + sp.validation.size() + sp.test.size() == 41);
}

TEST_CASE("dataset validation") {
  CHECK_THROWS_AS(GroupedDataset({{{1.0}, 2, "A"}}), ContractViolation);
  CHECK_THROWS_AS(GroupedDataset({{{1.0}, 0, "A"}, {{1.0, 2.0}, 0, "A"}}), ContractViolation);
  CHECK_THROWS_AS(GroupedDataset({{{1.0}, 0, "A"}}, {"B"}), ContractViolation);
  const GroupedDataset ds({{{1.0}, 0, "B"}, {{2.0}, 1, "A"}, {{3.0}, 1, "B"}});
  CHECK(ds.group_set() == std::vector<std::string>{"B", "A"});
  CHECK(ds.group_counts() == std::vector<std::size_t>{2, 1});
  CHECK(ds.indices_of(0) == std::vector<std::size_t>{0, 2});
  CHECK(ds.subset({2, 1}).group_set() == ds.group_set());
  CHECK_THROWS_AS(ds.group_position("Z"), ContractViolation);
}

TEST_CASE("JSONL parsing") {
  const GroupedDataset one = parse_jsonl(R"({"features":[0.1,0.2],"label":1,"group":"Hispanic"})");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Sample{{0.1, 0.2}, 1, "Hispanic"});

  const GroupedDataset empty = parse_jsonl("");
  CHECK(empty.empty());
  CHECK(empty.group_set().empty());

  CHECK(parse_jsonl("\n{\"features\":[1],\"label\":0,\"group\":\"A\"}\n\n").size() == 1);

  try {
    parse_jsonl("{\"features\":[1],\"label\":0,\"group\":\"A\"}\n{not json}\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_jsonl(R"({"features":[1],"label":3,"group":"A"})"), DatasetError);
  CHECK_THROWS_AS(parse_jsonl(R"({"features":[1],"group":"A"})"), SchemaError);
  CHECK_THROWS_AS(parse_jsonl(R"({"features":"x","label":1,"group":"A"})"), SchemaError);
}

TEST_CASE("JSONL round trip") {
  const std::string canonical =
      "{\"features\":[0.1,-2.5,3.0],\"label\":1,\"group\":\"A\"}\n"
      "{\"features\":[1e-07,0.0,12345.678],\"label\":0,\"group\":\"B\"}\n";
  const GroupedDataset ds = parse_jsonl(canonical);
  CHECK(to_jsonl(ds) == canonical);
  CHECK(parse_jsonl(to_jsonl(ds)) == ds);

  const GroupedDataset synth = generate_synthetic(three_group(60));
  const auto path = std::filesystem::temp_directory_path() / "fairlora_roundtrip.jsonl";
  save_jsonl(synth, path);
  const GroupedDataset back = load_jsonl(path);
  CHECK(back.samples() == synth.samples());
  std::filesystem::remove(path);
  CHECK_THROWS(load_jsonl("/nonexistent/dir/file.jsonl"));
}

TEST_CASE("reference config induces a disparity for a plain logistic classifier") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig cfg = reference_synth_config("ethnicity");
    cfg.seed = seed;
    // Same distribution with more samples: 2000 to train, 16000 to evaluate.
    cfg.num_samples = 20000;
    const DatasetSplit sp = stratified_split(generate_synthetic(cfg), {0.1, 0.1, 0.8}, seed);
    const std::size_t dim = sp.train.feature_dim();
    std::vector<double> w(dim, 0.0);
    double b = 0.0;
    for (int epoch = 0; epoch < 200; ++epoch) {
      std::vector<double> gw(dim, 0.0);
      double gb = 0.0;
      for (const Sample& s : sp.train.samples()) {
        double z = b;
        for (std::size_t j = 0; j < dim; ++j) z += w[j] * s.features[j];
        const double err = 1.0 / (1.0 + std::exp(-z)) - s.label;
        for (std::size_t j = 0; j < dim; ++j) gw[j] += err * s.features[j];
        gb += err;
      }
      const double lr = 0.5 / static_cast<double>(sp.train.size());
      for (std::size_t j = 0; j < dim; ++j) w[j] -= lr * gw[j];
      b -= lr * gb;
    }
    std::vector<double> correct(3, 0.0), count(3, 0.0);
    for (std::size_t i = 0; i < sp.test.size(); ++i) {
      const Sample& s = sp.test[i];
      double z = b;
      for (std::size_t j = 0; j < dim; ++j) z += w[j] * s.features[j];
      correct[sp.test.group_of(i)] += (z > 0.0) == (s.label == 1);
      count[sp.test.group_of(i)] += 1.0;
    }
    CAPTURE(seed);
    const double majority = correct[0] / count[0];
    CHECK(majority > correct[1] / count[1]);
    CHECK(majority > correct[2] / count[2]);
  }
}
