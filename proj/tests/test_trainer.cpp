// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fairlora/trainer.hpp"
#include "fd.hpp"

using namespace fairlora;
using fairlora::testing::random_matrix;

namespace {

ToyModelConfig tiny_model() {
  ToyModelConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_dim = 8;
  cfg.seq_len = 3;
  cfg.num_layers = 1;
  cfg.lora_rank = 2;
  cfg.seed = 5;
  return cfg;
}

GroupedDataset tiny_data(std::size_t n, std::uint64_t seed = 3) {
  SynthConfig cfg;
  cfg.groups = {{"A", 0.75}, {"B", 0.25, 0.5}};
  cfg.token_dim = 4;
  cfg.seq_len = 3;
  cfg.num_samples = n;
  cfg.signal_scale = 1.0;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

std::vector<Matrix> snapshot(ToyModel& m) {
  std::vector<Matrix> out;
  for (const Parameter* p : m.parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("warmup schedule") {
  TrainConfig cfg;
  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(50, cfg) == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(lr_at(100, cfg) == 1e-5);
  CHECK(lr_at(5000, cfg) == 1e-5);
  cfg.warmup_steps = 0;
  CHECK(lr_at(0, cfg) == 1e-5);
}

TEST_CASE("AdamW first step by hand") {
  Parameter p{"p", Matrix::from_rows({{1.0, -2.0}}), Matrix::from_rows({{0.5, -0.1}}), true};
  AdamW opt;
  std::vector<Parameter*> params{&p};
  opt.step(params, 0.1);
  // m̂ = g and v̂ = g², so the Adam part is lr · g / (|g| + ε); decay is applied first.
  const double w0 = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
  const double w1 = -2.0 * (1 - 0.1 * 0.01) + 0.1 * 0.1 / (0.1 + 1e-8);
  CHECK(p.value(0, 0) == doctest::Approx(w0).epsilon(1e-14));
  CHECK(p.value(0, 1) == doctest::Approx(w1).epsilon(1e-14));
  CHECK(opt.steps() == 1);
}

TEST_CASE("AdamW second step with bias correction") {
  Parameter p{"p", Matrix::from_rows({{0.0}}), Matrix::from_rows({{1.0}}), true};
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  std::vector<Parameter*> params{&p};
  opt.step(params, 1.0);
  p.grad = Matrix::from_rows({{-1.0}});
  opt.step(params, 1.0);
  const double m = 0.9 * 0.1 - 0.1, v = 0.999 * 0.001 + 0.001;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  CHECK(p.value(0, 0) == doctest::Approx(-1.0 / (1 + 1e-8) - mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("zero epochs leave the model unchanged") {
  ToyModel m(tiny_model());
  const auto before = snapshot(m);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainHistory h = train(m, tiny_data(16), {}, cfg);
  CHECK(h.steps.empty());
  CHECK(snapshot(m) == before);
}

TEST_CASE("training is deterministic for a seed") {
  const GroupedDataset data = tiny_data(40);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.warmup_steps = 2;
  LossConfig loss;
  loss.mode = Objective::Hybrid;
  ToyModel a(tiny_model()), b(tiny_model());
  const TrainHistory ha = train(a, data, loss, cfg);
  const TrainHistory hb = train(b, data, loss, cfg);
  CHECK(ha == hb);
  CHECK(snapshot(a) == snapshot(b));
  cfg.seed = 43;
  ToyModel c(tiny_model());
  CHECK_FALSE(train(c, data, loss, cfg) == ha);
}

TEST_CASE("learning rate 0 is a null update") {
  ToyModelConfig mc = tiny_model();
  mc.dropout = 0.0;
  ToyModel m(mc);
  const auto before = snapshot(m);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.micro_batch = 1;
  cfg.accumulation_steps = 1;
  cfg.epochs = 3;
  const GroupedDataset data = tiny_data(12);
  const TrainHistory h = train(m, data, {}, cfg);
  CHECK(snapshot(m) == before);
  // Each step sees one sample, so every epoch yields the same multiset of losses.
  std::vector<std::vector<double>> epochs(3);
  for (const StepRecord& r : h.steps) epochs[r.step / 12].push_back(r.loss);
  for (auto& e : epochs) std::sort(e.begin(), e.end());
  CHECK(epochs[0] == epochs[1]);
  CHECK(epochs[1] == epochs[2]);
}

TEST_CASE("frozen weights are bitwise unchanged and adapters move") {
  ToyModel m(tiny_model());
  std::vector<Matrix> frozen_before, trainable_before;
  for (const Parameter* p : m.parameters()) (p->trainable ? trainable_before : frozen_before).push_back(p->value);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.warmup_steps = 1;
  LossConfig loss;
  loss.mode = Objective::GroupReweighted;
  train(m, tiny_data(32), loss, cfg);
  std::vector<Matrix> frozen_after, trainable_after;
  for (const Parameter* p : m.parameters()) (p->trainable ? trainable_after : frozen_after).push_back(p->value);
  CHECK(frozen_after == frozen_before);
  for (std::size_t i = 0; i < trainable_after.size(); ++i) CHECK_FALSE(trainable_after[i] == trainable_before[i]);
}

TEST_CASE("gradient accumulation matches one large batch") {
  ToyModelConfig mc = tiny_model();
  mc.dropout = 0.0;
  const GroupedDataset data = tiny_data(8);
  TrainConfig accum;
  accum.learning_rate = 1e-2;
  accum.warmup_steps = 0;
  accum.epochs = 1;
  accum.micro_batch = 2;
  accum.accumulation_steps = 4;
  TrainConfig big = accum;
  big.micro_batch = 8;
  big.accumulation_steps = 1;

  ToyModel a(mc), b(mc);
  const TrainHistory ha = train(a, data, {}, accum);
  const TrainHistory hb = train(b, data, {}, big);
  REQUIRE(ha.steps.size() == 1);
  REQUIRE(hb.steps.size() == 1);
  CHECK(ha.steps[0].loss == doctest::Approx(hb.steps[0].loss).epsilon(1e-12));
  const auto pa = a.parameters(), pb = b.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j)
      worst = std::max(worst, std::abs(pa[i]->value.data()[j] - pb[i]->value.data()[j]));
  CHECK(worst <= 1e-10);
}

TEST_CASE("history records counts, rates and the soft gap") {
  ToyModel m(tiny_model());
  TrainConfig cfg;
  cfg.warmup_steps = 4;
  cfg.epochs = 2;
  LossConfig loss;
  loss.mode = Objective::FairnessRegularized;
  const GroupedDataset data = tiny_data(20);
  const TrainHistory h = train(m, data, loss, cfg);
  CHECK(h.steps.size() == 2 * 3);  // ceil(20 / 8) per epoch
  CHECK(h.groups == data.group_set());
  std::size_t seen = 0;
  for (const StepRecord& r : h.steps) {
    CHECK(r.soft_gap.has_value());
    CHECK(r.learning_rate == lr_at(r.step, cfg));
    for (std::size_t c : r.group_counts) seen += c;
  }
  CHECK(seen == 40);
  const std::string csv = h.to_csv();
  CHECK(csv.rfind("step,loss,lr,soft_gap,count_A,count_B\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}

TEST_CASE("non-finite loss aborts with the step") {
  std::vector<Sample> samples;
  for (int i = 0; i < 8; ++i) {
    samples.push_back({std::vector<double>(12, i < 4 ? 1.0 : std::numeric_limits<double>::max()), i % 2, "A"});
  }
  const GroupedDataset data(samples);
  ToyModel m(tiny_model());
  TrainConfig cfg;
  try {
    train(m, data, {}, cfg);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("evaluation oracles") {
  ToyModel m(tiny_model());
  m.head_weight().value.fill(0.0);
  const GroupedDataset data = tiny_data(30);
  const FairnessReport r = evaluate_model(m, data);
  double zeros = 0.0;
  for (const Sample& s : data.samples()) zeros += s.label == 0;
  CHECK(r.overall_accuracy == doctest::Approx(zeros / 30.0).epsilon(1e-15));
  for (int p : predict_all(m, data)) CHECK(p == 0);

  std::vector<double> accs;
  for (const GroupMetrics& g : r.groups) accs.push_back(g.accuracy);
  CHECK(r.max_acc_gap == spread(accs));
}

TEST_CASE("overfits 16 samples") {
  ToyModelConfig mc = tiny_model();
  mc.dropout = 0.0;
  mc.lora_rank = 4;
  ToyModel m(mc);
  const GroupedDataset data = tiny_data(16, 11);
  TrainConfig cfg;
  cfg.learning_rate = 2e-2;
  cfg.warmup_steps = 5;
  cfg.epochs = 150;
  train(m, data, {}, cfg);
  CHECK(evaluate_model(m, data).overall_accuracy == 1.0);
}

TEST_CASE("GR loss on minority-only batches is bounded by w_max") {
  const GroupedDataset data = tiny_data(200);
  LossConfig gr;
  gr.mode = Objective::GroupReweighted;
  gr.w_max = 3.0;  // B holds 25%, so N / N_B = 4 is clipped to 3
  const GroupWeights w = training_weights(data, gr);
  CHECK(w.at("B") == 3.0);
  ToyModel m(tiny_model());
  std::mt19937_64 rng(2);
  std::vector<std::size_t> minority = data.indices_of(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(minority.begin(), minority.end(), rng);
    const std::vector<std::size_t> batch(minority.begin(), minority.begin() + 2);
    const double weighted = accumulate_batch_gradient(m, data, batch, gr, w, nullptr).loss;
    const double plain = accumulate_batch_gradient(m, data, batch, {}, w, nullptr).loss;
    CHECK(weighted <= gr.w_max * plain);
  }
}

TEST_CASE("training contract checks") {
  ToyModel m(tiny_model());
  TrainConfig cfg;
  CHECK_THROWS_AS(train(m, GroupedDataset{}, {}, cfg), ContractViolation);
  cfg.micro_batch = 0;
  CHECK_THROWS_AS(train(m, tiny_data(8), {}, cfg), ConfigError);
  LossConfig wrong;
  wrong.group_set = {"Z"};
  CHECK_THROWS_AS(train(m, tiny_data(8), wrong, TrainConfig{}), ContractViolation);
}
