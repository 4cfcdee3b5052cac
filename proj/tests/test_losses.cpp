// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "fairlora/losses.hpp"
#include "fd.hpp"

using namespace fairlora;
using fairlora::testing::max_rel_error;
using fairlora::testing::numeric_gradient;
using fairlora::testing::random_matrix;

namespace {

// Logit row whose class-0 probability is exactly-ish p.
Matrix logit_for(double p) { return Matrix::from_rows({{std::log(p / (1.0 - p)), 0.0}}); }

std::vector<Var> constants(Tape& t, const std::vector<Matrix>& rows) {
  std::vector<Var> out;
  for (const Matrix& m : rows) out.push_back(t.constant(m));
  return out;
}

}  // namespace

TEST_CASE("group weights") {
  SUBCASE("balanced") {
    const std::vector<std::size_t> c{50, 50};
    const GroupWeights w = group_weights(c, 100, 10.0);
    CHECK(w.values == std::vector<double>{2.0, 2.0});
  }
  SUBCASE("ethnicity fractions") {
    const std::vector<std::size_t> c{903, 43, 54};
    const GroupWeights w = group_weights(c, 1000, 10.0, {"NH", "H", "U"});
    CHECK(w.at("NH") == doctest::Approx(1.107).epsilon(1e-3));
    CHECK(w.at("H") == 10.0);
    CHECK(w.at("U") == 10.0);
    CHECK(1000.0 / 43 == doctest::Approx(23.26).epsilon(1e-3));
    CHECK(1000.0 / 54 == doctest::Approx(18.52).epsilon(1e-3));
  }
  SUBCASE("race fractions") {
    const std::vector<std::size_t> c{769, 149, 82};
    const GroupWeights w = group_weights(c, 1000, 10.0);
    CHECK(std::abs(w.at(std::size_t{0}) - 1.300) < 1e-3);
    CHECK(std::abs(w.at(std::size_t{1}) - 6.711) < 1e-3);
    CHECK(w.at(std::size_t{2}) == 10.0);
  }
  SUBCASE("single group") {
    const std::vector<std::size_t> c{37};
    CHECK(group_weights(c, 37, 10.0).values == std::vector<double>{1.0});
  }
  SUBCASE("contract violations") {
    const std::vector<std::size_t> zero{10, 0};
    CHECK_THROWS_AS(group_weights(zero, 10, 10.0), ContractViolation);
    const std::vector<std::size_t> c{3, 4};
    CHECK_THROWS_AS(group_weights(c, 8, 10.0), ContractViolation);
    CHECK_THROWS_AS(group_weights(c, 7, 10.0).at("missing"), ContractViolation);
  }
}

TEST_CASE("group weights stay in [1, w_max] and clip exactly below 1/w_max") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> count(1, 500);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::size_t> c(2 + trial % 4);
    std::size_t n = 0;
    for (std::size_t& v : c) n += v = count(rng);
    const double w_max = 1.0 + trial % 20;
    const GroupWeights w = group_weights(c, n, w_max);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(w.values[i] >= 1.0);
      CHECK(w.values[i] <= w_max);
      const double fraction = static_cast<double>(c[i]) / static_cast<double>(n);
      CHECK((w.values[i] == w_max && static_cast<double>(n) / c[i] != w_max) == (fraction < 1.0 / w_max));
    }
  }
}

TEST_CASE("soft group accuracy") {
  Tape t;
  auto probs = [&](std::vector<double> p) {
    std::vector<Var> v;
    for (double x : p) v.push_back(t.constant(x));
    return v;
  };
  SUBCASE("perfect") {
    const std::vector<std::size_t> g{0, 0};
    CHECK(soft_group_accuracy(probs({1.0, 1.0}), g).accuracy[0].scalar() == 1.0);
  }
  SUBCASE("arithmetic mean") {
    const std::vector<std::size_t> g{0, 0, 0};
    CHECK(soft_group_accuracy(probs({0.9, 0.6, 0.3}), g).accuracy[0].scalar() == doctest::Approx(0.6).epsilon(1e-15));
  }
  SUBCASE("mixed batch") {
    const std::vector<std::size_t> g{2, 0, 2};
    const SoftGroupAccuracy acc = soft_group_accuracy(probs({0.5, 0.8, 0.7}), g);
    CHECK(acc.groups == std::vector<std::size_t>{0, 2});
    CHECK(acc.counts == std::vector<std::size_t>{1, 2});
    CHECK(acc.accuracy[0].scalar() == 0.8);
    CHECK(acc.accuracy[1].scalar() == doctest::Approx(0.6).epsilon(1e-15));
  }
}

TEST_CASE("soft MaxAccGap and its subgradient") {
  Tape t;
  SoftGroupAccuracy acc;
  acc.groups = {0, 1, 2};
  acc.counts = {1, 1, 1};
  std::vector<Var> leaves{t.leaf(0.5347), t.leaf(0.5789), t.leaf(0.5185)};
  acc.accuracy = leaves;
  const SoftGap gap = soft_maxaccgap(acc);
  CHECK(std::abs(gap.gap.scalar() - 0.0604) < 1e-12);
  CHECK(gap.argmax_group == 1);
  CHECK(gap.argmin_group == 2);
  t.backward(gap.gap);
  CHECK(leaves[0].grad()(0, 0) == 0.0);
  CHECK(leaves[1].grad()(0, 0) == 1.0);
  CHECK(leaves[2].grad()(0, 0) == -1.0);

  Tape eq;
  SoftGroupAccuracy same;
  same.groups = {0, 1, 2};
  same.accuracy = {eq.constant(0.6), eq.constant(0.6), eq.constant(0.6)};
  CHECK(soft_maxaccgap(same).gap.scalar() == 0.0);
  CHECK_THROWS_AS(soft_maxaccgap(SoftGroupAccuracy{}), ContractViolation);
}

TEST_CASE("vanilla cross-entropy") {
  Tape t;
  const std::vector<int> y{0, 1};
  CHECK(loss_vanilla(constants(t, {Matrix::from_rows({{800, 0}}), Matrix::from_rows({{0, 800}})}), y).scalar() ==
        doctest::Approx(0.0));
  CHECK(std::abs(loss_vanilla(constants(t, {Matrix(1, 2), Matrix(1, 2)}), y).scalar() - std::log(2.0)) < 1e-15);
  const std::vector<int> zeros{0, 0, 0};
  const Var l = loss_vanilla(constants(t, {logit_for(0.8), logit_for(0.8), logit_for(0.8)}), zeros);
  CHECK(std::abs(l.scalar() - 0.2231435513) < 1e-9);
  CHECK_THROWS_AS(loss_vanilla({}, {}), ContractViolation);
}

TEST_CASE("FR composes CE with the soft gap") {
  Tape t;
  const auto logits = constants(t, {logit_for(0.65), logit_for(0.5), logit_for(0.65), logit_for(0.5)});
  const std::vector<int> y{0, 0, 0, 0};
  const std::vector<std::size_t> g{0, 1, 0, 1};
  const double ce = loss_vanilla(logits, y).scalar();
  CHECK(ce == doctest::Approx(-(std::log(0.65) + std::log(0.5)) / 2));
  CHECK(std::abs(loss_fr(logits, y, g, 0.5).scalar() - (ce + 0.5 * 0.15)) < 1e-12);
  CHECK(loss_fr(logits, y, g, 0.0).scalar() == ce);

  const std::vector<std::size_t> one{1, 1, 1, 1};
  CHECK(loss_fr(logits, y, one, 0.7).scalar() == ce);
}

TEST_CASE("GR and Hybrid arithmetic") {
  Tape t;
  const auto logits = constants(t, {logit_for(std::exp(-0.5)), logit_for(std::exp(-0.9))});
  const std::vector<int> y{0, 0};
  const std::vector<std::size_t> g{0, 1};
  GroupWeights w{{"A", "B"}, {1.107, 10.0}};
  CHECK(std::abs(loss_gr(logits, y, g, w).scalar() - 9.5535) < 1e-12);
  const double gap = std::exp(-0.5) - std::exp(-0.9);
  CHECK(std::abs(loss_hybrid(logits, y, g, w, 0.5).scalar() - (9.5535 + 0.5 * gap)) < 1e-12);
  CHECK(loss_hybrid(logits, y, g, w, 0.0).scalar() == loss_gr(logits, y, g, w).scalar());

  GroupWeights missing{{"A"}, {1.0}};
  CHECK_THROWS_AS(loss_gr(logits, y, g, missing), ContractViolation);
}

TEST_CASE("GR on K balanced groups scales vanilla by K squared") {
  const std::size_t K = 3;
  std::mt19937_64 rng(21);
  const Matrix base = random_matrix(1, 2, rng);
  auto grads = [&](bool gr) {
    Tape t;
    Var x = t.leaf(base);
    std::vector<Var> logits;
    std::vector<int> y;
    std::vector<std::size_t> g;
    for (std::size_t k = 0; k < K; ++k) {
      for (int n = 0; n < 2; ++n) {
        logits.push_back(x);
        y.push_back(1);
        g.push_back(k);
      }
    }
    GroupWeights w{{}, std::vector<double>(K, double(K))};
    Var l = gr ? loss_gr(logits, y, g, w) : loss_vanilla(logits, y);
    t.backward(l);
    return std::make_pair(l.scalar(), x.grad());
  };
  const auto [lv, gv] = grads(false);
  const auto [lg, gg] = grads(true);
  CHECK(lg == doctest::Approx(K * K * lv).epsilon(1e-12));
  for (std::size_t i = 0; i < 2; ++i) CHECK(gg(0, i) == doctest::Approx(K * K * gv(0, i)).epsilon(1e-12));
}

TEST_CASE("degeneracies hold exactly, including gradients") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(6, 2, rng);
    const std::vector<int> y{0, 1, 1, 0, 1, 0};
    const std::vector<std::size_t> g{0, 1, 2, 0, 1, 2};
    const std::vector<std::size_t> single(6, 0);
    GroupWeights w{{}, {1.3, 6.7, 10.0}};
    GroupWeights unit{{}, {1.0}};
    auto run = [&](auto&& loss) {
      Tape t;
      Var leaf = t.leaf(x);
      std::vector<Var> logits;
      for (std::size_t i = 0; i < 6; ++i) logits.push_back(select_row(leaf, i));
      Var l = loss(logits);
      t.backward(l);
      return std::make_pair(l.value(), leaf.grad());
    };
    CHECK(run([&](auto& l) { return loss_fr(l, y, g, 0.0); }) == run([&](auto& l) { return loss_vanilla(l, y); }));
    CHECK(run([&](auto& l) { return loss_hybrid(l, y, g, w, 0.0); }) == run([&](auto& l) { return loss_gr(l, y, g, w); }));
    CHECK(run([&](auto& l) { return loss_gr(l, y, single, unit); }) == run([&](auto& l) { return loss_vanilla(l, y); }));
  }
}

TEST_CASE("soft accuracy approaches hard accuracy") {
  Tape t;
  const auto logits = constants(t, {logit_for(0.999), logit_for(0.001), logit_for(0.999), logit_for(0.999)});
  const std::vector<int> y{0, 0, 0, 0};
  const std::vector<std::size_t> g{0, 0, 1, 1};
  const SoftGroupAccuracy acc = soft_group_accuracy(true_class_probabilities(logits, y), g);
  // At p = 0.999 the distance to 1 is 1e-3 exactly; allow for rounding on top.
  const double tol = 1e-3 + 1e-12;
  CHECK(std::abs(acc.accuracy[0].scalar() - 0.5) <= tol);
  CHECK(std::abs(acc.accuracy[1].scalar() - 1.0) <= tol);
}

TEST_CASE("loss gradients match finite differences w.r.t. logits") {
  std::mt19937_64 rng(41);
  const std::vector<int> y{0, 1, 1, 0, 1, 0, 0, 1, 1};
  const std::vector<std::size_t> g{0, 0, 0, 1, 1, 1, 2, 2, 2};
  GroupWeights w{{}, {1.1, 4.0, 10.0}};
  for (const Objective mode :
       {Objective::Vanilla, Objective::FairnessRegularized, Objective::GroupReweighted, Objective::Hybrid}) {
    LossConfig cfg;
    cfg.mode = mode;
    cfg.lambda = 0.8;
    for (int trial = 0; trial < 20; ++trial) {
      Matrix x = random_matrix(9, 2, rng);
      auto build = [&](Tape& t, Var leaf) {
        std::vector<Var> logits;
        for (std::size_t i = 0; i < 9; ++i) logits.push_back(select_row(leaf, i));
        return objective_loss(cfg, w, logits, y, g).total;
      };
      Tape t;
      Var leaf = t.leaf(x);
      t.backward(build(t, leaf));
      const Matrix analytic = leaf.grad();
      auto f = [&] {
        Tape tt(false);
        return build(tt, tt.constant(x)).scalar();
      };
      CAPTURE(to_string(mode));
      CHECK(max_rel_error(analytic.data(), numeric_gradient(f, x.data())) <= 1e-6);
    }
  }
}

TEST_CASE("objective dispatch") {
  Tape t;
  const auto logits = constants(t, {logit_for(0.7), logit_for(0.4)});
  const std::vector<int> y{0, 0};
  const std::vector<std::size_t> g{0, 1};
  GroupWeights w{{}, {1.5, 3.0}};
  LossConfig cfg;
  CHECK(objective_loss(cfg, w, logits, y, g).total.scalar() == loss_vanilla(logits, y).scalar());
  CHECK_FALSE(objective_loss(cfg, w, logits, y, g).soft_gap);
  cfg.mode = Objective::Hybrid;
  const LossTerms h = objective_loss(cfg, w, logits, y, g);
  CHECK(h.total.scalar() == loss_hybrid(logits, y, g, w, 0.5).scalar());
  REQUIRE(h.soft_gap);
  CHECK(*h.soft_gap == doctest::Approx(0.3));
  CHECK(parse_objective("Hybrid") == Objective::Hybrid);
  CHECK_THROWS_AS(parse_objective("adv"), ConfigError);
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
