// SPDX-License-Identifier: Apache-2.0
#include "fairlora/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fairlora/seeds.hpp"

namespace fairlora {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
  if (micro_batch == 0 || accumulation_steps == 0) throw ConfigError("micro_batch and accumulation_steps must be positive");
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0) || !(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(adamw.epsilon > 0.0) || !(adamw.weight_decay >= 0.0)) throw ConfigError("AdamW epsilon/weight_decay invalid");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

// ---------------------------------------------------------------- AdamW

void AdamW::step(std::span<Parameter* const> params, double lr) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw ContractViolation("AdamW: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    if (g.size() != w.size()) throw ContractViolation("AdamW: gradient shape mismatch for " + p.name);
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] -= lr * cfg_.weight_decay * w[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

// ---------------------------------------------------------------- history

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "step,loss,lr,soft_gap";
  for (const std::string& g : groups) os << ",count_" << g;
  os << '\n';
  for (const StepRecord& r : steps) {
    os << r.step << ',' << fmt(r.loss) << ',' << fmt(r.learning_rate) << ',';
    if (r.soft_gap) os << fmt(*r.soft_gap);
    for (std::size_t c : r.group_counts) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
}

TrainingDiverged::TrainingDiverged(std::size_t step, double last_loss)
    : std::runtime_error("training diverged at optimizer step " + std::to_string(step) +
                         " (last finite loss " + fmt(last_loss) + ")"),
      step_(step),
      last_loss_(last_loss) {}

// ---------------------------------------------------------------- training

BatchResult accumulate_batch_gradient(ToyModel& model, const GroupedDataset& data,
                                      std::span<const std::size_t> indices, const LossConfig& loss,
                                      const GroupWeights& weights, std::mt19937_64* dropout_rng, double grad_scale) {
  Tape tape;
  ForwardOptions opts;
  opts.dropout_rng = dropout_rng;
  std::vector<Var> logits;
  std::vector<int> labels;
  std::vector<std::size_t> groups;
  for (std::size_t i : indices) {
    const Sample& s = data[i];
    logits.push_back(model.logits(tape, model.sequence(s.features), opts));
    labels.push_back(s.label);
    groups.push_back(data.group_of(i));
  }
  LossTerms terms = objective_loss(loss, weights, logits, labels, groups);
  Var root = grad_scale == 1.0 ? terms.total : scale(terms.total, grad_scale);
  tape.backward(root);
  tape.accumulate_param_grads();
  return {terms.total.scalar(), terms.soft_gap};
}

GroupWeights training_weights(const GroupedDataset& train_set, const LossConfig& loss) {
  if (!loss.uses_weights()) return {};
  return group_weights(train_set.group_counts(), train_set.size(), loss.w_max, train_set.group_set());
}

TrainHistory train(ToyModel& model, const GroupedDataset& train_set, const LossConfig& loss, const TrainConfig& cfg) {
  cfg.validate();
  loss.validate();
  if (train_set.empty()) throw ContractViolation("train: empty dataset");
  if (!loss.group_set.empty() && loss.group_set != train_set.group_set()) {
    throw ContractViolation("train: loss group set does not match the dataset's");
  }

  TrainHistory history;
  history.groups = train_set.group_set();
  const GroupWeights weights = training_weights(train_set, loss);

  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::mt19937_64 dropout_rng(derive_seed(cfg.seed, "dropout"));
  std::vector<Parameter*> params = model.trainable_parameters();
  AdamW optimizer(cfg.adamw);
  model.zero_grad();

  std::vector<std::size_t> order(train_set.size());
  std::size_t step = 0;
  double last_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::size_t pos = 0;
    while (pos < order.size()) {
      // One optimizer step over up to accumulation_steps micro-batches.
      StepRecord rec;
      rec.step = step;
      rec.group_counts.assign(history.groups.size(), 0);
      double loss_sum = 0.0, gap_sum = 0.0;
      std::size_t micro = 0;
      for (; micro < cfg.accumulation_steps && pos < order.size(); ++micro) {
        const std::size_t end = std::min(pos + cfg.micro_batch, order.size());
        std::span<const std::size_t> batch(order.data() + pos, end - pos);
        for (std::size_t i : batch) ++rec.group_counts[train_set.group_of(i)];
        BatchResult r = accumulate_batch_gradient(model, train_set, batch, loss, weights, &dropout_rng);
        if (!std::isfinite(r.loss)) throw TrainingDiverged(step, last_loss);
        loss_sum += r.loss;
        if (r.soft_gap) gap_sum += *r.soft_gap;
        pos = end;
      }
      const double inv = 1.0 / static_cast<double>(micro);
      for (Parameter* p : params)
        for (double& g : p->grad.data()) g *= inv;
      rec.learning_rate = lr_at(step, cfg);
      optimizer.step(params, rec.learning_rate);
      model.zero_grad();

      rec.loss = loss_sum * inv;
      if (loss.uses_lambda()) rec.soft_gap = gap_sum * inv;
      last_loss = rec.loss;
      history.steps.push_back(std::move(rec));
      ++step;
    }
  }
  return history;
}

std::vector<int> predict_all(const ToyModel& model, const GroupedDataset& ds) {
  std::vector<int> out;
  out.reserve(ds.size());
  for (const Sample& s : ds.samples()) out.push_back(model.predict(model.sequence(s.features)));
  return out;
}

FairnessReport evaluate_model(const ToyModel& model, const GroupedDataset& ds) {
  const std::vector<int> predictions = predict_all(model, ds);
  std::vector<int> labels;
  std::vector<std::string> groups;
  for (const Sample& s : ds.samples()) {
    labels.push_back(s.label);
    groups.push_back(s.group);
  }
  return evaluate(predictions, labels, groups, ds.group_set());
}

}  // namespace fairlora
