// SPDX-License-Identifier: Apache-2.0
#include "fairlora/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fairlora {

std::string to_string(Projection p) {
  switch (p) {
    case Projection::Query: return "q";
    case Projection::Key: return "k";
    case Projection::Value: return "v";
    case Projection::Output: return "o";
  }
  return "?";
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::LastToken: return "last_token";
    case Pooling::FirstToken: return "first_token";
    case Pooling::Mean: return "mean";
  }
  return "?";
}

Pooling parse_pooling(const std::string& s) {
  if (s == "last_token") return Pooling::LastToken;
  if (s == "first_token") return Pooling::FirstToken;
  if (s == "mean") return Pooling::Mean;
  throw ConfigError("unknown pooling mode '" + s + "'");
}

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

Parameter make_param(std::string name, Matrix value, bool trainable) {
  Parameter p;
  p.name = std::move(name);
  p.value = std::move(value);
  p.trainable = trainable;
  p.zero_grad();
  return p;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  for (double& v : m.data()) v = keep(rng) ? inv : 0.0;
  return m;
}

}  // namespace

// ---------------------------------------------------------------- LoraAdapter

LoraAdapter::LoraAdapter(std::string name, std::size_t out_dim, std::size_t in_dim, std::size_t r, double a,
                         std::mt19937_64& rng)
    : rank(r), alpha(a) {
  if (r > std::min(out_dim, in_dim)) {
    throw ConfigError("LoRA rank " + std::to_string(r) + " exceeds min(" + std::to_string(out_dim) + ", " +
                      std::to_string(in_dim) + ")");
  }
  base = make_param(name + ".base", gaussian(out_dim, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng), false);
  if (r > 0) {
    down = make_param(name + ".lora_A", gaussian(r, in_dim, 0.02, rng), true);
    up = make_param(name + ".lora_B", Matrix(out_dim, r), true);
  }
}

std::vector<double> LoraAdapter::apply(std::span<const double> x) const {
  std::vector<double> h = matvec(base.value, x);
  if (rank == 0) return h;
  const std::vector<double> ax = matvec(down.value, x);
  const std::vector<double> bax = matvec(up.value, ax);
  const double s = scaling();
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += s * bax[i];
  return h;
}

Var LoraAdapter::forward(Tape& tape, Var x, const Matrix* mask, bool use_adapter) {
  if (x.cols() != in_dim()) {
    throw ContractViolation(base.name + ": input width " + std::to_string(x.cols()) + ", expected " +
                            std::to_string(in_dim()));
  }
  Var out = matmul_nt(x, tape.param(base));
  if (rank == 0 || !use_adapter) return out;
  Var branch_in = mask ? hadamard(x, tape.constant(*mask)) : x;
  Var low = matmul_nt(branch_in, tape.param(down));
  Var delta = matmul_nt(low, tape.param(up));
  return add(out, scale(delta, scaling()));
}

// ---------------------------------------------------------------- ToyModel

void ToyModelConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || seq_len == 0) throw ConfigError("ToyModelConfig: dimensions must be positive");
  if (lora_rank > hidden_dim) throw ConfigError("ToyModelConfig: lora_rank exceeds hidden_dim");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("ToyModelConfig: dropout must lie in [0, 1)");
  if (lora_rank > 0 && !(lora_alpha > 0.0)) throw ConfigError("ToyModelConfig: lora_alpha must be positive");
  if (!(head_init_std >= 0.0)) throw ConfigError("ToyModelConfig: head_init_std must be non-negative");
}

ToyModel::ToyModel(const ToyModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t d = cfg_.hidden_dim;
  embed_ = make_param("embed", gaussian(d, cfg_.input_dim, 1.0 / std::sqrt(static_cast<double>(cfg_.input_dim)), rng),
                      false);
  layers_.resize(cfg_.num_layers);
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    for (std::size_t p = 0; p < 4; ++p) {
      const auto proj = static_cast<Projection>(p);
      const std::size_t r = cfg_.adapts(proj) ? cfg_.lora_rank : 0;
      layers_[l].proj[p] = LoraAdapter("layer" + std::to_string(l) + "." + to_string(proj), d, d, r, cfg_.lora_alpha, rng);
    }
  }
  head_w_ = make_param("head.weight", gaussian(2, d, cfg_.head_init_std, rng), true);
  head_b_ = make_param("head.bias", Matrix(1, 2), true);
}

Matrix ToyModel::sequence(std::span<const double> features) const {
  if (features.size() != cfg_.seq_len * cfg_.input_dim) {
    throw ContractViolation("sample has " + std::to_string(features.size()) + " features, model expects " +
                            std::to_string(cfg_.seq_len) + "x" + std::to_string(cfg_.input_dim));
  }
  return Matrix(cfg_.seq_len, cfg_.input_dim, std::vector<double>(features.begin(), features.end()));
}

Var ToyModel::hidden_states(Tape& tape, const Matrix& seq, const ForwardOptions& opts) {
  if (seq.rows() != cfg_.seq_len || seq.cols() != cfg_.input_dim) {
    throw ContractViolation("sequence is " + std::to_string(seq.rows()) + "x" + std::to_string(seq.cols()) +
                            ", model expects " + std::to_string(cfg_.seq_len) + "x" + std::to_string(cfg_.input_dim));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden_dim));
  const bool drop = opts.dropout_rng != nullptr && cfg_.dropout > 0.0 && opts.use_adapters;
  Var h = matmul_nt(tape.constant(seq), tape.param(embed_));
  for (AttentionLayer& layer : layers_) {
    auto project = [&](Projection p, Var in) {
      LoraAdapter& a = layer[p];
      if (drop && a.rank > 0) {
        Matrix mask = dropout_mask(in.rows(), in.cols(), cfg_.dropout, *opts.dropout_rng);
        return a.forward(tape, in, &mask, true);
      }
      return a.forward(tape, in, nullptr, opts.use_adapters);
    };
    Var q = project(Projection::Query, h);
    Var k = project(Projection::Key, h);
    Var v = project(Projection::Value, h);
    Var weights = causal_softmax(scale(matmul_nt(q, k), inv_sqrt_d));
    Var mixed = matmul(weights, v);
    h = add(h, project(Projection::Output, mixed));
  }
  return h;
}

Var ToyModel::pool(Var hidden) {
  switch (cfg_.pooling) {
    case Pooling::LastToken: return select_row(hidden, cfg_.seq_len - 1);
    case Pooling::FirstToken: return select_row(hidden, 0);
    case Pooling::Mean: return mean_rows(hidden);
  }
  throw ContractViolation("unknown pooling mode");
}

Var ToyModel::logits(Tape& tape, const Matrix& seq, const ForwardOptions& opts) {
  Var pooled = pool(hidden_states(tape, seq, opts));
  return add_row(matmul_nt(pooled, tape.param(head_w_)), tape.param(head_b_));
}

// A non-recording tape never stores parameter pointers or writes to them, so
// evaluation can run on a const model.
Matrix ToyModel::hidden_states(const Matrix& seq) const {
  Tape tape(false);
  return const_cast<ToyModel*>(this)->hidden_states(tape, seq).value();
}

std::array<double, 2> ToyModel::classify(const Matrix& seq) const {
  Tape tape(false);
  const Matrix& z = const_cast<ToyModel*>(this)->logits(tape, seq).value();
  return {z(0, 0), z(0, 1)};
}

std::array<double, 2> ToyModel::classify_base(const Matrix& seq) const {
  Tape tape(false);
  ForwardOptions opts;
  opts.use_adapters = false;
  const Matrix& z = const_cast<ToyModel*>(this)->logits(tape, seq, opts).value();
  return {z(0, 0), z(0, 1)};
}

int ToyModel::predict(const Matrix& seq) const { return argmax_class(classify(seq)); }

std::vector<Parameter*> ToyModel::parameters() {
  std::vector<Parameter*> out{&embed_};
  for (AttentionLayer& layer : layers_) {
    for (LoraAdapter& a : layer.proj) {
      out.push_back(&a.base);
      if (a.rank > 0) {
        out.push_back(&a.down);
        out.push_back(&a.up);
      }
    }
  }
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<const Parameter*> ToyModel::parameters() const {
  auto mut = const_cast<ToyModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> ToyModel::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

std::size_t ToyModel::total_parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::size_t ToyModel::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters())
    if (p->trainable) n += p->value.size();
  return n;
}

double ToyModel::trainable_fraction() const {
  return static_cast<double>(trainable_parameter_count()) / static_cast<double>(total_parameter_count());
}

void ToyModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

int argmax_class(const std::array<double, 2>& logits) { return logits[1] > logits[0] ? 1 : 0; }

std::size_t lora_parameter_count(std::size_t rank, std::span<const std::array<std::size_t, 2>> shapes) {
  std::size_t n = 0;
  for (const auto& s : shapes) n += rank * (s[0] + s[1]);
  return n;
}

// ---------------------------------------------------------------- checkpoint

namespace {
constexpr const char* kCheckpointHeader = "fairlora-checkpoint v1";
}

void save_checkpoint(const ToyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kCheckpointHeader << '\n';
  char buf[64];
  for (const Parameter* p : model.parameters()) {
    out << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
    bool first = true;
    for (double v : p->value.data()) {
      auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
      if (!first) out << ' ';
      out.write(buf, res.ptr - buf);
      first = false;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

void load_checkpoint(ToyModel& model, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader) {
    throw IoError(path.string() + ": not a checkpoint file");
  }
  for (Parameter* p : model.parameters()) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!std::getline(in, line)) throw IoError(path.string() + ": missing entry for " + p->name);
    std::istringstream head(line);
    head >> name >> rows >> cols;
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw IoError(path.string() + ": expected " + p->name + " " + std::to_string(p->value.rows()) + "x" +
                    std::to_string(p->value.cols()) + ", found '" + line + "'");
    }
    if (!std::getline(in, line)) throw IoError(path.string() + ": missing values for " + p->name);
    Matrix m(rows, cols);
    const char* cur = line.data();
    const char* end = line.data() + line.size();
    for (double& v : m.data()) {
      while (cur < end && *cur == ' ') ++cur;
      auto res = std::from_chars(cur, end, v, std::chars_format::hex);
      if (res.ec != std::errc()) throw IoError(path.string() + ": bad value in " + p->name);
      cur = res.ptr;
    }
    p->value = std::move(m);
  }
}

}  // namespace fairlora
