#include "psd/nn.hpp"

#include "psd/errors.hpp"

#include <algorithm>
#include <cmath>

namespace psd::nn {

void ParamSet::add(std::string name, std::vector<std::size_t> shape, Matrix value) {
  if (find(name) >= 0) throw ConfigError("ParamSet: duplicate entry '" + name + "'");
  if (shape.empty() || shape.size() > 2) {
    throw ConfigError("ParamSet: entry '" + name + "' must have rank 1 or 2");
  }
  const auto rows = shape.size() == 1 ? std::size_t{1} : shape[0];
  const auto cols = shape.size() == 1 ? shape[0] : shape[1];
  if (static_cast<std::size_t>(value.rows()) != rows ||
      static_cast<std::size_t>(value.cols()) != cols) {
    throw ConfigError("ParamSet: value of '" + name + "' does not match its shape");
  }
  entries_.push_back({std::move(name), std::move(shape), std::move(value)});
}

void ParamSet::append(const ParamSet& other) {
  for (const auto& e : other) add(e.name, e.shape, e.value);
}

int ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const Matrix& ParamSet::at(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw ConfigError("ParamSet: no entry '" + name + "'");
  return entries_[static_cast<std::size_t>(i)].value;
}

Matrix& ParamSet::at(const std::string& name) {
  const int i = find(name);
  if (i < 0) throw ConfigError("ParamSet: no entry '" + name + "'");
  return entries_[static_cast<std::size_t>(i)].value;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

std::string ParamSet::first_non_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.allFinite()) return e.name;
  }
  return {};
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (entries_[i].name != other.entries_[i].name || entries_[i].shape != other.entries_[i].shape) {
      return false;
    }
  }
  return true;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (entries_[i].value != other.entries_[i].value) return false;
  }
  return true;
}

GradSet zeros_like(const ParamSet& params) {
  GradSet g;
  g.reserve(params.size());
  for (const auto& e : params) g.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  return g;
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1 || hidden_units < 1 || hidden_layers < 0) {
    throw ConfigError("MlpSpec: dims must be >= 1 and hidden_layers >= 0");
  }
}

namespace {

int layer_in(const MlpSpec& s, int layer) { return layer == 0 ? s.input_dim : s.hidden_units; }

int layer_out(const MlpSpec& s, int layer) {
  return layer == s.hidden_layers ? s.output_dim : s.hidden_units;
}

void check_layout(const MlpSpec& spec, const ParamSet& params) {
  if (params.size() != static_cast<std::size_t>(2 * spec.layer_count())) {
    throw ConfigError("mlp: expected " + std::to_string(2 * spec.layer_count()) +
                      " parameter arrays, got " + std::to_string(params.size()));
  }
  for (int l = 0; l < spec.layer_count(); ++l) {
    const Matrix& w = params[static_cast<std::size_t>(2 * l)].value;
    const Matrix& b = params[static_cast<std::size_t>(2 * l + 1)].value;
    if (w.rows() != layer_in(spec, l) || w.cols() != layer_out(spec, l) || b.rows() != 1 ||
        b.cols() != layer_out(spec, l)) {
      throw ConfigError("mlp: layer " + std::to_string(l) + " has the wrong shape");
    }
  }
}

}  // namespace

ParamSet init_mlp(const MlpSpec& spec, std::mt19937_64& rng, const std::string& prefix) {
  spec.validate();
  ParamSet p;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in = layer_in(spec, l);
    const int out = layer_out(spec, l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(in, out);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    }
    const std::string base = prefix + "l" + std::to_string(l);
    p.add(base + ".w", {static_cast<std::size_t>(in), static_cast<std::size_t>(out)}, std::move(w));
    p.add(base + ".b", {static_cast<std::size_t>(out)}, Matrix::Zero(1, out));
  }
  return p;
}

Matrix mlp_forward(const MlpSpec& spec, const ParamSet& params, const Matrix& input) {
  check_layout(spec, params);
  if (input.cols() != spec.input_dim) {
    throw ConfigError("mlp: input has " + std::to_string(input.cols()) + " columns, expected " +
                      std::to_string(spec.input_dim));
  }
  Matrix h = input;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const Matrix& w = params[static_cast<std::size_t>(2 * l)].value;
    const Matrix& b = params[static_cast<std::size_t>(2 * l + 1)].value;
    Matrix z = h * w;
    z.rowwise() += b.row(0);
    if (l < spec.hidden_layers) {
      if (spec.activation == Activation::relu) {
        z = z.cwiseMax(0.0);
      } else {
        z = z.array().tanh();
      }
    }
    h = std::move(z);
  }
  return h;
}

Vector mlp_forward(const MlpSpec& spec, const ParamSet& params, const Vector& input) {
  Matrix row = input.transpose();
  return mlp_forward(spec, params, row).row(0).transpose();
}

std::vector<Var> bind_params(Tape& tape, const ParamSet& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& e : params) vars.push_back(tape.leaf(e.value));
  return vars;
}

std::vector<Var> bind_constants(Tape& tape, const ParamSet& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& e : params) vars.push_back(tape.constant(e.value));
  return vars;
}

Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var input) {
  if (params.size() != static_cast<std::size_t>(2 * spec.layer_count())) {
    throw ConfigError("mlp: wrong number of bound parameters");
  }
  if (input.cols() != spec.input_dim) {
    throw ConfigError("mlp: input has " + std::to_string(input.cols()) + " columns, expected " +
                      std::to_string(spec.input_dim));
  }
  Var h = input;
  for (int l = 0; l < spec.layer_count(); ++l) {
    h = add_row(matmul(h, params[static_cast<std::size_t>(2 * l)]),
                params[static_cast<std::size_t>(2 * l + 1)]);
    if (l < spec.hidden_layers) h = spec.activation == Activation::relu ? relu(h) : tanh(h);
  }
  return h;
}

GradSet collect_grads(const Tape& tape, std::span<const Var> vars) {
  GradSet g;
  g.reserve(vars.size());
  for (const Var& v : vars) g.push_back(tape.grad(v));
  return g;
}

ValueAndGrad value_and_grad(const LossFn& loss, const ParamSet& params) {
  Tape tape;
  auto vars = bind_params(tape, params);
  Var l = loss(tape, vars);
  if (l.value().size() != 1) throw ConfigError("grad: loss must be scalar");
  const double value = l.scalar();
  if (!std::isfinite(value)) throw NumericError("grad: non-finite loss");
  tape.backward(l);
  ValueAndGrad out{value, collect_grads(tape, vars)};
  for (std::size_t i = 0; i < out.grads.size(); ++i) {
    if (!out.grads[i].allFinite()) {
      throw NumericError("grad: non-finite gradient for '" + params[i].name + "'");
    }
  }
  return out;
}

GradSet grad(const LossFn& loss, const ParamSet& params) {
  return value_and_grad(loss, params).grads;
}

GradSet finite_difference_grad(const LossFn& loss, const ParamSet& params, double h) {
  ParamSet p = params;
  auto eval = [&]() {
    Tape tape;
    auto vars = bind_constants(tape, p);
    return loss(tape, vars).scalar();
  };
  GradSet g = zeros_like(params);
  for (std::size_t k = 0; k < p.size(); ++k) {
    Matrix& v = p[k].value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + h;
      const double fp = eval();
      v.data()[i] = orig - h;
      const double fm = eval();
      v.data()[i] = orig;
      g[k].data()[i] = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

double max_relative_error(const GradSet& a, const GradSet& b, double floor) {
  if (a.size() != b.size()) throw ConfigError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].rows() != b[k].rows() || a[k].cols() != b[k].cols()) {
      throw ConfigError("max_relative_error: shape mismatch");
    }
    for (Eigen::Index i = 0; i < a[k].size(); ++i) {
      const double x = a[k].data()[i];
      const double y = b[k].data()[i];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

AdamState AdamState::for_params(const ParamSet& params, double lr, double beta1, double beta2,
                                double eps) {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be > 0");
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_step(AdamState& state, ParamSet& params, const GradSet& grads) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ConfigError("adam: state/params/grads sizes differ");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k].rows() != params[k].value.rows() || grads[k].cols() != params[k].value.cols()) {
      throw ConfigError("adam: gradient shape mismatch for '" + params[k].name + "'");
    }
    if (!grads[k].allFinite()) {
      throw NumericError("adam: non-finite gradient for '" + params[k].name + "'");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k].cwiseAbs2();
    auto mhat = state.m[k].array() / bc1;
    auto vhat = state.v[k].array() / bc2;
    params[k].value.array() -= state.lr * mhat / (vhat.sqrt() + state.eps);
  }
}

void polyak_update(ParamSet& target, const ParamSet& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("polyak: tau must lie in [0, 1]");
  if (!target.same_layout(online)) throw ConfigError("polyak: target/online layouts differ");
  for (std::size_t k = 0; k < target.size(); ++k) {
    target[k].value = tau * target[k].value + (1.0 - tau) * online[k].value;
  }
}

}  // namespace psd::nn
