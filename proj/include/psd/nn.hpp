#pragma once

// Parameter containers, multilayer perceptrons, Adam and Polyak averaging.

#include "psd/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace psd::nn {

struct ParamEntry {
  std::string name;
  std::vector<std::size_t> shape;  // rank 1 stored as 1 x n, rank 2 as r x c
  Matrix value;
};

/// Ordered, uniquely named collection of real arrays.
class ParamSet {
 public:
  ParamSet() = default;

  /// Adds an entry; throws ConfigError on duplicate names or a value/shape mismatch.
  void add(std::string name, std::vector<std::size_t> shape, Matrix value);
  /// Appends all entries of `other` (names must stay unique).
  void append(const ParamSet& other);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ParamEntry& operator[](std::size_t i) const { return entries_[i]; }
  ParamEntry& operator[](std::size_t i) { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  /// Index of `name`, or -1.
  int find(const std::string& name) const;
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);

  /// Total number of scalars.
  std::size_t scalar_count() const;
  /// Name of the first entry holding a NaN/Inf, or empty.
  std::string first_non_finite() const;
  /// Same names, same shapes, in the same order.
  bool same_layout(const ParamSet& other) const;

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<ParamEntry> entries_;
};

/// One gradient array per ParamSet entry, same order and shapes.
using GradSet = std::vector<Matrix>;

GradSet zeros_like(const ParamSet& params);

// ---- MLP ------------------------------------------------------------------

enum class Activation { relu, tanh };

struct MlpSpec {
  int input_dim = 1;
  int hidden_layers = 2;
  int hidden_units = 256;
  int output_dim = 1;
  Activation activation = Activation::relu;

  void validate() const;
  int layer_count() const { return hidden_layers + 1; }
};

/// Uniform fan-in initialisation, zero biases. Entries are `<prefix>l<i>.w` (in x out)
/// and `<prefix>l<i>.b` (1 x out).
ParamSet init_mlp(const MlpSpec& spec, std::mt19937_64& rng, const std::string& prefix = "");

/// Batched forward pass without recording: input is (batch x input_dim).
Matrix mlp_forward(const MlpSpec& spec, const ParamSet& params, const Matrix& input);
/// Single-sample forward pass.
Vector mlp_forward(const MlpSpec& spec, const ParamSet& params, const Vector& input);

/// Places every entry of `params` on the tape as a differentiable leaf.
std::vector<Var> bind_params(Tape& tape, const ParamSet& params);
/// Places every entry of `params` on the tape as constants.
std::vector<Var> bind_constants(Tape& tape, const ParamSet& params);
/// Recorded forward pass using vars returned by bind_params/bind_constants.
Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var input);

/// Gradient of each bound parameter after tape.backward().
GradSet collect_grads(const Tape& tape, std::span<const Var> vars);

// ---- generic gradient -----------------------------------------------------

using LossFn = std::function<Var(Tape&, std::span<const Var>)>;

struct ValueAndGrad {
  double value = 0.0;
  GradSet grads;
};

/// Evaluates `loss` with `params` bound as leaves and differentiates it.
/// Throws NumericError naming the offending entry on non-finite loss or gradient.
ValueAndGrad value_and_grad(const LossFn& loss, const ParamSet& params);
GradSet grad(const LossFn& loss, const ParamSet& params);

/// Central finite differences of `loss` w.r.t. every scalar of `params`.
GradSet finite_difference_grad(const LossFn& loss, const ParamSet& params, double h = 1e-4);

/// max over entries of |a - b| / max(|a|, |b|, floor).
double max_relative_error(const GradSet& a, const GradSet& b, double floor = 1e-6);

// ---- optimisation ---------------------------------------------------------

struct AdamState {
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ParamSet& params, double lr, double beta1 = 0.9,
                              double beta2 = 0.999, double eps = 1e-8);
};

/// Bias-corrected Adam update applied in place; increments state.step.
void adam_step(AdamState& state, ParamSet& params, const GradSet& grads);

/// target <- tau * target + (1 - tau) * online, element-wise.
void polyak_update(ParamSet& target, const ParamSet& online, double tau);

}  // namespace psd::nn
