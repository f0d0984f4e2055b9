#pragma once

// Matrix-valued reverse-mode differentiation.
//
// Values are dense row-batched matrices (one sample per row). A Tape records
// every operation; Tape::backward walks the record in reverse and accumulates
// gradients into each node that (transitively) depends on a parameter leaf.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace psd::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf that receives a gradient (a parameter or a differentiated input).
  Var leaf(Matrix value);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(Var loss);

  /// Gradient accumulated at `v`; zeros if nothing flowed there.
  Matrix grad(Var v) const;

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;
  Var record(Matrix value, bool requires_grad, Backward backward);
  void accumulate(int id, const Matrix& g);
  void accumulate(int id, Matrix&& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
/// a (n x m) + bias (1 x m) broadcast over rows.
Var add_row(Var a, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
/// log(1 + exp(a)), numerically stable.
Var softplus(Var a);
Var square(Var a);
/// sqrt(a + floor), elementwise.
Var sqrt_floor(Var a, double floor);
/// Per-row Euclidean norm with `floor` added under the root: (n x m) -> (n x 1).
Var row_norm(Var a, double floor = 1e-12);
/// (n x m) -> (n x 1).
Var row_sum(Var a);
/// Mean of all entries -> 1x1.
Var mean(Var a);
/// Sum of all entries -> 1x1.
Var sum(Var a);
/// Elementwise min(a, b); ties send the gradient to `a`.
Var minimum(Var a, Var b);
/// Elementwise min(a, c) with a constant c.
Var min_scalar(Var a, double c);
/// Elementwise clamp; zero gradient outside [lo, hi].
Var clamp(Var a, double lo, double hi);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Row-wise log-softmax.
Var log_softmax(Var a);
/// Picks column index[i] from row i: (n x m) -> (n x 1).
Var pick(Var a, std::span<const int> index);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }

}  // namespace psd::nn
