#include "psd/autodiff.hpp"

#include "psd/errors.hpp"

#include <cmath>
#include <string>

namespace psd::nn {

namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ConfigError("autodiff: variable is not bound to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ConfigError("autodiff: operands live on different tapes");
  return tape_of(a);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string("autodiff: shape mismatch in ") + op + " (" +
                      std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                      std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

// Unary elementwise op whose derivative is a function of (input, output).
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr(fwd);
  const int ia = a.id;
  const bool rg = t.requires_grad(ia);
  return t.record(std::move(out), rg, [ia, deriv](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix d = x.binaryExpr(g, [&](double xv, double gv) { return gv * deriv(xv); });
    tp.accumulate(ia, std::move(d));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ConfigError("autodiff: scalar() on a non-1x1 value");
  return v(0, 0);
}

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return record(std::move(value), true, nullptr); }

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate(int id, Matrix&& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = std::move(g);
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ConfigError("autodiff: loss is not on this tape");
  if (nodes_[loss.id].value.size() != 1) throw ConfigError("autodiff: loss must be 1x1");
  if (!std::isfinite(nodes_[loss.id].value(0, 0))) throw NumericError("autodiff: non-finite loss");
  for (auto& n : nodes_) {
    n.has_grad = false;
  }
  accumulate(loss.id, Matrix::Ones(1, 1));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // The closure may push into earlier nodes only, so this reference stays valid.
    n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw ConfigError("autodiff: matmul inner dimension mismatch (" + std::to_string(a.cols()) +
                      " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  const bool rg = t.requires_grad(ia) || t.requires_grad(ib);
  return t.record(std::move(out), rg, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g * tp.value(ib).transpose()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(tp.value(ia).transpose() * g));
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ConfigError("autodiff: add_row expects a 1 x " + std::to_string(a.cols()) + " bias");
  }
  Matrix out = a.value().rowwise() + bias.value().row(0);
  const int ia = a.id, ib = bias.id;
  const bool rg = t.requires_grad(ia) || t.requires_grad(ib);
  return t.record(std::move(out), rg, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(g.colwise().sum()));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id, ib = b.id;
  const bool rg = t.requires_grad(ia) || t.requires_grad(ib);
  return t.record(a.value() + b.value(), rg, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id, ib = b.id;
  const bool rg = t.requires_grad(ia) || t.requires_grad(ib);
  return t.record(a.value() - b.value(), rg, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(-g));
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id, ib = b.id;
  const bool rg = t.requires_grad(ia) || t.requires_grad(ib);
  return t.record(a.value().cwiseProduct(b.value()), rg, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, Matrix(g.cwiseProduct(tp.value(ib))));
    if (tp.requires_grad(ib)) tp.accumulate(ib, Matrix(g.cwiseProduct(tp.value(ia))));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(a.value() * s, t.requires_grad(ia),
                  [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, Matrix(g * s)); });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  Matrix out = a.value().array() + s;
  return t.record(std::move(out), t.requires_grad(ia),
                  [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().tanh();
  const int ia = a.id;
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), t.requires_grad(ia), [ia, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    tp.accumulate(ia, Matrix(g.array() * (1.0 - y.array().square())));
  });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary(
      a,
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sqrt_floor(Var a, double floor) {
  return unary(
      a, [floor](double x) { return std::sqrt(x + floor); },
      [floor](double x) { return 0.5 / std::sqrt(x + floor); });
}

Var row_norm(Var a, double floor) {
  Tape& t = tape_of(a);
  Vector n = (a.value().rowwise().squaredNorm().array() + floor).sqrt();
  const int ia = a.id;
  Matrix out = n;
  return t.record(std::move(out), t.requires_grad(ia), [ia, floor](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    // d||x||/dx = x / ||x|| (with the floored norm in the denominator).
    Vector denom = (x.rowwise().squaredNorm().array() + floor).sqrt();
    Vector coef = g.col(0).cwiseQuotient(denom);
    tp.accumulate(ia, Matrix(x.array().colwise() * coef.array()));
  });
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().rowwise().sum();
  const int ia = a.id;
  const Eigen::Index cols = a.cols();
  return t.record(std::move(out), t.requires_grad(ia), [ia, cols](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix(g.col(0).replicate(1, cols)));
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  const Eigen::Index r = a.rows(), c = a.cols();
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  const int ia = a.id;
  return t.record(std::move(out), t.requires_grad(ia), [ia, r, c, n](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix(Matrix::Constant(r, c, g(0, 0) / n)));
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return t.record(std::move(out), t.requires_grad(ia), [ia, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix(Matrix::Constant(r, c, g(0, 0))));
  });
}

Var minimum(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "minimum");
  Matrix out = a.value().cwiseMin(b.value());
  const int ia = a.id, ib = b.id;
  const bool rg = t.requires_grad(ia) || t.requires_grad(ib);
  return t.record(std::move(out), rg, [ia, ib](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(ia);
    const Matrix& bv = tp.value(ib);
    Matrix ga = Matrix::Zero(g.rows(), g.cols());
    Matrix gb = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        if (av(i, j) <= bv(i, j)) {
          ga(i, j) = g(i, j);
        } else {
          gb(i, j) = g(i, j);
        }
      }
    }
    tp.accumulate(ia, std::move(ga));
    tp.accumulate(ib, std::move(gb));
  });
}

Var min_scalar(Var a, double c) {
  return unary(
      a, [c](double x) { return x < c ? x : c; }, [c](double x) { return x < c ? 1.0 : 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("autodiff: concat_cols of nothing");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    tape_of(p, parts[0]);
    if (p.rows() != rows) throw ConfigError("autodiff: concat_cols row mismatch");
    cols += p.cols();
    rg = rg || t.requires_grad(p.id);
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(out), rg, [ids, widths](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], Matrix(g.middleCols(off, widths[k])));
      off += widths[k];
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ConfigError("autodiff: slice_cols out of range");
  }
  Matrix out = a.value().middleCols(start, count);
  const int ia = a.id;
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return t.record(std::move(out), t.requires_grad(ia),
                  [ia, start, count, rows, cols](Tape& tp, const Matrix& g) {
                    Matrix full = Matrix::Zero(rows, cols);
                    full.middleCols(start, count) = g;
                    tp.accumulate(ia, std::move(full));
                  });
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Vector mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  Vector lse = shifted.array().exp().rowwise().sum().log();
  Matrix out = shifted.colwise() - lse;
  const int ia = a.id;
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), t.requires_grad(ia), [ia, self](Tape& tp, const Matrix& g) {
    Matrix sm = tp.value(self).array().exp();
    Vector gs = g.rowwise().sum();
    tp.accumulate(ia, Matrix(g - (sm.array().colwise() * gs.array()).matrix()));
  });
}

Var pick(Var a, std::span<const int> index) {
  Tape& t = tape_of(a);
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) {
    throw ConfigError("autodiff: pick index count must equal row count");
  }
  Matrix out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const int j = index[static_cast<std::size_t>(i)];
    if (j < 0 || j >= a.cols()) throw ConfigError("autodiff: pick index out of range");
    out(i, 0) = a.value()(i, j);
  }
  const int ia = a.id;
  std::vector<int> idx(index.begin(), index.end());
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return t.record(std::move(out), t.requires_grad(ia),
                  [ia, idx = std::move(idx), rows, cols](Tape& tp, const Matrix& g) {
                    Matrix full = Matrix::Zero(rows, cols);
                    for (Eigen::Index i = 0; i < rows; ++i) full(i, idx[static_cast<std::size_t>(i)]) = g(i, 0);
                    tp.accumulate(ia, std::move(full));
                  });
}

}  // namespace psd::nn
