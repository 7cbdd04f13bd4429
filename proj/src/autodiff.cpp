#include "nri/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace nri::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), {}, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const Matrix& param) {
  if (auto it = param_ids_.find(&param); it != param_ids_.end()) return Var(this, it->second);
  nodes_.push_back(Node{param, Matrix(), {}, nullptr, true});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_ids_.emplace(&param, id);
  params_.emplace_back(&param, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::vector<int> parents, Backward backward) {
  bool needs = false;
  for (int p : parents) needs = needs || nodes_[static_cast<std::size_t>(p)].requires_grad;
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(parents), std::move(backward), needs});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw std::invalid_argument("backward on a foreign variable");
  if (output.rows() != 1 || output.cols() != 1) throw std::invalid_argument("backward needs a scalar output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(output.id(), Matrix::Ones(1, 1));
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

std::vector<std::pair<const Matrix*, const Matrix*>> Tape::parameter_gradients() const {
  std::vector<std::pair<const Matrix*, const Matrix*>> out;
  for (const auto& [ptr, id] : params_) {
    const Matrix& g = nodes_[static_cast<std::size_t>(id)].grad;
    if (g.size() != 0) out.emplace_back(ptr, &g);
  }
  return out;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) throw std::invalid_argument("variables from different tapes");
  return *a.tape();
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <typename F, typename D>
Var unary(Var a, F forward, D derivative) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr(forward);
  const int ia = a.id();
  return t.record(std::move(out), {ia}, [ia, derivative](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) d.data()[k] = derivative(x.data()[k], y.data()[k]);
    tp.accumulate(ia, tp.grad(self).cwiseProduct(d));
  });
}

}  // namespace

void linear_forward(const Matrix& x, const Matrix& w, const Matrix& b, Matrix& out) {
  const Eigen::Index rows = x.rows(), in = x.cols(), outc = w.cols();
  out.resize(rows, outc);
  const double* wp = w.data();
  for (Eigen::Index r = 0; r < rows; ++r) {
    double* o = out.data() + r * outc;
    for (Eigen::Index c = 0; c < outc; ++c) o[c] = 0.0;
    const double* xr = x.data() + r * in;
    for (Eigen::Index i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wr = wp + i * outc;
      for (Eigen::Index c = 0; c < outc; ++c) o[c] += xi * wr[c];
    }
    const double* bp = b.data();
    for (Eigen::Index c = 0; c < outc; ++c) o[c] += bp[c];
  }
}

Var linear(Var x, Var weight, Var bias) {
  Tape& t = same_tape(x, weight);
  same_tape(x, bias);
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols())
    throw std::invalid_argument("linear: shape mismatch");
  Matrix out;
  linear_forward(x.value(), weight.value(), bias.value(), out);
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return t.record(std::move(out), {ix, iw, ib}, [ix, iw, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ix)) tp.accumulate(ix, g * tp.value(iw).transpose());
    if (tp.requires_grad(iw)) tp.accumulate(iw, tp.value(ix).transpose() * g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, -tp.grad(self));
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape()->record(a.value() * s, {ia},
                          [ia, s](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self) * s); });
}

Var add_constant(Var a, const Matrix& c) {
  check_same_shape(a.value(), c, "add_constant");
  const int ia = a.id();
  return a.tape()->record(a.value() + c, {ia},
                          [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self)); });
}

Var one_minus(Var a) {
  const int ia = a.id();
  Matrix out = (1.0 - a.value().array()).matrix();
  return a.tape()->record(std::move(out), {ia},
                          [ia](Tape& tp, int self) { tp.accumulate(ia, -tp.grad(self)); });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var elu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0)));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_cols: variables from different tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return t.record(std::move(out), ids, [ids, widths](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(o, widths[k]));
      o += widths[k];
    }
  });
}

Var broadcast_rows(Var v, Eigen::Index rows) {
  if (v.rows() != 1) throw std::invalid_argument("broadcast_rows: input must have one row");
  const int iv = v.id();
  Matrix out = v.value().replicate(rows, 1);
  return v.tape()->record(std::move(out), {iv},
                          [iv](Tape& tp, int self) { tp.accumulate(iv, tp.grad(self).colwise().sum()); });
}

Var gather_rows(Var x, std::span<const int> index) {
  const Matrix& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= xv.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = xv.row(index[r]);
  }
  const int ix = x.id();
  std::vector<int> idx(index.begin(), index.end());
  return x.tape()->record(std::move(out), {ix}, [ix, idx = std::move(idx)](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Matrix dx = Matrix::Zero(tp.value(ix).rows(), g.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) dx.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    tp.accumulate(ix, dx);
  });
}

Var scatter_add_rows(Var x, std::span<const int> index, Eigen::Index rows) {
  const Matrix& xv = x.value();
  if (static_cast<Eigen::Index>(index.size()) != xv.rows())
    throw std::invalid_argument("scatter_add_rows: index length mismatch");
  Matrix out = Matrix::Zero(rows, xv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= rows) throw std::out_of_range("scatter_add_rows: index out of range");
    out.row(index[r]) += xv.row(static_cast<Eigen::Index>(r));
  }
  const int ix = x.id();
  std::vector<int> idx(index.begin(), index.end());
  return x.tape()->record(std::move(out), {ix}, [ix, idx = std::move(idx)](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Matrix dx(static_cast<Eigen::Index>(idx.size()), g.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) dx.row(static_cast<Eigen::Index>(r)) = g.row(idx[r]);
    tp.accumulate(ix, dx);
  });
}

Var mul_col(Var x, Var s) {
  Tape& t = same_tape(x, s);
  if (s.cols() != 1 || s.rows() != x.rows()) throw std::invalid_argument("mul_col: shape mismatch");
  Matrix out = x.value().array().colwise() * s.value().col(0).array();
  const int ix = x.id(), is = s.id();
  return t.record(std::move(out), {ix, is}, [ix, is](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ix)) {
      Matrix dx = g.array().colwise() * tp.value(is).col(0).array();
      tp.accumulate(ix, dx);
    }
    if (tp.requires_grad(is)) tp.accumulate(is, g.cwiseProduct(tp.value(ix)).rowwise().sum());
  });
}

Var column(Var x, Eigen::Index k) {
  if (k < 0 || k >= x.cols()) throw std::out_of_range("column: index out of range");
  const int ix = x.id();
  Matrix out = x.value().col(k);
  return x.tape()->record(std::move(out), {ix}, [ix, k](Tape& tp, int self) {
    Matrix dx = Matrix::Zero(tp.value(ix).rows(), tp.value(ix).cols());
    dx.col(k) = tp.grad(self).col(0);
    tp.accumulate(ix, dx);
  });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw std::out_of_range("slice_cols: range out of bounds");
  const int ix = x.id();
  Matrix out = x.value().middleCols(start, count);
  return x.tape()->record(std::move(out), {ix}, [ix, start, count](Tape& tp, int self) {
    Matrix dx = Matrix::Zero(tp.value(ix).rows(), tp.value(ix).cols());
    dx.middleCols(start, count) = tp.grad(self);
    tp.accumulate(ix, dx);
  });
}

namespace {

Matrix softmax_values(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(x(r, c) - m);
      z += out(r, c);
    }
    out.row(r) /= z;
  }
  return out;
}

}  // namespace

Var softmax_rows(Var x) {
  const int ix = x.id();
  return x.tape()->record(softmax_values(x.value()), {ix}, [ix](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).array() * (g.row(r).array() - dot);
    }
    tp.accumulate(ix, dx);
  });
}

Var log_softmax_rows(Var x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double m = xv.row(r).maxCoeff();
    const double lse = m + std::log((xv.row(r).array() - m).exp().sum());
    out.row(r) = xv.row(r).array() - lse;
  }
  const int ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double gs = g.row(r).sum();
      dx.row(r) = g.row(r).array() - y.row(r).array().exp() * gs;
    }
    tp.accumulate(ix, dx);
  });
}

Var straight_through_argmax(Var x) {
  const Matrix& xv = x.value();
  Matrix out = Matrix::Zero(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    Eigen::Index best = 0;
    xv.row(r).maxCoeff(&best);
    out(r, best) = 1.0;
  }
  const int ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape& tp, int self) { tp.accumulate(ix, tp.grad(self)); });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape(x, gain);
  same_tape(x, bias);
  const Matrix& xv = x.value();
  const Eigen::Index d = xv.cols();
  if (gain.cols() != d || bias.cols() != d) throw std::invalid_argument("layer_norm: shape mismatch");
  Matrix xhat(xv.rows(), d);
  Vector inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std[r];
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, int self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.requires_grad(ig)) tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
                    if (!tp.requires_grad(ix)) return;
                    const Matrix gh = g.array().rowwise() * tp.value(ig).row(0).array();
                    const double n = static_cast<double>(gh.cols());
                    Matrix dx(gh.rows(), gh.cols());
                    for (Eigen::Index r = 0; r < gh.rows(); ++r) {
                      const double m1 = gh.row(r).sum() / n;
                      const double m2 = gh.row(r).dot(xhat.row(r)) / n;
                      dx.row(r) = (gh.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std[r];
                    }
                    tp.accumulate(ix, dx);
                  });
}

void ParameterList::add(std::string name, Matrix* param) {
  if (index_.contains(param)) throw std::invalid_argument("parameter registered twice: " + name);
  index_.emplace(param, static_cast<int>(entries_.size()));
  entries_.emplace_back(std::move(name), param);
}

int ParameterList::index_of(const Matrix* param) const {
  auto it = index_.find(param);
  return it == index_.end() ? -1 : it->second;
}

std::size_t ParameterList::total_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.second->size());
  return n;
}

Gradients::Gradients(const ParameterList& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    grads_.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::accumulate(const Tape& tape, const ParameterList& params, double weight) {
  for (const auto& [ptr, grad] : tape.parameter_gradients()) {
    const int i = params.index_of(ptr);
    if (i < 0) continue;
    grads_[static_cast<std::size_t>(i)] += weight * *grad;
  }
}

double Gradients::norm() const {
  double s = 0.0;
  for (const auto& g : grads_) s += g.squaredNorm();
  return std::sqrt(s);
}

void Gradients::scale(double s) {
  for (auto& g : grads_) g *= s;
}

bool Gradients::all_finite() const {
  for (const auto& g : grads_)
    if (!g.allFinite()) return false;
  return true;
}

}  // namespace nri::ad
