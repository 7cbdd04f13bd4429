#pragma once

// Reverse-mode differentiation over row-major matrices.
//
// A Tape records every operation of one forward pass. Rows are the batch
// axis throughout (nodes or ordered node pairs), columns are features.
// Parameters enter through Tape::parameter and are deduplicated by address,
// so a weight reused across recurrent steps is a single leaf.

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nri/core.hpp"

namespace nri::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var constant(Matrix value);
  Var parameter(const Matrix& param);
  // Record a derived node. `backward` receives the tape and the node id and
  // must push the node's gradient into its parents via accumulate().
  Var record(Matrix value, std::vector<int> parents, Backward backward);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Gradient of the last backward() seed w.r.t. node `id`; zero-sized if unreached.
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  void accumulate(int id, const Matrix& g);

  // Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(Var output);

  // (parameter address, gradient) for every parameter leaf reached by backward().
  std::vector<std::pair<const Matrix*, const Matrix*>> parameter_gradients() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, int> param_ids_;
  std::vector<std::pair<const Matrix*, int>> params_;
};

// ---- operations -----------------------------------------------------------

// x [R x in] * W [in x out] + b [1 x out]. Each output row is accumulated in
// input-column order independently of R, so results do not depend on how
// many rows are batched together.
Var linear(Var x, Var weight, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_constant(Var a, const Matrix& c);
Var one_minus(Var a);
Var relu(Var a);
Var elu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var sum(Var a);
Var concat_cols(std::span<const Var> parts);
// v [1 x d] repeated into [rows x d].
Var broadcast_rows(Var v, Eigen::Index rows);
Var gather_rows(Var x, std::span<const int> index);
// out[index[r]] += x[r]; out has `rows` rows.
Var scatter_add_rows(Var x, std::span<const int> index, Eigen::Index rows);
// x [R x d] scaled row-wise by column vector s [R x 1].
Var mul_col(Var x, Var s);
Var column(Var x, Eigen::Index k);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
// Forward value is the one-hot argmax of x; gradient passes straight through.
Var straight_through_argmax(Var x);
// Per-row normalization to zero mean and unit variance with gain and bias [1 x d].
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Forward-only kernel used by linear(); exposed so oracles can share nothing
// but the accumulation order.
void linear_forward(const Matrix& x, const Matrix& weight, const Matrix& bias, Matrix& out);

// ---- parameters -------------------------------------------------------------

// Ordered, named view of every trainable matrix of a model.
class ParameterList {
 public:
  void add(std::string name, Matrix* param);
  std::size_t size() const { return entries_.size(); }
  Matrix& operator[](std::size_t i) { return *entries_[i].second; }
  const Matrix& operator[](std::size_t i) const { return *entries_[i].second; }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  // Index of `param`, or -1.
  int index_of(const Matrix* param) const;
  std::size_t total_scalars() const;

 private:
  std::vector<std::pair<std::string, Matrix*>> entries_;
  std::unordered_map<const Matrix*, int> index_;
};

// Gradient accumulator aligned with a ParameterList.
class Gradients {
 public:
  explicit Gradients(const ParameterList& params);
  void zero();
  // Adds every parameter gradient the tape produced, scaled by `weight`.
  void accumulate(const Tape& tape, const ParameterList& params, double weight = 1.0);
  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }
  double norm() const;
  void scale(double s);
  bool all_finite() const;

 private:
  std::vector<Matrix> grads_;
};

}  // namespace nri::ad
