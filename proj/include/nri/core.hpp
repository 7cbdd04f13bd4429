#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nri {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Dense row-major [d0 x d1 x d2] array. Used for [time x node x feature] data.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0)
      : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {}

  std::size_t dim0() const { return d0_; }
  std::size_t dim1() const { return d1_; }
  std::size_t dim2() const { return d2_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t a, std::size_t b, std::size_t c) {
    return data_[(a * d1_ + b) * d2_ + c];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t c) const {
    return data_[(a * d1_ + b) * d2_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Copy of [begin, begin+count) along the first axis.
  Tensor3 slice(std::size_t begin, std::size_t count) const;
  // The [d1 x d2] plane at first-axis index a.
  Matrix plane(std::size_t a) const;
  void set_plane(std::size_t a, const Matrix& m);

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> data_;
};

// Node features over time plus the global-feature track.
struct SeriesDataset {
  Tensor3 values;                   // [T x N x c]
  Matrix globals;                   // [T x c_u]
  std::vector<std::int64_t> timestamps;  // unix seconds, UTC
  std::vector<std::string> node_ids;

  std::size_t num_steps() const { return values.dim0(); }
  std::size_t num_nodes() const { return values.dim1(); }
  std::size_t num_features() const { return values.dim2(); }
  std::size_t num_globals() const { return static_cast<std::size_t>(globals.cols()); }

  // Throws DataError if shapes disagree, ids repeat or values are not finite.
  void validate() const;
};

struct NodeWindow {
  Tensor3 burn_in;       // [P x N x c]
  Tensor3 target;        // [Q x N x c]
  Matrix global_track;   // [(P+Q) x c_u]
  std::size_t origin_index = 0;

  std::size_t burn_in_steps() const { return burn_in.dim0(); }
  std::size_t target_steps() const { return target.dim0(); }
  std::size_t num_nodes() const { return burn_in.dim1(); }
  std::size_t num_features() const { return burn_in.dim2(); }
  std::size_t num_globals() const { return static_cast<std::size_t>(global_track.cols()); }
  // Observation at window-relative index t in [0, P+Q).
  Matrix observation(std::size_t t) const;
};

std::vector<NodeWindow> build_windows(const SeriesDataset& dataset, std::size_t burn_in,
                                      std::size_t horizon, std::size_t stride);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct WindowSplit {
  std::vector<NodeWindow> train, val, test;
};

// Chronological split; sizes are floor(f * n) for val and test, remainder to train.
WindowSplit split_dataset(std::vector<NodeWindow> windows, SplitFractions fractions = {});
// Number of windows in each split without materializing them.
struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(std::size_t num_windows, SplitFractions fractions = {});

class Normalizer {
 public:
  enum class Kind { standardize, none };

  Normalizer() = default;
  Normalizer(Kind kind, Vector mean, Vector scale, std::vector<bool> degenerate = {});

  // Per-feature population mean and standard deviation over [T x N] entries.
  static Normalizer fit(const Tensor3& train_values);
  static Normalizer identity(std::size_t features);

  Kind kind() const { return kind_; }
  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }
  // Features whose variance was zero and got scale 1.
  const std::vector<bool>& degenerate() const { return degenerate_; }
  std::size_t num_features() const { return static_cast<std::size_t>(mean_.size()); }

  Tensor3 apply(const Tensor3& x) const;
  Tensor3 invert(const Tensor3& x) const;
  double apply(double x, std::size_t feature) const;
  double invert(double x, std::size_t feature) const;
  SeriesDataset apply(const SeriesDataset& d) const;

 private:
  Kind kind_ = Kind::none;
  Vector mean_;
  Vector scale_;
  std::vector<bool> degenerate_;
};

// [N x N] adjacency with zero diagonal. Entries are 0/1 for heuristic graphs
// or probabilities in [0, 1].
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(std::size_t n, std::vector<std::string> node_ids = {});
  AdjacencyMatrix(Matrix entries, std::vector<std::string> node_ids = {});

  static AdjacencyMatrix empty(std::size_t n);
  static AdjacencyMatrix full(std::size_t n);

  std::size_t size() const { return static_cast<std::size_t>(entries_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
  void set(std::size_t i, std::size_t j, double v);
  const Matrix& entries() const { return entries_; }
  const std::vector<std::string>& node_ids() const { return node_ids_; }

  bool is_binary() const;
  bool is_symmetric(double tol = 0.0) const;
  std::size_t edge_count() const;  // entries > 0.5

 private:
  Matrix entries_;
  std::vector<std::string> node_ids_;
};

// Ordered pairs (sender i, receiver j), i != j, sender-major.
// Pair index = i * (N-1) + (j < i ? j : j - 1).
struct EdgeIndex {
  std::size_t num_nodes = 0;
  std::vector<int> senders;
  std::vector<int> receivers;

  static EdgeIndex fully_connected(std::size_t n);
  std::size_t num_edges() const { return senders.size(); }
  std::size_t pair(std::size_t i, std::size_t j) const {
    return i * (num_nodes - 1) + (j < i ? j : j - 1);
  }
};

}  // namespace nri
