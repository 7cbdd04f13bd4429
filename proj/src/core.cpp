#include "nri/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace nri {

Tensor3 Tensor3::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > d0_) throw std::out_of_range("Tensor3::slice past end");
  Tensor3 out(count, d1_, d2_);
  const std::size_t plane = d1_ * d2_;
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * plane),
            data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * plane), out.data_.begin());
  return out;
}

Matrix Tensor3::plane(std::size_t a) const {
  Matrix m(d1_, d2_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(a * d1_ * d2_), d1_ * d2_, m.data());
  return m;
}

void Tensor3::set_plane(std::size_t a, const Matrix& m) {
  if (static_cast<std::size_t>(m.rows()) != d1_ || static_cast<std::size_t>(m.cols()) != d2_)
    throw std::invalid_argument("Tensor3::set_plane shape mismatch");
  std::copy_n(m.data(), d1_ * d2_, data_.begin() + static_cast<std::ptrdiff_t>(a * d1_ * d2_));
}

void SeriesDataset::validate() const {
  if (static_cast<std::size_t>(globals.rows()) != values.dim0())
    throw DataError("values and globals disagree on the number of time steps");
  if (!timestamps.empty() && timestamps.size() != values.dim0())
    throw DataError("timestamps and values disagree on the number of time steps");
  if (node_ids.size() != values.dim1()) throw DataError("node_ids length differs from node count");
  std::set<std::string> seen(node_ids.begin(), node_ids.end());
  if (seen.size() != node_ids.size()) throw DataError("node ids are not unique");
  for (double v : values.data())
    if (!std::isfinite(v)) throw DataError("dataset contains non-finite values");
  if (!globals.allFinite()) throw DataError("global track contains non-finite values");
}

Matrix NodeWindow::observation(std::size_t t) const {
  const std::size_t p = burn_in_steps();
  return t < p ? burn_in.plane(t) : target.plane(t - p);
}

std::vector<NodeWindow> build_windows(const SeriesDataset& dataset, std::size_t burn_in,
                                      std::size_t horizon, std::size_t stride) {
  if (burn_in < 1 || horizon < 1) throw std::invalid_argument("P and Q must be at least 1");
  if (stride < 1) throw std::invalid_argument("stride must be at least 1");
  const std::size_t total = dataset.num_steps();
  const std::size_t span = burn_in + horizon;
  if (total < span) {
    std::ostringstream msg;
    msg << "insufficient history: series has " << total << " steps, window needs " << span;
    throw DataError(msg.str());
  }
  const std::size_t count = (total - span) / stride + 1;
  std::vector<NodeWindow> windows;
  windows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t origin = k * stride;
    NodeWindow w;
    w.burn_in = dataset.values.slice(origin, burn_in);
    w.target = dataset.values.slice(origin + burn_in, horizon);
    w.global_track = dataset.globals.middleRows(static_cast<Eigen::Index>(origin),
                                                static_cast<Eigen::Index>(span));
    w.origin_index = origin;
    windows.push_back(std::move(w));
  }
  return windows;
}

SplitSizes split_sizes(std::size_t n, SplitFractions f) {
  if (f.train <= 0 || f.val <= 0 || f.test <= 0)
    throw std::invalid_argument("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  if (n < 3) throw DataError("need at least 3 windows to split into train/val/test");
  // Small epsilon so that exact products like 0.1 * 10 floor to 1.
  auto part = [n](double frac) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(frac * n + 1e-9)));
  };
  SplitSizes s;
  s.val = part(f.val);
  s.test = part(f.test);
  if (s.val + s.test >= n) throw DataError("too few windows for the requested split");
  s.train = n - s.val - s.test;
  return s;
}

WindowSplit split_dataset(std::vector<NodeWindow> windows, SplitFractions fractions) {
  const SplitSizes s = split_sizes(windows.size(), fractions);
  WindowSplit out;
  auto it = std::make_move_iterator(windows.begin());
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(s.train));
  it += static_cast<std::ptrdiff_t>(s.train);
  out.val.assign(it, it + static_cast<std::ptrdiff_t>(s.val));
  it += static_cast<std::ptrdiff_t>(s.val);
  out.test.assign(it, std::make_move_iterator(windows.end()));
  return out;
}

Normalizer::Normalizer(Kind kind, Vector mean, Vector scale, std::vector<bool> degenerate)
    : kind_(kind), mean_(std::move(mean)), scale_(std::move(scale)), degenerate_(std::move(degenerate)) {
  if (mean_.size() != scale_.size()) throw std::invalid_argument("normalizer mean/scale size mismatch");
  for (Eigen::Index i = 0; i < scale_.size(); ++i)
    if (!(scale_[i] > 0)) throw std::invalid_argument("normalizer scale must be strictly positive");
  degenerate_.resize(static_cast<std::size_t>(mean_.size()), false);
}

Normalizer Normalizer::identity(std::size_t features) {
  return Normalizer(Kind::none, Vector::Zero(static_cast<Eigen::Index>(features)),
                    Vector::Ones(static_cast<Eigen::Index>(features)));
}

Normalizer Normalizer::fit(const Tensor3& train) {
  if (train.empty()) throw std::invalid_argument("cannot fit a normalizer on empty data");
  const std::size_t c = train.dim2();
  const double count = static_cast<double>(train.dim0() * train.dim1());
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(c));
  Vector scale = Vector::Ones(static_cast<Eigen::Index>(c));
  std::vector<bool> degenerate(c, false);
  for (std::size_t f = 0; f < c; ++f) {
    double sum = 0.0;
    for (std::size_t t = 0; t < train.dim0(); ++t)
      for (std::size_t n = 0; n < train.dim1(); ++n) sum += train(t, n, f);
    const double m = sum / count;
    double sq = 0.0;
    for (std::size_t t = 0; t < train.dim0(); ++t)
      for (std::size_t n = 0; n < train.dim1(); ++n) {
        const double d = train(t, n, f) - m;
        sq += d * d;
      }
    const double sd = std::sqrt(sq / count);
    mean[static_cast<Eigen::Index>(f)] = m;
    if (sd > 1e-12 * std::max(1.0, std::abs(m))) {
      scale[static_cast<Eigen::Index>(f)] = sd;
    } else {
      degenerate[f] = true;
      spdlog::warn("feature {} has zero variance on the training split; using scale 1", f);
    }
  }
  return Normalizer(Kind::standardize, mean, scale, degenerate);
}

double Normalizer::apply(double x, std::size_t f) const {
  if (kind_ == Kind::none) return x;
  const auto i = static_cast<Eigen::Index>(f);
  return (x - mean_[i]) / scale_[i];
}

double Normalizer::invert(double x, std::size_t f) const {
  if (kind_ == Kind::none) return x;
  const auto i = static_cast<Eigen::Index>(f);
  return x * scale_[i] + mean_[i];
}

Tensor3 Normalizer::apply(const Tensor3& x) const {
  Tensor3 out = x;
  for (std::size_t a = 0; a < x.dim0(); ++a)
    for (std::size_t b = 0; b < x.dim1(); ++b)
      for (std::size_t f = 0; f < x.dim2(); ++f) out(a, b, f) = apply(x(a, b, f), f);
  return out;
}

Tensor3 Normalizer::invert(const Tensor3& x) const {
  Tensor3 out = x;
  for (std::size_t a = 0; a < x.dim0(); ++a)
    for (std::size_t b = 0; b < x.dim1(); ++b)
      for (std::size_t f = 0; f < x.dim2(); ++f) out(a, b, f) = invert(x(a, b, f), f);
  return out;
}

SeriesDataset Normalizer::apply(const SeriesDataset& d) const {
  SeriesDataset out = d;
  out.values = apply(d.values);
  return out;
}

AdjacencyMatrix::AdjacencyMatrix(std::size_t n, std::vector<std::string> node_ids)
    : entries_(Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))),
      node_ids_(std::move(node_ids)) {}

AdjacencyMatrix::AdjacencyMatrix(Matrix entries, std::vector<std::string> node_ids)
    : entries_(std::move(entries)), node_ids_(std::move(node_ids)) {
  if (entries_.rows() != entries_.cols()) throw std::invalid_argument("adjacency must be square");
  if (!node_ids_.empty() && node_ids_.size() != static_cast<std::size_t>(entries_.rows()))
    throw std::invalid_argument("adjacency node_ids length mismatch");
  for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
    for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
      const double v = entries_(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("adjacency entries must lie in [0, 1]");
    }
    entries_(i, i) = 0.0;
  }
}

AdjacencyMatrix AdjacencyMatrix::empty(std::size_t n) { return AdjacencyMatrix(n); }

AdjacencyMatrix AdjacencyMatrix::full(std::size_t n) {
  Matrix m = Matrix::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  return AdjacencyMatrix(std::move(m));
}

void AdjacencyMatrix::set(std::size_t i, std::size_t j, double v) {
  if (i == j) return;
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("adjacency entries must lie in [0, 1]");
  entries_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
}

bool AdjacencyMatrix::is_binary() const {
  return (entries_.array() == 0.0 || entries_.array() == 1.0).all();
}

bool AdjacencyMatrix::is_symmetric(double tol) const {
  return ((entries_ - entries_.transpose()).array().abs() <= tol).all();
}

std::size_t AdjacencyMatrix::edge_count() const {
  return static_cast<std::size_t>((entries_.array() > 0.5).count());
}

EdgeIndex EdgeIndex::fully_connected(std::size_t n) {
  EdgeIndex idx;
  idx.num_nodes = n;
  if (n < 2) return idx;
  idx.senders.reserve(n * (n - 1));
  idx.receivers.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        idx.senders.push_back(static_cast<int>(i));
        idx.receivers.push_back(static_cast<int>(j));
      }
  return idx;
}

}  // namespace nri
