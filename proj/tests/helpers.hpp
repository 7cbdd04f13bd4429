#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nri/autodiff.hpp"
#include "nri/core.hpp"
#include "nri/random.hpp"

namespace testutil {

using nri::Matrix;

// Window with standard-normal values and globals.
inline nri::NodeWindow random_window(std::size_t p, std::size_t q, std::size_t n, std::size_t c, std::size_t cu,
                                     std::uint64_t seed) {
  nri::Rng rng(seed);
  nri::NodeWindow w;
  w.burn_in = nri::Tensor3(p, n, c);
  w.target = nri::Tensor3(q, n, c);
  for (double& v : w.burn_in.data()) v = rng.normal();
  for (double& v : w.target.data()) v = rng.normal();
  w.global_track = Matrix(static_cast<Eigen::Index>(p + q), static_cast<Eigen::Index>(cu));
  for (Eigen::Index k = 0; k < w.global_track.size(); ++k) w.global_track.data()[k] = rng.normal();
  return w;
}

// Adds N(0, scale^2) to every parameter so zero-initialized layers take part.
inline void perturb(nri::ad::ParameterList& params, std::uint64_t seed, double scale = 0.3) {
  nri::Rng rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Eigen::Index k = 0; k < params[i].size(); ++k) params[i].data()[k] += scale * rng.normal();
}

inline std::vector<std::size_t> random_permutation(std::size_t n, nri::Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  return perm;
}

// Node k of the result is node perm[k] of the input.
inline nri::Tensor3 permute_nodes(const nri::Tensor3& x, const std::vector<std::size_t>& perm) {
  nri::Tensor3 out(x.dim0(), x.dim1(), x.dim2());
  for (std::size_t t = 0; t < x.dim0(); ++t)
    for (std::size_t k = 0; k < x.dim1(); ++k)
      for (std::size_t f = 0; f < x.dim2(); ++f) out(t, k, f) = x(t, perm[k], f);
  return out;
}

inline nri::NodeWindow permute_window(const nri::NodeWindow& w, const std::vector<std::size_t>& perm) {
  nri::NodeWindow out = w;
  out.burn_in = permute_nodes(w.burn_in, perm);
  out.target = permute_nodes(w.target, perm);
  return out;
}

// Pair rows [pairs x K] re-indexed so that row (a, b) of the result is row
// (perm[a], perm[b]) of the input.
inline Matrix permute_pairs(const Matrix& rows, std::size_t n, const std::vector<std::size_t>& perm) {
  const nri::EdgeIndex idx = nri::EdgeIndex::fully_connected(n);
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b) out.row(static_cast<Eigen::Index>(idx.pair(a, b))) = rows.row(static_cast<Eigen::Index>(idx.pair(perm[a], perm[b])));
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline double max_abs_diff(const nri::Tensor3& a, const nri::Tensor3& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace testutil
