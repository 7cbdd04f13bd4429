#include "nri/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "nri/random.hpp"

namespace nri {

Metrics metrics(std::span<const double> preds, std::span<const double> targets, double eps) {
  if (preds.size() != targets.size()) throw std::invalid_argument("metrics: shape mismatch");
  if (preds.empty()) throw std::invalid_argument("metrics: empty input");
  const double n = static_cast<double>(preds.size());
  double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0;
  std::size_t ape_count = 0;
  double mp = 0.0, mt = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const double e = preds[k] - targets[k];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (std::abs(targets[k]) > eps) {
      ape_sum += std::abs(e / targets[k]);
      ++ape_count;
    }
    mp += preds[k];
    mt += targets[k];
  }
  mp /= n;
  mt /= n;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const double a = preds[k] - mp, b = targets[k] - mt;
    cov += a * b;
    vp += a * a;
    vt += b * b;
  }
  Metrics m;
  m.count = preds.size();
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (ape_count > 0) m.mape_percent = 100.0 * ape_sum / static_cast<double>(ape_count);
  if (vp > 0.0 && vt > 0.0) m.pcc = std::clamp(cov / std::sqrt(vp * vt), -1.0, 1.0);
  return m;
}

Metrics metrics(const Tensor3& preds, const Tensor3& targets, double eps) {
  if (preds.dim0() != targets.dim0() || preds.dim1() != targets.dim1() || preds.dim2() != targets.dim2())
    throw std::invalid_argument("metrics: shape mismatch");
  return metrics(std::span<const double>(preds.data()), std::span<const double>(targets.data()), eps);
}

void EdgeProbSeries::push(const Matrix& dense, std::int64_t timestamp) {
  const auto n = static_cast<std::size_t>(dense.rows());
  if (dense.rows() != dense.cols()) throw std::invalid_argument("edge probabilities must be square");
  if (!probs.empty() && n != probs.dim1()) throw std::invalid_argument("node count changed within series");
  Tensor3 grown(probs.dim0() + 1, n, n);
  std::copy(probs.data().begin(), probs.data().end(), grown.data().begin());
  Matrix m = dense;
  m.diagonal().setZero();
  grown.set_plane(probs.dim0(), m);
  probs = std::move(grown);
  window_timestamps.push_back(timestamp);
}

std::vector<double> mean_edge_probability(const EdgeProbSeries& s) {
  const std::size_t n = s.num_nodes();
  std::vector<double> out;
  if (n < 2) return std::vector<double>(s.num_windows(), 0.0);
  for (std::size_t w = 0; w < s.num_windows(); ++w) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) sum += s.probs(w, i, j);
    out.push_back(sum / static_cast<double>(n * (n - 1)));
  }
  return out;
}

std::vector<NodeProfile> node_in_out_profiles(const EdgeProbSeries& s) {
  const std::size_t n = s.num_nodes(), t = s.num_windows();
  std::vector<NodeProfile> out(n);
  if (n < 2 || t == 0) return out;
  for (std::size_t w = 0; w < t; ++w)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        out[j].ingoing += s.probs(w, i, j);
        out[i].outgoing += s.probs(w, i, j);
      }
  const double denom = static_cast<double>(t * (n - 1));
  for (auto& p : out) {
    p.ingoing /= denom;
    p.outgoing /= denom;
  }
  return out;
}

std::vector<DirectedEdge> threshold_edges(const Matrix& probs, double theta, std::optional<std::size_t> focal) {
  std::vector<DirectedEdge> out;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      if (i == j || !(probs(i, j) > theta)) continue;
      DirectedEdge e{static_cast<std::size_t>(i), static_cast<std::size_t>(j), probs(i, j), ""};
      if (focal) {
        if (e.receiver == *focal)
          e.direction = "in";
        else if (e.sender == *focal)
          e.direction = "out";
        else
          continue;
      }
      out.push_back(e);
    }
  return out;
}

namespace {

double sq_dist(const Matrix& a, Eigen::Index ra, const Matrix& b, Eigen::Index rb) {
  return (a.row(ra) - b.row(rb)).squaredNorm();
}

Clustering lloyd(const Matrix& x, std::size_t k, Rng& rng, std::size_t max_iter) {
  const Eigen::Index n = x.rows();
  Matrix centers(static_cast<Eigen::Index>(k), x.cols());
  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  auto pick = static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(n));
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) total += d2[static_cast<std::size_t>(r)];
      if (total > 0.0) {
        double u = rng.uniform() * total;
        pick = n - 1;
        for (Eigen::Index r = 0; r < n; ++r) {
          u -= d2[static_cast<std::size_t>(r)];
          if (u <= 0.0 && d2[static_cast<std::size_t>(r)] > 0.0) {
            pick = r;
            break;
          }
        }
      } else {
        std::vector<Eigen::Index> free;
        for (Eigen::Index r = 0; r < n; ++r)
          if (!chosen[static_cast<std::size_t>(r)]) free.push_back(r);
        pick = free[rng.next() % free.size()];
      }
    }
    chosen[static_cast<std::size_t>(pick)] = true;
    centers.row(static_cast<Eigen::Index>(c)) = x.row(pick);
    for (Eigen::Index r = 0; r < n; ++r)
      d2[static_cast<std::size_t>(r)] =
          std::min(d2[static_cast<std::size_t>(r)], sq_dist(x, r, centers, static_cast<Eigen::Index>(c)));
  }

  Clustering out;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index r = 0; r < n; ++r) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(x, r, centers, static_cast<Eigen::Index>(c));
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      if (out.labels[static_cast<std::size_t>(r)] != best) {
        out.labels[static_cast<std::size_t>(r)] = best;
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index r = 0; r < n; ++r) {
      sums.row(out.labels[static_cast<std::size_t>(r)]) += x.row(r);
      ++counts[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(r)])];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its center.
      Eigen::Index far = 0;
      double fd = -1.0;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double d = sq_dist(x, r, centers, out.labels[static_cast<std::size_t>(r)]);
        if (d > fd) {
          fd = d;
          far = r;
        }
      }
      centers.row(static_cast<Eigen::Index>(c)) = x.row(far);
      out.labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
      changed = true;
    }
    if (!changed) break;
  }
  out.inertia = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) out.inertia += sq_dist(x, r, centers, out.labels[static_cast<std::size_t>(r)]);
  return out;
}

}  // namespace

Clustering kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts, std::size_t max_iter) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (k > static_cast<std::size_t>(x.rows())) throw std::invalid_argument("k exceeds the number of nodes");
  Clustering best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    Rng rng(mix_seed(seed, r));
    Clustering c = lloyd(x, k, rng, max_iter);
    if (c.inertia < best.inertia) best = std::move(c);
  }
  return best;
}

Matrix cluster_features(ClusterFeatures mode, const EdgeProbSeries* series, const Tensor3* values) {
  if (mode == ClusterFeatures::learned_edges) {
    if (!series || series->num_windows() == 0) throw std::invalid_argument("learned-edge clustering needs an edge series");
    const std::size_t n = series->num_nodes(), t = series->num_windows();
    Matrix f = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * t));
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (std::size_t w = 0; w < t; ++w)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          f(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(w)) += series->probs(w, i, j) / denom;
          f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t + w)) += series->probs(w, i, j) / denom;
        }
    return f;
  }
  if (!values || values->empty()) throw std::invalid_argument("observed-series clustering needs node values");
  const std::size_t t = values->dim0(), n = values->dim1(), c = values->dim2();
  Matrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t * c));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t k = 0; k < c; ++k)
        f(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(s * c + k)) = (*values)(s, j, k);
  return f;
}

Clustering cluster_nodes(ClusterFeatures mode, const EdgeProbSeries* series, const Tensor3* values, std::size_t k,
                         std::uint64_t seed) {
  return kmeans(cluster_features(mode, series, values), k, seed);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("labelings differ in length");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ca[a[i]] += 1;
    cb[b[i]] += 1;
  }
  auto c2 = [](double v) { return v * (v - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [_, v] : joint) index += c2(v);
  for (const auto& [_, v] : ca) sa += c2(v);
  for (const auto& [_, v] : cb) sb += c2(v);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = total > 0 ? sa * sb / total : 0.0;
  const double max_index = (sa + sb) / 2;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace nri
