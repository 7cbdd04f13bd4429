#include "nri/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nri/random.hpp"

namespace nri {

AdjacencyMatrix random_adjacency(std::size_t n, double density, std::uint64_t seed) {
  if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("edge density must lie in [0, 1]");
  Rng rng(mix_seed(seed, 0xad1));
  AdjacencyMatrix adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && rng.uniform() < density) adj.set(i, j, 1.0);
  return adj;
}

SyntheticData generate(const SyntheticSpec& spec) {
  const std::size_t n = spec.nodes;
  if (n < 1 || spec.steps < 1) throw std::invalid_argument("synthetic spec needs nodes and steps");
  AdjacencyMatrix adj = spec.adjacency.size() == 0 ? random_adjacency(n, spec.edge_density, spec.seed) : spec.adjacency;
  if (adj.size() != n) throw std::invalid_argument("synthetic adjacency size differs from node count");
  if (!adj.is_binary()) throw std::invalid_argument("synthetic adjacency must be binary");
  std::size_t max_in = 0;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t in = 0;
    for (std::size_t i = 0; i < n; ++i) in += adj(i, j) > 0.5 ? 1 : 0;
    max_in = std::max(max_in, in);
  }
  if (spec.alpha < 0 || spec.alpha * static_cast<double>(max_in) >= 1.0) {
    std::ostringstream msg;
    msg << "unstable synthetic dynamics: alpha * max in-degree = " << spec.alpha * static_cast<double>(max_in)
        << " (must be < 1)";
    throw std::invalid_argument(msg.str());
  }

  std::vector<std::string> ids;
  for (std::size_t j = 0; j < n; ++j) ids.push_back("n" + std::to_string(j));
  SyntheticData out;
  SeriesDataset& d = out.dataset;
  d.values = Tensor3(spec.steps, n, 1);
  d.globals = Matrix(static_cast<Eigen::Index>(spec.steps), 2);
  d.node_ids = ids;
  Rng rng(mix_seed(spec.seed, 0x5eed));
  std::vector<double> x(n), next(n);
  for (auto& v : x) v = spec.initial_spread * rng.normal();
  for (std::size_t t = 0; t < spec.steps; ++t) {
    const double phase = spec.omega * static_cast<double>(t);
    d.globals(static_cast<Eigen::Index>(t), 0) = std::sin(phase);
    d.globals(static_cast<Eigen::Index>(t), 1) = std::cos(phase);
    d.timestamps.push_back(spec.start_time + static_cast<std::int64_t>(t) * spec.step_seconds);
    for (std::size_t j = 0; j < n; ++j) d.values(t, j, 0) = x[j];
    for (std::size_t j = 0; j < n; ++j) {
      double coupling = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (adj(i, j) > 0.5) coupling += x[i] - x[j];
      const double noise = spec.eta > 0 ? spec.eta * rng.normal() : 0.0;
      next[j] = x[j] + spec.alpha * coupling + spec.beta * std::sin(phase) + noise;
    }
    std::swap(x, next);
  }
  out.truth = AdjacencyMatrix(adj.entries(), ids);
  return out;
}

SeriesDataset make_ramp(std::size_t nodes, std::size_t steps, double slope, double intercept) {
  SeriesDataset d;
  d.values = Tensor3(steps, nodes, 1);
  d.globals = Matrix(static_cast<Eigen::Index>(steps), 0);
  for (std::size_t j = 0; j < nodes; ++j) d.node_ids.push_back("r" + std::to_string(j));
  for (std::size_t t = 0; t < steps; ++t) {
    d.timestamps.push_back(static_cast<std::int64_t>(t) * 300);
    for (std::size_t j = 0; j < nodes; ++j) d.values(t, j, 0) = intercept + slope * static_cast<double>(t);
  }
  return d;
}

double recovery_score(const Matrix& scores, const AdjacencyMatrix& truth) {
  const std::size_t n = truth.size();
  if (static_cast<std::size_t>(scores.rows()) != n || scores.rows() != scores.cols())
    throw std::invalid_argument("score matrix does not match the adjacency");
  std::vector<std::pair<double, bool>> items;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) items.emplace_back(scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), truth(i, j) > 0.5);
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Mann-Whitney U with mid-ranks.
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t a = 0; a < items.size();) {
    std::size_t b = a;
    while (b < items.size() && items[b].first == items[a].first) ++b;
    const double mid_rank = (static_cast<double>(a + 1) + static_cast<double>(b)) / 2.0;
    for (std::size_t k = a; k < b; ++k)
      if (items[k].second) {
        pos_rank_sum += mid_rank;
        ++pos;
      }
    a = b;
  }
  const std::size_t neg = items.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("AUC undefined: truth has no positives or no negatives");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

}  // namespace nri
