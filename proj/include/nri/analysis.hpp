#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nri/core.hpp"

namespace nri {

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> mape_percent;  // missing when every |target| <= epsilon
  std::optional<double> pcc;           // missing when either side has zero variance
  std::size_t count = 0;
};

// MAE, RMSE, MAPE over entries with |target| > epsilon, Pearson correlation.
Metrics metrics(std::span<const double> preds, std::span<const double> targets, double mape_epsilon = 1.0);
Metrics metrics(const Tensor3& preds, const Tensor3& targets, double mape_epsilon = 1.0);

// Edge-type-1 probabilities per evaluation window, [windows x N x N], zero diagonal.
struct EdgeProbSeries {
  Tensor3 probs;
  std::vector<std::int64_t> window_timestamps;

  std::size_t num_windows() const { return probs.dim0(); }
  std::size_t num_nodes() const { return probs.dim1(); }
  void push(const Matrix& dense, std::int64_t timestamp);
};

// Mean over ordered pairs i != j for each window.
std::vector<double> mean_edge_probability(const EdgeProbSeries& series);

struct NodeProfile {
  double ingoing = 0.0;
  double outgoing = 0.0;
};
// Ingoing of j: mean over windows and i != j of p(i -> j); outgoing likewise.
std::vector<NodeProfile> node_in_out_profiles(const EdgeProbSeries& series);

struct DirectedEdge {
  std::size_t sender = 0;
  std::size_t receiver = 0;
  double prob = 0.0;
  // Relative to the focal node, when one was given: "in", "out" or "".
  std::string direction;
};

// Ordered pairs with probability strictly above theta, in sender-major order.
std::vector<DirectedEdge> threshold_edges(const Matrix& window_probs, double theta = 0.8,
                                          std::optional<std::size_t> focal = std::nullopt);

enum class ClusterFeatures { learned_edges, observed_series };

struct Clustering {
  std::vector<int> labels;
  double inertia = 0.0;
};

// Centroid-based (k-means, k-means++ seeding) with `restarts` seeded restarts;
// rows of `features` are the items.
Clustering kmeans(const Matrix& features, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                  std::size_t max_iterations = 300);

// Feature rows per node: learned_edges flattens each node's ingoing and
// outgoing mean-probability series; observed_series flattens the node's raw series.
Matrix cluster_features(ClusterFeatures mode, const EdgeProbSeries* series, const Tensor3* values);
Clustering cluster_nodes(ClusterFeatures mode, const EdgeProbSeries* series, const Tensor3* values, std::size_t k,
                         std::uint64_t seed);

// Adjusted Rand index between two labelings.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace nri
