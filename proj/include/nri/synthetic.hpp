#pragma once

#include <cstdint>
#include <numbers>

#include "nri/core.hpp"

namespace nri {

// Linear diffusion on a known directed graph with shared sinusoidal forcing:
//   x_j(t+1) = x_j(t) + alpha * sum_{i: A[i][j] = 1} (x_i(t) - x_j(t)) + beta * sin(omega t) + N(0, eta^2)
struct SyntheticSpec {
  std::size_t nodes = 10;
  AdjacencyMatrix adjacency;  // drawn with `edge_density` when left empty
  double edge_density = 0.2;
  double alpha = 0.1;
  double beta = 0.5;
  double omega = 2.0 * std::numbers::pi / 24.0;
  double eta = 0.01;
  double initial_spread = 1.0;  // initial states ~ N(0, initial_spread^2)
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  std::int64_t start_time = 1546819200;  // 2019-01-07 00:00 UTC, a Monday
  std::int64_t step_seconds = 3600;
};

struct SyntheticData {
  SeriesDataset dataset;  // c = 1, globals = (sin omega t, cos omega t)
  AdjacencyMatrix truth;
};

// Random directed graph, each off-diagonal entry on with probability `density`.
AdjacencyMatrix random_adjacency(std::size_t n, double density, std::uint64_t seed);

SyntheticData generate(const SyntheticSpec& spec);

// values(t, j) = intercept + slope * t for every node.
SeriesDataset make_ramp(std::size_t nodes, std::size_t steps, double slope, double intercept = 0.0);

// ROC AUC of `scores` (edge-type-1 probabilities) against the binary truth
// over ordered pairs i != j. Ties count one half.
double recovery_score(const Matrix& scores, const AdjacencyMatrix& truth);

}  // namespace nri
