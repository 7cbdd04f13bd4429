#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nri/autodiff.hpp"
#include "nri/core.hpp"
#include "nri/encoder.hpp"
#include "nri/random.hpp"

namespace nri {

// Relaxed one-hot edge types for every ordered pair, rows in EdgeIndex order.
class GraphSample {
 public:
  GraphSample() = default;
  GraphSample(std::size_t num_nodes, Matrix soft_adjacency, double temperature = 1.0, bool hard = false);

  // Binary adjacency -> type 1 where adj = 1, type 0 elsewhere.
  static GraphSample from_adjacency(const AdjacencyMatrix& adj, std::size_t edge_types = 2);
  // Deterministic one-hot argmax of q.
  static GraphSample argmax(const EdgeDistribution& q);
  // Expected graph: the probabilities themselves.
  static GraphSample expected(const EdgeDistribution& q);
  // All mass on edge type 0.
  static GraphSample no_edges(std::size_t num_nodes, std::size_t edge_types = 2);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t edge_types() const { return static_cast<std::size_t>(soft_.cols()); }
  const Matrix& soft_adjacency() const { return soft_; }
  double temperature() const { return temperature_; }
  bool hard() const { return hard_; }
  double at(std::size_t i, std::size_t j, std::size_t k) const;

 private:
  std::size_t num_nodes_ = 0;
  Matrix soft_;
  double temperature_ = 1.0;
  bool hard_ = false;
};

enum class PriorProvenance { uniform, local, dtw, custom };

std::string to_string(PriorProvenance p);
PriorProvenance prior_provenance_from_string(const std::string& s);

// Factorized categorical prior over edge types.
struct PriorSpec {
  Matrix probs;  // [1 x K] shared by every pair, or [pairs x K]
  PriorProvenance provenance = PriorProvenance::uniform;
  double confidence = 0.9;
  std::string adjacency_ref;  // file the structured prior was built from, if any

  bool shared() const { return probs.rows() == 1; }
  std::size_t edge_types() const { return static_cast<std::size_t>(probs.cols()); }
  // [pairs x K] for a graph of num_nodes nodes.
  Matrix per_pair(std::size_t num_nodes) const;
  void validate() const;
};

// [rows x K] of i.i.d. Gumbel(0, 1) draws.
Matrix sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// softmax((logits + noise) / tau) row-wise.
Matrix gumbel_softmax_sample(const Matrix& logits, double tau, const Matrix& noise);
Matrix gumbel_softmax_sample(const Matrix& logits, double tau, Rng& rng);
// Differentiable version. With `hard`, the forward value is one-hot and the
// gradient is that of the relaxed sample.
ad::Var gumbel_softmax(ad::Var logits, double tau, const Matrix& noise, bool hard = false);

// sum over pairs and types of q log(q / p), with 0 log 0 = 0.
double kl_categorical(const Matrix& q_probs, const Matrix& prior_probs);
double kl_categorical(const EdgeDistribution& q, const PriorSpec& prior);
// Differentiable KL from logits [pairs x K].
ad::Var kl_categorical(ad::Var logits, const PriorSpec& prior, std::size_t num_nodes);

PriorSpec build_uniform_prior(std::size_t num_nodes, std::size_t edge_types = 2, double p_no_edge = 0.9);
PriorSpec build_structured_prior(const AdjacencyMatrix& adj, double edge_conf = 0.9, std::size_t edge_types = 2,
                                 PriorProvenance provenance = PriorProvenance::custom);

// Structured-text prior description. Structured priors reference their
// adjacency edge list, resolved relative to the prior file.
void save_prior(const PriorSpec& prior, const std::filesystem::path& path, std::size_t num_nodes);
PriorSpec load_prior(const std::filesystem::path& path);

}  // namespace nri
