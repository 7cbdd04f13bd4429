#pragma once

#include <cstdint>

#include "nri/core.hpp"
#include "nri/layers.hpp"

namespace nri {

enum class NodeEmbedder { flatten, recurrent };
enum class GlobalMode { full, historical };

struct EncoderConfig {
  std::size_t burn_in = 1;     // P
  std::size_t features = 1;    // c
  std::size_t globals = 0;     // c_u; 0 disables every global term
  std::size_t hidden = 256;
  std::size_t edge_types = 2;  // K
  bool layer_norm = false;
  NodeEmbedder node_embedder = NodeEmbedder::flatten;
};

// Learnable mappings of the encoder. Shapes depend on P, c, c_u, hidden and K
// only, never on the node count.
struct EncoderParams {
  EncoderConfig config;
  GruCell history_rnn;  // only for NodeEmbedder::recurrent
  Mlp node_embed;       // f_emb
  Mlp global_embed;     // f_u, applied per time step then averaged over steps
  Mlp edge_update1;     // f_e1: [h_i, h_j, u] -> h_ij
  Mlp node_update;      // f_v1: [sum_i h_ij, u] -> h_j
  Mlp edge_update2;     // f_e2: [h_i, h_j, h_ij] -> h_ij
  Mlp edge_logits;      // f_p: h_ij -> K logits

  EncoderParams() = default;
  EncoderParams(const EncoderConfig& config, std::uint64_t seed);

  void register_parameters(ad::ParameterList& params, const std::string& prefix = "encoder");
  std::size_t parameter_count() const;
};

// Categorical distribution over K edge types for each ordered pair (i, j),
// i != j. Rows follow EdgeIndex pair order.
class EdgeDistribution {
 public:
  EdgeDistribution() = default;
  EdgeDistribution(std::size_t num_nodes, Matrix logits);

  std::size_t num_nodes() const { return index_.num_nodes; }
  std::size_t edge_types() const { return static_cast<std::size_t>(logits_.cols()); }
  std::size_t num_pairs() const { return index_.num_edges(); }
  const EdgeIndex& index() const { return index_; }
  const Matrix& logits() const { return logits_; }  // [pairs x K]
  const Matrix& probs() const { return probs_; }    // [pairs x K]

  // Diagonal (i == i) entries read as 0.
  double logit(std::size_t i, std::size_t j, std::size_t k) const;
  double prob(std::size_t i, std::size_t j, std::size_t k) const;
  // [N x N] probability of edge type k with zero diagonal.
  Matrix dense_probs(std::size_t k) const;

 private:
  EdgeIndex index_;
  Matrix logits_;
  Matrix probs_;
};

// Records the encoder on `tape`; returns logits [pairs x K].
// `burn_in` is [P x N x c]; `global_steps` is [steps x c_u] (ignored if c_u = 0).
ad::Var encode_logits(ad::Tape& tape, const EncoderParams& params, const Tensor3& burn_in,
                      const Matrix& global_steps);

// Encoder conditioned on the burn-in part of the window's global track.
EdgeDistribution encode(const NodeWindow& window, const EncoderParams& params);

// Encoder conditioned on an explicit global track covering all P+Q steps;
// GlobalMode::historical restricts it to the first P rows.
EdgeDistribution encode_full_global(const NodeWindow& window, const EncoderParams& params,
                                    const Matrix& global_full, GlobalMode mode = GlobalMode::full);

// Global rows the encoder consumes under `mode`.
Matrix encoder_global_rows(const NodeWindow& window, GlobalMode mode);

}  // namespace nri
