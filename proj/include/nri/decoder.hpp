#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nri/core.hpp"
#include "nri/latent.hpp"
#include "nri/layers.hpp"

namespace nri {

struct DecoderConfig {
  std::size_t features = 1;    // c
  std::size_t globals = 0;     // c_u
  std::size_t hidden = 256;
  std::size_t edge_types = 2;  // K
  // Edge type 0 means "no edge" and sends no message.
  bool silence_type0 = true;
  bool layer_norm = false;
  double sigma = 0.31622776601683794;  // sqrt(0.1)
};

struct DecoderParams {
  DecoderConfig config;
  // One message mapping per edge type; entry 0 is left empty when type 0 is silenced.
  std::vector<Mlp> edge_messages;
  GruCell gru;  // input [MSG, x, u], state [hidden]
  Mlp output;   // f_out: hidden -> c

  DecoderParams() = default;
  DecoderParams(const DecoderConfig& config, std::uint64_t seed);

  std::size_t first_active_type() const { return config.silence_type0 ? 1 : 0; }
  void register_parameters(ad::ParameterList& params, const std::string& prefix = "decoder");
  std::size_t parameter_count() const;
};

struct RolloutResult {
  Tensor3 predictions;  // [(P+Q) x N x c]; entry s predicts window index s+1
  Matrix final_hidden;  // [N x hidden]
};

// ---- differentiable forms ---------------------------------------------------

struct StepVars {
  ad::Var mean;
  ad::Var hidden;
};

// One recurrent GN step. `graph` is [pairs x K] on the same tape.
StepVars decode_step(const DecoderParams& params, const EdgeIndex& edges, ad::Var hidden, ad::Var x_t,
                     const Matrix& u_t, ad::Var graph);

struct RolloutVars {
  std::vector<ad::Var> means;  // P+Q one-step means
  ad::Var hidden;
};

// Teacher-forced for the P burn-in steps, then fed its own predictions.
RolloutVars rollout(ad::Tape& tape, const DecoderParams& params, const NodeWindow& window, ad::Var graph);

// Gaussian NLL over the Q target steps: means[P-1 .. P+Q-2] against the
// window targets. With include_burn_in, burn-in one-step errors count too.
ad::Var gaussian_nll(std::span<const ad::Var> means, const NodeWindow& window, double sigma,
                     bool include_burn_in = false);

// ---- plain evaluation ---------------------------------------------------------

std::pair<Matrix, Matrix> decode_step(const Matrix& hidden, const Matrix& x_t, const Matrix& u_t,
                                      const GraphSample& graph, const DecoderParams& params);
RolloutResult rollout(const NodeWindow& window, const GraphSample& graph, const DecoderParams& params);
RolloutResult fixed_adjacency_rollout(const NodeWindow& window, const AdjacencyMatrix& adj,
                                      const DecoderParams& params);

// sum over entries of (x - x_hat)^2 / (2 sigma^2) + 1/2 log(2 pi sigma).
double gaussian_nll(const Tensor3& preds, const Tensor3& targets, double sigma);

// The Q target-step predictions [Q x N x c] of a rollout.
Tensor3 forecast(const RolloutResult& result, std::size_t burn_in, std::size_t horizon);

// Repeats the last burn-in observation for every target step.
Tensor3 lag_predict(const NodeWindow& window);

}  // namespace nri
