#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nri/analysis.hpp"
#include "nri/core.hpp"
#include "nri/decoder.hpp"
#include "nri/encoder.hpp"
#include "nri/latent.hpp"

namespace nri {

enum class ModelMode { nri, fixed, lag };
enum class EvalGraph { argmax, expected, sampled };

std::string to_string(ModelMode m);
ModelMode model_mode_from_string(const std::string& s);
std::string to_string(EvalGraph g);
EvalGraph eval_graph_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t pretrain_epochs = 30;
  double step_size = 5e-4;
  double step_decay = 1.0;  // step size multiplier applied after every joint epoch
  std::size_t batch_size = 8;
  double clip = 5.0;
  double tau = 0.5;
  bool hard_sample = false;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  bool include_burn_in = false;
  GlobalMode global_mode = GlobalMode::full;
  EvalGraph eval_graph = EvalGraph::argmax;
  double mape_epsilon = 1.0;

  void validate() const;
};

// Encoder + decoder (nri), decoder on a fixed graph (fixed), or the stateless
// lag baseline (lag).
struct Model {
  ModelMode mode = ModelMode::nri;
  EncoderParams encoder;
  DecoderParams decoder;
  AdjacencyMatrix fixed_adjacency;  // fixed mode only

  // Trainable matrices in a stable order with stable names.
  ad::ParameterList parameters();
  ad::ParameterList encoder_parameters();
  // Graph the decoder uses for `window` at evaluation time.
  GraphSample evaluation_graph(const NodeWindow& window, const TrainConfig& config, std::uint64_t noise_seed = 0) const;
  EdgeDistribution edge_distribution(const NodeWindow& window, GlobalMode mode) const;
  // Q target-step predictions [Q x N x c] in model (normalized) units.
  Tensor3 predict(const NodeWindow& window, const TrainConfig& config) const;
};

struct AdamState {
  std::vector<Matrix> m, v;
  std::size_t step = 0;
};

class Adam {
 public:
  Adam(double step_size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(step_size), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(ad::ParameterList& params, const ad::Gradients& grads, AdamState& state) const;

 private:
  double lr_, b1_, b2_, eps_;
};

// Rescales gradients so their global norm is at most `max_norm`; returns the
// norm before clipping.
double clip_gradients(ad::Gradients& grads, double max_norm);

struct ElboTerms {
  double nll = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct ElboVars {
  ad::Var nll, kl, total;
  ad::Var logits;
};

// Records the negative ELBO (NLL + KL) of one window on `tape`. `noise` is
// the Gumbel draw [pairs x K].
ElboVars elbo_on_tape(ad::Tape& tape, const NodeWindow& window, const EncoderParams& encoder,
                      const DecoderParams& decoder, const PriorSpec& prior, double tau, double sigma,
                      const Matrix& noise, const TrainConfig& config);

ElboTerms elbo_loss(const NodeWindow& window, const EncoderParams& encoder, const DecoderParams& decoder,
                    const PriorSpec& prior, double tau, double sigma, const Matrix& noise,
                    const TrainConfig& config = {});

struct PretrainReport {
  std::vector<double> mean_kl_per_pair;  // one entry per epoch, measured before its updates
  double final_mean_kl_per_pair = 0.0;
};

// KL-only optimization of the encoder towards `prior`.
PretrainReport pretrain_encoder(EncoderParams& encoder, const std::vector<NodeWindow>& windows,
                                const PriorSpec& prior, std::size_t epochs, const TrainConfig& config);

// Mean per-pair KL(q || prior) over windows.
double mean_kl_per_pair(const EncoderParams& encoder, const std::vector<NodeWindow>& windows, const PriorSpec& prior,
                        GlobalMode mode);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based; pretraining epochs are logged with phase "pretrain"
  std::string phase;
  double nll = 0.0;
  double kl = 0.0;
  double total = 0.0;  // negative ELBO per window
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> rows;
  void write(const std::string& path, const std::map<std::string, std::string>& comments = {}) const;
};

struct TrainState {
  Model model;
  Model best;
  AdamState optimizer;
  std::size_t epoch = 0;  // completed joint epochs
  bool pretrained = false;
  double best_val_mae = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;
  TrainLog log;
};

struct Splits {
  std::vector<NodeWindow> train, val, test;
};

// Called after every joint epoch; return false to stop.
using EpochCallback = std::function<bool(const TrainState&)>;

// Pretraining (nri mode, once), then joint epochs until config.epochs, early
// stopping or the callback says stop. Windows are in normalized units;
// validation metrics are reported in original units via `normalizer`.
void train(TrainState& state, const TrainConfig& config, const Splits& splits, const Normalizer& normalizer,
           const PriorSpec* prior, const EpochCallback& on_epoch = {});

struct HorizonMetrics {
  std::size_t horizon = 0;
  Metrics metrics;
};

// Per-horizon metrics in original units. Horizons are 1-based target steps.
std::vector<HorizonMetrics> evaluate(const Model& model, const std::vector<NodeWindow>& windows,
                                     const std::vector<std::size_t>& horizons, const Normalizer& normalizer,
                                     const TrainConfig& config);
// Metrics over all target steps at once.
Metrics evaluate_all(const Model& model, const std::vector<NodeWindow>& windows, const Normalizer& normalizer,
                     const TrainConfig& config);

}  // namespace nri
