#include "nri/encoder.hpp"

#include <array>
#include <sstream>

namespace nri {

namespace {

auto idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

EncoderParams::EncoderParams(const EncoderConfig& cfg, std::uint64_t seed) : config(cfg) {
  if (cfg.burn_in < 1 || cfg.features < 1 || cfg.hidden < 1 || cfg.edge_types < 2)
    throw std::invalid_argument("invalid encoder configuration");
  Rng rng(seed);
  const Eigen::Index h = idx(cfg.hidden);
  const Eigen::Index u = cfg.globals > 0 ? h : 0;
  const bool ln = cfg.layer_norm;
  if (cfg.node_embedder == NodeEmbedder::recurrent) {
    history_rnn = GruCell(idx(cfg.features), h, rng);
    node_embed = Mlp(h, h, h, rng, true, ln);
  } else {
    node_embed = Mlp(idx(cfg.burn_in * cfg.features), h, h, rng, true, ln);
  }
  if (cfg.globals > 0) global_embed = Mlp(idx(cfg.globals), h, h, rng, true, ln);
  edge_update1 = Mlp(2 * h + u, h, h, rng, true, ln);
  node_update = Mlp(h + u, h, h, rng, true, ln);
  edge_update2 = Mlp(3 * h, h, h, rng, true, ln);
  edge_logits = Mlp(h, h, idx(cfg.edge_types), rng, false, ln);
}

void EncoderParams::register_parameters(ad::ParameterList& params, const std::string& prefix) {
  if (config.node_embedder == NodeEmbedder::recurrent) history_rnn.register_parameters(prefix + ".history_rnn", params);
  node_embed.register_parameters(prefix + ".node_embed", params);
  if (config.globals > 0) global_embed.register_parameters(prefix + ".global_embed", params);
  edge_update1.register_parameters(prefix + ".edge_update1", params);
  node_update.register_parameters(prefix + ".node_update", params);
  edge_update2.register_parameters(prefix + ".edge_update2", params);
  edge_logits.register_parameters(prefix + ".edge_logits", params);
}

std::size_t EncoderParams::parameter_count() const {
  ad::ParameterList list;
  const_cast<EncoderParams*>(this)->register_parameters(list);
  return list.total_scalars();
}

EdgeDistribution::EdgeDistribution(std::size_t n, Matrix logits)
    : index_(EdgeIndex::fully_connected(n)), logits_(std::move(logits)) {
  if (static_cast<std::size_t>(logits_.rows()) != index_.num_edges())
    throw std::invalid_argument("edge logits row count must equal N(N-1)");
  probs_.resize(logits_.rows(), logits_.cols());
  for (Eigen::Index r = 0; r < logits_.rows(); ++r) {
    const double m = logits_.row(r).maxCoeff();
    probs_.row(r) = (logits_.row(r).array() - m).exp();
    probs_.row(r) /= probs_.row(r).sum();
  }
}

double EdgeDistribution::logit(std::size_t i, std::size_t j, std::size_t k) const {
  if (i == j) return 0.0;
  return logits_(idx(index_.pair(i, j)), idx(k));
}

double EdgeDistribution::prob(std::size_t i, std::size_t j, std::size_t k) const {
  if (i == j) return 0.0;
  return probs_(idx(index_.pair(i, j)), idx(k));
}

Matrix EdgeDistribution::dense_probs(std::size_t k) const {
  const std::size_t n = num_nodes();
  Matrix out = Matrix::Zero(idx(n), idx(n));
  for (std::size_t e = 0; e < index_.num_edges(); ++e)
    out(index_.senders[e], index_.receivers[e]) = probs_(idx(e), idx(k));
  return out;
}

ad::Var encode_logits(ad::Tape& tape, const EncoderParams& params, const Tensor3& burn_in,
                      const Matrix& global_steps) {
  const EncoderConfig& cfg = params.config;
  const std::size_t p = burn_in.dim0(), n = burn_in.dim1(), c = burn_in.dim2();
  if (n < 2) throw std::invalid_argument("encoder needs at least 2 nodes");
  if (p != cfg.burn_in) {
    std::ostringstream msg;
    msg << "window burn-in length " << p << " differs from encoder P " << cfg.burn_in;
    throw std::invalid_argument(msg.str());
  }
  if (c != cfg.features) throw std::invalid_argument("window feature count differs from encoder configuration");
  const bool use_globals = cfg.globals > 0;
  if (use_globals && (static_cast<std::size_t>(global_steps.cols()) != cfg.globals || global_steps.rows() < 1))
    throw std::invalid_argument("global track width differs from encoder configuration");

  const EdgeIndex edges = EdgeIndex::fully_connected(n);
  const auto num_edges = static_cast<Eigen::Index>(edges.num_edges());

  ad::Var h1;
  if (cfg.node_embedder == NodeEmbedder::flatten) {
    Matrix x(idx(n), idx(p * c));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < p; ++t)
        for (std::size_t f = 0; f < c; ++f) x(idx(j), idx(t * c + f)) = burn_in(t, j, f);
    h1 = params.node_embed(tape.constant(std::move(x)));
  } else {
    ad::Var h = tape.constant(Matrix::Zero(idx(n), idx(cfg.hidden)));
    for (std::size_t t = 0; t < p; ++t) h = params.history_rnn(tape.constant(burn_in.plane(t)), h);
    h1 = params.node_embed(h);
  }

  ad::Var u1;
  if (use_globals) {
    ad::Var per_step = params.global_embed(tape.constant(global_steps));
    const std::vector<int> to_row0(static_cast<std::size_t>(global_steps.rows()), 0);
    u1 = ad::scale(ad::scatter_add_rows(per_step, to_row0, 1), 1.0 / static_cast<double>(global_steps.rows()));
  }

  ad::Var e1;
  {
    std::vector<ad::Var> parts{ad::gather_rows(h1, edges.senders), ad::gather_rows(h1, edges.receivers)};
    if (use_globals) parts.push_back(ad::broadcast_rows(u1, num_edges));
    e1 = params.edge_update1(ad::concat_cols(parts));
  }
  ad::Var h2;
  {
    std::vector<ad::Var> parts{ad::scatter_add_rows(e1, edges.receivers, idx(n))};
    if (use_globals) parts.push_back(ad::broadcast_rows(u1, idx(n)));
    h2 = params.node_update(ad::concat_cols(parts));
  }
  const std::array parts{ad::gather_rows(h2, edges.senders), ad::gather_rows(h2, edges.receivers), e1};
  ad::Var e2 = params.edge_update2(ad::concat_cols(parts));
  return params.edge_logits(e2);
}

Matrix encoder_global_rows(const NodeWindow& window, GlobalMode mode) {
  const auto rows = mode == GlobalMode::full ? window.global_track.rows()
                                             : static_cast<Eigen::Index>(window.burn_in_steps());
  return window.global_track.topRows(rows);
}

EdgeDistribution encode(const NodeWindow& window, const EncoderParams& params) {
  return encode_full_global(window, params, window.global_track, GlobalMode::historical);
}

EdgeDistribution encode_full_global(const NodeWindow& window, const EncoderParams& params,
                                    const Matrix& global_full, GlobalMode mode) {
  const auto span = static_cast<Eigen::Index>(window.burn_in_steps() + window.target_steps());
  if (params.config.globals > 0 && global_full.rows() != span) {
    std::ostringstream msg;
    msg << "global track has " << global_full.rows() << " rows, expected P+Q = " << span;
    throw std::invalid_argument(msg.str());
  }
  const Eigen::Index rows = mode == GlobalMode::full ? span : static_cast<Eigen::Index>(window.burn_in_steps());
  ad::Tape tape;
  const Matrix globals = params.config.globals > 0 ? Matrix(global_full.topRows(rows)) : Matrix();
  ad::Var logits = encode_logits(tape, params, window.burn_in, globals);
  return EdgeDistribution(window.num_nodes(), logits.value());
}

}  // namespace nri
