#include "nri/decoder.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace nri {

namespace {

auto idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

DecoderParams::DecoderParams(const DecoderConfig& cfg, std::uint64_t seed) : config(cfg) {
  if (cfg.features < 1 || cfg.hidden < 1 || cfg.edge_types < 2) throw std::invalid_argument("invalid decoder configuration");
  if (!(cfg.sigma > 0)) throw std::invalid_argument("decoder sigma must be positive");
  Rng rng(seed);
  const Eigen::Index h = idx(cfg.hidden);
  const Eigen::Index u = idx(cfg.globals);
  edge_messages.resize(cfg.edge_types);
  for (std::size_t k = first_active_type(); k < cfg.edge_types; ++k)
    edge_messages[k] = Mlp(2 * h + u, h, h, rng, true, cfg.layer_norm);
  gru = GruCell(h + idx(cfg.features) + u, h, rng);
  output = Mlp(h, h, idx(cfg.features), rng, false, cfg.layer_norm);
  // Zero final layers: the untrained decoder sends no messages and predicts persistence.
  for (std::size_t k = first_active_type(); k < cfg.edge_types; ++k) edge_messages[k].fc2.weight.setZero();
  output.fc2.weight.setZero();
}

void DecoderParams::register_parameters(ad::ParameterList& params, const std::string& prefix) {
  for (std::size_t k = first_active_type(); k < edge_messages.size(); ++k)
    edge_messages[k].register_parameters(prefix + ".edge_message" + std::to_string(k), params);
  gru.register_parameters(prefix + ".gru", params);
  output.register_parameters(prefix + ".output", params);
}

std::size_t DecoderParams::parameter_count() const {
  ad::ParameterList list;
  const_cast<DecoderParams*>(this)->register_parameters(list);
  return list.total_scalars();
}

StepVars decode_step(const DecoderParams& params, const EdgeIndex& edges, ad::Var hidden, ad::Var x_t,
                     const Matrix& u_t, ad::Var graph) {
  const DecoderConfig& cfg = params.config;
  ad::Tape& tape = *hidden.tape();
  const auto n = idx(edges.num_nodes);
  if (hidden.rows() != n || hidden.cols() != idx(cfg.hidden)) throw std::invalid_argument("decoder hidden state shape mismatch");
  if (x_t.rows() != n || x_t.cols() != idx(cfg.features)) throw std::invalid_argument("decoder input shape mismatch");
  if (graph.rows() != idx(edges.num_edges()) || graph.cols() != idx(cfg.edge_types))
    throw std::invalid_argument("graph sample does not match node count or edge types");
  const bool use_globals = cfg.globals > 0;
  if (use_globals && (u_t.rows() != 1 || u_t.cols() != idx(cfg.globals)))
    throw std::invalid_argument("global feature shape mismatch");

  ad::Var u_row;
  if (use_globals) u_row = tape.constant(u_t);

  ad::Var msg_sum;
  bool any_message = false;
  ad::Var pre;
  for (std::size_t k = params.first_active_type(); k < cfg.edge_types; ++k) {
    // A constant all-zero column contributes nothing; skip its mapping.
    if (!tape.requires_grad(graph.id()) && graph.value().col(idx(k)).isZero(0.0)) continue;
    if (!pre.valid()) {
      std::vector<ad::Var> parts{ad::gather_rows(hidden, edges.senders), ad::gather_rows(hidden, edges.receivers)};
      if (use_globals) parts.push_back(ad::broadcast_rows(u_row, idx(edges.num_edges())));
      pre = ad::concat_cols(parts);
    }
    ad::Var weighted = ad::mul_col(params.edge_messages[k](pre), ad::column(graph, idx(k)));
    msg_sum = any_message ? ad::add(msg_sum, weighted) : weighted;
    any_message = true;
  }
  ad::Var msg = any_message ? ad::scatter_add_rows(msg_sum, edges.receivers, n)
                            : tape.constant(Matrix::Zero(n, idx(cfg.hidden)));

  std::vector<ad::Var> gru_in{msg, x_t};
  if (use_globals) gru_in.push_back(ad::broadcast_rows(u_row, n));
  ad::Var next = params.gru(ad::concat_cols(gru_in), hidden);
  ad::Var mean = ad::add(x_t, params.output(next));
  return {mean, next};
}

RolloutVars rollout(ad::Tape& tape, const DecoderParams& params, const NodeWindow& window, ad::Var graph) {
  const std::size_t p = window.burn_in_steps(), q = window.target_steps(), n = window.num_nodes();
  if (q == 0) throw std::invalid_argument("rollout needs at least one prediction step");
  if (p == 0) throw std::invalid_argument("rollout needs at least one burn-in step");
  if (window.num_features() != params.config.features) throw std::invalid_argument("window feature count mismatch");
  if (params.config.globals > 0 && window.num_globals() != params.config.globals)
    throw std::invalid_argument("window global width mismatch");
  const EdgeIndex edges = EdgeIndex::fully_connected(n);
  RolloutVars out;
  out.means.reserve(p + q);
  ad::Var hidden = tape.constant(Matrix::Zero(idx(n), idx(params.config.hidden)));
  ad::Var input;
  for (std::size_t s = 0; s < p + q; ++s) {
    input = s < p ? tape.constant(window.burn_in.plane(s)) : out.means.back();
    const Matrix u = params.config.globals > 0 ? Matrix(window.global_track.row(idx(s))) : Matrix();
    StepVars step = decode_step(params, edges, hidden, input, u, graph);
    out.means.push_back(step.mean);
    hidden = step.hidden;
  }
  out.hidden = hidden;
  return out;
}

ad::Var gaussian_nll(std::span<const ad::Var> means, const NodeWindow& window, double sigma, bool include_burn_in) {
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
  const std::size_t p = window.burn_in_steps(), q = window.target_steps();
  if (means.size() + 1 < p + q) throw std::invalid_argument("not enough predictions for the window");
  ad::Tape& tape = *means.front().tape();
  const std::size_t first = include_burn_in ? 0 : p - 1;
  ad::Var sq;
  std::size_t count = 0;
  for (std::size_t s = first; s + 1 < p + q; ++s) {
    // means[s] predicts window index s + 1.
    ad::Var resid = ad::sub(means[s], tape.constant(window.observation(s + 1)));
    ad::Var term = ad::sum(ad::square(resid));
    sq = sq.valid() ? ad::add(sq, term) : term;
    count += static_cast<std::size_t>(resid.value().size());
  }
  const double constant = 0.5 * std::log(2.0 * std::numbers::pi * sigma) * static_cast<double>(count);
  return ad::add_constant(ad::scale(sq, 1.0 / (2.0 * sigma * sigma)), Matrix::Constant(1, 1, constant));
}

std::pair<Matrix, Matrix> decode_step(const Matrix& hidden, const Matrix& x_t, const Matrix& u_t,
                                      const GraphSample& graph, const DecoderParams& params) {
  if (graph.num_nodes() != static_cast<std::size_t>(x_t.rows()))
    throw std::invalid_argument("graph sample does not match node count");
  ad::Tape tape;
  const EdgeIndex edges = EdgeIndex::fully_connected(graph.num_nodes());
  StepVars s = decode_step(params, edges, tape.constant(hidden), tape.constant(x_t), u_t,
                           tape.constant(graph.soft_adjacency()));
  return {s.mean.value(), s.hidden.value()};
}

RolloutResult rollout(const NodeWindow& window, const GraphSample& graph, const DecoderParams& params) {
  if (graph.num_nodes() != window.num_nodes()) throw std::invalid_argument("graph sample does not match node count");
  ad::Tape tape;
  RolloutVars vars = rollout(tape, params, window, tape.constant(graph.soft_adjacency()));
  RolloutResult result;
  result.predictions = Tensor3(vars.means.size(), window.num_nodes(), window.num_features());
  for (std::size_t s = 0; s < vars.means.size(); ++s) result.predictions.set_plane(s, vars.means[s].value());
  result.final_hidden = vars.hidden.value();
  return result;
}

RolloutResult fixed_adjacency_rollout(const NodeWindow& window, const AdjacencyMatrix& adj, const DecoderParams& params) {
  if (!adj.is_binary()) throw std::invalid_argument("fixed adjacency must be binary");
  return rollout(window, GraphSample::from_adjacency(adj, params.config.edge_types), params);
}

double gaussian_nll(const Tensor3& preds, const Tensor3& targets, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
  if (preds.dim0() != targets.dim0() || preds.dim1() != targets.dim1() || preds.dim2() != targets.dim2())
    throw std::invalid_argument("gaussian_nll: shape mismatch");
  const double constant = 0.5 * std::log(2.0 * std::numbers::pi * sigma);
  double total = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const double e = targets.data()[k] - preds.data()[k];
    total += e * e / (2.0 * sigma * sigma) + constant;
  }
  return total;
}

Tensor3 forecast(const RolloutResult& result, std::size_t burn_in, std::size_t horizon) {
  if (burn_in < 1 || burn_in + horizon - 1 > result.predictions.dim0())
    throw std::invalid_argument("rollout too short for the requested horizon");
  return result.predictions.slice(burn_in - 1, horizon);
}

Tensor3 lag_predict(const NodeWindow& window) {
  const std::size_t p = window.burn_in_steps(), q = window.target_steps();
  if (p < 1) throw std::invalid_argument("lag model needs at least one burn-in step");
  Tensor3 out(q, window.num_nodes(), window.num_features());
  const Matrix last = window.burn_in.plane(p - 1);
  for (std::size_t t = 0; t < q; ++t) out.set_plane(t, last);
  return out;
}

}  // namespace nri
