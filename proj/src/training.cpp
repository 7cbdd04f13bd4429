#include "nri/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "nri/io.hpp"
#include "nri/random.hpp"

namespace nri {

std::string to_string(ModelMode m) {
  switch (m) {
    case ModelMode::nri: return "nri";
    case ModelMode::fixed: return "fixed";
    case ModelMode::lag: return "lag";
  }
  return "nri";
}

ModelMode model_mode_from_string(const std::string& s) {
  if (s == "nri") return ModelMode::nri;
  if (s == "fixed") return ModelMode::fixed;
  if (s == "lag") return ModelMode::lag;
  throw ConfigError("unknown model mode '" + s + "'");
}

std::string to_string(EvalGraph g) {
  switch (g) {
    case EvalGraph::argmax: return "argmax";
    case EvalGraph::expected: return "expected";
    case EvalGraph::sampled: return "sampled";
  }
  return "argmax";
}

EvalGraph eval_graph_from_string(const std::string& s) {
  if (s == "argmax") return EvalGraph::argmax;
  if (s == "expected" || s == "soft") return EvalGraph::expected;
  if (s == "sampled") return EvalGraph::sampled;
  throw ConfigError("unknown evaluation graph '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(step_size > 0)) throw ConfigError("step_size must be positive");
  if (!(step_decay > 0 && step_decay <= 1)) throw ConfigError("step_decay must lie in (0, 1]");
  if (!(clip > 0)) throw ConfigError("clip must be positive");
  if (!(tau > 0)) throw ConfigError("tau must be positive");
  if (!(mape_epsilon >= 0)) throw ConfigError("mape_epsilon must be nonnegative");
}

ad::ParameterList Model::parameters() {
  ad::ParameterList list;
  if (mode == ModelMode::nri) encoder.register_parameters(list);
  if (mode != ModelMode::lag) decoder.register_parameters(list);
  return list;
}

ad::ParameterList Model::encoder_parameters() {
  ad::ParameterList list;
  if (mode == ModelMode::nri) encoder.register_parameters(list);
  return list;
}

EdgeDistribution Model::edge_distribution(const NodeWindow& window, GlobalMode gmode) const {
  if (mode != ModelMode::nri) throw std::logic_error("only nri models have an edge distribution");
  return encode_full_global(window, encoder, window.global_track, gmode);
}

GraphSample Model::evaluation_graph(const NodeWindow& window, const TrainConfig& config, std::uint64_t noise_seed) const {
  switch (mode) {
    case ModelMode::lag: throw std::logic_error("the lag model has no graph");
    case ModelMode::fixed: return GraphSample::from_adjacency(fixed_adjacency, decoder.config.edge_types);
    case ModelMode::nri: break;
  }
  const EdgeDistribution q = edge_distribution(window, config.global_mode);
  switch (config.eval_graph) {
    case EvalGraph::argmax: return GraphSample::argmax(q);
    case EvalGraph::expected: return GraphSample::expected(q);
    case EvalGraph::sampled: {
      Rng rng(noise_seed);
      return GraphSample(q.num_nodes(), gumbel_softmax_sample(q.logits(), config.tau, rng), config.tau, false);
    }
  }
  return GraphSample::argmax(q);
}

Tensor3 Model::predict(const NodeWindow& window, const TrainConfig& config) const {
  if (mode == ModelMode::lag) return lag_predict(window);
  const GraphSample graph = evaluation_graph(window, config, mix_seed(config.seed, 0xe7a1, window.origin_index));
  return forecast(rollout(window, graph, decoder), window.burn_in_steps(), window.target_steps());
}

void Adam::step(ad::ParameterList& params, const ad::Gradients& grads, AdamState& state) const {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
      state.v.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(b1_, t);
  const double c2 = 1.0 - std::pow(b2_, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1_ * state.m[i] + (1.0 - b1_) * grads[i];
    state.v[i] = b2_ * state.v[i] + (1.0 - b2_) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -= lr_ * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(ad::Gradients& grads, double max_norm) {
  const double norm = grads.norm();
  if (norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

ElboVars elbo_on_tape(ad::Tape& tape, const NodeWindow& window, const EncoderParams& encoder,
                      const DecoderParams& decoder, const PriorSpec& prior, double tau, double sigma,
                      const Matrix& noise, const TrainConfig& config) {
  ElboVars v;
  const Matrix globals = encoder.config.globals > 0 ? encoder_global_rows(window, config.global_mode) : Matrix();
  v.logits = encode_logits(tape, encoder, window.burn_in, globals);
  v.kl = kl_categorical(v.logits, prior, window.num_nodes());
  ad::Var graph = gumbel_softmax(v.logits, tau, noise, config.hard_sample);
  RolloutVars roll = rollout(tape, decoder, window, graph);
  v.nll = gaussian_nll(roll.means, window, sigma, config.include_burn_in);
  v.total = ad::add(v.nll, v.kl);
  return v;
}

ElboTerms elbo_loss(const NodeWindow& window, const EncoderParams& encoder, const DecoderParams& decoder,
                    const PriorSpec& prior, double tau, double sigma, const Matrix& noise, const TrainConfig& config) {
  ad::Tape tape;
  const ElboVars v = elbo_on_tape(tape, window, encoder, decoder, prior, tau, sigma, noise, config);
  return {v.nll.scalar(), v.kl.scalar(), v.total.scalar()};
}

double mean_kl_per_pair(const EncoderParams& encoder, const std::vector<NodeWindow>& windows, const PriorSpec& prior,
                        GlobalMode mode) {
  if (windows.empty()) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& w : windows) {
    const EdgeDistribution q = encode_full_global(w, encoder, w.global_track, mode);
    total += kl_categorical(q, prior);
    pairs += q.num_pairs();
  }
  return total / static_cast<double>(pairs);
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch, std::uint64_t salt) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, salt, epoch));
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

void check_finite(double v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string("non-finite ") + what + " in epoch " + std::to_string(epoch));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PretrainReport pretrain_encoder(EncoderParams& encoder, const std::vector<NodeWindow>& windows, const PriorSpec& prior,
                                std::size_t epochs, const TrainConfig& config) {
  PretrainReport report;
  if (epochs == 0 || windows.empty()) {
    report.final_mean_kl_per_pair = mean_kl_per_pair(encoder, windows, prior, config.global_mode);
    return report;
  }
  ad::ParameterList params;
  encoder.register_parameters(params);
  AdamState opt;
  const Adam adam(config.step_size);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto order = epoch_order(windows.size(), config.seed, epoch, 0x9e7);
    double kl_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      ad::Gradients grads(params);
      const double weight = 1.0 / static_cast<double>(end - b);
      for (std::size_t k = b; k < end; ++k) {
        const NodeWindow& w = windows[order[k]];
        ad::Tape tape;
        const Matrix globals = encoder.config.globals > 0 ? encoder_global_rows(w, config.global_mode) : Matrix();
        ad::Var logits = encode_logits(tape, encoder, w.burn_in, globals);
        ad::Var kl = kl_categorical(logits, prior, w.num_nodes());
        check_finite(kl.scalar(), "KL during pretraining", epoch + 1);
        kl_sum += kl.scalar();
        pairs += static_cast<std::size_t>(logits.rows());
        tape.backward(kl);
        grads.accumulate(tape, params, weight);
      }
      clip_gradients(grads, config.clip);
      adam.step(params, grads, opt);
    }
    report.mean_kl_per_pair.push_back(kl_sum / static_cast<double>(pairs));
  }
  report.final_mean_kl_per_pair = mean_kl_per_pair(encoder, windows, prior, config.global_mode);
  return report;
}

void TrainLog::write(const std::string& path, const std::map<std::string, std::string>& comments) const {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows)
    out.push_back({std::to_string(r.epoch), r.phase, io::format_double(r.nll), io::format_double(r.kl),
                   io::format_double(r.total), io::format_double(r.val_mae), io::format_double(r.val_rmse),
                   io::format_double(r.seconds)});
  io::write_table(path, {"epoch", "phase", "nll", "kl", "neg_elbo", "val_mae", "val_rmse", "seconds"}, out, comments);
}

void train(TrainState& state, const TrainConfig& config, const Splits& splits, const Normalizer& normalizer,
           const PriorSpec* prior, const EpochCallback& on_epoch) {
  config.validate();
  Model& model = state.model;
  if (model.mode == ModelMode::lag) {
    const Metrics m = evaluate_all(model, splits.val, normalizer, config);
    state.best = model;
    state.best_val_mae = m.mae;
    state.log.rows.push_back({0, "lag", 0.0, 0.0, 0.0, m.mae, m.rmse, 0.0});
    return;
  }
  if (splits.train.empty()) throw DataError("no training windows");
  if (model.mode == ModelMode::nri && prior == nullptr) throw ConfigError("nri training needs a prior");
  const double sigma = model.decoder.config.sigma;

  if (model.mode == ModelMode::nri && !state.pretrained) {
    if (config.pretrain_epochs > 0) {
      const auto t0 = std::chrono::steady_clock::now();
      const PretrainReport rep = pretrain_encoder(model.encoder, splits.train, *prior, config.pretrain_epochs, config);
      for (std::size_t e = 0; e < rep.mean_kl_per_pair.size(); ++e)
        state.log.rows.push_back({e + 1, "pretrain", 0.0, rep.mean_kl_per_pair[e], rep.mean_kl_per_pair[e],
                                  std::nan(""), std::nan(""), e + 1 == rep.mean_kl_per_pair.size() ? seconds_since(t0) : 0.0});
      spdlog::info("pretraining done: mean KL per pair {:.5f}", rep.final_mean_kl_per_pair);
    }
    state.pretrained = true;
  }

  ad::ParameterList params = model.parameters();
  const GraphSample fixed_graph = model.mode == ModelMode::fixed
                                      ? GraphSample::from_adjacency(model.fixed_adjacency, model.decoder.config.edge_types)
                                      : GraphSample();

  while (state.epoch < config.epochs) {
    const std::size_t epoch = state.epoch + 1;
    const Adam adam(config.step_size * std::pow(config.step_decay, static_cast<double>(state.epoch)));
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(splits.train.size(), config.seed, epoch, 0x7a1);
    double nll_sum = 0.0, kl_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      ad::Gradients grads(params);
      const double weight = 1.0 / static_cast<double>(end - b);
      for (std::size_t k = b; k < end; ++k) {
        const NodeWindow& w = splits.train[order[k]];
        ad::Tape tape;
        ad::Var total;
        if (model.mode == ModelMode::nri) {
          Rng rng(mix_seed(config.seed, epoch, w.origin_index));
          const std::size_t pairs = w.num_nodes() * (w.num_nodes() - 1);
          const Matrix noise = sample_gumbel(static_cast<Eigen::Index>(pairs),
                                             static_cast<Eigen::Index>(model.decoder.config.edge_types), rng);
          const ElboVars v = elbo_on_tape(tape, w, model.encoder, model.decoder, *prior, config.tau, sigma, noise, config);
          nll_sum += v.nll.scalar();
          kl_sum += v.kl.scalar();
          total = v.total;
        } else {
          RolloutVars roll = rollout(tape, model.decoder, w, tape.constant(fixed_graph.soft_adjacency()));
          total = gaussian_nll(roll.means, w, sigma, config.include_burn_in);
          nll_sum += total.scalar();
        }
        check_finite(total.scalar(), "loss", epoch);
        tape.backward(total);
        grads.accumulate(tape, params, weight);
      }
      if (!grads.all_finite()) throw DivergenceError("non-finite gradient in epoch " + std::to_string(epoch));
      clip_gradients(grads, config.clip);
      adam.step(params, grads, state.optimizer);
    }
    const double n = static_cast<double>(splits.train.size());
    const Metrics val = splits.val.empty() ? Metrics{} : evaluate_all(model, splits.val, normalizer, config);
    check_finite(val.mae, "validation MAE", epoch);
    state.epoch = epoch;
    state.log.rows.push_back({epoch, "train", nll_sum / n, kl_sum / n, (nll_sum + kl_sum) / n, val.mae, val.rmse,
                              seconds_since(t0)});
    spdlog::debug("epoch {} nll {:.4f} kl {:.4f} val_mae {:.5f}", epoch, nll_sum / n, kl_sum / n, val.mae);
    if (val.mae < state.best_val_mae) {
      state.best_val_mae = val.mae;
      state.best = model;
      state.best_epoch = epoch;
      state.epochs_since_best = 0;
    } else {
      ++state.epochs_since_best;
    }
    const bool keep_going = on_epoch ? on_epoch(state) : true;
    if (!keep_going) break;
    if (config.patience > 0 && state.epochs_since_best >= config.patience) {
      spdlog::info("early stopping after epoch {} (best epoch {})", epoch, state.best_epoch);
      break;
    }
  }
  if (state.best_epoch == 0) state.best = model;
}

std::vector<HorizonMetrics> evaluate(const Model& model, const std::vector<NodeWindow>& windows,
                                     const std::vector<std::size_t>& horizons, const Normalizer& normalizer,
                                     const TrainConfig& config) {
  if (windows.empty()) throw DataError("no windows to evaluate");
  const std::size_t q = windows.front().target_steps();
  for (std::size_t h : horizons)
    if (h < 1 || h > q) throw std::invalid_argument("horizon " + std::to_string(h) + " outside 1.." + std::to_string(q));
  std::vector<std::vector<double>> preds(horizons.size()), targets(horizons.size());
  for (const auto& w : windows) {
    const Tensor3 p = normalizer.invert(model.predict(w, config));
    const Tensor3 t = normalizer.invert(w.target);
    for (std::size_t k = 0; k < horizons.size(); ++k) {
      const std::size_t step = horizons[k] - 1;
      for (std::size_t j = 0; j < p.dim1(); ++j)
        for (std::size_t f = 0; f < p.dim2(); ++f) {
          preds[k].push_back(p(step, j, f));
          targets[k].push_back(t(step, j, f));
        }
    }
  }
  std::vector<HorizonMetrics> out;
  for (std::size_t k = 0; k < horizons.size(); ++k)
    out.push_back({horizons[k], metrics(preds[k], targets[k], config.mape_epsilon)});
  return out;
}

Metrics evaluate_all(const Model& model, const std::vector<NodeWindow>& windows, const Normalizer& normalizer,
                     const TrainConfig& config) {
  if (windows.empty()) throw DataError("no windows to evaluate");
  std::vector<double> preds, targets;
  for (const auto& w : windows) {
    const Tensor3 p = normalizer.invert(model.predict(w, config));
    const Tensor3 t = normalizer.invert(w.target);
    preds.insert(preds.end(), p.data().begin(), p.data().end());
    targets.insert(targets.end(), t.data().begin(), t.data().end());
  }
  return metrics(preds, targets, config.mape_epsilon);
}

}  // namespace nri
