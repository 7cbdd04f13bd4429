#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// None of these call into the library code they are compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "nri/autodiff.hpp"
#include "nri/decoder.hpp"

namespace oracle {

using nri::Matrix;

// ---- finite differences ---------------------------------------------------------

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t failed = 0;
};

// Compares tape gradients of `loss` (a 1x1 Var recorded on the given tape)
// against central differences for every scalar of every parameter. An entry
// fails when |analytic - numeric| > rel_tol * max(|analytic|, |numeric|) + abs_floor.
inline GradCheck check_gradients(nri::ad::ParameterList& params,
                                 const std::function<nri::ad::Var(nri::ad::Tape&)>& loss, double rel_tol = 1e-4,
                                 double step = 1e-5, double abs_floor = 1e-8) {
  nri::ad::Tape tape;
  nri::ad::Var out = loss(tape);
  tape.backward(out);
  nri::ad::Gradients grads(params);
  grads.accumulate(tape, params);

  auto value = [&] {
    nri::ad::Tape t;
    return loss(t).scalar();
  };
  GradCheck result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& m = params[p];
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const double saved = m.data()[k];
      m.data()[k] = saved + step;
      const double up = value();
      m.data()[k] = saved - step;
      const double down = value();
      m.data()[k] = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic = grads[p].data()[k];
      const double err = std::abs(analytic - numeric);
      const double scale = std::max(std::abs(analytic), std::abs(numeric));
      ++result.checked;
      if (err > rel_tol * scale + abs_floor) ++result.failed;
      if (scale > abs_floor) result.max_rel_error = std::max(result.max_rel_error, err / scale);
    }
  }
  return result;
}

// ---- metrics ----------------------------------------------------------------------

struct BruteMetrics {
  double mae = 0, rmse = 0, mape = 0, pcc = 0;
  bool has_mape = false, has_pcc = false;
};

inline BruteMetrics brute_metrics(const std::vector<double>& p, const std::vector<double>& y, double eps) {
  BruteMetrics m;
  const std::size_t n = p.size();
  long double abs_sum = 0, sq_sum = 0, ape_sum = 0;
  std::size_t ape_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double d = static_cast<long double>(p[i]) - y[i];
    abs_sum += d < 0 ? -d : d;
    sq_sum += d * d;
    if (std::abs(y[i]) > eps) {
      ape_sum += (d < 0 ? -d : d) / std::abs(static_cast<long double>(y[i]));
      ++ape_n;
    }
  }
  m.mae = static_cast<double>(abs_sum / n);
  m.rmse = static_cast<double>(std::sqrt(sq_sum / n));
  if (ape_n > 0) {
    m.has_mape = true;
    m.mape = static_cast<double>(100 * ape_sum / ape_n);
  }
  long double mp = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += p[i];
    my += y[i];
  }
  mp /= n;
  my /= n;
  long double cov = 0, vp = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (p[i] - mp) * (y[i] - my);
    vp += (p[i] - mp) * (p[i] - mp);
    vy += (y[i] - my) * (y[i] - my);
  }
  if (vp > 0 && vy > 0) {
    m.has_pcc = true;
    m.pcc = static_cast<double>(cov / std::sqrt(vp * vy));
  }
  return m;
}

// ---- DTW ---------------------------------------------------------------------------

// Minimum absolute-difference cost over every monotone warping path from
// (0,0) to (n-1,m-1), by exhaustive enumeration.
inline double brute_dtw(const std::vector<double>& a, const std::vector<double>& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double cost) {
    cost += std::abs(a[i] - b[j]);
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < a.size()) walk(i + 1, j, cost);
    if (j + 1 < b.size()) walk(i, j + 1, cost);
    if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, cost);
  };
  walk(0, 0, 0.0);
  return best;
}

// ---- ROC AUC -----------------------------------------------------------------------

// Fraction of (positive, negative) ordered-pair combinations ranked correctly;
// ties count one half.
inline double brute_auc(const Matrix& scores, const Matrix& labels) {
  std::vector<double> pos, neg;
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (i == j) continue;
      (labels(i, j) > 0.5 ? pos : neg).push_back(scores(i, j));
    }
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// ---- isolated per-node recurrent model ----------------------------------------------

// One node's GRU forecaster reading the decoder's parameters: input [x, u]
// (the message slots of the shared input matrix are skipped), zero initial
// state, teacher forcing for P steps then self-feeding. Returns the P+Q
// one-step means for node `node` as [(P+Q) x c].
class PerNodeRnn {
 public:
  explicit PerNodeRnn(const nri::DecoderParams& p) : p_(p), h_(p.config.hidden) {}

  Matrix run(const nri::NodeWindow& w, std::size_t node) const {
    const std::size_t steps = w.burn_in_steps() + w.target_steps(), c = p_.config.features;
    Matrix out(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(c));
    std::vector<double> state(h_, 0.0), x(c);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t f = 0; f < c; ++f)
        x[f] = s < w.burn_in_steps() ? w.burn_in(s, node, f) : out(static_cast<Eigen::Index>(s - 1), static_cast<Eigen::Index>(f));
      std::vector<double> u;
      for (Eigen::Index g = 0; g < w.global_track.cols(); ++g) u.push_back(w.global_track(static_cast<Eigen::Index>(s), g));
      state = gru(x, u, state);
      const std::vector<double> y = head(state);
      for (std::size_t f = 0; f < c; ++f) out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(f)) = x[f] + y[f];
    }
    return out;
  }

 private:
  static double sigmoid(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  }
  static double elu(double v) { return v > 0 ? v : std::expm1(v); }

  // y[c] = sum_i in[i] * W[row0 + i][c] accumulated in row order, plus bias last.
  static void affine(const std::vector<double>& in, const Matrix& w, Eigen::Index row0, std::vector<double>& y) {
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(in.size()); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) y[static_cast<std::size_t>(c)] += in[static_cast<std::size_t>(r)] * w(row0 + r, c);
  }
  static void add_bias(const Matrix& b, std::vector<double>& y) {
    for (Eigen::Index c = 0; c < b.cols(); ++c) y[static_cast<std::size_t>(c)] += b(0, c);
  }

  std::vector<double> gru(const std::vector<double>& x, const std::vector<double>& u, const std::vector<double>& h) const {
    const auto& wi = p_.gru.input;
    const auto& wh = p_.gru.hidden;
    const auto hs = static_cast<Eigen::Index>(h_);
    std::vector<double> gi(3 * h_, 0.0), gh(3 * h_, 0.0);
    affine(x, wi.weight, hs, gi);
    affine(u, wi.weight, hs + static_cast<Eigen::Index>(x.size()), gi);
    add_bias(wi.bias, gi);
    affine(h, wh.weight, 0, gh);
    add_bias(wh.bias, gh);
    std::vector<double> next(h_);
    for (std::size_t k = 0; k < h_; ++k) {
      const double r = sigmoid(gi[k] + gh[k]);
      const double z = sigmoid(gi[h_ + k] + gh[h_ + k]);
      const double n = std::tanh(gi[2 * h_ + k] + r * gh[2 * h_ + k]);
      next[k] = (1.0 - z) * n + z * h[k];
    }
    return next;
  }

  std::vector<double> head(const std::vector<double>& h) const {
    const auto& mlp = p_.output;
    std::vector<double> a(static_cast<std::size_t>(mlp.fc1.weight.cols()), 0.0);
    affine(h, mlp.fc1.weight, 0, a);
    add_bias(mlp.fc1.bias, a);
    for (double& v : a) v = elu(v);
    std::vector<double> y(static_cast<std::size_t>(mlp.fc2.weight.cols()), 0.0);
    affine(a, mlp.fc2.weight, 0, y);
    add_bias(mlp.fc2.bias, y);
    return y;
  }

  const nri::DecoderParams& p_;
  std::size_t h_;
};

}  // namespace oracle
