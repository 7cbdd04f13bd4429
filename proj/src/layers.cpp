#include "nri/layers.hpp"

#include <array>
#include <cmath>

namespace nri {

Linear::Linear(Eigen::Index in, Eigen::Index out, Rng& rng)
    : weight(in, out), bias(Matrix::Zero(1, out)) {
  const double a = std::sqrt(6.0 / static_cast<double>(std::max<Eigen::Index>(1, in + out)));
  for (Eigen::Index k = 0; k < weight.size(); ++k) weight.data()[k] = rng.uniform(-a, a);
}

ad::Var Linear::operator()(ad::Var x) const {
  ad::Tape& t = *x.tape();
  return ad::linear(x, t.parameter(weight), t.parameter(bias));
}

void Linear::register_parameters(const std::string& prefix, ad::ParameterList& params) {
  params.add(prefix + ".weight", &weight);
  params.add(prefix + ".bias", &bias);
}

Mlp::Mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng, bool output_activation,
         bool layer_norm)
    : fc1(in, hidden, rng),
      fc2(hidden, out, rng),
      layer_norm(layer_norm),
      output_activation(output_activation) {
  if (layer_norm) {
    ln_gain = Matrix::Ones(1, hidden);
    ln_bias = Matrix::Zero(1, hidden);
  }
}

ad::Var Mlp::operator()(ad::Var x) const {
  ad::Var h = ad::elu(fc1(x));
  if (layer_norm) {
    ad::Tape& t = *x.tape();
    h = ad::layer_norm(h, t.parameter(ln_gain), t.parameter(ln_bias));
  }
  ad::Var y = fc2(h);
  return output_activation ? ad::elu(y) : y;
}

void Mlp::register_parameters(const std::string& prefix, ad::ParameterList& params) {
  fc1.register_parameters(prefix + ".fc1", params);
  fc2.register_parameters(prefix + ".fc2", params);
  if (layer_norm) {
    params.add(prefix + ".ln.gain", &ln_gain);
    params.add(prefix + ".ln.bias", &ln_bias);
  }
}

GruCell::GruCell(Eigen::Index in, Eigen::Index hidden_size, Rng& rng)
    : input(in, 3 * hidden_size, rng), hidden(hidden_size, 3 * hidden_size, rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  for (Linear* l : std::array{&input, &hidden}) {
    for (Eigen::Index k = 0; k < l->weight.size(); ++k) l->weight.data()[k] = rng.uniform(-a, a);
    for (Eigen::Index k = 0; k < l->bias.size(); ++k) l->bias.data()[k] = rng.uniform(-a, a);
  }
}

ad::Var GruCell::operator()(ad::Var x, ad::Var h) const {
  const Eigen::Index hs = hidden_size();
  ad::Var gi = input(x);
  ad::Var gh = hidden(h);
  ad::Var r = ad::sigmoid(ad::add(ad::slice_cols(gi, 0, hs), ad::slice_cols(gh, 0, hs)));
  ad::Var z = ad::sigmoid(ad::add(ad::slice_cols(gi, hs, hs), ad::slice_cols(gh, hs, hs)));
  ad::Var n = ad::tanh(ad::add(ad::slice_cols(gi, 2 * hs, hs), ad::mul(r, ad::slice_cols(gh, 2 * hs, hs))));
  return ad::add(ad::mul(ad::one_minus(z), n), ad::mul(z, h));
}

void GruCell::register_parameters(const std::string& prefix, ad::ParameterList& params) {
  input.register_parameters(prefix + ".input", params);
  hidden.register_parameters(prefix + ".hidden", params);
}

}  // namespace nri
