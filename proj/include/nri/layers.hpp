#pragma once

#include <string>

#include "nri/autodiff.hpp"
#include "nri/random.hpp"

namespace nri {

struct Linear {
  Matrix weight;  // [in x out]
  Matrix bias;    // [1 x out]

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, Rng& rng);

  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
  ad::Var operator()(ad::Var x) const;
  void register_parameters(const std::string& prefix, ad::ParameterList& params);
};

// Two-layer mapping: linear -> ELU -> [layer norm] -> linear [-> ELU].
struct Mlp {
  Linear fc1;
  Linear fc2;
  bool layer_norm = false;
  bool output_activation = true;
  Matrix ln_gain;  // [1 x hidden]
  Matrix ln_bias;

  Mlp() = default;
  Mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng, bool output_activation = true,
      bool layer_norm = false);

  Eigen::Index in_features() const { return fc1.in_features(); }
  Eigen::Index out_features() const { return fc2.out_features(); }
  ad::Var operator()(ad::Var x) const;
  void register_parameters(const std::string& prefix, ad::ParameterList& params);
};

// Gated recurrent unit, gates ordered (reset, update, candidate) along columns.
//   r = sigmoid(x Wi_r + bi_r + h Wh_r + bh_r)
//   z = sigmoid(x Wi_z + bi_z + h Wh_z + bh_z)
//   n = tanh(x Wi_n + bi_n + r * (h Wh_n + bh_n))
//   h' = (1 - z) * n + z * h
struct GruCell {
  Linear input;   // [in x 3H]
  Linear hidden;  // [H x 3H]

  GruCell() = default;
  GruCell(Eigen::Index in, Eigen::Index hidden_size, Rng& rng);

  Eigen::Index hidden_size() const { return hidden.in_features(); }
  Eigen::Index in_features() const { return input.in_features(); }
  ad::Var operator()(ad::Var x, ad::Var h) const;
  void register_parameters(const std::string& prefix, ad::ParameterList& params);
};

}  // namespace nri
