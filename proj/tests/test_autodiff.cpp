#include <doctest.h>

#include <functional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "nri/autodiff.hpp"
#include "oracles.hpp"

using namespace nri;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
  return m;
}

// Scalar loss sum(op(a, b) .* w) for a fixed random weighting w.
void check_op(const std::string& name, const std::function<ad::Var(ad::Tape&, ad::Var, ad::Var)>& op, Eigen::Index ar,
              Eigen::Index ac, Eigen::Index br, Eigen::Index bc) {
  Rng rng(std::hash<std::string>{}(name));
  Matrix a = random_matrix(ar, ac, rng), b = random_matrix(br, bc, rng);
  ad::ParameterList params;
  params.add("a", &a);
  params.add("b", &b);
  Matrix w;
  auto loss = [&](ad::Tape& t) {
    ad::Var out = op(t, t.parameter(a), t.parameter(b));
    if (w.size() == 0) w = random_matrix(out.rows(), out.cols(), rng);
    return ad::sum(ad::mul(out, t.constant(w)));
  };
  oracle::GradCheck r = oracle::check_gradients(params, loss);
  INFO(name << " max rel error " << r.max_rel_error);
  CHECK(r.failed == 0);
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("every operation matches central differences") {
    check_op("linear", [](ad::Tape& t, ad::Var a, ad::Var b) {
      return ad::linear(a, b, t.constant(Matrix::Constant(1, 4, 0.3)));
    }, 3, 5, 5, 4);
    check_op("add", [](ad::Tape&, ad::Var a, ad::Var b) { return ad::add(a, b); }, 3, 4, 3, 4);
    check_op("sub", [](ad::Tape&, ad::Var a, ad::Var b) { return ad::sub(a, b); }, 3, 4, 3, 4);
    check_op("mul", [](ad::Tape&, ad::Var a, ad::Var b) { return ad::mul(a, b); }, 3, 4, 3, 4);
    check_op("scale", [](ad::Tape&, ad::Var a, ad::Var) { return ad::scale(a, -2.5); }, 3, 4, 1, 1);
    check_op("add_constant", [](ad::Tape&, ad::Var a, ad::Var) { return ad::add_constant(a, Matrix::Constant(3, 4, 2.0)); }, 3, 4, 1, 1);
    check_op("one_minus", [](ad::Tape&, ad::Var a, ad::Var) { return ad::one_minus(a); }, 3, 4, 1, 1);
    check_op("elu", [](ad::Tape&, ad::Var a, ad::Var) { return ad::elu(a); }, 3, 4, 1, 1);
    check_op("tanh", [](ad::Tape&, ad::Var a, ad::Var) { return ad::tanh(a); }, 3, 4, 1, 1);
    check_op("sigmoid", [](ad::Tape&, ad::Var a, ad::Var) { return ad::sigmoid(a); }, 3, 4, 1, 1);
    check_op("square", [](ad::Tape&, ad::Var a, ad::Var) { return ad::square(a); }, 3, 4, 1, 1);
    check_op("concat_cols", [](ad::Tape&, ad::Var a, ad::Var b) {
      std::vector<ad::Var> parts{a, b, a};
      return ad::concat_cols(parts);
    }, 3, 2, 3, 4);
    check_op("broadcast_rows", [](ad::Tape&, ad::Var a, ad::Var) { return ad::broadcast_rows(a, 5); }, 1, 3, 1, 1);
    check_op("gather_rows", [](ad::Tape&, ad::Var a, ad::Var) {
      static const std::vector<int> index{2, 0, 2, 1};
      return ad::gather_rows(a, index);
    }, 3, 2, 1, 1);
    check_op("scatter_add_rows", [](ad::Tape&, ad::Var a, ad::Var) {
      static const std::vector<int> index{1, 1, 0, 2};
      return ad::scatter_add_rows(a, index, 4);
    }, 4, 3, 1, 1);
    check_op("mul_col", [](ad::Tape&, ad::Var a, ad::Var b) { return ad::mul_col(a, b); }, 4, 3, 4, 1);
    check_op("column", [](ad::Tape&, ad::Var a, ad::Var) { return ad::column(a, 1); }, 4, 3, 1, 1);
    check_op("slice_cols", [](ad::Tape&, ad::Var a, ad::Var) { return ad::slice_cols(a, 1, 2); }, 4, 4, 1, 1);
    check_op("softmax_rows", [](ad::Tape&, ad::Var a, ad::Var) { return ad::softmax_rows(a); }, 4, 3, 1, 1);
    check_op("log_softmax_rows", [](ad::Tape&, ad::Var a, ad::Var) { return ad::log_softmax_rows(a); }, 4, 3, 1, 1);
    check_op("layer_norm", [](ad::Tape& t, ad::Var a, ad::Var b) {
      return ad::layer_norm(a, b, t.constant(Matrix::Constant(1, 5, 0.1)));
    }, 3, 5, 1, 5);
    check_op("sum", [](ad::Tape&, ad::Var a, ad::Var) { return ad::sum(ad::square(a)); }, 3, 4, 1, 1);
  }

  TEST_CASE("reused parameters accumulate into one gradient") {
    Matrix a = Matrix::Constant(1, 1, 3.0);
    ad::Tape t;
    ad::Var x = t.parameter(a);
    ad::Var y = t.parameter(a);
    CHECK(x.id() == y.id());
    ad::Var out = ad::sum(ad::mul(x, y));
    t.backward(out);
    CHECK(t.grad(x.id())(0, 0) == doctest::Approx(6.0));
  }

  TEST_CASE("straight-through argmax is one-hot forward, identity backward") {
    Matrix a(2, 3);
    a << 0.1, 2.0, -1.0, 3.0, 0.0, 0.5;
    ad::Tape t;
    ad::Var x = t.parameter(a);
    ad::Var y = ad::straight_through_argmax(x);
    Matrix expected(2, 3);
    expected << 0, 1, 0, 1, 0, 0;
    CHECK(y.value() == expected);
    t.backward(ad::sum(ad::scale(y, 2.0)));
    CHECK(t.grad(x.id()) == Matrix::Constant(2, 3, 2.0));
  }

  TEST_CASE("linear rows do not depend on batching") {
    Rng rng(8);
    Matrix x = random_matrix(6, 7, rng), w = random_matrix(7, 5, rng), b = random_matrix(1, 5, rng);
    Matrix all, one;
    ad::linear_forward(x, w, b, all);
    for (Eigen::Index r = 0; r < 6; ++r) {
      ad::linear_forward(x.row(r), w, b, one);
      CHECK(testutil::max_abs_diff(one, all.row(r)) == 0.0);
    }
  }
}
