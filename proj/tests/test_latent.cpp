#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "nri/io.hpp"
#include "nri/latent.hpp"
#include "oracles.hpp"

using namespace nri;

namespace {

Matrix random_probs(Eigen::Index rows, Eigen::Index k, Rng& rng) {
  Matrix p(rows, k);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) p(r, c) = rng.uniform(0.05, 1.0);
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

}  // namespace

TEST_SUITE("latent") {
  TEST_CASE("gumbel-softmax examples") {
    Matrix logits(1, 2);
    logits << 2.0, 0.0;
    Matrix s = gumbel_softmax_sample(logits, 1.0, Matrix::Zero(1, 2));
    CHECK(s(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(s(0, 0) == doctest::Approx(0.881).epsilon(1e-3));

    Matrix equal = Matrix::Constant(1, 3, 0.7);
    for (double tau : {0.1, 1.0, 5.0}) {
      Matrix u = gumbel_softmax_sample(equal, tau, Matrix::Zero(1, 3));
      for (int k = 0; k < 3; ++k) CHECK(u(0, k) == doctest::Approx(1.0 / 3.0));
    }

    Matrix sharp(1, 2);
    sharp << 5.0, 0.0;
    Matrix cold = gumbel_softmax_sample(sharp, 0.01, Matrix::Zero(1, 2));
    CHECK(std::abs(cold(0, 0) - 1.0) < 1e-6);
    CHECK(cold(0, 1) < 1e-6);

    CHECK_THROWS(gumbel_softmax_sample(sharp, 0.0, Matrix::Zero(1, 2)));
  }

  TEST_CASE("samples are normalized and seeded") {
    Rng rng(3);
    Matrix logits(20, 3);
    for (Eigen::Index k = 0; k < logits.size(); ++k) logits.data()[k] = rng.normal();
    Rng a(11), b(11);
    Matrix sa = gumbel_softmax_sample(logits, 0.5, a);
    Matrix sb = gumbel_softmax_sample(logits, 0.5, b);
    CHECK(testutil::max_abs_diff(sa, sb) == 0.0);
    for (Eigen::Index r = 0; r < sa.rows(); ++r) CHECK(std::abs(sa.row(r).sum() - 1.0) < 1e-6);
  }

  TEST_CASE("hard samples are unbiased for q") {
    Matrix logits(4, 2);
    logits << 0.0, 0.0, 2.0, -1.0, -0.5, 1.5, 3.0, 0.0;
    Matrix q(4, 2);
    for (Eigen::Index r = 0; r < 4; ++r) {
      const double m = logits.row(r).maxCoeff();
      q.row(r) = (logits.row(r).array() - m).exp().matrix();
      q.row(r) /= q.row(r).sum();
    }
    Rng rng(21);
    Matrix mean = Matrix::Zero(4, 2);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
      ad::Tape t;
      ad::Var s = gumbel_softmax(t.constant(logits), 0.5, sample_gumbel(4, 2, rng), true);
      mean += s.value();
    }
    mean /= draws;
    CHECK(testutil::max_abs_diff(mean, q) < 0.02);
  }

  TEST_CASE("sampling gradient matches central differences with fixed noise") {
    for (bool hard : {false, true}) {
      Rng rng(5);
      Matrix logits(6, 2), weights(6, 2);
      for (Eigen::Index k = 0; k < logits.size(); ++k) logits.data()[k] = rng.normal();
      for (Eigen::Index k = 0; k < weights.size(); ++k) weights.data()[k] = rng.normal();
      const Matrix noise = sample_gumbel(6, 2, rng);
      ad::ParameterList params;
      params.add("logits", &logits);
      // The straight-through forward value is piecewise constant, so the
      // check uses the relaxed sample; `hard` only changes the forward value.
      auto loss = [&](ad::Tape& t) {
        return ad::sum(ad::mul(gumbel_softmax(t.parameter(logits), 0.5, noise, false), t.constant(weights)));
      };
      oracle::GradCheck r = oracle::check_gradients(params, loss);
      CHECK(r.failed == 0);
      if (hard) {
        ad::Tape a, b;
        ad::Var la = a.parameter(logits), lb = b.parameter(logits);
        a.backward(ad::sum(ad::mul(gumbel_softmax(la, 0.5, noise, true), a.constant(weights))));
        b.backward(ad::sum(ad::mul(gumbel_softmax(lb, 0.5, noise, false), b.constant(weights))));
        CHECK(testutil::max_abs_diff(a.grad(la.id()), b.grad(lb.id())) == 0.0);
      }
    }
  }

  TEST_CASE("KL identities") {
    Rng rng(9);
    Matrix q = random_probs(20, 2, rng);
    CHECK(std::abs(kl_categorical(q, q)) <= 1e-9);

    Matrix one(1, 2), half(1, 2);
    one << 1.0, 0.0;
    half << 0.5, 0.5;
    CHECK(std::abs(kl_categorical(one, half) - std::log(2.0)) <= 1e-9);

    Matrix p = Matrix::Zero(20, 2);
    p.col(0).setConstant(0.9);
    p.col(1).setConstant(0.1);
    CHECK(std::abs(kl_categorical(p, p)) <= 1e-9);

    for (int trial = 0; trial < 50; ++trial) {
      Matrix a = random_probs(5, 3, rng), b = random_probs(5, 3, rng);
      CHECK(kl_categorical(a, b) > 0.0);
    }
    CHECK_THROWS(kl_categorical(half, one));
  }

  TEST_CASE("differentiable KL agrees with the plain form") {
    Rng rng(2);
    Matrix logits(12, 2);
    for (Eigen::Index k = 0; k < logits.size(); ++k) logits.data()[k] = rng.normal();
    PriorSpec prior = build_uniform_prior(4);
    ad::Tape t;
    ad::Var kl = kl_categorical(t.constant(logits), prior, 4);
    EdgeDistribution q(4, logits);
    CHECK(kl.scalar() == doctest::Approx(kl_categorical(q, prior)).epsilon(1e-12));

    ad::ParameterList params;
    params.add("logits", &logits);
    auto loss = [&](ad::Tape& tape) { return kl_categorical(tape.parameter(logits), prior, 4); };
    CHECK(oracle::check_gradients(params, loss).failed == 0);
  }

  TEST_CASE("uniform priors") {
    Matrix d = build_uniform_prior(5).per_pair(5);
    CHECK(d.rows() == 20);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      CHECK(d(r, 0) == doctest::Approx(0.9));
      CHECK(d(r, 1) == doctest::Approx(0.1));
    }
    Matrix sym = build_uniform_prior(3, 2, 0.5).probs;
    CHECK(sym(0, 0) == 0.5);
    CHECK(sym(0, 1) == 0.5);
    Matrix three = build_uniform_prior(3, 3, 0.9).probs;
    CHECK(three(0, 0) == doctest::Approx(0.9));
    CHECK(three(0, 1) == doctest::Approx(0.05));
    CHECK(three(0, 2) == doctest::Approx(0.05));
    CHECK_THROWS(build_uniform_prior(3, 2, 1.0));
    CHECK_THROWS(build_uniform_prior(3, 2, 0.0));
  }

  TEST_CASE("structured priors") {
    Matrix zero = build_structured_prior(AdjacencyMatrix::empty(4), 0.8).per_pair(4);
    Matrix uniform = build_uniform_prior(4, 2, 0.8).per_pair(4);
    CHECK(testutil::max_abs_diff(zero, uniform) < 1e-15);

    AdjacencyMatrix one(2);
    one.set(0, 1, 1.0);
    PriorSpec s = build_structured_prior(one, 0.9);
    EdgeIndex idx = EdgeIndex::fully_connected(2);
    CHECK(s.probs(static_cast<Eigen::Index>(idx.pair(0, 1)), 0) == doctest::Approx(0.1));
    CHECK(s.probs(static_cast<Eigen::Index>(idx.pair(0, 1)), 1) == doctest::Approx(0.9));
    CHECK(s.probs(static_cast<Eigen::Index>(idx.pair(1, 0)), 0) == doctest::Approx(0.9));
    CHECK(s.probs(static_cast<Eigen::Index>(idx.pair(1, 0)), 1) == doctest::Approx(0.1));

    AdjacencyMatrix soft(2);
    soft.set(0, 1, 0.4);
    CHECK_THROWS(build_structured_prior(soft, 0.9));
  }

  TEST_CASE("fixed graphs") {
    AdjacencyMatrix full = AdjacencyMatrix::full(3);
    GraphSample g = GraphSample::from_adjacency(full);
    CHECK(g.soft_adjacency().col(1).sum() == 6.0);
    GraphSample none = GraphSample::no_edges(3);
    CHECK(none.soft_adjacency().col(1).sum() == 0.0);
    CHECK(none.soft_adjacency().col(0).sum() == 6.0);
    CHECK(g.at(1, 1, 1) == 0.0);

    Matrix logits(2, 2);
    logits << 1.0, 0.0, -1.0, 2.0;
    EdgeDistribution q(2, logits);
    GraphSample am = GraphSample::argmax(q);
    CHECK(am.at(0, 1, 0) == 1.0);
    CHECK(am.at(1, 0, 1) == 1.0);
    CHECK(testutil::max_abs_diff(GraphSample::expected(q).soft_adjacency(), q.probs()) == 0.0);
  }

  TEST_CASE("prior files round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "nri_latent_test";
    std::filesystem::remove_all(dir);
    PriorSpec uniform = build_uniform_prior(4, 3, 0.7);
    save_prior(uniform, dir / "uniform.json", 4);
    PriorSpec back = load_prior(dir / "uniform.json");
    CHECK(back.provenance == PriorProvenance::uniform);
    CHECK(testutil::max_abs_diff(back.probs, uniform.probs) == 0.0);

    AdjacencyMatrix adj(3, {"a", "b", "c"});
    adj.set(0, 2, 1.0);
    adj.set(2, 1, 1.0);
    io::write_adjacency(adj, dir / "graph.csv");
    PriorSpec structured = build_structured_prior(adj, 0.85, 2, PriorProvenance::dtw);
    structured.adjacency_ref = "graph.csv";
    save_prior(structured, dir / "dtw.json", 3);
    PriorSpec loaded = load_prior(dir / "dtw.json");
    CHECK(loaded.provenance == PriorProvenance::dtw);
    CHECK(loaded.confidence == 0.85);
    CHECK(testutil::max_abs_diff(loaded.per_pair(3), structured.per_pair(3)) < 1e-15);

    PriorSpec custom = structured;
    custom.adjacency_ref.clear();
    custom.provenance = PriorProvenance::custom;
    save_prior(custom, dir / "custom.json", 3);
    CHECK(testutil::max_abs_diff(load_prior(dir / "custom.json").per_pair(3), structured.per_pair(3)) < 1e-15);
    CHECK_THROWS_AS(load_prior(dir / "missing.json"), DataError);
    std::filesystem::remove_all(dir);
  }
}
