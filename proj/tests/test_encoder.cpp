#include <doctest.h>

#include "helpers.hpp"
#include "nri/encoder.hpp"
#include "oracles.hpp"

using namespace nri;
using testutil::random_window;

namespace {

EncoderConfig tiny_encoder(std::size_t p = 4, std::size_t globals = 2, std::size_t hidden = 8) {
  EncoderConfig cfg;
  cfg.burn_in = p;
  cfg.features = 1;
  cfg.globals = globals;
  cfg.hidden = hidden;
  return cfg;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("five nodes give twenty pairs of two logits") {
    EncoderParams params(tiny_encoder(), 1);
    EdgeDistribution q = encode(random_window(4, 2, 5, 1, 2, 3), params);
    CHECK(q.num_pairs() == 20);
    CHECK(q.logits().rows() == 20);
    CHECK(q.logits().cols() == 2);
    Matrix dense = q.dense_probs(1);
    CHECK(dense.rows() == 5);
    for (int i = 0; i < 5; ++i) CHECK(dense(i, i) == 0.0);
    for (Eigen::Index r = 0; r < q.probs().rows(); ++r) CHECK(q.probs().row(r).sum() == doctest::Approx(1.0));
  }

  TEST_CASE("parameter shapes do not depend on the node count") {
    EncoderParams params(tiny_encoder(), 1);
    const std::size_t count = params.parameter_count();
    CHECK(encode(random_window(4, 2, 5, 1, 2, 3), params).num_pairs() == 20);
    CHECK(encode(random_window(4, 2, 8, 1, 2, 4), params).num_pairs() == 56);
    CHECK(params.parameter_count() == count);
  }

  TEST_CASE("invalid inputs are rejected") {
    EncoderParams params(tiny_encoder(), 1);
    CHECK_THROWS(encode(random_window(4, 2, 1, 1, 2, 3), params));
    CHECK_THROWS(encode(random_window(3, 2, 4, 1, 2, 3), params));
    const NodeWindow w = random_window(4, 2, 4, 1, 2, 3);
    CHECK_THROWS(encode_full_global(w, params, Matrix::Zero(5, 2), GlobalMode::full));
  }

  TEST_CASE("global conditioning modes") {
    EncoderParams params(tiny_encoder(), 1);
    NodeWindow w = random_window(4, 2, 4, 1, 2, 3);
    const Matrix historical = encode_full_global(w, params, w.global_track, GlobalMode::historical).logits();
    CHECK(testutil::max_abs_diff(encode(w, params).logits(), historical) == 0.0);

    // Identical values across the burn-in and the target range: full equals historical.
    NodeWindow flat = w;
    for (Eigen::Index t = 0; t < flat.global_track.rows(); ++t) flat.global_track.row(t) = w.global_track.row(0);
    CHECK(testutil::max_abs_diff(encode_full_global(flat, params, flat.global_track, GlobalMode::full).logits(),
                                 encode(flat, params).logits()) < 1e-12);
    CHECK(testutil::max_abs_diff(encode_full_global(w, params, w.global_track, GlobalMode::full).logits(), historical) >
          1e-9);

    EncoderParams no_globals(tiny_encoder(4, 0), 1);
    NodeWindow bare = random_window(4, 2, 4, 1, 0, 3);
    CHECK(encode(bare, no_globals).num_pairs() == 12);
  }

  TEST_CASE("recurrent node embedder runs") {
    EncoderConfig cfg = tiny_encoder();
    cfg.node_embedder = NodeEmbedder::recurrent;
    EncoderParams params(cfg, 2);
    CHECK(encode(random_window(4, 2, 3, 1, 2, 5), params).num_pairs() == 6);
  }

  TEST_CASE("permutation equivariance") {
    EncoderParams params(tiny_encoder(), 7);
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 5;
      NodeWindow w = random_window(4, 2, n, 1, 2, 100 + trial);
      auto perm = testutil::random_permutation(n, rng);
      const Matrix base = encode(w, params).logits();
      const Matrix permuted = encode(testutil::permute_window(w, perm), params).logits();
      CHECK(testutil::max_abs_diff(permuted, testutil::permute_pairs(base, n, perm)) < 1e-5);
    }
  }

  TEST_CASE("gradients match central differences") {
    for (NodeEmbedder embed : {NodeEmbedder::flatten, NodeEmbedder::recurrent}) {
      EncoderConfig cfg = tiny_encoder(3, 2, 8);
      cfg.node_embedder = embed;
      EncoderParams params(cfg, 5);
      ad::ParameterList list;
      params.register_parameters(list);
      const NodeWindow w = random_window(3, 2, 3, 1, 2, 6);
      Rng rng(12);
      Matrix weights(6, 2);
      for (Eigen::Index k = 0; k < weights.size(); ++k) weights.data()[k] = rng.normal();
      auto loss = [&](ad::Tape& t) {
        ad::Var logits = encode_logits(t, params, w.burn_in, w.global_track);
        return ad::sum(ad::mul(ad::log_softmax_rows(logits), t.constant(weights)));
      };
      oracle::GradCheck r = oracle::check_gradients(list, loss);
      INFO("max rel error " << r.max_rel_error);
      CHECK(r.checked == list.total_scalars());
      CHECK(r.failed == 0);
    }
  }
}
