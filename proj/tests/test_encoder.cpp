#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lak/encoder.hpp"
#include "lak/vocab.hpp"
#include "support/gradcheck.hpp"

using namespace lak;
using namespace lak::testing;
using Catch::Matchers::WithinAbs;

namespace {

Vocabulary demo_vocab() {
  return Vocabulary::build({{"alpha", "beta", "gamma", "delta", "epsilon", "zeta"}}, 64);
}

}  // namespace

TEST_CASE("batches pad to the longest document and truncate from the end", "[encoder]") {
  const std::vector<std::vector<std::size_t>> docs = {{2, 3, 4, 5, 6, 7}, {4, 5}, {9}};
  const EncodedBatch b = make_batch(docs, 4);
  REQUIRE(b.batch_size() == 3);
  CHECK(b.n_max == 4);
  CHECK(b.lengths == std::vector<std::size_t>{4, 2, 1});
  // Over-long documents keep their first max_len tokens.
  CHECK(b.ids[0] == std::vector<std::size_t>{2, 3, 4, 5});
  CHECK(b.ids[1] == std::vector<std::size_t>{4, 5, Vocabulary::kPad, Vocabulary::kPad});
  CHECK(b.mask[0] == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(b.mask[1] == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(b.mask[2] == std::vector<std::uint8_t>{1, 0, 0, 0});

  CHECK_THROWS_AS(make_batch({}, 4), ValueError);
  CHECK_THROWS_AS(make_batch({{1}, {}}, 4), ValueError);
  CHECK_THROWS_AS(make_batch(docs, 0), ConfigError);
}

TEST_CASE("position encodings follow the sinusoid schedule", "[encoder]") {
  const Matrix pe = position_encoding(4, 6);
  // Position 0: sin(0), cos(0) interleaved.
  for (std::size_t i = 0; i < 6; i += 2) {
    CHECK_THAT(pe(0, i), WithinAbs(0.0, 1e-15));
    CHECK_THAT(pe(0, i + 1), WithinAbs(1.0, 1e-15));
  }
  CHECK_THAT(pe(2, 0), WithinAbs(std::sin(2.0), 1e-15));
  CHECK_THAT(pe(2, 1), WithinAbs(std::cos(2.0), 1e-15));
  const double angle = 3.0 / std::pow(10000.0, 4.0 / 6.0);
  CHECK_THAT(pe(3, 4), WithinAbs(std::sin(angle), 1e-15));
  CHECK_THAT(pe(3, 5), WithinAbs(std::cos(angle), 1e-15));
  // Distinct rows, so token order is visible downstream.
  CHECK(pe(1, 0) != pe(2, 0));
}

TEST_CASE("a layerless encoder is embeddings plus positions", "[encoder]") {
  Rng rng(42);
  const TinyEncoderParams p = make_tiny_encoder(10, 6, 0, true, rng);
  const std::vector<std::size_t> ids = {5, 2};
  const Matrix h = encoder_forward(p, ids, {1, 1});
  const Matrix pe = position_encoding(2, 6);
  for (std::size_t pos = 0; pos < 2; ++pos)
    for (std::size_t i = 0; i < 6; ++i) CHECK(h(pos, i) == p.embed(ids[pos], i) + pe(pos, i));

  Rng rng2(42);
  const TinyEncoderParams q = make_tiny_encoder(10, 6, 0, false, rng2);
  const Matrix h2 = encoder_forward(q, {5}, {1});
  for (std::size_t i = 0; i < 6; ++i) CHECK(h2(0, i) == q.embed(5, i));
}

TEST_CASE("encoding is deterministic and id-range checked", "[encoder]") {
  Rng rng(3);
  const TinyEncoderParams p = make_tiny_encoder(12, 8, 2, true, rng);
  const std::vector<std::size_t> ids = {3, 7, 1, 0};
  const std::vector<std::uint8_t> mask = {1, 1, 1, 0};
  const Matrix a = encoder_forward(p, ids, mask);
  const Matrix b = encoder_forward(p, ids, mask);
  CHECK(a == b);
  CHECK_THROWS_AS(encoder_forward(p, {12}, {1}), ValueError);
  CHECK_THROWS_AS(encoder_forward(p, {}, {}), ValueError);
}

TEST_CASE("valid rows never see padded token ids", "[encoder]") {
  Rng rng(9);
  const TinyEncoderParams p = make_tiny_encoder(12, 8, 2, true, rng);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
  const Matrix a = encoder_forward(p, {3, 7, 1, 0, 0}, mask);
  const Matrix b = encoder_forward(p, {3, 7, 1, 9, 4}, mask);  // different junk in the tail
  double max_diff = 0.0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) max_diff = std::max(max_diff, std::abs(a(r, c) - b(r, c)));
  CHECK(max_diff < 1e-6);
}

TEST_CASE("identical documents in one batch get identical states", "[encoder]") {
  Rng rng(5);
  const TinyEncoderParams p = make_tiny_encoder(64, 6, 1, true, rng);
  const Vocabulary vocab = demo_vocab();
  const TinyEncoderAdapter adapter(p, vocab, 16);
  EncodedBatch batch;
  const HiddenStates h = adapter.encode(
      {{"alpha", "beta", "gamma"}, {"alpha", "beta", "gamma"}, {"delta"}}, batch);
  REQUIRE(h.docs.size() == 3);
  CHECK(h.dim == 6);
  CHECK(h.docs[0] == h.docs[1]);
  CHECK(h.docs[0].rows() == batch.n_max);
  CHECK(h.docs[0].cols() == 6);
}

TEST_CASE("encoder gradients agree with finite differences", "[encoder][grad]") {
  Rng rng(17);
  TinyEncoderParams p = make_tiny_encoder(9, 4, 2, true, rng);
  const std::vector<std::size_t> ids = {2, 5, 3, 0};
  const std::vector<std::uint8_t> mask = {1, 1, 1, 0};

  // Scalar probe: weighted sum of squares over the valid rows.
  Matrix coef(4, 4);
  for (double& v : coef.values()) v = rng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    const Matrix h = encoder_forward(p, ids, mask);
    double total = 0.0;
    for (std::size_t r = 0; r < h.rows(); ++r) {
      if (!mask[r]) continue;
      for (std::size_t c = 0; c < h.cols(); ++c) total += coef(r, c) * h(r, c) * h(r, c);
    }
    return total;
  };

  EncoderDocCache cache;
  const Matrix h = encoder_forward(p, ids, mask, &cache);
  Matrix dh(h.rows(), h.cols());
  for (std::size_t r = 0; r < h.rows(); ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < h.cols(); ++c) dh(r, c) = 2.0 * coef(r, c) * h(r, c);
  }
  TinyEncoderParams grads = zeros_like(p);
  encoder_backward(p, ids, mask, cache, dh, grads);

  std::vector<Matrix*> params = {&p.embed};
  std::vector<const Matrix*> analytic = {&grads.embed};
  for (std::size_t t = 0; t < p.layers.size(); ++t) {
    params.insert(params.end(), {&p.layers[t].wq, &p.layers[t].wk, &p.layers[t].wv, &p.layers[t].wo});
    analytic.insert(analytic.end(), {&grads.layers[t].wq, &grads.layers[t].wk, &grads.layers[t].wv,
                                     &grads.layers[t].wo});
  }
  const GradCheckResult res = finite_difference_check(params, analytic, loss);
  INFO("max relative error " << res.max_rel_err << " over " << res.checked << " entries");
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("masked mean pooling averages only the valid rows", "[encoder]") {
  Matrix h(3, 2);
  h(0, 0) = 1.0;
  h(0, 1) = 2.0;
  h(1, 0) = 3.0;
  h(1, 1) = 4.0;
  h(2, 0) = 100.0;
  h(2, 1) = 100.0;
  const Vec pooled = masked_mean_pool(h, {1, 1, 0});
  CHECK_THAT(pooled[0], WithinAbs(2.0, 1e-15));
  CHECK_THAT(pooled[1], WithinAbs(3.0, 1e-15));
  CHECK_THROWS_AS(masked_mean_pool(h, {0, 0, 0}), ValueError);
}

TEST_CASE("label matrix rows are pooled category-name encodings", "[encoder]") {
  Rng rng(21);
  const TinyEncoderParams p = make_tiny_encoder(64, 6, 0, false, rng);
  const Vocabulary vocab = demo_vocab();
  const std::vector<std::string> categories = {"alpha beta", "gamma", "gamma"};
  const Matrix c = init_label_matrix(p, vocab, categories);
  REQUIRE(c.rows() == 3);
  REQUIRE(c.cols() == 6);

  // Layerless, position-free: row j is the plain mean of token embeddings.
  const auto ids_ab = vocab.encode(tokenize("alpha beta"));
  for (std::size_t i = 0; i < 6; ++i)
    CHECK_THAT(c(0, i),
               WithinAbs((p.embed(ids_ab[0], i) + p.embed(ids_ab[1], i)) / 2.0, 1e-12));
  const auto ids_g = vocab.encode(tokenize("gamma"));
  for (std::size_t i = 0; i < 6; ++i) CHECK_THAT(c(1, i), WithinAbs(p.embed(ids_g[0], i), 1e-12));

  // Identical names encode identically; unknown names fall back to <unk>.
  for (std::size_t i = 0; i < 6; ++i) CHECK(c(1, i) == c(2, i));
  const Matrix u = init_label_matrix(p, vocab, {"qqq", "zzz"});
  for (std::size_t i = 0; i < 6; ++i) CHECK(u(0, i) == u(1, i));

  CHECK_THROWS_AS(init_label_matrix(p, vocab, {}), ValueError);
}
