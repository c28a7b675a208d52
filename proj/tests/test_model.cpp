#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "lak/contrastive.hpp"
#include "lak/model.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

using namespace lak;
using namespace lak::testing;

namespace {

Vocabulary tiny_vocab() {
  return Vocabulary::build(
      {{"alpha", "beta", "gamma", "delta"}, {"alpha", "beta", "epsilon", "zeta"}, {"eta", "theta"}},
      32);
}

Model tiny_model(ModelKind kind, std::uint64_t seed, bool bias = false, bool positions = true,
                 std::size_t d = 6, std::size_t heads = 2) {
  Rng rng(seed);
  return make_model(kind, tiny_vocab(), {"alpha beta", "gamma", "unknown words"}, d, heads, 1,
                    positions, AttnScale::da, bias, rng, 16);
}

EncodedBatch tiny_batch(const Model& m) {
  const std::vector<std::vector<std::string>> docs = {
      {"alpha", "beta", "gamma"}, {"delta", "epsilon"}, {"zeta", "eta", "theta", "alpha"}};
  std::vector<std::vector<std::size_t>> ids;
  for (const auto& doc : docs) ids.push_back(m.vocab.encode(doc));
  return make_batch(ids, m.max_len);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("model construction is deterministic and well-shaped", "[model]") {
  const Model a = tiny_model(ModelKind::multi_attention, 5);
  const Model b = tiny_model(ModelKind::multi_attention, 5);
  const Model c = tiny_model(ModelKind::multi_attention, 6);

  CHECK(a.dim() == 6);
  CHECK(a.num_labels() == 3);
  CHECK(a.label_matrix.rows() == 3);
  CHECK(a.label_matrix.cols() == 6);
  CHECK(a.attn.b1.empty());

  CHECK(model_checksum(a) == model_checksum(b));
  CHECK(model_checksum(a) != model_checksum(c));

  Model mutated = tiny_model(ModelKind::multi_attention, 5);
  mutated.attn.wv(0, 0) += 1e-9;
  CHECK(model_checksum(mutated) != model_checksum(a));
}

TEST_CASE("baseline models carry no attention tensors", "[model]") {
  const Model m = tiny_model(ModelKind::baseline, 3);
  CHECK(m.label_matrix.empty());
  CHECK(m.attn.wq.empty());
  for (const auto& [name, mat] : named_tensors(m)) {
    CHECK(!mat->empty());
    CHECK(name.find("attn.") == std::string::npos);
    CHECK(name != "label_matrix");
  }
}

TEST_CASE("parameter views of model and gradients align", "[model]") {
  for (ModelKind kind : {ModelKind::baseline, ModelKind::multi_attention}) {
    for (bool bias : {false, true}) {
      Model m = tiny_model(kind, 9, bias);
      ModelGrads g = zeros_like(m);
      auto mp = parameters(m);
      auto gp = parameters(g);
      REQUIRE(mp.size() == gp.size());
      for (std::size_t i = 0; i < mp.size(); ++i) {
        CHECK(mp[i]->rows() == gp[i]->rows());
        CHECK(mp[i]->cols() == gp[i]->cols());
      }
    }
  }
}

TEST_CASE("forward probabilities are reproducible and within range", "[model]") {
  const Model m = tiny_model(ModelKind::multi_attention, 7);
  const EncodedBatch batch = tiny_batch(m);
  const Matrix p1 = forward_batch(m, batch);
  const Matrix p2 = forward_batch(m, batch);
  REQUIRE(p1 == p2);
  for (double v : p1.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("padding embeddings cannot leak into predictions", "[model]") {
  Model m = tiny_model(ModelKind::multi_attention, 11);
  const EncodedBatch batch = tiny_batch(m);
  const Matrix before = forward_batch(m, batch);
  for (std::size_t t = 0; t < m.dim(); ++t) m.encoder.embed(Vocabulary::kPad, t) = 1000.0;
  const Matrix after = forward_batch(m, batch);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(std::fabs(before.values()[i] - after.values()[i]) < 1e-6);
}

TEST_CASE("whole-model gradients match finite differences", "[model]") {
  struct Case {
    ModelKind kind;
    bool bias;
    bool positions;
  };
  for (const Case& tc : {Case{ModelKind::multi_attention, true, true},
                         Case{ModelKind::baseline, false, true},
                         Case{ModelKind::multi_attention, false, false}}) {
    Model m = tiny_model(tc.kind, 13, tc.bias, tc.positions);
    const EncodedBatch batch = tiny_batch(m);
    Rng rng(17);
    Matrix targets(3, m.num_labels());
    for (double& v : targets.values()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const Vec w = {1.3, 1.0, 0.6};
    const double gamma = 0.5, tau = 0.9;

    const auto loss = [&]() {
      BatchCache cache;
      const Matrix probs = forward_batch(m, batch, &cache);
      return total_loss(weighted_bce(probs, targets, w),
                        contrastive_loss(cache.z, targets, tau), gamma);
    };

    BatchCache cache;
    const Matrix probs = forward_batch(m, batch, &cache);
    const Matrix dprobs = weighted_bce_backward(probs, targets, w);
    ContrastiveCache ccache;
    contrastive_loss(cache.z, targets, tau, &ccache);
    Matrix dz_extra = contrastive_backward(cache.z, tau, ccache);
    dz_extra *= gamma;
    ModelGrads g = zeros_like(m);
    backward_batch(m, cache, dprobs, dz_extra, g);

    std::vector<Matrix*> params = parameters(m);
    ModelGrads& gref = g;
    std::vector<const Matrix*> analytic;
    for (Matrix* mat : parameters(gref)) analytic.push_back(mat);
    REQUIRE(params.size() == analytic.size());
    const auto result = finite_difference_check(params, analytic, loss);
    INFO("kind=" << model_kind_name(tc.kind) << " bias=" << tc.bias
                 << " positions=" << tc.positions << " checked=" << result.checked
                 << " max_rel_err=" << result.max_rel_err);
    CHECK(result.max_rel_err < 1e-4);
  }
}

TEST_CASE("checkpoints survive a round trip bit for bit", "[model]") {
  TempDir tmp;
  Checkpoint ck;
  ck.model = tiny_model(ModelKind::multi_attention, 21, true);
  ck.config_text = "epochs=3\nseed=21\n";
  ck.fold_id = 4;
  ck.best_metric = 0.625;

  const std::string path = tmp.str("model.ckpt");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);

  CHECK(back.model.kind == ck.model.kind);
  CHECK(back.model.max_len == ck.model.max_len);
  CHECK(back.model.categories == ck.model.categories);
  CHECK(back.model.vocab.tokens() == ck.model.vocab.tokens());
  CHECK(back.config_text == ck.config_text);
  CHECK(back.fold_id == 4);
  CHECK(back.best_metric == 0.625);
  CHECK(model_checksum(back.model) == model_checksum(ck.model));

  const auto orig = named_tensors(ck.model);
  const auto loaded = named_tensors(back.model);
  REQUIRE(orig.size() == loaded.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == loaded[i].first);
    REQUIRE(*orig[i].second == *loaded[i].second);  // exact doubles
  }

  // Saving the loaded model again must reproduce the file byte for byte.
  const std::string path2 = tmp.str("model2.ckpt");
  save_checkpoint(path2, back);
  REQUIRE(slurp(path) == slurp(path2));
}

TEST_CASE("baseline checkpoints round trip too", "[model]") {
  TempDir tmp;
  Checkpoint ck;
  ck.model = tiny_model(ModelKind::baseline, 22);
  save_checkpoint(tmp.str("b.ckpt"), ck);
  const Checkpoint back = load_checkpoint(tmp.str("b.ckpt"));
  CHECK(back.model.kind == ModelKind::baseline);
  CHECK(back.model.label_matrix.empty());
  CHECK(model_checksum(back.model) == model_checksum(ck.model));
}

TEST_CASE("damaged checkpoints are refused", "[model]") {
  TempDir tmp;
  Checkpoint ck;
  ck.model = tiny_model(ModelKind::multi_attention, 23);
  const std::string path = tmp.str("model.ckpt");
  save_checkpoint(path, ck);

  SECTION("flipping a payload byte breaks the footer checksum") {
    std::string bytes = slurp(path);
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(load_checkpoint(path), SchemaError);
  }
  SECTION("truncation is detected") {
    std::string bytes = slurp(path);
    bytes.resize(bytes.size() - 9);
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(load_checkpoint(path), SchemaError);
  }
  SECTION("wrong magic is detected") {
    std::string bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(load_checkpoint(path), SchemaError);
  }
  SECTION("missing files surface as I/O errors") {
    CHECK_THROWS_AS(load_checkpoint(tmp.str("absent.ckpt")), IoError);
  }
}

TEST_CASE("checkpoint checksum matches the live model", "[model]") {
  TempDir tmp;
  Checkpoint ck;
  ck.model = tiny_model(ModelKind::multi_attention, 29, true);
  const std::uint64_t before = model_checksum(ck.model);
  save_checkpoint(tmp.str("m.ckpt"), ck);
  CHECK(model_checksum(load_checkpoint(tmp.str("m.ckpt")).model) == before);
}
