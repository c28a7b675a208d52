#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lak/errors.hpp"
#include "lak/matrix.hpp"
#include "lak/rng.hpp"
#include "lak/vocab.hpp"

namespace lak {

/// Token-id matrix plus validity mask for one batch. mask[i][p] == 1 iff
/// p < lengths[i]; token ids at padded positions are the pad id.
struct EncodedBatch {
  std::vector<std::vector<std::size_t>> ids;   // b x n_max
  std::vector<std::vector<std::uint8_t>> mask;  // b x n_max
  std::vector<std::size_t> lengths;
  std::size_t n_max = 0;

  std::size_t batch_size() const { return ids.size(); }
};

/// Per-document hidden state matrices, each n_max x d.
struct HiddenStates {
  std::vector<Matrix> docs;
  std::size_t dim = 0;
};

inline EncodedBatch make_batch(const std::vector<std::vector<std::size_t>>& docs,
                               std::size_t max_len) {
  if (docs.empty()) throw ValueError("make_batch: empty batch");
  if (max_len == 0) throw ConfigError("make_batch: max_len must be positive");
  EncodedBatch b;
  b.lengths.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].empty()) throw ValueError("make_batch: document " + std::to_string(i) + " is empty");
    const std::size_t len = std::min(docs[i].size(), max_len);  // truncate from the end
    b.lengths.push_back(len);
    b.n_max = std::max(b.n_max, len);
  }
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::vector<std::size_t> row(b.n_max, Vocabulary::kPad);
    std::vector<std::uint8_t> m(b.n_max, 0);
    for (std::size_t p = 0; p < b.lengths[i]; ++p) {
      row[p] = docs[i][p];
      m[p] = 1;
    }
    b.ids.push_back(std::move(row));
    b.mask.push_back(std::move(m));
  }
  return b;
}

/// Sinusoidal position encodings, n x d.
inline Matrix position_encoding(std::size_t n, std::size_t d) {
  Matrix pe(n, d);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(p) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe(p, i) = std::sin(angle);
      if (i + 1 < d) pe(p, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

struct EncoderLayerParams {
  Matrix wq, wk, wv, wo;  // all d x d
};

/// Embedding table plus s residual self-attention layers. s = 0 reduces
/// to embeddings (+ positions).
struct TinyEncoderParams {
  Matrix embed;  // vocab x d
  std::vector<EncoderLayerParams> layers;
  bool use_positions = true;

  std::size_t dim() const { return embed.cols(); }
  std::size_t vocab_size() const { return embed.rows(); }
};

inline TinyEncoderParams make_tiny_encoder(std::size_t vocab_size, std::size_t d,
                                           std::size_t num_layers, bool use_positions, Rng& rng) {
  TinyEncoderParams p;
  p.use_positions = use_positions;
  p.embed = Matrix(vocab_size, d);
  for (double& v : p.embed.values()) v = rng.uniform(-0.5, 0.5);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t t = 0; t < num_layers; ++t) {
    EncoderLayerParams layer;
    for (Matrix* m : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
      *m = Matrix(d, d);
      for (double& v : m->values()) v = rng.uniform(-scale, scale);
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline TinyEncoderParams zeros_like(const TinyEncoderParams& p) {
  TinyEncoderParams g;
  g.use_positions = p.use_positions;
  g.embed = Matrix(p.embed.rows(), p.embed.cols());
  for (const auto& layer : p.layers) {
    EncoderLayerParams gl;
    gl.wq = Matrix(layer.wq.rows(), layer.wq.cols());
    gl.wk = Matrix(layer.wk.rows(), layer.wk.cols());
    gl.wv = Matrix(layer.wv.rows(), layer.wv.cols());
    gl.wo = Matrix(layer.wo.rows(), layer.wo.cols());
    g.layers.push_back(std::move(gl));
  }
  return g;
}

struct EncoderLayerCache {
  Matrix x_in, qe, ke, ve, se, at;
};

struct EncoderDocCache {
  std::vector<EncoderLayerCache> layers;
};

/// Hidden states for one document: embeddings (+ positions) run through
/// the self-attention stack. Padded positions produce defined values but
/// are excluded as keys, so valid rows never depend on padded token ids.
inline Matrix encoder_forward(const TinyEncoderParams& p, const std::vector<std::size_t>& ids,
                              const std::vector<std::uint8_t>& mask,
                              EncoderDocCache* cache = nullptr) {
  const std::size_t n = ids.size();
  const std::size_t d = p.dim();
  if (n == 0) throw ValueError("encoder_forward: empty document");
  if (mask.size() != n) throw std::invalid_argument("encoder_forward: mask length mismatch");

  Matrix x(n, d);
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (ids[pos] >= p.vocab_size())
      throw ValueError("encoder_forward: token id out of range: " + std::to_string(ids[pos]));
    const double* e = p.embed.row(ids[pos]);
    for (std::size_t i = 0; i < d; ++i) x(pos, i) = e[i];
  }
  if (p.use_positions) x += position_encoding(n, d);

  const double scale = std::sqrt(static_cast<double>(d));
  for (const auto& layer : p.layers) {
    EncoderLayerCache lc;
    lc.x_in = x;
    lc.qe = matmul(x, layer.wq);
    lc.ke = matmul(x, layer.wk);
    lc.ve = matmul(x, layer.wv);
    Matrix raw = matmul_nt(lc.qe, lc.ke);
    raw *= 1.0 / scale;
    mask_columns(raw, mask, -1e9);
    row_softmax(raw);
    lc.se = std::move(raw);
    lc.at = matmul(lc.se, lc.ve);
    Matrix out = matmul(lc.at, layer.wo);
    x += out;
    if (cache) cache->layers.push_back(std::move(lc));
  }
  return x;
}

/// Accumulates gradients for dLoss/dH into `grads`. `dh` is consumed.
inline void encoder_backward(const TinyEncoderParams& p, const std::vector<std::size_t>& ids,
                             const std::vector<std::uint8_t>& mask, const EncoderDocCache& cache,
                             Matrix dh, TinyEncoderParams& grads) {
  const std::size_t d = p.dim();
  const double scale = std::sqrt(static_cast<double>(d));
  for (std::size_t t = p.layers.size(); t-- > 0;) {
    const auto& layer = p.layers[t];
    const auto& lc = cache.layers[t];
    // x_out = x_in + (se * ve) * wo
    Matrix dat = matmul_nt(dh, layer.wo);
    grads.layers[t].wo += matmul_tn(lc.at, dh);
    Matrix dse = matmul_nt(dat, lc.ve);
    Matrix dve = matmul_tn(lc.se, dat);
    Matrix draw = row_softmax_backward(lc.se, dse);
    draw *= 1.0 / scale;
    Matrix dqe = matmul(draw, lc.ke);
    Matrix dke = matmul_tn(draw, lc.qe);
    grads.layers[t].wq += matmul_tn(lc.x_in, dqe);
    grads.layers[t].wk += matmul_tn(lc.x_in, dke);
    grads.layers[t].wv += matmul_tn(lc.x_in, dve);
    dh += matmul_nt(dqe, layer.wq);
    dh += matmul_nt(dke, layer.wk);
    dh += matmul_nt(dve, layer.wv);
  }
  for (std::size_t pos = 0; pos < ids.size(); ++pos) {
    if (!mask[pos]) continue;
    double* g = grads.embed.row(ids[pos]);
    const double* src = dh.row(pos);
    for (std::size_t i = 0; i < d; ++i) g[i] += src[i];
  }
}

/// Mean of the valid rows of h.
inline Vec masked_mean_pool(const Matrix& h, const std::vector<std::uint8_t>& mask) {
  Vec out(h.cols(), 0.0);
  std::size_t count = 0;
  for (std::size_t r = 0; r < h.rows(); ++r) {
    if (!mask[r]) continue;
    const double* row = h.row(r);
    for (std::size_t c = 0; c < h.cols(); ++c) out[c] += row[c];
    ++count;
  }
  if (count == 0) throw ValueError("masked_mean_pool: all positions masked");
  for (double& v : out) v /= static_cast<double>(count);
  return out;
}

/// Initial label representation matrix C: row j is the mean over token
/// positions of the encoded category name j.
inline Matrix init_label_matrix(const TinyEncoderParams& p, const Vocabulary& vocab,
                                const std::vector<std::string>& categories) {
  if (categories.empty()) throw ValueError("init_label_matrix: no categories");
  Matrix c(categories.size(), p.dim());
  for (std::size_t j = 0; j < categories.size(); ++j) {
    const auto ids = vocab.encode(tokenize(categories[j]));
    const std::vector<std::uint8_t> mask(ids.size(), 1);
    const Matrix h = encoder_forward(p, ids, mask);
    const Vec row = masked_mean_pool(h, mask);
    for (std::size_t i = 0; i < p.dim(); ++i) c(j, i) = row[i];
  }
  return c;
}

/// Seam for plugging an external pretrained encoder: anything that turns
/// token sequences into hidden states plus a validity mask can drive the
/// downstream attention, classifier and datastore machinery.
class EncoderAdapter {
 public:
  virtual ~EncoderAdapter() = default;
  virtual std::size_t dim() const = 0;
  virtual HiddenStates encode(const std::vector<std::vector<std::string>>& docs,
                              EncodedBatch& batch) const = 0;
};

class TinyEncoderAdapter final : public EncoderAdapter {
 public:
  TinyEncoderAdapter(const TinyEncoderParams& params, const Vocabulary& vocab, std::size_t max_len)
      : params_(params), vocab_(vocab), max_len_(max_len) {}

  std::size_t dim() const override { return params_.dim(); }

  HiddenStates encode(const std::vector<std::vector<std::string>>& docs,
                      EncodedBatch& batch) const override {
    std::vector<std::vector<std::size_t>> ids;
    ids.reserve(docs.size());
    for (const auto& doc : docs) ids.push_back(vocab_.encode(doc));
    batch = make_batch(ids, max_len_);
    HiddenStates h;
    h.dim = params_.dim();
    for (std::size_t i = 0; i < batch.batch_size(); ++i)
      h.docs.push_back(encoder_forward(params_, batch.ids[i], batch.mask[i]));
    return h;
  }

 private:
  const TinyEncoderParams& params_;
  const Vocabulary& vocab_;
  std::size_t max_len_;
};

}  // namespace lak
