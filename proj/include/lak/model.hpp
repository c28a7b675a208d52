#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lak/attention.hpp"
#include "lak/encoder.hpp"
#include "lak/errors.hpp"
#include "lak/rng.hpp"
#include "lak/serialize.hpp"
#include "lak/vocab.hpp"

namespace lak {

/// baseline: masked mean-pooled hidden states straight into the
/// classifier. multi_attention: the label-wise multi-head attention
/// representation in between.
enum class ModelKind { baseline, multi_attention };

inline std::string model_kind_name(ModelKind k) {
  return k == ModelKind::baseline ? "baseline" : "multi_attention";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "baseline") return ModelKind::baseline;
  if (s == "multi_attention") return ModelKind::multi_attention;
  throw ConfigError("unknown model kind: " + s);
}

/// Everything needed to score documents: tokenizer vocabulary, encoder,
/// label embeddings C, attention projections, and the classifier. For
/// ModelKind::baseline the label matrix and Wq/Wk/Wv/Wo stay empty and
/// only w1/b1 of `attn` are used.
struct Model {
  ModelKind kind = ModelKind::multi_attention;
  TinyEncoderParams encoder;
  Matrix label_matrix;  // l x d
  AttentionParams attn;
  Vocabulary vocab;
  std::vector<std::string> categories;
  std::size_t max_len = 128;  // documents truncated to this many tokens

  std::size_t dim() const { return encoder.dim(); }
  std::size_t num_labels() const { return categories.size(); }
};

/// Gradient holder mirroring the trainable tensors of a Model.
struct ModelGrads {
  TinyEncoderParams encoder;
  Matrix label_matrix;
  Matrix wq, wk, wv, wo, w1, b1;
};

inline ModelGrads zeros_like(const Model& m) {
  ModelGrads g;
  g.encoder = zeros_like(m.encoder);
  if (m.kind == ModelKind::multi_attention) {
    g.label_matrix = Matrix(m.label_matrix.rows(), m.label_matrix.cols());
    g.wq = Matrix(m.attn.wq.rows(), m.attn.wq.cols());
    g.wk = Matrix(m.attn.wk.rows(), m.attn.wk.cols());
    g.wv = Matrix(m.attn.wv.rows(), m.attn.wv.cols());
    g.wo = Matrix(m.attn.wo.rows(), m.attn.wo.cols());
  }
  g.w1 = Matrix(m.attn.w1.rows(), m.attn.w1.cols());
  if (!m.attn.b1.empty()) g.b1 = Matrix(m.attn.b1.rows(), m.attn.b1.cols());
  return g;
}

/// Stable (name, tensor) enumeration; checkpoint layout, the optimizer,
/// and gradient clipping all iterate in this order.
inline std::vector<std::pair<std::string, Matrix*>> named_tensors(Model& m) {
  std::vector<std::pair<std::string, Matrix*>> out;
  out.emplace_back("encoder.embed", &m.encoder.embed);
  for (std::size_t t = 0; t < m.encoder.layers.size(); ++t) {
    const std::string base = "encoder.layer" + std::to_string(t) + ".";
    out.emplace_back(base + "wq", &m.encoder.layers[t].wq);
    out.emplace_back(base + "wk", &m.encoder.layers[t].wk);
    out.emplace_back(base + "wv", &m.encoder.layers[t].wv);
    out.emplace_back(base + "wo", &m.encoder.layers[t].wo);
  }
  if (m.kind == ModelKind::multi_attention) {
    out.emplace_back("label_matrix", &m.label_matrix);
    out.emplace_back("attn.wq", &m.attn.wq);
    out.emplace_back("attn.wk", &m.attn.wk);
    out.emplace_back("attn.wv", &m.attn.wv);
    out.emplace_back("attn.wo", &m.attn.wo);
  }
  out.emplace_back("classifier.w1", &m.attn.w1);
  if (!m.attn.b1.empty()) out.emplace_back("classifier.b1", &m.attn.b1);
  return out;
}

inline std::vector<std::pair<std::string, const Matrix*>> named_tensors(const Model& m) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, mat] : named_tensors(const_cast<Model&>(m))) out.emplace_back(name, mat);
  return out;
}

inline std::vector<Matrix*> parameters(Model& m) {
  std::vector<Matrix*> out;
  for (auto& [name, mat] : named_tensors(m)) out.push_back(mat);
  return out;
}

/// Same order as parameters(Model&); empty slots mean "not trained".
inline std::vector<Matrix*> parameters(ModelGrads& g) {
  std::vector<Matrix*> out;
  out.push_back(&g.encoder.embed);
  for (auto& layer : g.encoder.layers) {
    out.push_back(&layer.wq);
    out.push_back(&layer.wk);
    out.push_back(&layer.wv);
    out.push_back(&layer.wo);
  }
  if (!g.label_matrix.empty()) {
    out.push_back(&g.label_matrix);
    out.push_back(&g.wq);
    out.push_back(&g.wk);
    out.push_back(&g.wv);
    out.push_back(&g.wo);
  }
  out.push_back(&g.w1);
  if (!g.b1.empty()) out.push_back(&g.b1);
  return out;
}

/// Fresh model with uniform(-1/sqrt(d), 1/sqrt(d)) projections and the
/// label matrix initialized from the encoded category names.
inline Model make_model(ModelKind kind, Vocabulary vocab, std::vector<std::string> categories,
                        std::size_t d, std::size_t heads, std::size_t enc_layers,
                        bool use_positions, AttnScale scale, bool classifier_bias, Rng& rng,
                        std::size_t max_len = 128) {
  if (categories.empty()) throw ValueError("make_model: no categories");
  Model m;
  m.kind = kind;
  m.vocab = std::move(vocab);
  m.categories = std::move(categories);
  m.max_len = max_len;
  m.encoder = make_tiny_encoder(m.vocab.size(), d, enc_layers, use_positions, rng);
  m.attn.heads = heads;
  m.attn.scale = scale;
  const std::size_t l = m.categories.size();
  const double lim = 1.0 / std::sqrt(static_cast<double>(d));
  auto uniform_matrix = [&](std::size_t r, std::size_t c) {
    Matrix mat(r, c);
    for (double& v : mat.values()) v = rng.uniform(-lim, lim);
    return mat;
  };
  if (kind == ModelKind::multi_attention) {
    head_dim(d, heads);  // validate divisibility up front
    m.attn.wq = uniform_matrix(d, d);
    m.attn.wk = uniform_matrix(d, d);
    m.attn.wv = uniform_matrix(d, d);
    m.attn.wo = uniform_matrix(d, d);
    m.label_matrix = init_label_matrix(m.encoder, m.vocab, m.categories);
  }
  m.attn.w1 = uniform_matrix(l, d);
  if (classifier_bias) m.attn.b1 = Matrix(1, l);
  return m;
}

/// Identity hash of a model: structure, vocabulary, categories, and every
/// trainable tensor. Datastores record it so stale stores are rejected.
inline std::uint64_t model_checksum(const Model& m) {
  Fnv1a f;
  f.eat_u64(static_cast<std::uint64_t>(m.kind));
  f.eat_u64(m.attn.heads);
  f.eat_u64(static_cast<std::uint64_t>(m.attn.scale));
  f.eat_u64(m.encoder.use_positions ? 1 : 0);
  f.eat_u64(m.max_len);
  for (const auto& c : m.categories) f.eat_string(c);
  for (const auto& t : m.vocab.tokens()) f.eat_string(t);
  for (const auto& [name, mat] : named_tensors(m)) {
    f.eat_string(name);
    f.eat_matrix(*mat);
  }
  return f.value();
}

struct BatchCache {
  EncodedBatch batch;
  std::vector<EncoderDocCache> enc;
  HiddenStates h;
  Matrix q;  // C Wq, shared across the batch (multi_attention)
  std::vector<AttnDocCache> attn;
  Matrix z;      // b x d pooled representations
  Matrix probs;  // b x l
};

/// Probabilities for one batch; fills `cache` (needed for backward and
/// for reading out Z) when given.
inline Matrix forward_batch(const Model& m, const EncodedBatch& batch, BatchCache* cache = nullptr) {
  BatchCache local;
  BatchCache& c = cache ? *cache : local;
  const std::size_t b = batch.batch_size();
  c.batch = batch;
  c.enc.assign(b, EncoderDocCache{});
  c.attn.assign(b, AttnDocCache{});
  c.h.docs.clear();
  c.h.docs.reserve(b);
  c.h.dim = m.dim();
  c.z = Matrix(b, m.dim());
  c.probs = Matrix(b, m.num_labels());
  if (m.kind == ModelKind::multi_attention) c.q = matmul(m.label_matrix, m.attn.wq);
  for (std::size_t i = 0; i < b; ++i) {
    Matrix h = encoder_forward(m.encoder, batch.ids[i], batch.mask[i], cache ? &c.enc[i] : nullptr);
    Vec z = m.kind == ModelKind::multi_attention
                ? attention_represent(c.q, h, batch.mask[i], m.attn, cache ? &c.attn[i] : nullptr)
                : masked_mean_pool(h, batch.mask[i]);
    for (std::size_t t = 0; t < z.size(); ++t) c.z(i, t) = z[t];
    Vec probs = classify(z, m.attn.w1, m.attn.b1);
    for (std::size_t j = 0; j < probs.size(); ++j) c.probs(i, j) = probs[j];
    c.h.docs.push_back(std::move(h));
  }
  return c.probs;
}

/// Accumulates gradients for a batch into `g`. dprobs is dLoss/dprobs;
/// dz_extra (b x d, may be empty) is an additional gradient applied
/// directly to the pooled representations, e.g. from the contrastive
/// term.
inline void backward_batch(const Model& m, const BatchCache& c, const Matrix& dprobs,
                           const Matrix& dz_extra, ModelGrads& g) {
  const std::size_t b = c.batch.batch_size();
  const std::size_t l = m.num_labels();
  const std::size_t d = m.dim();
  require_shape(dprobs, b, l, "backward_batch: dprobs");
  if (!dz_extra.empty()) require_shape(dz_extra, b, d, "backward_batch: dz_extra");

  Matrix dq_accum(m.kind == ModelKind::multi_attention ? l : 0,
                  m.kind == ModelKind::multi_attention ? d : 0);
  for (std::size_t i = 0; i < b; ++i) {
    Vec dlogits(l);
    for (std::size_t j = 0; j < l; ++j) {
      const double p = c.probs(i, j);
      dlogits[j] = dprobs(i, j) * p * (1.0 - p);
    }
    for (std::size_t j = 0; j < l; ++j) {
      for (std::size_t t = 0; t < d; ++t) g.w1(j, t) += dlogits[j] * c.z(i, t);
      if (!g.b1.empty()) g.b1(0, j) += dlogits[j];
    }
    Vec dz = matvec_t(m.attn.w1, dlogits);
    if (!dz_extra.empty())
      for (std::size_t t = 0; t < d; ++t) dz[t] += dz_extra(i, t);

    const auto& mask = c.batch.mask[i];
    Matrix dh;
    if (m.kind == ModelKind::multi_attention) {
      attention_backward(c.q, c.h.docs[i], m.attn, c.attn[i], dz, dq_accum, dh, g.wk, g.wv, g.wo);
    } else {
      std::size_t count = 0;
      for (auto v : mask) count += v;
      dh = Matrix(c.h.docs[i].rows(), d);
      for (std::size_t r = 0; r < dh.rows(); ++r) {
        if (!mask[r]) continue;
        for (std::size_t t = 0; t < d; ++t) dh(r, t) = dz[t] / static_cast<double>(count);
      }
    }
    encoder_backward(m.encoder, c.batch.ids[i], mask, c.enc[i], std::move(dh), g.encoder);
  }
  if (m.kind == ModelKind::multi_attention) {
    g.label_matrix += matmul_nt(dq_accum, m.attn.wq);
    g.wq += matmul_tn(m.label_matrix, dq_accum);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container: single file, little-endian, named tensors.
// Layout: magic, version, structure header, fold id, best holdout metric,
// config text, category names, vocabulary, tensors, FNV-1a footer over
// everything before it.
// ---------------------------------------------------------------------------

constexpr char kCheckpointMagic[8] = {'L', 'A', 'K', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::string config_text;  // key=value lines, stored verbatim
  std::uint32_t fold_id = 0;
  double best_metric = 0.0;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const Model& m = ck.model;
  std::ostringstream body;
  body.write(kCheckpointMagic, sizeof kCheckpointMagic);
  bin::put_u32(body, kCheckpointVersion);
  bin::put_u32(body, static_cast<std::uint32_t>(m.kind));
  bin::put_u32(body, static_cast<std::uint32_t>(m.attn.heads));
  bin::put_u32(body, static_cast<std::uint32_t>(m.attn.scale));
  bin::put_u32(body, m.encoder.use_positions ? 1 : 0);
  bin::put_u32(body, m.attn.b1.empty() ? 0 : 1);
  bin::put_u32(body, static_cast<std::uint32_t>(m.encoder.layers.size()));
  bin::put_u32(body, static_cast<std::uint32_t>(m.dim()));
  bin::put_u32(body, static_cast<std::uint32_t>(m.num_labels()));
  bin::put_u32(body, static_cast<std::uint32_t>(m.max_len));
  bin::put_u32(body, ck.fold_id);
  bin::put_f64(body, ck.best_metric);
  bin::put_string(body, ck.config_text);
  bin::put_u32(body, static_cast<std::uint32_t>(m.categories.size()));
  for (const auto& cat : m.categories) bin::put_string(body, cat);
  bin::put_u32(body, static_cast<std::uint32_t>(m.vocab.size()));
  for (const auto& tok : m.vocab.tokens()) bin::put_string(body, tok);
  const auto tensors = named_tensors(m);
  bin::put_u32(body, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, mat] : tensors) {
    bin::put_string(body, name);
    bin::put_matrix(body, *mat);
  }

  const std::string bytes = body.str();
  Fnv1a f;
  f.eat(bytes.data(), bytes.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  bin::put_u64(out, f.value());
  if (!out) throw IoError("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  if (bytes.size() < sizeof kCheckpointMagic + 4 + 8)
    throw SchemaError("checkpoint too small: " + path);

  const std::string payload = bytes.substr(0, bytes.size() - 8);
  Fnv1a f;
  f.eat(payload.data(), payload.size());
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(bytes[bytes.size() - 8 + static_cast<std::size_t>(i)]))
              << (8 * i);
  if (stored != f.value()) throw SchemaError("checkpoint checksum mismatch: " + path);

  std::istringstream is(payload);
  char magic[sizeof kCheckpointMagic];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + sizeof magic, kCheckpointMagic))
    throw SchemaError("not a checkpoint file: " + path);
  const std::uint32_t version = bin::get_u32(is);
  if (version != kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

  Checkpoint ck;
  Model& m = ck.model;
  m.kind = static_cast<ModelKind>(bin::get_u32(is));
  m.attn.heads = bin::get_u32(is);
  m.attn.scale = static_cast<AttnScale>(bin::get_u32(is));
  m.encoder.use_positions = bin::get_u32(is) != 0;
  const bool has_bias = bin::get_u32(is) != 0;
  const std::uint32_t num_layers = bin::get_u32(is);
  const std::uint32_t d = bin::get_u32(is);
  const std::uint32_t l = bin::get_u32(is);
  m.max_len = bin::get_u32(is);
  ck.fold_id = bin::get_u32(is);
  ck.best_metric = bin::get_f64(is);
  ck.config_text = bin::get_string(is);
  std::vector<std::string> cats(bin::get_u32(is));
  for (auto& c : cats) c = bin::get_string(is);
  if (cats.size() != l) throw SchemaError("checkpoint category count mismatch: " + path);
  m.categories = std::move(cats);
  std::vector<std::string> tokens(bin::get_u32(is));
  for (auto& t : tokens) t = bin::get_string(is);
  m.vocab = Vocabulary(std::move(tokens));

  // Pre-size tensors so named_tensors() exposes every expected slot and
  // shape mismatches surface as errors rather than silent resizes.
  m.encoder.embed = Matrix(m.vocab.size(), d);
  m.encoder.layers.assign(num_layers, EncoderLayerParams{Matrix(d, d), Matrix(d, d), Matrix(d, d),
                                                         Matrix(d, d)});
  if (m.kind == ModelKind::multi_attention) {
    m.label_matrix = Matrix(l, d);
    m.attn.wq = Matrix(d, d);
    m.attn.wk = Matrix(d, d);
    m.attn.wv = Matrix(d, d);
    m.attn.wo = Matrix(d, d);
  }
  m.attn.w1 = Matrix(l, d);
  if (has_bias) m.attn.b1 = Matrix(1, l);

  std::map<std::string, Matrix*> slots;
  for (auto& [name, mat] : named_tensors(m)) slots.emplace(name, mat);
  const std::uint32_t count = bin::get_u32(is);
  if (count != slots.size()) throw SchemaError("checkpoint tensor count mismatch: " + path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = bin::get_string(is);
    auto it = slots.find(name);
    if (it == slots.end()) throw SchemaError("unknown tensor '" + name + "' in " + path);
    Matrix stored_mat = bin::get_matrix(is);
    if (stored_mat.rows() != it->second->rows() || stored_mat.cols() != it->second->cols())
      throw CompatError("tensor '" + name + "' has unexpected shape in " + path);
    *it->second = std::move(stored_mat);
    slots.erase(it);
  }
  if (!slots.empty()) throw SchemaError("checkpoint missing tensors: " + path);
  return ck;
}

}  // namespace lak
