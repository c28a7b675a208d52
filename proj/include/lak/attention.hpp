#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lak/errors.hpp"
#include "lak/matrix.hpp"

namespace lak {

/// Divisor applied to raw attention scores: d_a (as published) or the
/// conventional sqrt(d_a).
enum class AttnScale { da, sqrt_da };

enum class Reduction { sum, mean };

constexpr double kBceEpsilon = 1e-7;
constexpr double kMaskedScore = -1e9;

struct AttentionParams {
  Matrix wq, wk, wv, wo;  // d x d, bias-free
  Matrix w1;              // l x d classifier
  Matrix b1;              // 1 x l; empty when the classifier bias is disabled
  std::size_t heads = 1;
  AttnScale scale = AttnScale::da;
};

inline std::size_t head_dim(std::size_t d, std::size_t heads) {
  if (heads == 0) throw ConfigError("attention: heads must be positive");
  if (d % heads != 0)
    throw ConfigError("attention: hidden dim " + std::to_string(d) +
                      " not divisible by heads " + std::to_string(heads));
  return d / heads;
}

inline double scale_divisor(AttnScale s, std::size_t d_a) {
  const double da = static_cast<double>(d_a);
  return s == AttnScale::da ? da : std::sqrt(da);
}

/// Q = C Wq, K = H Wk, V = H Wv (no biases).
inline void project_qkv(const Matrix& c, const Matrix& h, const AttentionParams& p, Matrix& q,
                        Matrix& k, Matrix& v) {
  if (c.cols() != p.wq.rows() || h.cols() != p.wk.rows())
    throw std::invalid_argument("project_qkv: dimension mismatch");
  q = matmul(c, p.wq);
  k = matmul(h, p.wk);
  v = matmul(h, p.wv);
}

/// Contiguous column slices of width d/h; concatenating them restores the input.
inline std::vector<Matrix> split_heads(const Matrix& m, std::size_t heads) {
  const std::size_t d_a = head_dim(m.cols(), heads);
  std::vector<Matrix> out;
  out.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    Matrix slice(m.rows(), d_a);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < d_a; ++c) slice(r, c) = m(r, i * d_a + c);
    out.push_back(std::move(slice));
  }
  return out;
}

inline Matrix concat_heads(const std::vector<Matrix>& heads) {
  if (heads.empty()) throw std::invalid_argument("concat_heads: no heads");
  const std::size_t d_a = heads[0].cols();
  Matrix out(heads[0].rows(), d_a * heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i)
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < d_a; ++c) out(r, i * d_a + c) = heads[i](r, c);
  return out;
}

/// Per-head label-to-token scores: softmax(mask(Q_i K_i^T / divisor)).
/// Padded positions are forced to a large negative score before the
/// softmax so they carry (numerically exact) zero weight.
inline Matrix attention_scores(const Matrix& qi, const Matrix& ki,
                               const std::vector<std::uint8_t>& mask, double divisor) {
  if (qi.cols() != ki.cols()) throw std::invalid_argument("attention_scores: head dims differ");
  if (mask.size() != ki.rows()) throw std::invalid_argument("attention_scores: mask length mismatch");
  bool any_valid = false;
  for (auto m : mask) any_valid = any_valid || m;
  if (!any_valid) throw ValueError("attention_scores: all positions masked");
  Matrix raw = matmul_nt(qi, ki);
  for (double& v : raw.values()) v /= divisor;
  mask_columns(raw, mask, kMaskedScore);
  row_softmax(raw);
  return raw;
}

/// attention_i = score_i V_i; heads concatenated, then projected by Wo.
inline Matrix attend_and_concat(const std::vector<Matrix>& scores, const std::vector<Matrix>& v_heads,
                                const Matrix& wo) {
  if (scores.size() != v_heads.size())
    throw std::invalid_argument("attend_and_concat: head counts differ");
  std::vector<Matrix> attended;
  attended.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    attended.push_back(matmul(scores[i], v_heads[i]));
  return matmul(concat_heads(attended), wo);
}

/// Z: column-wise mean over the l label-view rows.
inline Vec pool_document(const Matrix& attention) {
  if (attention.rows() == 0) throw std::invalid_argument("pool_document: empty attention matrix");
  Vec z(attention.cols(), 0.0);
  for (std::size_t r = 0; r < attention.rows(); ++r) {
    const double* row = attention.row(r);
    for (std::size_t c = 0; c < attention.cols(); ++c) z[c] += row[c];
  }
  for (double& v : z) v /= static_cast<double>(attention.rows());
  return z;
}

/// Per-label probabilities sigmoid(W1 z + b1).
inline Vec classify(const Vec& z, const Matrix& w1, const Matrix& b1 = Matrix()) {
  Vec logits = matvec(w1, z);
  if (!b1.empty()) {
    if (b1.size() != logits.size()) throw std::invalid_argument("classify: bias size mismatch");
    for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += b1.values()[j];
  }
  Vec probs(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) probs[j] = sigmoid(logits[j]);
  return probs;
}

/// Weighted binary cross entropy over a batch:
///   L = sum_i sum_j -( w_j y_ij log p_ij + (1 - y_ij) log(1 - p_ij) )
/// with probabilities clamped to [eps, 1-eps]. Reduction::mean divides by b*l.
inline double weighted_bce(const Matrix& probs, const Matrix& targets, const Vec& w,
                           Reduction reduction = Reduction::sum) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols())
    throw std::invalid_argument("weighted_bce: shape mismatch");
  if (w.size() != probs.cols()) throw std::invalid_argument("weighted_bce: weight length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      const double p_raw = probs(i, j);
      const double y = targets(i, j);
      if (!std::isfinite(p_raw) || !std::isfinite(y))
        throw std::invalid_argument("weighted_bce: non-finite input");
      const double p = std::min(1.0 - kBceEpsilon, std::max(kBceEpsilon, p_raw));
      loss -= w[j] * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  }
  if (reduction == Reduction::mean)
    loss /= static_cast<double>(probs.rows() * probs.cols());
  return loss;
}

/// dL/dprobs for weighted_bce; zero where the clamp binds.
inline Matrix weighted_bce_backward(const Matrix& probs, const Matrix& targets, const Vec& w,
                                    Reduction reduction = Reduction::sum) {
  Matrix grad(probs.rows(), probs.cols());
  const double norm = reduction == Reduction::mean
                          ? 1.0 / static_cast<double>(probs.rows() * probs.cols())
                          : 1.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      const double p_raw = probs(i, j);
      if (p_raw <= kBceEpsilon || p_raw >= 1.0 - kBceEpsilon) {
        grad(i, j) = 0.0;
        continue;
      }
      const double y = targets(i, j);
      grad(i, j) = -norm * (w[j] * y / p_raw - (1.0 - y) / (1.0 - p_raw));
    }
  }
  return grad;
}

struct AttnDocCache {
  Matrix k, v;                 // n x d
  std::vector<Matrix> scores;  // heads of l x n
  Matrix concat;               // l x d
  Matrix attention;            // l x d
};

/// Full head for one document: H -> Attention matrix -> Z.
/// q is the shared projection C Wq, computed once per batch.
inline Vec attention_represent(const Matrix& q, const Matrix& h,
                               const std::vector<std::uint8_t>& mask, const AttentionParams& p,
                               AttnDocCache* cache = nullptr) {
  AttnDocCache local;
  AttnDocCache& c = cache ? *cache : local;
  c.k = matmul(h, p.wk);
  c.v = matmul(h, p.wv);
  const std::size_t d_a = head_dim(q.cols(), p.heads);
  const double divisor = scale_divisor(p.scale, d_a);
  const auto q_heads = split_heads(q, p.heads);
  const auto k_heads = split_heads(c.k, p.heads);
  const auto v_heads = split_heads(c.v, p.heads);
  c.scores.clear();
  for (std::size_t i = 0; i < p.heads; ++i)
    c.scores.push_back(attention_scores(q_heads[i], k_heads[i], mask, divisor));
  std::vector<Matrix> attended;
  attended.reserve(p.heads);
  for (std::size_t i = 0; i < p.heads; ++i) attended.push_back(matmul(c.scores[i], v_heads[i]));
  c.concat = concat_heads(attended);
  c.attention = matmul(c.concat, p.wo);
  return pool_document(c.attention);
}

/// Backward pass for one document. Accumulates dQ (shared across the
/// batch; fold into dC and dWq once per batch), the per-document weight
/// gradients, and writes dL/dH for the encoder.
inline void attention_backward(const Matrix& q, const Matrix& h, const AttentionParams& p,
                               const AttnDocCache& cache, const Vec& dz, Matrix& dq_accum,
                               Matrix& dh_out, Matrix& g_wk, Matrix& g_wv, Matrix& g_wo) {
  const std::size_t l = q.rows();
  const std::size_t d = q.cols();
  const std::size_t d_a = head_dim(d, p.heads);
  const double divisor = scale_divisor(p.scale, d_a);

  Matrix dattention(l, d);
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t i = 0; i < d; ++i) dattention(r, i) = dz[i] / static_cast<double>(l);

  Matrix dconcat = matmul_nt(dattention, p.wo);
  g_wo += matmul_tn(cache.concat, dattention);

  const auto q_heads = split_heads(q, p.heads);
  const auto k_heads = split_heads(cache.k, p.heads);
  const auto v_heads = split_heads(cache.v, p.heads);

  Matrix dq(l, d), dk(h.rows(), d), dv(h.rows(), d);
  for (std::size_t i = 0; i < p.heads; ++i) {
    Matrix da_i(l, d_a);
    for (std::size_t r = 0; r < l; ++r)
      for (std::size_t c = 0; c < d_a; ++c) da_i(r, c) = dconcat(r, i * d_a + c);
    Matrix ds_i = matmul_nt(da_i, v_heads[i]);
    Matrix dv_i = matmul_tn(cache.scores[i], da_i);
    Matrix draw = row_softmax_backward(cache.scores[i], ds_i);
    draw *= 1.0 / divisor;
    Matrix dq_i = matmul(draw, k_heads[i]);
    Matrix dk_i = matmul_tn(draw, q_heads[i]);
    for (std::size_t r = 0; r < l; ++r)
      for (std::size_t c = 0; c < d_a; ++c) dq(r, i * d_a + c) = dq_i(r, c);
    for (std::size_t r = 0; r < h.rows(); ++r)
      for (std::size_t c = 0; c < d_a; ++c) {
        dk(r, i * d_a + c) = dk_i(r, c);
        dv(r, i * d_a + c) = dv_i(r, c);
      }
  }

  dq_accum += dq;
  g_wk += matmul_tn(h, dk);
  g_wv += matmul_tn(h, dv);
  dh_out = matmul_nt(dk, p.wk);
  dh_out += matmul_nt(dv, p.wv);
}

}  // namespace lak
