#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lak/errors.hpp"
#include "lak/matrix.hpp"

namespace lak {

/// Distances below this are treated as zero when normalizing the
/// gradient direction (z_i - z_m) / d_im.
constexpr double kContrastiveDistFloor = 1e-12;

/// Pairwise label co-occurrence counts C_ij = y_i . y_j (diagonal unused).
inline Matrix label_cooccurrence(const Matrix& y) {
  const std::size_t b = y.rows();
  Matrix c(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < y.cols(); ++t) s += y(i, t) * y(j, t);
      c(i, j) = s;
    }
  return c;
}

/// beta_ij = C_ij / sum_{k!=i} C_ik, row-normalized over the off-diagonal.
/// Rows whose denominator is zero (the anchor shares no label with any
/// other instance) are left all-zero; such anchors contribute no loss.
inline Matrix cooccurrence_weights(const Matrix& c) {
  Matrix beta(c.rows(), c.cols());
  for (std::size_t i = 0; i < c.rows(); ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < c.cols(); ++k)
      if (k != i) denom += c(i, k);
    if (denom == 0.0) continue;
    for (std::size_t j = 0; j < c.cols(); ++j)
      if (j != i) beta(i, j) = c(i, j) / denom;
  }
  return beta;
}

/// Pairwise Euclidean distances between the rows of z (squared variant
/// skips the root).
inline Matrix pairwise_distances(const Matrix& z, bool squared = false) {
  const std::size_t b = z.rows();
  Matrix d(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < z.cols(); ++t) {
        const double diff = z(i, t) - z(j, t);
        s += diff * diff;
      }
      const double dist = squared ? s : std::sqrt(s);
      d(i, j) = dist;
      d(j, i) = dist;
    }
  return d;
}

struct ContrastiveCache {
  Matrix dist;     // b x b distances (metric chosen at forward time)
  Matrix beta;     // b x b co-occurrence weights
  Matrix softmax;  // b x b; row i = softmax over j != i of -d_ij / tau
  bool squared = false;
};

/// Contrastive loss over one batch of pooled representations:
///   L = sum_i sum_{j!=i} -beta_ij log( exp(-d_ij/tau) / sum_{k!=i} exp(-d_ik/tau) )
/// The inner softmax is stabilized by max subtraction over each row's
/// off-diagonal. Batches of fewer than two instances score zero.
inline double contrastive_loss(const Matrix& z, const Matrix& y, double tau,
                               ContrastiveCache* cache = nullptr, bool squared = false) {
  if (z.rows() != y.rows()) throw std::invalid_argument("contrastive_loss: batch size mismatch");
  if (tau <= 0.0) throw ConfigError("contrastive_loss: tau must be positive");
  const std::size_t b = z.rows();
  ContrastiveCache local;
  ContrastiveCache& c = cache ? *cache : local;
  c.squared = squared;
  c.dist = pairwise_distances(z, squared);
  c.beta = cooccurrence_weights(label_cooccurrence(y));
  c.softmax = Matrix(b, b);
  if (b < 2) return 0.0;

  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < b; ++k)
      if (k != i) hi = std::max(hi, -c.dist(i, k) / tau);
    double denom = 0.0;
    for (std::size_t k = 0; k < b; ++k)
      if (k != i) denom += std::exp(-c.dist(i, k) / tau - hi);
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const double s = std::exp(-c.dist(i, j) / tau - hi) / denom;
      c.softmax(i, j) = s;
      if (c.beta(i, j) > 0.0) loss -= c.beta(i, j) * std::log(s);
    }
  }
  return loss;
}

/// dL/dz for contrastive_loss, from the cache of the forward call.
/// Per anchor i and other m: dL/dd_im = (beta_im - B_i s_im) / tau with
/// B_i the anchor's total weight, then the chain through the distance
/// gives (z_i - z_m) / d_im (or 2(z_i - z_m) for the squared metric)
/// applied symmetrically to rows i and m.
inline Matrix contrastive_backward(const Matrix& z, double tau, const ContrastiveCache& cache) {
  const std::size_t b = z.rows();
  Matrix dz(b, z.cols());
  if (b < 2) return dz;
  for (std::size_t i = 0; i < b; ++i) {
    double bsum = 0.0;
    for (std::size_t j = 0; j < b; ++j)
      if (j != i) bsum += cache.beta(i, j);
    if (bsum == 0.0) continue;
    for (std::size_t m = 0; m < b; ++m) {
      if (m == i) continue;
      const double dd = (cache.beta(i, m) - bsum * cache.softmax(i, m)) / tau;
      double scale;
      if (cache.squared) {
        scale = 2.0 * dd;
      } else {
        const double dist = cache.dist(i, m);
        if (dist < kContrastiveDistFloor) continue;
        scale = dd / dist;
      }
      for (std::size_t t = 0; t < z.cols(); ++t) {
        const double diff = z(i, t) - z(m, t);
        dz(i, t) += scale * diff;
        dz(m, t) -= scale * diff;
      }
    }
  }
  return dz;
}

/// L = L_bce + gamma * L_con.
inline double total_loss(double bce, double con, double gamma) { return bce + gamma * con; }

}  // namespace lak
