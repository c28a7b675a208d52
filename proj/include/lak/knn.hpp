#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lak/dataset.hpp"
#include "lak/errors.hpp"
#include "lak/model.hpp"
#include "lak/serialize.hpp"

namespace lak {

/// Training-instance memory: representation vectors (stored as the same
/// 32-bit floats the file format uses, so round trips are bit-exact)
/// plus their label vectors.
struct Datastore {
  std::size_t dim = 0;
  std::vector<std::string> categories;
  std::uint64_t model_checksum = 0;
  std::vector<std::vector<float>> h;
  std::vector<LabelVector> y;

  std::size_t size() const { return h.size(); }
  std::size_t num_labels() const { return categories.size(); }
  bool operator==(const Datastore&) const = default;
};

struct KnnConfig {
  std::size_t k = 8;
  double tau = 1.0;     // neighbor-weight temperature
  double lambda = 0.3;  // blend weight on the KNN prediction

  void validate() const {
    if (k == 0) throw ConfigError("knn: k must be positive");
    if (tau <= 0.0) throw ConfigError("knn: tau must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("knn: lambda must lie in [0,1]");
  }
};

/// Token ids for each record: template rendering, tokenization,
/// vocabulary lookup.
inline std::vector<std::vector<std::size_t>> encode_records(const Model& m,
                                                            const std::vector<ArgumentRecord>& records) {
  std::vector<std::vector<std::size_t>> docs;
  docs.reserve(records.size());
  for (const auto& r : records) docs.push_back(m.vocab.encode(tokenize(render_template(r))));
  return docs;
}

/// Pooled representations (rows of z_out) and/or probabilities for a
/// record list, computed in fixed-size batches with frozen weights.
/// Padded positions are masked throughout, so results do not depend on
/// how records are grouped into batches.
inline void represent_records(const Model& m, const std::vector<ArgumentRecord>& records,
                              Matrix* z_out, Matrix* probs_out, std::size_t batch_size = 32) {
  if (records.empty()) throw ValueError("represent_records: no records");
  if (batch_size == 0) throw ConfigError("represent_records: batch_size must be positive");
  const auto docs = encode_records(m, records);
  if (z_out) *z_out = Matrix(records.size(), m.dim());
  if (probs_out) *probs_out = Matrix(records.size(), m.num_labels());
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    const std::size_t stop = std::min(docs.size(), start + batch_size);
    std::vector<std::vector<std::size_t>> chunk(docs.begin() + static_cast<std::ptrdiff_t>(start),
                                                docs.begin() + static_cast<std::ptrdiff_t>(stop));
    BatchCache cache;
    forward_batch(m, make_batch(chunk, m.max_len), &cache);
    for (std::size_t i = start; i < stop; ++i) {
      if (z_out)
        for (std::size_t t = 0; t < m.dim(); ++t) (*z_out)(i, t) = cache.z(i - start, t);
      if (probs_out)
        for (std::size_t j = 0; j < m.num_labels(); ++j)
          (*probs_out)(i, j) = cache.probs(i - start, j);
    }
  }
}

/// One entry per training document, in record order; h is the model's
/// pooled representation computed with frozen weights.
inline Datastore build_datastore(const Model& m, const Dataset& train) {
  if (train.size() == 0) throw ValueError("build_datastore: empty training set");
  Datastore store;
  store.dim = m.dim();
  store.categories = m.categories;
  store.model_checksum = model_checksum(m);
  Matrix z;
  represent_records(m, train.records, &z, nullptr);
  store.h.reserve(train.size());
  store.y.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& id = train.records[i].id;
    if (!train.labeled(id)) throw ValueError("build_datastore: unlabeled record: " + id);
    std::vector<float> hv(store.dim);
    for (std::size_t t = 0; t < store.dim; ++t) hv[t] = static_cast<float>(z(i, t));
    store.h.push_back(std::move(hv));
    store.y.push_back(train.label_of(id));
  }
  return store;
}

/// Temperature-weighted vote of the k nearest stored instances:
///   alpha_i = exp(-d_i/tau) / sum_j exp(-d_j/tau)   over the k neighbors
///   y_hat   = sum_i alpha_i y_i
/// Exact linear scan; distance ties broken by entry index ascending.
/// `alpha_out`/`index_out`, when given, receive the neighbor weights and
/// store indices in selection order.
inline Vec knn_predict(const Vec& z, const Datastore& store, std::size_t k, double tau,
                       Vec* alpha_out = nullptr, std::vector<std::size_t>* index_out = nullptr) {
  if (store.size() == 0) throw ValueError("knn_predict: empty datastore");
  if (k == 0 || k > store.size())
    throw ValueError("knn_predict: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(store.size()) + "]");
  if (tau <= 0.0) throw ConfigError("knn_predict: tau must be positive");
  if (z.size() != store.dim) throw CompatError("knn_predict: query dimension mismatch");

  std::vector<double> dist(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < store.dim; ++t) {
      const double diff = z[t] - static_cast<double>(store.h[i][t]);
      s += diff * diff;
    }
    dist[i] = std::sqrt(s);
  }
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (dist[a] != dist[b]) return dist[a] < dist[b];
                      return a < b;
                    });
  order.resize(k);

  const double hi = -dist[order[0]] / tau;  // max of -d/tau over neighbors
  Vec alpha(k);
  double denom = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    alpha[i] = std::exp(-dist[order[i]] / tau - hi);
    denom += alpha[i];
  }
  for (double& a : alpha) a /= denom;

  Vec yhat(store.num_labels(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& labels = store.y[order[i]];
    for (std::size_t j = 0; j < yhat.size(); ++j) yhat[j] += alpha[i] * labels[j];
  }
  if (alpha_out) *alpha_out = std::move(alpha);
  if (index_out) *index_out = std::move(order);
  return yhat;
}

/// Element-wise convex combination lambda*knn + (1-lambda)*model.
inline Vec blend(const Vec& knn, const Vec& model, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ValueError("blend: lambda must lie in [0,1]");
  if (knn.size() != model.size()) throw std::invalid_argument("blend: size mismatch");
  Vec out(knn.size());
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = lambda * knn[j] + (1.0 - lambda) * model[j];
  return out;
}

/// Rejects stores built by a different model (dimension, label order, or
/// weights); the error names both checksums.
inline void check_datastore_compatible(const Datastore& store, const Model& m) {
  const std::uint64_t current = model_checksum(m);
  const std::string pair = " (store " + checksum_hex(store.model_checksum) + ", model " +
                           checksum_hex(current) + ")";
  if (store.dim != m.dim())
    throw CompatError("datastore dimension " + std::to_string(store.dim) +
                      " does not match model dimension " + std::to_string(m.dim()) + pair);
  if (store.categories != m.categories)
    throw CompatError("datastore category order does not match model" + pair);
  if (store.model_checksum != current)
    throw CompatError("datastore was built by a different model" + pair);
}

// ---------------------------------------------------------------------------
// Datastore container: magic, version, d, l, entry count, category names,
// producing-model checksum, then per entry d little-endian f32 plus l
// label bytes, and an FNV-1a footer over everything before it.
// ---------------------------------------------------------------------------

constexpr char kDatastoreMagic[8] = {'L', 'A', 'K', 'S', 'T', 'O', 'R', 'E'};
constexpr std::uint32_t kDatastoreVersion = 1;

inline void save_datastore(const std::string& path, const Datastore& store) {
  std::ostringstream body;
  body.write(kDatastoreMagic, sizeof kDatastoreMagic);
  bin::put_u32(body, kDatastoreVersion);
  bin::put_u32(body, static_cast<std::uint32_t>(store.dim));
  bin::put_u32(body, static_cast<std::uint32_t>(store.num_labels()));
  bin::put_u64(body, store.size());
  for (const auto& c : store.categories) bin::put_string(body, c);
  bin::put_u64(body, store.model_checksum);
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.h[i].size() != store.dim || store.y[i].size() != store.num_labels())
      throw ValueError("save_datastore: entry " + std::to_string(i) + " has wrong shape");
    for (float v : store.h[i]) bin::put_f32(body, v);
    body.write(reinterpret_cast<const char*>(store.y[i].data()),
               static_cast<std::streamsize>(store.y[i].size()));
  }
  const std::string bytes = body.str();
  Fnv1a f;
  f.eat(bytes.data(), bytes.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write datastore: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  bin::put_u64(out, f.value());
  if (!out) throw IoError("short write on datastore: " + path);
}

inline Datastore load_datastore(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open datastore: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  if (bytes.size() < sizeof kDatastoreMagic + 4 + 8)
    throw SchemaError("datastore too small: " + path);

  const std::string payload = bytes.substr(0, bytes.size() - 8);
  Fnv1a f;
  f.eat(payload.data(), payload.size());
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(bytes[bytes.size() - 8 + static_cast<std::size_t>(i)]))
              << (8 * i);
  if (stored != f.value()) throw SchemaError("datastore checksum mismatch: " + path);

  std::istringstream is(payload);
  char magic[sizeof kDatastoreMagic];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + sizeof magic, kDatastoreMagic))
    throw SchemaError("not a datastore file: " + path);
  const std::uint32_t version = bin::get_u32(is);
  if (version != kDatastoreVersion)
    throw SchemaError("unsupported datastore version " + std::to_string(version) + ": " + path);

  Datastore store;
  store.dim = bin::get_u32(is);
  const std::uint32_t l = bin::get_u32(is);
  const std::uint64_t count = bin::get_u64(is);
  store.categories.resize(l);
  for (auto& c : store.categories) c = bin::get_string(is);
  store.model_checksum = bin::get_u64(is);
  store.h.resize(count);
  store.y.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    store.h[i].resize(store.dim);
    for (float& v : store.h[i]) v = bin::get_f32(is);
    store.y[i].resize(l);
    if (!is.read(reinterpret_cast<char*>(store.y[i].data()), static_cast<std::streamsize>(l)))
      throw IoError("unexpected end of file");
    for (auto b : store.y[i])
      if (b > 1) throw SchemaError("datastore label byte out of range: " + path);
  }
  return store;
}

}  // namespace lak
