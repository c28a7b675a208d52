#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lak/contrastive.hpp"
#include "lak/dataset.hpp"
#include "lak/errors.hpp"
#include "lak/knn.hpp"
#include "lak/metrics.hpp"
#include "lak/model.hpp"
#include "lak/rng.hpp"

namespace lak {

/// How the positive-class weights of the BCE term are computed from the
/// training fold: one ratio per label (negatives/positives, clipped), or
/// the single scalar ratio positives/negatives applied to every label.
enum class WMode { per_label, literal_scalar };

enum class OptimizerKind { sgd, momentum, adam };

inline std::string w_mode_name(WMode m) {
  return m == WMode::per_label ? "per_label" : "literal_scalar";
}

inline WMode parse_w_mode(const std::string& s) {
  if (s == "per_label") return WMode::per_label;
  if (s == "literal_scalar") return WMode::literal_scalar;
  throw ConfigError("unknown w-mode: " + s);
}

inline std::string optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    default: return "adam";
  }
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "momentum") return OptimizerKind::momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer: " + s);
}

inline std::string attn_scale_name(AttnScale s) { return s == AttnScale::da ? "da" : "sqrt_da"; }

inline AttnScale parse_attn_scale(const std::string& s) {
  if (s == "da") return AttnScale::da;
  if (s == "sqrt_da") return AttnScale::sqrt_da;
  throw ConfigError("unknown attention scale: " + s);
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  std::size_t folds = 6;
  double gamma = 0.1;      // contrastive term weight
  double tau_prime = 1.0;  // contrastive temperature
  WMode w_mode = WMode::per_label;
  ModelKind kind = ModelKind::multi_attention;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t enc_layers = 1;
  std::size_t vocab_size = 10000;
  std::size_t max_len = 128;
  bool use_positions = true;
  bool classifier_bias = false;
  bool cl_squared = false;  // squared Euclidean distances in the contrastive term
  AttnScale scale = AttnScale::da;
  Reduction reduction = Reduction::sum;
  std::size_t patience = 10;  // early stop after this many epochs without holdout improvement
  double clip_norm = 5.0;     // global gradient norm ceiling
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double threshold = 0.5;  // binarization threshold for the holdout metric

  void validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (gamma > 0.0 && batch_size < 2)
      throw ConfigError("train: contrastive loss needs batch_size >= 2");
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (folds < 2) throw ConfigError("train: folds must be >= 2");
    if (gamma < 0.0) throw ConfigError("train: gamma must be nonnegative");
    if (tau_prime <= 0.0) throw ConfigError("train: tau_prime must be positive");
    if (dim == 0 || heads == 0 || vocab_size < 3 || max_len == 0)
      throw ConfigError("train: encoder dimensions must be positive");
    if (kind == ModelKind::multi_attention) head_dim(dim, heads);
    if (clip_norm <= 0.0) throw ConfigError("train: clip_norm must be positive");
    if (threshold < 0.0 || threshold > 1.0) throw ConfigError("train: threshold must lie in [0,1]");
  }
};

/// key=value snapshot embedded into checkpoints.
inline std::string train_config_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "epochs=" << c.epochs << '\n'
     << "batch_size=" << c.batch_size << '\n'
     << "learning_rate=" << c.learning_rate << '\n'
     << "seed=" << c.seed << '\n'
     << "folds=" << c.folds << '\n'
     << "gamma=" << c.gamma << '\n'
     << "tau_prime=" << c.tau_prime << '\n'
     << "w_mode=" << w_mode_name(c.w_mode) << '\n'
     << "model_kind=" << model_kind_name(c.kind) << '\n'
     << "dim=" << c.dim << '\n'
     << "heads=" << c.heads << '\n'
     << "enc_layers=" << c.enc_layers << '\n'
     << "vocab_size=" << c.vocab_size << '\n'
     << "max_len=" << c.max_len << '\n'
     << "use_positions=" << (c.use_positions ? 1 : 0) << '\n'
     << "classifier_bias=" << (c.classifier_bias ? 1 : 0) << '\n'
     << "cl_squared=" << (c.cl_squared ? 1 : 0) << '\n'
     << "attention_scale=" << attn_scale_name(c.scale) << '\n'
     << "reduction=" << (c.reduction == Reduction::sum ? "sum" : "mean") << '\n'
     << "patience=" << c.patience << '\n'
     << "clip_norm=" << c.clip_norm << '\n'
     << "optimizer=" << optimizer_name(c.optimizer) << '\n'
     << "momentum=" << c.momentum << '\n'
     << "threshold=" << c.threshold << '\n';
  return os.str();
}

/// BCE positive weights from the training portion only. per_label:
/// w_j = negatives_j / positives_j clipped to [0.1, 100], 1.0 for labels
/// with no positives. literal_scalar: the single ratio
/// total positives / total negatives for every label.
inline Vec label_weights(const Dataset& train, WMode mode) {
  const std::size_t l = train.num_labels();
  if (l == 0) throw ValueError("label_weights: dataset has no categories");
  std::vector<std::size_t> pos(l, 0);
  std::size_t total = 0;
  for (const auto& rec : train.records) {
    if (!train.labeled(rec.id)) throw ValueError("label_weights: unlabeled record: " + rec.id);
    const auto& y = train.label_of(rec.id);
    for (std::size_t j = 0; j < l; ++j) pos[j] += y[j];
    ++total;
  }
  if (total == 0) throw ValueError("label_weights: empty training set");
  Vec w(l, 1.0);
  if (mode == WMode::per_label) {
    for (std::size_t j = 0; j < l; ++j) {
      if (pos[j] == 0) continue;  // ratio undefined; keep 1.0
      const double ratio = static_cast<double>(total - pos[j]) / static_cast<double>(pos[j]);
      w[j] = std::min(100.0, std::max(0.1, ratio));
    }
  } else {
    std::size_t total_pos = 0;
    for (std::size_t j = 0; j < l; ++j) total_pos += pos[j];
    const std::size_t total_neg = total * l - total_pos;
    const double scalar =
        total_neg == 0 ? 1.0 : static_cast<double>(total_pos) / static_cast<double>(total_neg);
    for (double& v : w) v = scalar;
  }
  return w;
}

struct OptimizerState {
  std::vector<Matrix> velocity;  // momentum
  std::vector<Matrix> m1, m2;    // adam moments
  std::size_t step = 0;
};

inline OptimizerState make_optimizer_state(Model& m, const TrainConfig& cfg) {
  OptimizerState s;
  if (cfg.optimizer == OptimizerKind::sgd) return s;
  for (Matrix* p : parameters(m)) {
    if (cfg.optimizer == OptimizerKind::momentum) {
      s.velocity.emplace_back(p->rows(), p->cols());
    } else {
      s.m1.emplace_back(p->rows(), p->cols());
      s.m2.emplace_back(p->rows(), p->cols());
    }
  }
  return s;
}

/// Scales all gradients down so their global L2 norm is at most
/// max_norm; returns the pre-clip norm.
inline double clip_gradients(std::vector<Matrix*> grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix* g : grads)
    for (double v : g->values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Matrix* g : grads)
      for (double& v : g->values()) v *= scale;
  }
  return norm;
}

inline void apply_update(Model& m, ModelGrads& g, const TrainConfig& cfg, OptimizerState& state) {
  auto params = parameters(m);
  auto grads = parameters(g);
  if (params.size() != grads.size())
    throw Error("apply_update: parameter/gradient count mismatch");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->values();
    const auto& gr = grads[i]->values();
    switch (cfg.optimizer) {
      case OptimizerKind::sgd:
        for (std::size_t t = 0; t < p.size(); ++t) p[t] -= cfg.learning_rate * gr[t];
        break;
      case OptimizerKind::momentum: {
        auto& v = state.velocity[i].values();
        for (std::size_t t = 0; t < p.size(); ++t) {
          v[t] = cfg.momentum * v[t] + gr[t];
          p[t] -= cfg.learning_rate * v[t];
        }
        break;
      }
      case OptimizerKind::adam: {
        auto& m1 = state.m1[i].values();
        auto& m2 = state.m2[i].values();
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
        for (std::size_t t = 0; t < p.size(); ++t) {
          m1[t] = cfg.adam_beta1 * m1[t] + (1.0 - cfg.adam_beta1) * gr[t];
          m2[t] = cfg.adam_beta2 * m2[t] + (1.0 - cfg.adam_beta2) * gr[t] * gr[t];
          p[t] -= cfg.learning_rate * (m1[t] / c1) / (std::sqrt(m2[t] / c2) + cfg.adam_eps);
        }
        break;
      }
    }
  }
}

struct StepResult {
  double bce = 0.0;
  double con = 0.0;
  double total = 0.0;
};

/// One optimization step on one batch: forward, both loss terms,
/// backward, clip, update. Reported losses are pre-update.
inline StepResult train_step(Model& m, const EncodedBatch& batch, const Matrix& targets,
                             const Vec& w, const TrainConfig& cfg, OptimizerState& opt) {
  BatchCache cache;
  forward_batch(m, batch, &cache);
  StepResult r;
  r.bce = weighted_bce(cache.probs, targets, w, cfg.reduction);
  Matrix dprobs = weighted_bce_backward(cache.probs, targets, w, cfg.reduction);
  Matrix dz_extra;
  if (cfg.gamma > 0.0) {
    ContrastiveCache ccache;
    r.con = contrastive_loss(cache.z, targets, cfg.tau_prime, &ccache, cfg.cl_squared);
    dz_extra = contrastive_backward(cache.z, cfg.tau_prime, ccache);
    dz_extra *= cfg.gamma;
  }
  r.total = total_loss(r.bce, r.con, cfg.gamma);
  ModelGrads g = zeros_like(m);
  backward_batch(m, cache, dprobs, dz_extra, g);
  clip_gradients(parameters(g), cfg.clip_norm);
  apply_update(m, g, cfg, opt);
  return r;
}

/// Model-only holdout macro-F1 at the configured threshold.
inline double holdout_macro_f1(const Model& m, const Dataset& holdout, double threshold) {
  Matrix probs;
  represent_records(m, holdout.records, nullptr, &probs);
  std::vector<std::string> ids;
  ids.reserve(holdout.size());
  for (const auto& r : holdout.records) ids.push_back(r.id);
  const Matrix gold = gold_matrix(holdout, ids);
  return macro_scores(binarize(probs, threshold), gold, threshold).macro_f1;
}

/// Trains one fold with mini-batch gradient descent on
/// L = BCE + gamma * contrastive, evaluating holdout macro-F1 after each
/// epoch and returning the checkpoint of the best epoch. Early-stops
/// after `patience` epochs without improvement. Fully deterministic for
/// a given (seed, fold_id).
inline Checkpoint train_fold(const Dataset& train, const Dataset& holdout, const TrainConfig& cfg,
                             std::uint32_t fold_id = 0, std::ostream* log = nullptr) {
  cfg.validate();
  if (!train.fully_labeled() || !holdout.fully_labeled())
    throw ValueError("train_fold: datasets must be fully labeled");
  if (train.categories != holdout.categories)
    throw ValueError("train_fold: category order differs between train and holdout");
  for (const auto& r : holdout.records)
    if (train.labeled(r.id)) throw ValueError("train_fold: id in both splits: " + r.id);

  // Vocabulary from the training portion only; holdout tokens unseen in
  // training map to <unk>. Category-name tokens are then force-included
  // (even past the size cap) so the label matrix can be initialized from
  // distinct encodings — all-<unk> names would start every label row
  // identical, and the backward pass preserves that symmetry forever.
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(train.size());
  for (const auto& r : train.records) corpus.push_back(tokenize(render_template(r)));
  std::vector<std::string> tokens = Vocabulary::build(corpus, cfg.vocab_size).tokens();
  for (const auto& name : train.categories)
    for (const auto& tok : tokenize(name))
      if (std::find(tokens.begin(), tokens.end(), tok) == tokens.end()) tokens.push_back(tok);
  Vocabulary vocab(std::move(tokens));

  Rng init_rng(mix_seed(cfg.seed, "init", fold_id));
  Model model = make_model(cfg.kind, std::move(vocab), train.categories, cfg.dim, cfg.heads,
                           cfg.enc_layers, cfg.use_positions, cfg.scale, cfg.classifier_bias,
                           init_rng, cfg.max_len);
  const Vec w = label_weights(train, cfg.w_mode);
  OptimizerState opt = make_optimizer_state(model, cfg);

  std::vector<std::vector<std::size_t>> docs;
  docs.reserve(train.size());
  for (const auto& r : train.records)
    docs.push_back(model.vocab.encode(tokenize(render_template(r))));
  std::vector<const LabelVector*> gold;
  gold.reserve(train.size());
  for (const auto& r : train.records) gold.push_back(&train.label_of(r.id));

  Rng shuffle_rng(mix_seed(cfg.seed, "shuffle", fold_id));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Checkpoint best;
  best.fold_id = fold_id;
  best.config_text = train_config_text(cfg);
  best.best_metric = -1.0;
  std::size_t since_best = 0;

  if (log)
    *log << "epoch\tbce\tcon\ttotal\tholdout_precision\tholdout_recall\tholdout_macro_f1\n";
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double bce_sum = 0.0, con_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::vector<std::size_t>> chunk;
      chunk.reserve(stop - start);
      Matrix targets(stop - start, train.num_labels());
      for (std::size_t i = start; i < stop; ++i) {
        chunk.push_back(docs[order[i]]);
        const auto& y = *gold[order[i]];
        for (std::size_t j = 0; j < y.size(); ++j) targets(i - start, j) = y[j];
      }
      const std::string where = "epoch " + std::to_string(epoch) + " batch " +
                                std::to_string(start / cfg.batch_size);
      StepResult r;
      try {
        r = train_step(model, make_batch(chunk, cfg.max_len), targets, w, cfg, opt);
      } catch (const std::exception& e) {
        // Exploding weights usually trip the loss functions' own finiteness
        // guards; attach the location those guards cannot know.
        throw Error("train_fold: " + std::string(e.what()) + " (at " + where + ")");
      }
      if (!std::isfinite(r.total))
        throw Error("train_fold: non-finite loss at " + where + " (bce=" + std::to_string(r.bce) +
                    ", con=" + std::to_string(r.con) + ")");
      bce_sum += r.bce;
      con_sum += r.con;
    }

    Matrix probs;
    represent_records(model, holdout.records, nullptr, &probs);
    std::vector<std::string> ids;
    ids.reserve(holdout.size());
    for (const auto& r : holdout.records) ids.push_back(r.id);
    const EvalReport report =
        macro_scores(binarize(probs, cfg.threshold), gold_matrix(holdout, ids), cfg.threshold);
    if (log) {
      *log << epoch << '\t' << std::setprecision(10) << bce_sum << '\t' << con_sum << '\t'
           << bce_sum + cfg.gamma * con_sum << '\t' << report.macro_precision << '\t'
           << report.macro_recall << '\t' << report.macro_f1 << '\n';
    }
    if (report.macro_f1 > best.best_metric) {
      best.best_metric = report.macro_f1;
      best.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return best;
}

/// One independently trained checkpoint per fold. jobs > 1 trains folds
/// in parallel threads; results are identical either way because each
/// fold's random streams depend only on (seed, fold).
inline std::vector<Checkpoint> train_kfold(
    const Dataset& ds, const TrainConfig& cfg, std::size_t jobs = 1,
    const std::function<std::ostream*(std::size_t)>& log_for_fold = nullptr) {
  cfg.validate();
  if (ds.size() < cfg.folds) throw ValueError("train_kfold: dataset smaller than fold count");
  const auto splits = kfold_split(ds, cfg.folds, cfg.seed);
  std::vector<Checkpoint> out(splits.size());
  if (jobs <= 1) {
    for (std::size_t f = 0; f < splits.size(); ++f)
      out[f] = train_fold(splits[f].train, splits[f].holdout, cfg, static_cast<std::uint32_t>(f),
                          log_for_fold ? log_for_fold(f) : nullptr);
    return out;
  }
  std::vector<std::exception_ptr> errors(splits.size());
  for (std::size_t base = 0; base < splits.size(); base += jobs) {
    const std::size_t stop = std::min(splits.size(), base + jobs);
    std::vector<std::thread> pool;
    for (std::size_t f = base; f < stop; ++f) {
      pool.emplace_back([&, f] {
        try {
          out[f] = train_fold(splits[f].train, splits[f].holdout, cfg,
                              static_cast<std::uint32_t>(f), log_for_fold ? log_for_fold(f) : nullptr);
        } catch (...) {
          errors[f] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Ensemble prediction over fold checkpoints. Default composition: each
/// fold blends its own KNN vote into its model probabilities, then folds
/// are averaged. blend_after_average instead averages the model
/// probabilities of all folds and blends once, using the first
/// checkpoint's representations against stores[0].
inline Matrix predict_ensemble(const std::vector<Checkpoint>& checkpoints,
                               const std::vector<Datastore>& stores,
                               const std::vector<ArgumentRecord>& records, const KnnConfig& knn,
                               bool blend_after_average = false) {
  knn.validate();
  if (checkpoints.empty()) throw ValueError("predict_ensemble: no checkpoints");
  if (records.empty()) throw ValueError("predict_ensemble: no records");
  const auto& categories = checkpoints[0].model.categories;
  for (const auto& ck : checkpoints)
    if (ck.model.categories != categories)
      throw CompatError("predict_ensemble: checkpoints disagree on category order");
  const bool use_knn = knn.lambda > 0.0;
  if (use_knn) {
    const std::size_t needed = blend_after_average ? 1 : checkpoints.size();
    if (stores.size() < needed)
      throw CompatError("predict_ensemble: " + std::to_string(needed) + " datastores needed, got " +
                        std::to_string(stores.size()));
    for (std::size_t f = 0; f < needed; ++f)
      check_datastore_compatible(stores[f], checkpoints[f].model);
  }

  const std::size_t n = records.size();
  const std::size_t l = categories.size();
  Matrix sum(n, l);
  for (std::size_t f = 0; f < checkpoints.size(); ++f) {
    const Model& m = checkpoints[f].model;
    Matrix z, probs;
    const bool need_z = use_knn && !blend_after_average;
    represent_records(m, records, need_z ? &z : nullptr, &probs);
    for (std::size_t i = 0; i < n; ++i) {
      Vec row(l);
      for (std::size_t j = 0; j < l; ++j) row[j] = probs(i, j);
      if (need_z) {
        Vec zi(m.dim());
        for (std::size_t t = 0; t < m.dim(); ++t) zi[t] = z(i, t);
        row = blend(knn_predict(zi, stores[f], knn.k, knn.tau), row, knn.lambda);
      }
      for (std::size_t j = 0; j < l; ++j) sum(i, j) += row[j];
    }
  }
  sum *= 1.0 / static_cast<double>(checkpoints.size());

  if (use_knn && blend_after_average) {
    const Model& m = checkpoints[0].model;
    Matrix z;
    represent_records(m, records, &z, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      Vec zi(m.dim());
      for (std::size_t t = 0; t < m.dim(); ++t) zi[t] = z(i, t);
      Vec model_row(l);
      for (std::size_t j = 0; j < l; ++j) model_row[j] = sum(i, j);
      const Vec blended = blend(knn_predict(zi, stores[0], knn.k, knn.tau), model_row, knn.lambda);
      for (std::size_t j = 0; j < l; ++j) sum(i, j) = blended[j];
    }
  }
  return sum;
}

}  // namespace lak
