#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lak/knn.hpp"
#include "lak/metrics.hpp"
#include "lak/train.hpp"

namespace lak {

/// Cross-validated holdout evaluation for one configuration and seed:
/// every fold is trained, its holdout is scored (model-only, or blended
/// with the fold's own datastore when use_knn), and the pooled
/// predictions over all holdouts — each labeled record scored exactly
/// once — yield one report.
inline EvalReport evaluate_cv(const Dataset& ds, const TrainConfig& cfg, bool use_knn,
                              const KnnConfig& knn, std::size_t jobs = 1) {
  cfg.validate();
  if (use_knn) knn.validate();
  const auto splits = kfold_split(ds, cfg.folds, cfg.seed);

  struct FoldOut {
    Matrix probs;
    Matrix gold;
  };
  std::vector<FoldOut> outs(splits.size());
  std::vector<std::exception_ptr> errors(splits.size());

  auto run_fold = [&](std::size_t f) {
    try {
      const Dataset& holdout = splits[f].holdout;
      const Checkpoint ck =
          train_fold(splits[f].train, holdout, cfg, static_cast<std::uint32_t>(f));
      Matrix z, probs;
      represent_records(ck.model, holdout.records, use_knn ? &z : nullptr, &probs);
      if (use_knn) {
        const Datastore store = build_datastore(ck.model, splits[f].train);
        const std::size_t k = std::min(knn.k, store.size());
        for (std::size_t i = 0; i < holdout.size(); ++i) {
          Vec zi(ck.model.dim());
          for (std::size_t t = 0; t < zi.size(); ++t) zi[t] = z(i, t);
          Vec row(probs.cols());
          for (std::size_t j = 0; j < row.size(); ++j) row[j] = probs(i, j);
          const Vec blended = blend(knn_predict(zi, store, k, knn.tau), row, knn.lambda);
          for (std::size_t j = 0; j < row.size(); ++j) probs(i, j) = blended[j];
        }
      }
      std::vector<std::string> ids;
      ids.reserve(holdout.size());
      for (const auto& r : holdout.records) ids.push_back(r.id);
      outs[f] = FoldOut{std::move(probs), gold_matrix(holdout, ids)};
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };

  if (jobs <= 1) {
    for (std::size_t f = 0; f < splits.size(); ++f) run_fold(f);
  } else {
    for (std::size_t base = 0; base < splits.size(); base += jobs) {
      const std::size_t stop = std::min(splits.size(), base + jobs);
      std::vector<std::thread> pool;
      for (std::size_t f = base; f < stop; ++f) pool.emplace_back(run_fold, f);
      for (auto& t : pool) t.join();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::size_t total = 0;
  for (const auto& o : outs) total += o.probs.rows();
  Matrix probs(total, ds.num_labels()), gold(total, ds.num_labels());
  std::size_t at = 0;
  for (const auto& o : outs) {
    for (std::size_t i = 0; i < o.probs.rows(); ++i, ++at)
      for (std::size_t j = 0; j < ds.num_labels(); ++j) {
        probs(at, j) = o.probs(i, j);
        gold(at, j) = o.gold(i, j);
      }
  }
  return macro_scores(binarize(probs, cfg.threshold), gold, cfg.threshold);
}

struct AblationRow {
  std::string variant;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  std::vector<double> per_seed_f1;
};

struct AblationConfig {
  TrainConfig train;
  KnnConfig knn;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

/// The four-variant grid — baseline and multi-attention, each without
/// and with the KNN blend — every cell trained once per seed and
/// reported as the mean over seeds.
inline std::vector<AblationRow> ablation_run(const Dataset& ds, const AblationConfig& cfg,
                                             std::size_t jobs = 1) {
  if (cfg.seeds.empty()) throw ConfigError("ablation: at least one seed required");
  struct Variant {
    const char* name;
    ModelKind kind;
    bool use_knn;
  };
  const Variant variants[] = {
      {"baseline", ModelKind::baseline, false},
      {"multi_attention", ModelKind::multi_attention, false},
      {"baseline+knn", ModelKind::baseline, true},
      {"multi_attention+knn", ModelKind::multi_attention, true},
  };
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.variant = v.name;
    for (std::uint64_t seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.kind = v.kind;
      tc.seed = seed;
      const EvalReport rep = evaluate_cv(ds, tc, v.use_knn, cfg.knn, jobs);
      row.mean_precision += rep.macro_precision;
      row.mean_recall += rep.macro_recall;
      row.mean_f1 += rep.macro_f1;
      row.per_seed_f1.push_back(rep.macro_f1);
    }
    const double s = static_cast<double>(cfg.seeds.size());
    row.mean_precision /= s;
    row.mean_recall /= s;
    row.mean_f1 /= s;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string ablation_table_tsv(const std::vector<AblationRow>& rows,
                                      const AblationConfig& cfg) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "# seeds=";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
  os << " folds=" << cfg.train.folds << " epochs=" << cfg.train.epochs
     << " gamma=" << cfg.train.gamma << " lambda=" << cfg.knn.lambda << " k=" << cfg.knn.k
     << " tau=" << cfg.knn.tau << '\n';
  os << "variant\tprecision\trecall\tf1";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << "\tf1_seed" << cfg.seeds[i];
  os << '\n';
  for (const auto& r : rows) {
    os << r.variant << '\t' << r.mean_precision << '\t' << r.mean_recall << '\t' << r.mean_f1;
    for (double f : r.per_seed_f1) os << '\t' << f;
    os << '\n';
  }
  return os.str();
}

struct SweepRow {
  double gamma = 0.0;
  double lambda = 0.0;
  std::size_t k = 0;
  double tau = 0.0;
  double mean_f1 = 0.0;
};

/// Grid sweep on the full model: one row per (gamma, lambda, k, tau)
/// cell, mean macro-F1 over the configured seeds. lambda 0 cells skip
/// the datastore entirely.
inline std::vector<SweepRow> ablation_sweep(const Dataset& ds, const AblationConfig& cfg,
                                            const std::vector<double>& gammas,
                                            const std::vector<double>& lambdas,
                                            const std::vector<std::size_t>& ks,
                                            const std::vector<double>& taus, std::size_t jobs = 1) {
  std::vector<SweepRow> rows;
  for (double gamma : gammas)
    for (double lambda : lambdas)
      for (std::size_t k : ks)
        for (double tau : taus) {
          SweepRow row{gamma, lambda, k, tau, 0.0};
          for (std::uint64_t seed : cfg.seeds) {
            TrainConfig tc = cfg.train;
            tc.kind = ModelKind::multi_attention;
            tc.gamma = gamma;
            tc.seed = seed;
            KnnConfig kc = cfg.knn;
            kc.lambda = lambda;
            kc.k = k;
            kc.tau = tau;
            row.mean_f1 += evaluate_cv(ds, tc, lambda > 0.0, kc, jobs).macro_f1;
          }
          row.mean_f1 /= static_cast<double>(cfg.seeds.size());
          rows.push_back(row);
        }
  return rows;
}

inline std::string sweep_table_tsv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "gamma\tlambda\tk\ttau\tmacro_f1\n";
  for (const auto& r : rows)
    os << r.gamma << '\t' << r.lambda << '\t' << r.k << '\t' << r.tau << '\t' << r.mean_f1 << '\n';
  return os.str();
}

}  // namespace lak
