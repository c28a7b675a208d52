#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lak/ablation.hpp"
#include "lak/config.hpp"
#include "lak/dataset.hpp"
#include "lak/knn.hpp"
#include "lak/metrics.hpp"
#include "lak/model.hpp"
#include "lak/synthetic.hpp"
#include "lak/train.hpp"

namespace lak {

namespace fs = std::filesystem;

inline std::string arguments_path(const RunConfig& c) {
  return (fs::path(c.data_dir) / "arguments.tsv").string();
}

inline std::string labels_path(const RunConfig& c) {
  return (fs::path(c.data_dir) / "labels.tsv").string();
}

inline std::string checkpoint_path(const RunConfig& c, std::size_t fold) {
  return (fs::path(c.out_dir) / "checkpoints" / ("fold" + std::to_string(fold) + ".ckpt")).string();
}

inline std::string store_path(const RunConfig& c, std::size_t fold) {
  return (fs::path(c.out_dir) / "stores" / ("fold" + std::to_string(fold) + ".store")).string();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << text;
  if (!out) throw IoError("short write on file: " + path);
}

/// Creates the fixed run layout and records the resolved configuration
/// next to the command's outputs.
inline void prepare_out_dir(const RunConfig& c, const std::string& command) {
  for (const char* sub : {"", "checkpoints", "stores", "predictions", "reports", "logs"})
    fs::create_directories(fs::path(c.out_dir) / sub);
  write_text_file((fs::path(c.out_dir) / ("config." + command + ".resolved")).string(),
                  resolved_config_text(c));
}

/// Dataset from the fixed data-dir layout; the labels file is optional
/// unless `require_labels`.
inline Dataset load_run_dataset(const RunConfig& c, bool require_labels) {
  if (c.data_dir.empty()) throw ConfigError("data_dir is required");
  const std::string args = arguments_path(c);
  const std::string labels = labels_path(c);
  const bool have_labels = fs::exists(labels);
  if (require_labels && !have_labels) throw IoError("labels file required but missing: " + labels);
  return load_dataset(args, have_labels ? labels : "");
}

inline int cmd_ingest(const RunConfig& c, std::ostream& out) {
  const Dataset ds = load_run_dataset(c, false);
  out << "records\t" << ds.size() << '\n';
  out << "labeled\t" << ds.labels.size() << '\n';
  if (ds.categories.empty()) return 0;
  std::vector<std::size_t> pos(ds.num_labels(), 0);
  std::size_t labeled = 0;
  for (const auto& r : ds.records) {
    if (!ds.labeled(r.id)) continue;
    ++labeled;
    const auto& y = ds.label_of(r.id);
    for (std::size_t j = 0; j < y.size(); ++j) pos[j] += y[j];
  }
  out << std::fixed << std::setprecision(4);
  for (std::size_t j = 0; j < ds.num_labels(); ++j)
    out << "prevalence\t" << ds.categories[j] << '\t'
        << (labeled ? static_cast<double>(pos[j]) / static_cast<double>(labeled) : 0.0) << '\n';
  return 0;
}

inline int cmd_train(const RunConfig& c, std::ostream& out) {
  c.train.validate();
  const Dataset ds = load_run_dataset(c, true);
  prepare_out_dir(c, "train");

  std::vector<std::ofstream> logs;
  logs.reserve(c.train.folds);
  for (std::size_t f = 0; f < c.train.folds; ++f) {
    const std::string path =
        (fs::path(c.out_dir) / "logs" / ("fold" + std::to_string(f) + ".log")).string();
    logs.emplace_back(path);
    if (!logs.back()) throw IoError("cannot write training log: " + path);
  }
  const auto checkpoints = train_kfold(ds, c.train, c.jobs,
                                       [&](std::size_t f) { return &logs[f]; });
  for (std::size_t f = 0; f < checkpoints.size(); ++f) {
    save_checkpoint(checkpoint_path(c, f), checkpoints[f]);
    out << "fold\t" << f << "\tbest_holdout_macro_f1\t" << std::fixed << std::setprecision(6)
        << checkpoints[f].best_metric << '\n';
  }
  out << "checkpoints\t" << checkpoints.size() << '\t' << (fs::path(c.out_dir) / "checkpoints").string()
      << '\n';
  return 0;
}

/// seed and fold count recorded in a checkpoint's embedded config; used
/// so stores are built from the exact training portions of the original
/// run even if the current flags differ.
inline void split_params_from_checkpoint(const Checkpoint& ck, std::uint64_t& seed,
                                         std::size_t& folds) {
  RunConfig scratch;
  std::istringstream is(ck.config_text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    if (key == "seed" || key == "folds") apply_config_key(scratch, key, line.substr(eq + 1));
  }
  seed = scratch.train.seed;
  folds = scratch.train.folds;
}

inline int cmd_build_store(const RunConfig& c, std::ostream& out) {
  const Dataset ds = load_run_dataset(c, true);
  prepare_out_dir(c, "build-store");
  for (std::size_t f = 0; f < c.train.folds; ++f) {
    const Checkpoint ck = load_checkpoint(checkpoint_path(c, f));
    std::uint64_t seed = 0;
    std::size_t folds = 0;
    split_params_from_checkpoint(ck, seed, folds);
    const auto splits = kfold_split(ds, folds, seed);
    if (ck.fold_id >= splits.size())
      throw CompatError("checkpoint fold id " + std::to_string(ck.fold_id) +
                        " out of range for " + std::to_string(splits.size()) + " folds");
    const Datastore store = build_datastore(ck.model, splits[ck.fold_id].train);
    save_datastore(store_path(c, f), store);
    out << "store\t" << f << "\tentries\t" << store.size() << '\n';
  }
  return 0;
}

inline void write_probabilities_tsv(const std::string& path, const std::vector<std::string>& ids,
                                    const Matrix& probs, const std::vector<std::string>& categories) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write probabilities file: " + path);
  out << "Argument ID";
  for (const auto& c : categories) out << '\t' << c;
  out << '\n';
  out << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (std::size_t j = 0; j < probs.cols(); ++j) out << '\t' << probs(i, j);
    out << '\n';
  }
  if (!out) throw IoError("short write on probabilities file: " + path);
}

inline std::pair<std::vector<std::string>, Matrix> parse_probabilities_tsv(
    const std::string& path, const std::vector<std::string>& categories) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open probabilities file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty probabilities file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string expect = "Argument ID";
  for (const auto& c : categories) expect += '\t' + c;
  if (line != expect) throw SchemaError("unexpected probabilities header in " + path);
  std::vector<std::string> ids;
  std::vector<Vec> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        cells.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cells.size() != categories.size() + 1)
      throw SchemaError("row " + std::to_string(lineno) + " of " + path + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(categories.size() + 1));
    ids.push_back(cells[0]);
    Vec row(categories.size());
    for (std::size_t j = 0; j < categories.size(); ++j) {
      try {
        std::size_t used = 0;
        row[j] = std::stod(cells[j + 1], &used);
        if (used != cells[j + 1].size()) throw std::invalid_argument(cells[j + 1]);
      } catch (const std::exception&) {
        throw SchemaError("row " + std::to_string(lineno) + " of " + path +
                          ": bad probability '" + cells[j + 1] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  Matrix probs(rows.size(), categories.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < categories.size(); ++j) probs(i, j) = rows[i][j];
  return {std::move(ids), std::move(probs)};
}

inline int cmd_predict(const RunConfig& c, std::ostream& out) {
  const Dataset ds = load_run_dataset(c, false);
  prepare_out_dir(c, "predict");
  std::vector<Checkpoint> checkpoints;
  for (std::size_t f = 0; f < c.train.folds; ++f)
    checkpoints.push_back(load_checkpoint(checkpoint_path(c, f)));
  std::vector<Datastore> stores;
  if (c.knn.lambda > 0.0) {
    const std::size_t needed = c.blend_after_average ? 1 : c.train.folds;
    for (std::size_t f = 0; f < needed; ++f) stores.push_back(load_datastore(store_path(c, f)));
  }
  const Matrix probs =
      predict_ensemble(checkpoints, stores, ds.records, c.knn, c.blend_after_average);

  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const auto& r : ds.records) ids.push_back(r.id);
  const auto& categories = checkpoints[0].model.categories;
  const std::string prob_path = (fs::path(c.out_dir) / "predictions" / "probabilities.tsv").string();
  write_probabilities_tsv(prob_path, ids, probs, categories);

  Dataset pred;
  pred.records = ds.records;
  pred.categories = categories;
  const Matrix bin = binarize(probs, c.train.threshold);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    LabelVector y(categories.size());
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = bin(i, j) != 0.0 ? 1 : 0;
    pred.labels.emplace(ids[i], std::move(y));
  }
  const std::string label_path = (fs::path(c.out_dir) / "predictions" / "labels.tsv").string();
  write_labels_tsv(pred, label_path);
  out << "predicted\t" << ids.size() << '\t' << prob_path << '\n';
  return 0;
}

inline int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  const Dataset gold_ds = load_run_dataset(c, true);
  prepare_out_dir(c, "evaluate");
  const std::string prob_path = (fs::path(c.out_dir) / "predictions" / "probabilities.tsv").string();
  auto [ids, probs] = parse_probabilities_tsv(prob_path, gold_ds.categories);
  const Matrix gold = gold_matrix(gold_ds, ids);
  const EvalReport report = macro_scores(binarize(probs, c.train.threshold), gold, c.train.threshold);

  write_text_file((fs::path(c.out_dir) / "reports" / "evaluation.tsv").string(),
                  report_tsv(report, gold_ds.categories));
  write_text_file((fs::path(c.out_dir) / "reports" / "evaluation.kv").string(),
                  report_keyvalue(report, gold_ds.categories));
  out << std::fixed << std::setprecision(6);
  out << "macro_precision\t" << report.macro_precision << '\n';
  out << "macro_recall\t" << report.macro_recall << '\n';
  out << "macro_f1\t" << report.macro_f1 << '\n';
  return 0;
}

inline int cmd_ablate(const RunConfig& c, const std::vector<std::uint64_t>& seeds,
                      const std::vector<double>& sweep_gammas,
                      const std::vector<double>& sweep_lambdas,
                      const std::vector<std::size_t>& sweep_ks,
                      const std::vector<double>& sweep_taus, std::ostream& out) {
  const Dataset ds = load_run_dataset(c, true);
  prepare_out_dir(c, "ablate");
  AblationConfig ab;
  ab.train = c.train;
  ab.knn = c.knn;
  if (!seeds.empty()) ab.seeds = seeds;

  const bool sweep = !sweep_gammas.empty() || !sweep_lambdas.empty() || !sweep_ks.empty() ||
                     !sweep_taus.empty();
  if (sweep) {
    const auto gammas = sweep_gammas.empty() ? std::vector<double>{c.train.gamma} : sweep_gammas;
    const auto lambdas = sweep_lambdas.empty() ? std::vector<double>{c.knn.lambda} : sweep_lambdas;
    const auto ks = sweep_ks.empty() ? std::vector<std::size_t>{c.knn.k} : sweep_ks;
    const auto taus = sweep_taus.empty() ? std::vector<double>{c.knn.tau} : sweep_taus;
    const auto rows = ablation_sweep(ds, ab, gammas, lambdas, ks, taus, c.jobs);
    const std::string text = sweep_table_tsv(rows);
    write_text_file((fs::path(c.out_dir) / "reports" / "sweep.tsv").string(), text);
    out << text;
    return 0;
  }
  const auto rows = ablation_run(ds, ab, c.jobs);
  const std::string text = ablation_table_tsv(rows, ab);
  write_text_file((fs::path(c.out_dir) / "reports" / "ablation.tsv").string(), text);
  out << text;
  return 0;
}

/// Writes a synthetic corpus in the ingestion schema into data_dir.
inline int cmd_synth(const RunConfig& c, const SynthConfig& synth, std::ostream& out) {
  if (c.data_dir.empty()) throw ConfigError("data_dir is required");
  fs::create_directories(c.data_dir);
  const Dataset ds = synth_dataset(synth);
  write_arguments_tsv(ds, arguments_path(c));
  write_labels_tsv(ds, labels_path(c));
  out << "generated\t" << ds.size() << "\trecords in " << c.data_dir << '\n';
  return 0;
}

}  // namespace lak
