#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lak/dataset.hpp"
#include "lak/errors.hpp"
#include "lak/matrix.hpp"

namespace lak {

struct LabelScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
  std::vector<LabelScore> per_label;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double threshold = 0.5;
};

/// 1 iff p >= threshold (inclusive).
inline Matrix binarize(const Matrix& probs, double threshold) {
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.values().size(); ++i)
    out.values()[i] = probs.values()[i] >= threshold ? 1.0 : 0.0;
  return out;
}

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); each defined as 0
/// when its denominator is 0.
inline LabelScore per_label_f1(const Matrix& pred, const Matrix& gold, std::size_t j) {
  if (pred.rows() != gold.rows() || pred.cols() != gold.cols())
    throw std::invalid_argument("per_label_f1: shape mismatch");
  if (j >= pred.cols()) throw std::invalid_argument("per_label_f1: label index out of range");
  LabelScore s;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    const bool p = pred(i, j) != 0.0;
    const bool g = gold(i, j) != 0.0;
    if (p && g) ++s.tp;
    if (p && !g) ++s.fp;
    if (!p && g) ++s.fn;
  }
  if (s.tp + s.fp > 0) s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
  if (s.tp + s.fn > 0) s.recall = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
  if (s.precision + s.recall > 0.0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

/// Unweighted means over all labels, zero-support labels included.
inline EvalReport macro_scores(const Matrix& pred, const Matrix& gold, double threshold = 0.5) {
  if (pred.rows() != gold.rows() || pred.cols() != gold.cols())
    throw std::invalid_argument("macro_scores: shape mismatch");
  if (pred.cols() == 0) throw std::invalid_argument("macro_scores: no labels");
  EvalReport r;
  r.threshold = threshold;
  for (std::size_t j = 0; j < pred.cols(); ++j) {
    LabelScore s = per_label_f1(pred, gold, j);
    r.macro_precision += s.precision;
    r.macro_recall += s.recall;
    r.macro_f1 += s.f1;
    r.per_label.push_back(s);
  }
  const double l = static_cast<double>(pred.cols());
  r.macro_precision /= l;
  r.macro_recall /= l;
  r.macro_f1 /= l;
  return r;
}

/// Gold label matrix aligned to `ids`; missing rows are an error that
/// lists every offending id.
inline Matrix gold_matrix(const Dataset& ds, const std::vector<std::string>& ids) {
  std::string missing;
  for (const auto& id : ids)
    if (!ds.labeled(id)) missing += missing.empty() ? id : ", " + id;
  if (!missing.empty()) throw ValueError("missing gold labels for: " + missing);
  Matrix gold(ids.size(), ds.num_labels());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& y = ds.label_of(ids[i]);
    for (std::size_t j = 0; j < y.size(); ++j) gold(i, j) = y[j];
  }
  return gold;
}

/// Tab-separated report: one row per category plus the macro row.
inline std::string report_tsv(const EvalReport& r, const std::vector<std::string>& categories) {
  if (categories.size() != r.per_label.size())
    throw std::invalid_argument("report_tsv: category count mismatch");
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "label\tprecision\trecall\tf1\ttp\tfp\tfn\n";
  for (std::size_t j = 0; j < categories.size(); ++j) {
    const auto& s = r.per_label[j];
    os << categories[j] << '\t' << s.precision << '\t' << s.recall << '\t' << s.f1 << '\t' << s.tp
       << '\t' << s.fp << '\t' << s.fn << '\n';
  }
  os << "MACRO\t" << r.macro_precision << '\t' << r.macro_recall << '\t' << r.macro_f1 << "\t\t\t\n";
  return os.str();
}

/// Flat key-value rendering of the same report.
inline std::string report_keyvalue(const EvalReport& r, const std::vector<std::string>& categories) {
  if (categories.size() != r.per_label.size())
    throw std::invalid_argument("report_keyvalue: category count mismatch");
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "threshold=" << r.threshold << '\n';
  os << "macro_precision=" << r.macro_precision << '\n';
  os << "macro_recall=" << r.macro_recall << '\n';
  os << "macro_f1=" << r.macro_f1 << '\n';
  for (std::size_t j = 0; j < categories.size(); ++j) {
    const auto& s = r.per_label[j];
    os << "f1." << categories[j] << '=' << s.f1 << '\n';
  }
  return os.str();
}

/// Macro-F1 across a threshold grid, for analysis output only.
inline std::vector<std::pair<double, double>> sweep_thresholds(const Matrix& probs,
                                                               const Matrix& gold,
                                                               const std::vector<double>& grid) {
  std::vector<std::pair<double, double>> out;
  out.reserve(grid.size());
  for (double t : grid)
    out.emplace_back(t, macro_scores(binarize(probs, t), gold, t).macro_f1);
  return out;
}

}  // namespace lak
