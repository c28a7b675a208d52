#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lak/errors.hpp"
#include "lak/rng.hpp"

namespace lak {

enum class Stance { in_favor_of, against };

/// One dataset row: an argument with its claim, stance and premise.
struct ArgumentRecord {
  std::string id;
  std::string conclusion;
  Stance stance = Stance::in_favor_of;
  std::string premise;

  bool operator==(const ArgumentRecord&) const = default;
};

/// Binary flags over the value categories, in canonical category order.
using LabelVector = std::vector<std::uint8_t>;

struct Dataset {
  std::vector<ArgumentRecord> records;
  std::unordered_map<std::string, LabelVector> labels;  // id -> labels; may cover a subset
  std::vector<std::string> categories;

  std::size_t size() const { return records.size(); }
  std::size_t num_labels() const { return categories.size(); }

  bool labeled(const std::string& id) const { return labels.count(id) > 0; }

  bool fully_labeled() const {
    for (const auto& r : records)
      if (!labeled(r.id)) return false;
    return true;
  }

  const LabelVector& label_of(const std::string& id) const {
    auto it = labels.find(id);
    if (it == labels.end()) throw ValueError("no labels for argument id '" + id + "'");
    return it->second;
  }

  std::vector<std::string> unlabeled_ids() const {
    std::vector<std::string> out;
    for (const auto& r : records)
      if (!labeled(r.id)) out.push_back(r.id);
    return out;
  }
};

namespace detail {

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string ascii_lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

inline void require_no_tab(const std::string& field, const std::string& what) {
  if (field.find('\t') != std::string::npos || field.find('\n') != std::string::npos)
    throw ValueError(what + " contains a tab or newline and cannot be written as TSV");
}

}  // namespace detail

inline std::string stance_to_string(Stance s) {
  return s == Stance::in_favor_of ? "in favor of" : "against";
}

inline Stance parse_stance(const std::string& raw, std::size_t row) {
  const std::string s = detail::ascii_lower(detail::trim(raw));
  if (s == "in favor of") return Stance::in_favor_of;
  if (s == "against") return Stance::against;
  throw ValueError("row " + std::to_string(row) + ": unknown stance '" + raw +
                   "' (expected 'in favor of' or 'against')");
}

/// Parses the arguments TSV. Columns are located by header name, so any
/// column order is accepted; extra columns are ignored.
inline Dataset parse_arguments_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open arguments file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file, expected a header row");
  const auto header = detail::split_tabs(detail::strip_cr(line));

  auto find_col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw SchemaError(path + ": missing column '" + name + "'");
  };
  const std::size_t col_id = find_col("Argument ID");
  const std::size_t col_conclusion = find_col("Conclusion");
  const std::size_t col_stance = find_col("Stance");
  const std::size_t col_premise = find_col("Premise");

  Dataset ds;
  std::unordered_set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_tabs(line);
    if (cells.size() != header.size())
      throw ValueError(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(header.size()));
    ArgumentRecord rec;
    rec.id = cells[col_id];
    if (rec.id.empty()) throw ValueError(path + ": row " + std::to_string(row) + ": empty argument id");
    if (!seen.insert(rec.id).second)
      throw ValueError(path + ": row " + std::to_string(row) + ": duplicate argument id '" + rec.id + "'");
    rec.conclusion = cells[col_conclusion];
    rec.stance = parse_stance(cells[col_stance], row);
    rec.premise = cells[col_premise];
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

/// Reads the category column order of a labels file (everything after
/// "Argument ID"). This is how the canonical order is established from
/// the training labels file.
inline std::vector<std::string> read_label_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file, expected a header row");
  auto header = detail::split_tabs(detail::strip_cr(line));
  if (header.empty() || header[0] != "Argument ID")
    throw SchemaError(path + ": first labels column must be 'Argument ID'");
  header.erase(header.begin());
  if (header.empty()) throw SchemaError(path + ": labels header has no category columns");
  return header;
}

/// Parses a labels TSV into id -> LabelVector in the given canonical
/// category order, regardless of the file's own column order.
inline std::unordered_map<std::string, LabelVector> parse_labels_tsv(
    const std::string& path, const std::vector<std::string>& categories) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file, expected a header row");
  const auto header = detail::split_tabs(detail::strip_cr(line));

  std::size_t col_id = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "Argument ID") col_id = i;
  if (col_id == header.size()) throw SchemaError(path + ": missing column 'Argument ID'");

  std::vector<std::size_t> col_of(categories.size());
  for (std::size_t j = 0; j < categories.size(); ++j) {
    bool found = false;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == categories[j]) {
        col_of[j] = i;
        found = true;
        break;
      }
    }
    if (!found) throw SchemaError(path + ": missing category column '" + categories[j] + "'");
  }

  std::unordered_map<std::string, LabelVector> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_tabs(line);
    if (cells.size() != header.size())
      throw ValueError(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(header.size()));
    const std::string& id = cells[col_id];
    if (out.count(id))
      throw ValueError(path + ": row " + std::to_string(row) + ": duplicate argument id '" + id + "'");
    LabelVector y(categories.size());
    for (std::size_t j = 0; j < categories.size(); ++j) {
      const std::string cell = detail::trim(cells[col_of[j]]);
      if (cell == "0")
        y[j] = 0;
      else if (cell == "1")
        y[j] = 1;
      else
        throw ValueError(path + ": row " + std::to_string(row) + ", category '" + categories[j] +
                         "': cell '" + cell + "' is not 0 or 1");
    }
    out.emplace(id, std::move(y));
  }
  return out;
}

/// Loads an arguments/labels file pair. When `categories` is empty the
/// canonical order is taken from the labels file header.
inline Dataset load_dataset(const std::string& arguments_path, const std::string& labels_path = "",
                            std::vector<std::string> categories = {}) {
  Dataset ds = parse_arguments_tsv(arguments_path);
  if (!labels_path.empty()) {
    if (categories.empty()) categories = read_label_header(labels_path);
    ds.categories = categories;
    ds.labels = parse_labels_tsv(labels_path, ds.categories);
    std::unordered_set<std::string> known;
    for (const auto& r : ds.records) known.insert(r.id);
    for (const auto& [id, y] : ds.labels)
      if (!known.count(id)) throw ValueError(labels_path + ": labeled id '" + id + "' has no argument row");
  } else {
    ds.categories = std::move(categories);
  }
  return ds;
}

inline void write_arguments_tsv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write arguments file: " + path);
  out << "Argument ID\tConclusion\tStance\tPremise\n";
  for (const auto& r : ds.records) {
    detail::require_no_tab(r.id, "argument id");
    detail::require_no_tab(r.conclusion, "conclusion");
    detail::require_no_tab(r.premise, "premise");
    out << r.id << '\t' << r.conclusion << '\t' << stance_to_string(r.stance) << '\t' << r.premise
        << '\n';
  }
}

inline void write_labels_tsv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write labels file: " + path);
  out << "Argument ID";
  for (const auto& c : ds.categories) {
    detail::require_no_tab(c, "category name");
    out << '\t' << c;
  }
  out << '\n';
  for (const auto& r : ds.records) {
    auto it = ds.labels.find(r.id);
    if (it == ds.labels.end()) continue;
    out << r.id;
    for (std::uint8_t v : it->second) out << '\t' << (v ? '1' : '0');
    out << '\n';
  }
}

/// Renders the natural-language training template:
///   "I agree that {conclusion}, because {premise}"   (stance: in favor of)
///   "I disagree that {conclusion}, because {premise}" (stance: against)
inline std::string render_template(const ArgumentRecord& rec) {
  if (rec.conclusion.empty()) throw ValueError("argument '" + rec.id + "': empty conclusion");
  if (rec.premise.empty()) throw ValueError("argument '" + rec.id + "': empty premise");
  std::string out = rec.stance == Stance::in_favor_of ? "I agree that " : "I disagree that ";
  out += rec.conclusion;
  out += ", because ";
  out += rec.premise;
  return out;
}

struct FoldSplit {
  Dataset train;
  Dataset holdout;
};

/// Deterministic K-fold split over the labeled records. Each fold serves
/// once as holdout; holdouts are disjoint and cover the labeled records.
inline std::vector<FoldSplit> kfold_split(const Dataset& ds, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ValueError("kfold_split: folds must be >= 2");
  std::vector<std::size_t> labeled_idx;
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    if (ds.labeled(ds.records[i].id)) labeled_idx.push_back(i);
  if (folds > labeled_idx.size())
    throw ValueError("kfold_split: " + std::to_string(folds) + " folds but only " +
                     std::to_string(labeled_idx.size()) + " labeled records");

  Rng rng(mix_seed(seed, "kfold"));
  rng.shuffle(labeled_idx);

  const std::size_t n = labeled_idx.size();
  std::vector<FoldSplit> out(folds);
  std::size_t start = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t count = n / folds + (f < n % folds ? 1 : 0);
    std::vector<std::uint8_t> in_holdout(ds.records.size(), 0);
    for (std::size_t i = start; i < start + count; ++i) in_holdout[labeled_idx[i]] = 1;
    start += count;

    FoldSplit split;
    split.train.categories = ds.categories;
    split.holdout.categories = ds.categories;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      if (!ds.labeled(ds.records[i].id)) continue;
      Dataset& dst = in_holdout[i] ? split.holdout : split.train;
      dst.records.push_back(ds.records[i]);
      dst.labels.emplace(ds.records[i].id, ds.label_of(ds.records[i].id));
    }
    out[f] = std::move(split);
  }
  return out;
}

/// Concatenates datasets (e.g. training + validation per the 6-fold
/// protocol). Category orders must agree; duplicate ids are rejected.
inline Dataset merge_datasets(const std::vector<Dataset>& parts) {
  Dataset out;
  std::unordered_set<std::string> seen;
  for (const auto& p : parts) {
    if (out.categories.empty())
      out.categories = p.categories;
    else if (!p.categories.empty() && p.categories != out.categories)
      throw CompatError("merge_datasets: category orders differ between inputs");
    for (const auto& r : p.records) {
      if (!seen.insert(r.id).second)
        throw ValueError("merge_datasets: duplicate argument id '" + r.id + "'");
      out.records.push_back(r);
      if (p.labeled(r.id)) out.labels.emplace(r.id, p.label_of(r.id));
    }
  }
  return out;
}

}  // namespace lak
