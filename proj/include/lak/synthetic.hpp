#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lak/dataset.hpp"
#include "lak/errors.hpp"
#include "lak/rng.hpp"

namespace lak {

enum class SynthMode {
  /// Label j is active iff a keyword from group j appears in the text.
  keyword,
  /// 30% of documents carry labels that are not keyword-derivable; their
  /// signal exists only in near-duplicate sibling documents sharing a
  /// family token signature, so it is recoverable by nearest-neighbor
  /// lookup but hard for a parametric model to generalize from.
  neighbor_signal,
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t size = 200;
  std::size_t num_labels = 20;
  std::size_t vocab_size = 400;
  double positive_rate = 0.15;
  SynthMode mode = SynthMode::keyword;
};

inline constexpr std::size_t kSynthKeywordsPerLabel = 3;
inline constexpr std::size_t kSynthFamilyPool = 40;
inline constexpr double kSynthCarrierFraction = 0.30;

/// The keyword tokens whose presence defines label j in keyword mode.
inline std::vector<std::vector<std::string>> synth_keyword_groups(std::size_t num_labels) {
  std::vector<std::vector<std::string>> groups(num_labels);
  for (std::size_t j = 0; j < num_labels; ++j)
    for (std::size_t t = 0; t < kSynthKeywordsPerLabel; ++t)
      groups[j].push_back("kw" + std::to_string(j) + static_cast<char>('a' + t));
  return groups;
}

inline std::vector<std::string> synth_categories(std::size_t num_labels) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < num_labels; ++j) {
    std::string n = std::to_string(j);
    if (n.size() < 2) n = "0" + n;
    out.push_back("category " + n);
  }
  return out;
}

namespace detail {

struct SynthDoc {
  std::string conclusion;
  Stance stance;
  std::string premise;
  LabelVector y;
};

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace detail

/// Deterministic synthetic corpus in the argument schema. Documents are
/// short filler sentences; positives get keyword tokens inserted (keyword
/// mode) or inherit a family label vector (neighbor-signal carriers).
inline Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.size == 0 || cfg.num_labels == 0 || cfg.vocab_size == 0)
    throw ValueError("synth_dataset: size, num_labels and vocab_size must be positive");
  const std::size_t keyword_count = cfg.num_labels * kSynthKeywordsPerLabel;
  const std::size_t reserved =
      keyword_count + (cfg.mode == SynthMode::neighbor_signal ? kSynthFamilyPool : 0);
  if (cfg.vocab_size < reserved + 20)
    throw ValueError("synth_dataset: vocab_size " + std::to_string(cfg.vocab_size) +
                     " too small; need at least " + std::to_string(reserved + 20));
  const std::size_t filler_count = cfg.vocab_size - reserved;

  Rng rng(mix_seed(cfg.seed, "synth"));
  const auto groups = synth_keyword_groups(cfg.num_labels);

  auto filler = [&](std::size_t i) { return "w" + std::to_string(i); };
  auto family_token = [&](std::size_t i) { return "fam" + std::to_string(i); };

  auto filler_tokens = [&](std::size_t count) {
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < count; ++i) toks.push_back(filler(rng.below(filler_count)));
    return toks;
  };

  auto random_labels = [&](bool require_positive) {
    LabelVector y(cfg.num_labels, 0);
    bool any = false;
    do {
      for (std::size_t j = 0; j < cfg.num_labels; ++j) {
        y[j] = rng.bernoulli(cfg.positive_rate) ? 1 : 0;
        any = any || y[j];
      }
    } while (require_positive && !any);
    return y;
  };

  auto make_keyword_doc = [&]() {
    detail::SynthDoc doc;
    doc.stance = rng.bernoulli(0.5) ? Stance::in_favor_of : Stance::against;
    doc.conclusion = detail::join_tokens(filler_tokens(2 + rng.below(3)));
    doc.y = random_labels(false);
    auto toks = filler_tokens(5 + rng.below(5));
    for (std::size_t j = 0; j < cfg.num_labels; ++j) {
      if (!doc.y[j]) continue;
      const std::size_t copies = 1 + rng.below(2);
      for (std::size_t c = 0; c < copies; ++c) {
        const std::string& kw = groups[j][rng.below(groups[j].size())];
        toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(rng.below(toks.size() + 1)), kw);
      }
    }
    doc.premise = detail::join_tokens(toks);
    return doc;
  };

  std::vector<detail::SynthDoc> docs;
  docs.reserve(cfg.size);

  if (cfg.mode == SynthMode::neighbor_signal) {
    const std::size_t target_carriers =
        static_cast<std::size_t>(kSynthCarrierFraction * static_cast<double>(cfg.size) + 0.5);
    std::size_t carriers = 0;
    while (carriers < target_carriers) {
      // One family: a fixed 5-token signature and a fixed label vector,
      // emitted as 2-4 near-duplicate siblings.
      std::vector<std::string> signature;
      while (signature.size() < 5) {
        std::string t = family_token(rng.below(kSynthFamilyPool));
        bool dup = false;
        for (const auto& s : signature) dup = dup || s == t;
        if (!dup) signature.push_back(t);
      }
      const LabelVector fam_y = random_labels(true);
      const Stance fam_stance = rng.bernoulli(0.5) ? Stance::in_favor_of : Stance::against;
      const std::string fam_conclusion = detail::join_tokens(filler_tokens(2));
      const std::size_t siblings = 2 + rng.below(3);
      for (std::size_t s = 0; s < siblings && carriers < target_carriers; ++s) {
        detail::SynthDoc doc;
        doc.stance = fam_stance;
        doc.conclusion = fam_conclusion;
        doc.y = fam_y;
        auto toks = signature;
        const std::size_t extra = 1 + rng.below(2);
        for (std::size_t e = 0; e < extra; ++e)
          toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(rng.below(toks.size() + 1)),
                      filler(rng.below(filler_count)));
        doc.premise = detail::join_tokens(toks);
        docs.push_back(std::move(doc));
        ++carriers;
      }
    }
    while (docs.size() < cfg.size) docs.push_back(make_keyword_doc());
    rng.shuffle(docs);
  } else {
    for (std::size_t i = 0; i < cfg.size; ++i) docs.push_back(make_keyword_doc());
  }

  Dataset ds;
  ds.categories = synth_categories(cfg.num_labels);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    ArgumentRecord rec;
    std::string n = std::to_string(i);
    while (n.size() < 5) n = "0" + n;
    rec.id = "S" + n;
    rec.conclusion = docs[i].conclusion;
    rec.stance = docs[i].stance;
    rec.premise = docs[i].premise;
    ds.labels.emplace(rec.id, docs[i].y);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

inline Dataset synth_dataset(std::uint64_t seed, std::size_t size, std::size_t num_labels,
                             std::size_t vocab_size) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.size = size;
  cfg.num_labels = num_labels;
  cfg.vocab_size = vocab_size;
  return synth_dataset(cfg);
}

}  // namespace lak
