#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "lak/dataset.hpp"
#include "support/tempdir.hpp"

using namespace lak;
using namespace lak::testing;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

Dataset sample_dataset() {
  Dataset ds;
  ds.categories = {"cat a", "cat b", "cat c"};
  for (int i = 0; i < 8; ++i) {
    ArgumentRecord r;
    r.id = "A" + std::to_string(i);
    r.conclusion = "conclusion " + std::to_string(i);
    r.stance = i % 2 ? Stance::against : Stance::in_favor_of;
    r.premise = "premise " + std::to_string(i);
    ds.labels.emplace(r.id, LabelVector{static_cast<std::uint8_t>(i % 2),
                                        static_cast<std::uint8_t>((i / 2) % 2), 0});
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace

TEST_CASE("argument rows map directly onto records", "[dataset]") {
  TempDir tmp;
  const std::string path = tmp.str("args.tsv");
  write_file(path,
             "Argument ID\tConclusion\tStance\tPremise\n"
             "A01\tWe should ban X\tin favor of\tX is harmful\n"
             "A02\tWe should allow Y\tagainst\tY is fine\n");
  const Dataset ds = parse_arguments_tsv(path);
  REQUIRE(ds.size() == 2);
  CHECK(ds.records[0].id == "A01");
  CHECK(ds.records[0].conclusion == "We should ban X");
  CHECK(ds.records[0].stance == Stance::in_favor_of);
  CHECK(ds.records[0].premise == "X is harmful");
  CHECK(ds.records[1].stance == Stance::against);
}

TEST_CASE("argument parsing accepts permuted columns and rejects damage", "[dataset]") {
  TempDir tmp;
  SECTION("header-only file yields zero records") {
    write_file(tmp.str("a.tsv"), "Argument ID\tConclusion\tStance\tPremise\n");
    CHECK(parse_arguments_tsv(tmp.str("a.tsv")).size() == 0);
  }
  SECTION("column order is located by name") {
    write_file(tmp.str("a.tsv"),
               "Premise\tArgument ID\tStance\tConclusion\np text\tA1\tagainst\tc text\n");
    const Dataset ds = parse_arguments_tsv(tmp.str("a.tsv"));
    CHECK(ds.records[0].id == "A1");
    CHECK(ds.records[0].premise == "p text");
  }
  SECTION("unknown stance names its row") {
    write_file(tmp.str("a.tsv"),
               "Argument ID\tConclusion\tStance\tPremise\nA1\tc\tmaybe\tp\n");
    CHECK_THROWS_WITH(parse_arguments_tsv(tmp.str("a.tsv")),
                      Catch::Matchers::ContainsSubstring("row 2") &&
                          Catch::Matchers::ContainsSubstring("maybe"));
  }
  SECTION("stance strings are trimmed and case-insensitive") {
    write_file(tmp.str("a.tsv"),
               "Argument ID\tConclusion\tStance\tPremise\nA1\tc\t In Favor Of \tp\n");
    CHECK(parse_arguments_tsv(tmp.str("a.tsv")).records[0].stance == Stance::in_favor_of);
  }
  SECTION("missing column is a schema error naming it") {
    write_file(tmp.str("a.tsv"), "Argument ID\tConclusion\tPremise\n");
    CHECK_THROWS_WITH(parse_arguments_tsv(tmp.str("a.tsv")),
                      Catch::Matchers::ContainsSubstring("Stance"));
  }
  SECTION("duplicate ids are rejected with the row number") {
    write_file(tmp.str("a.tsv"),
               "Argument ID\tConclusion\tStance\tPremise\nA1\tc\tagainst\tp\nA1\tc\tagainst\tp\n");
    CHECK_THROWS_WITH(parse_arguments_tsv(tmp.str("a.tsv")),
                      Catch::Matchers::ContainsSubstring("row 3"));
  }
  SECTION("missing file is an I/O error") {
    CHECK_THROWS_AS(parse_arguments_tsv(tmp.str("absent.tsv")), IoError);
  }
}

TEST_CASE("label rows canonicalize category order", "[dataset]") {
  TempDir tmp;
  const std::vector<std::string> categories = {"cat a", "cat b", "cat c"};
  SECTION("all-zero label vectors are legal") {
    write_file(tmp.str("l.tsv"), "Argument ID\tcat a\tcat b\tcat c\nA1\t0\t0\t0\n");
    const auto labels = parse_labels_tsv(tmp.str("l.tsv"), categories);
    CHECK(labels.at("A1") == LabelVector{0, 0, 0});
  }
  SECTION("permuted file columns produce identical vectors") {
    write_file(tmp.str("l1.tsv"), "Argument ID\tcat a\tcat b\tcat c\nA1\t1\t0\t1\n");
    write_file(tmp.str("l2.tsv"), "Argument ID\tcat c\tcat a\tcat b\nA1\t1\t1\t0\n");
    CHECK(parse_labels_tsv(tmp.str("l1.tsv"), categories) ==
          parse_labels_tsv(tmp.str("l2.tsv"), categories));
  }
  SECTION("cells outside 0/1 are value errors") {
    write_file(tmp.str("l.tsv"), "Argument ID\tcat a\tcat b\tcat c\nA1\t0\t2\t0\n");
    CHECK_THROWS_WITH(parse_labels_tsv(tmp.str("l.tsv"), categories),
                      Catch::Matchers::ContainsSubstring("'2'"));
  }
  SECTION("missing category column is a schema error") {
    write_file(tmp.str("l.tsv"), "Argument ID\tcat a\tcat b\nA1\t0\t1\n");
    CHECK_THROWS_WITH(parse_labels_tsv(tmp.str("l.tsv"), categories),
                      Catch::Matchers::ContainsSubstring("cat c"));
  }
  SECTION("header establishes the canonical order") {
    write_file(tmp.str("l.tsv"), "Argument ID\tz last\ta first\n");
    CHECK(read_label_header(tmp.str("l.tsv")) == std::vector<std::string>{"z last", "a first"});
  }
}

TEST_CASE("TSV writers and parsers round trip", "[dataset]") {
  TempDir tmp;
  const Dataset ds = sample_dataset();
  write_arguments_tsv(ds, tmp.str("args.tsv"));
  write_labels_tsv(ds, tmp.str("labels.tsv"));
  const Dataset back = load_dataset(tmp.str("args.tsv"), tmp.str("labels.tsv"));
  CHECK(back.records == ds.records);
  CHECK(back.categories == ds.categories);
  CHECK(back.labels == ds.labels);
}

TEST_CASE("template rendering follows the agree/disagree pattern", "[dataset]") {
  ArgumentRecord r;
  r.id = "A1";
  r.conclusion = "We should ban X";
  r.premise = "X is harmful";
  r.stance = Stance::in_favor_of;
  CHECK(render_template(r) == "I agree that We should ban X, because X is harmful");
  r.stance = Stance::against;
  r.conclusion = "C";
  r.premise = "P";
  CHECK(render_template(r) == "I disagree that C, because P");
  r.conclusion = "";
  CHECK_THROWS_AS(render_template(r), ValueError);
  r.conclusion = "C";
  r.premise = "";
  CHECK_THROWS_AS(render_template(r), ValueError);
}

TEST_CASE("fold splits partition the labeled records", "[dataset]") {
  const Dataset ds = sample_dataset();
  SECTION("as many folds as records gives singleton holdouts") {
    const auto splits = kfold_split(ds, 8, 3);
    REQUIRE(splits.size() == 8);
    for (const auto& s : splits) {
      CHECK(s.holdout.size() == 1);
      CHECK(s.train.size() == 7);
    }
  }
  SECTION("identical seeds give identical splits") {
    const auto a = kfold_split(ds, 3, 11);
    const auto b = kfold_split(ds, 3, 11);
    REQUIRE(a.size() == b.size());
    for (std::size_t f = 0; f < a.size(); ++f) {
      CHECK(a[f].train.records == b[f].train.records);
      CHECK(a[f].holdout.records == b[f].holdout.records);
    }
    const auto c = kfold_split(ds, 3, 12);
    bool differs = false;
    for (std::size_t f = 0; f < a.size(); ++f)
      differs = differs || !(a[f].holdout.records == c[f].holdout.records);
    CHECK(differs);
  }
  SECTION("holdouts are disjoint and cover everything exactly once") {
    const auto splits = kfold_split(ds, 3, 5);
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& s : splits) {
      for (const auto& r : s.holdout.records) {
        CHECK(seen.insert(r.id).second);
        CHECK(!s.train.labeled(r.id));
        ++total;
      }
      CHECK(s.train.size() + s.holdout.size() == ds.size());
    }
    CHECK(total == ds.size());
  }
  SECTION("more folds than records is a value error") {
    CHECK_THROWS_AS(kfold_split(ds, 9, 1), ValueError);
    CHECK_THROWS_AS(kfold_split(ds, 1, 1), ValueError);
  }
  SECTION("unlabeled records never enter a split") {
    Dataset partial = sample_dataset();
    partial.labels.erase("A3");
    const auto splits = kfold_split(partial, 2, 1);
    for (const auto& s : splits) {
      CHECK(!s.train.labeled("A3"));
      CHECK(!s.holdout.labeled("A3"));
      CHECK(s.train.size() + s.holdout.size() == 7);
    }
  }
}

TEST_CASE("dataset merging preserves labels and rejects duplicates", "[dataset]") {
  Dataset a = sample_dataset();
  Dataset b;
  b.categories = a.categories;
  ArgumentRecord r;
  r.id = "B0";
  r.conclusion = "c";
  r.premise = "p";
  b.records.push_back(r);
  b.labels.emplace("B0", LabelVector{1, 1, 1});

  const Dataset merged = merge_datasets({a, b});
  CHECK(merged.size() == 9);
  CHECK(merged.label_of("B0") == LabelVector{1, 1, 1});
  CHECK_THROWS_AS(merge_datasets({a, a}), ValueError);

  Dataset c;
  c.categories = {"other"};
  c.records.push_back(r);
  CHECK_THROWS_AS(merge_datasets({a, c}), CompatError);
}
