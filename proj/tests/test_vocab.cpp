#include <catch2/catch_amalgamated.hpp>

#include "lak/vocab.hpp"
#include "support/tempdir.hpp"

using namespace lak;
using namespace lak::testing;

TEST_CASE("tokenizer lowercases and splits punctuation", "[vocab]") {
  const auto toks = tokenize("I agree that X, because Y");
  const std::vector<std::string> expected = {"i", "agree", "that", "x", ",", "because", "y"};
  CHECK(toks == expected);

  CHECK(tokenize("A--b c!") == std::vector<std::string>{"a", "-", "-", "b", "c", "!"});
  CHECK(tokenize("  spaced   out  ") == std::vector<std::string>{"spaced", "out"});
  CHECK(tokenize("Hello") == tokenize("hello"));
  CHECK(tokenize("same text") == tokenize("same text"));  // deterministic
  CHECK_THROWS_AS(tokenize(""), ValueError);
}

TEST_CASE("vocabulary reserves padding and unknown", "[vocab]") {
  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
  CHECK(v.id("anything") == Vocabulary::kUnk);
  CHECK_THROWS_AS(Vocabulary({"<unk>", "<pad>"}), ValueError);
  CHECK_THROWS_AS(Vocabulary({"<pad>"}), ValueError);
}

TEST_CASE("vocabulary build orders by frequency then lexicographically", "[vocab]") {
  const std::vector<std::vector<std::string>> corpus = {
      {"apple", "banana", "apple"}, {"cherry", "banana", "apple"}, {"banana"}};
  // counts: apple=3, banana=3, cherry=1
  const Vocabulary v = Vocabulary::build(corpus, 100);
  CHECK(v.size() == 5);
  CHECK(v.id("apple") == 2);   // tie with banana broken lexicographically
  CHECK(v.id("banana") == 3);
  CHECK(v.id("cherry") == 4);

  const Vocabulary capped = Vocabulary::build(corpus, 4);
  CHECK(capped.size() == 4);
  CHECK(capped.id("cherry") == Vocabulary::kUnk);  // dropped by the cap
  CHECK(capped.id("apple") == 2);

  CHECK_THROWS_AS(Vocabulary::build(corpus, 2), ValueError);
}

TEST_CASE("encoding maps unknown tokens to the unknown id", "[vocab]") {
  const Vocabulary v = Vocabulary::build({{"known"}}, 10);
  const auto ids = v.encode({"known", "mystery", "known"});
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == v.id("known"));
  CHECK(ids[1] == Vocabulary::kUnk);
  CHECK(ids[2] == ids[0]);
}

TEST_CASE("vocabulary files round trip one token per line", "[vocab]") {
  TempDir tmp;
  const Vocabulary v = Vocabulary::build({{"alpha", "beta", "alpha"}, {"gamma"}}, 100);
  const std::string path = tmp.str("vocab.txt");
  v.save(path);
  const Vocabulary back = Vocabulary::load(path);
  CHECK(back.tokens() == v.tokens());
  CHECK(back.id("alpha") == v.id("alpha"));
  CHECK_THROWS_AS(Vocabulary::load(tmp.str("missing.txt")), IoError);
}
