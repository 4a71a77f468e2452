#include <catch2/catch.hpp>
#include <sstream>

#include "support/helpers.hpp"
#include "udparse/subword.hpp"

using namespace udparse;

namespace {

SubwordVocab demo_vocab() {
  return SubwordVocab::from_entries({"un", "##aff", "##able", "the", "[UNK]"});
}

Sentence sentence_of(const std::vector<std::string>& forms) {
  Sentence s;
  for (std::size_t i = 0; i < forms.size(); ++i) {
    Token t;
    t.index = static_cast<int>(i) + 1;
    t.form = forms[i];
    s.tokens.push_back(std::move(t));
  }
  return s;
}

}  // namespace

TEST_CASE("wordpiece_tokenize follows greedy longest-match-first") {
  SubwordVocab vocab = demo_vocab();
  CHECK(wordpiece_tokenize("unaffable", vocab) ==
        std::vector<std::string>{"un", "##aff", "##able"});
  CHECK(wordpiece_tokenize("the", vocab) == std::vector<std::string>{"the"});
  CHECK(wordpiece_tokenize("xyz", vocab) == std::vector<std::string>{"[UNK]"});
}

TEST_CASE("wordpiece_tokenize prefers the longest prefix at each step") {
  SubwordVocab vocab = SubwordVocab::from_entries({"a", "ab", "abc", "##c", "##d", "[UNK]"});
  CHECK(wordpiece_tokenize("abc", vocab) == std::vector<std::string>{"abc"});
  CHECK(wordpiece_tokenize("abcd", vocab) == std::vector<std::string>{"abc", "##d"});
  // No backtracking: once "abc" is consumed, a dead end maps the whole word
  // to the unknown token.
  SubwordVocab no_tail = SubwordVocab::from_entries({"abc", "##x", "[UNK]"});
  CHECK(wordpiece_tokenize("abcd", no_tail) == std::vector<std::string>{"[UNK]"});
}

TEST_CASE("wordpiece_tokenize maps overlong words to the unknown token") {
  SubwordVocab vocab = demo_vocab();
  vocab.max_word_length = 8;
  CHECK(wordpiece_tokenize("unaffable", vocab) == std::vector<std::string>{"[UNK]"});
  CHECK_THROWS_AS(wordpiece_tokenize("", vocab), DataError);
}

TEST_CASE("align concatenates per-word pieces and records ranges") {
  SubwordVocab vocab = demo_vocab();
  SubwordSequence seq = align(sentence_of({"the", "unaffable"}), vocab);
  CHECK(seq.pieces == std::vector<std::string>{"the", "un", "##aff", "##able"});
  REQUIRE(seq.alignment.ranges.size() == 2);
  CHECK(seq.alignment.ranges[0] == TokenRange{0, 1});
  CHECK(seq.alignment.ranges[1] == TokenRange{1, 4});
  CHECK(seq.alignment.subword_count() == 4);

  SubwordSequence both_known = align(sentence_of({"the", "the"}), vocab);
  CHECK(both_known.pieces.size() == 2);
  CHECK(both_known.alignment.ranges ==
        std::vector<TokenRange>{TokenRange{0, 1}, TokenRange{1, 2}});

  SubwordSequence single = align(sentence_of({"unaffable"}), vocab);
  REQUIRE(single.alignment.ranges.size() == 1);
  CHECK(single.alignment.ranges[0] == TokenRange{0, 3});
}

TEST_CASE("align reproduces per-word tokenization for random sentences") {
  SubwordVocab vocab = SubwordVocab::from_entries(
      {"a", "b", "ab", "##a", "##b", "##ab", "[UNK]"});
  SplitMix64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> forms;
    const int n = 1 + static_cast<int>(rng.next_below(6));
    for (int i = 0; i < n; ++i) {
      std::string form;
      const int len = 1 + static_cast<int>(rng.next_below(4));
      for (int k = 0; k < len; ++k) form += rng.next_below(2) ? 'a' : 'b';
      forms.push_back(form);
    }
    SubwordSequence seq = align(sentence_of(forms), vocab);
    std::vector<std::string> concatenated;
    std::size_t single_piece_words = 0;
    for (const std::string& form : forms) {
      std::vector<std::string> pieces = wordpiece_tokenize(form, vocab);
      if (pieces.size() == 1) ++single_piece_words;
      for (std::string& p : pieces) concatenated.push_back(std::move(p));
    }
    CHECK(seq.pieces == concatenated);
    CHECK(seq.pieces.size() >= forms.size());
    CHECK((seq.pieces.size() == forms.size()) == (single_piece_words == forms.size()));
  }
}

TEST_CASE("pool_word_vectors averages each range") {
  SubwordAlignment alignment;
  alignment.ranges = {{0, 1}, {1, 3}};
  Eigen::MatrixXd vectors(3, 1);
  vectors << 7.0, 1.0, 3.0;
  Eigen::MatrixXd pooled = pool_word_vectors(vectors, alignment);
  REQUIRE(pooled.rows() == 2);
  CHECK(pooled(0, 0) == 7.0);
  CHECK(pooled(1, 0) == 2.0);
}

TEST_CASE("pool_word_vectors matches per-range brute force on a random case") {
  SplitMix64 rng(123);
  SubwordAlignment alignment;
  alignment.ranges = {{0, 2}, {2, 3}, {3, 5}};
  Eigen::MatrixXd vectors = testsupport::random_matrix(5, 4, rng);
  Eigen::MatrixXd pooled = pool_word_vectors(vectors, alignment);
  for (std::size_t w = 0; w < alignment.ranges.size(); ++w) {
    for (int d = 0; d < 4; ++d) {
      double sum = 0.0;
      for (std::size_t r = alignment.ranges[w].begin; r < alignment.ranges[w].end; ++r) {
        sum += vectors(static_cast<Eigen::Index>(r), d);
      }
      const double mean = sum / static_cast<double>(alignment.ranges[w].end -
                                                    alignment.ranges[w].begin);
      CHECK(pooled(static_cast<Eigen::Index>(w), d) == Approx(mean).epsilon(1e-13));
    }
  }
}

TEST_CASE("pooling is permutation-equivariant over words") {
  SplitMix64 rng(5150);
  // Three words with piece counts 2, 1, 3.
  std::vector<std::size_t> sizes = {2, 1, 3};
  Eigen::MatrixXd vectors = testsupport::random_matrix(6, 3, rng);
  SubwordAlignment alignment;
  std::size_t at = 0;
  for (std::size_t s : sizes) {
    alignment.ranges.push_back({at, at + s});
    at += s;
  }
  Eigen::MatrixXd base = pool_word_vectors(vectors, alignment);

  const std::vector<std::size_t> perm = {2, 0, 1};  // new order of old words
  SubwordAlignment permuted_alignment;
  Eigen::MatrixXd permuted_vectors(vectors.rows(), vectors.cols());
  std::size_t row = 0;
  for (std::size_t w : perm) {
    const TokenRange& r = alignment.ranges[w];
    permuted_alignment.ranges.push_back({row, row + (r.end - r.begin)});
    for (std::size_t k = r.begin; k < r.end; ++k) {
      permuted_vectors.row(static_cast<Eigen::Index>(row++)) =
          vectors.row(static_cast<Eigen::Index>(k));
    }
  }
  Eigen::MatrixXd permuted = pool_word_vectors(permuted_vectors, permuted_alignment);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK((permuted.row(static_cast<Eigen::Index>(i)) -
           base.row(static_cast<Eigen::Index>(perm[i])))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("pool_word_vectors rejects mismatched shapes") {
  SubwordAlignment alignment;
  alignment.ranges = {{0, 2}};
  CHECK_THROWS_AS(pool_word_vectors(Eigen::MatrixXd::Zero(3, 2), alignment), DataError);
  alignment.ranges = {{0, 2}, {3, 4}};  // gap
  CHECK_THROWS_AS(pool_word_vectors(Eigen::MatrixXd::Zero(4, 2), alignment), DataError);
}

TEST_CASE("vocabulary loading validates the unknown token") {
  std::istringstream good("the\n##s\n[UNK]\n");
  SubwordVocab vocab = SubwordVocab::parse(good);
  CHECK(vocab.contains("the"));
  CHECK(vocab.contains("[UNK]"));

  std::istringstream missing_unk("the\n##s\n");
  CHECK_THROWS_AS(SubwordVocab::parse(missing_unk), ParseError);
  std::istringstream empty("");
  CHECK_THROWS_AS(SubwordVocab::parse(empty), ParseError);
}
