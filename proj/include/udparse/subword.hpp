// WordPiece-style tokenization, word/subword alignment, and mean pooling
// of subword vectors into word representations.
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/treebank.hpp"

namespace udparse {

struct SubwordVocab {
  std::unordered_set<std::string> entries;
  std::string unk_token = "[UNK]";
  std::string continuation_prefix = "##";
  // Words longer than this (in bytes) map straight to unk_token, bounding
  // the greedy matcher.
  std::size_t max_word_length = 200;

  bool contains(const std::string& piece) const { return entries.count(piece) > 0; }

  static SubwordVocab from_entries(std::vector<std::string> pieces,
                                   std::string unk = "[UNK]") {
    SubwordVocab vocab;
    vocab.unk_token = std::move(unk);
    for (std::string& p : pieces) vocab.entries.insert(std::move(p));
    if (vocab.entries.empty()) throw ParseError("empty subword vocabulary");
    if (!vocab.contains(vocab.unk_token)) {
      throw ParseError("vocabulary does not contain the unknown token \"" +
                       vocab.unk_token + "\"");
    }
    return vocab;
  }

  // One subword per line, UTF-8; the line number is the id.
  static SubwordVocab parse(std::istream& in, std::string unk = "[UNK]") {
    std::vector<std::string> pieces;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      pieces.push_back(line);
    }
    return from_entries(std::move(pieces), std::move(unk));
  }

  static SubwordVocab load(const std::string& path, std::string unk = "[UNK]") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary: " + path);
    return parse(in, std::move(unk));
  }
};

// Greedy longest-match-first segmentation. Non-initial pieces are looked up
// with the continuation prefix. If no piece matches at some position, the
// whole word falls back to [unk_token].
inline std::vector<std::string> wordpiece_tokenize(std::string_view word,
                                                   const SubwordVocab& vocab) {
  if (word.empty()) throw DataError("cannot tokenize an empty word");
  if (word.size() > vocab.max_word_length) return {vocab.unk_token};

  std::vector<std::string> pieces;
  std::size_t pos = 0;
  std::string candidate;
  while (pos < word.size()) {
    bool found = false;
    for (std::size_t len = word.size() - pos; len >= 1; --len) {
      candidate.clear();
      if (pos > 0) candidate = vocab.continuation_prefix;
      candidate.append(word.substr(pos, len));
      if (vocab.contains(candidate)) {
        pieces.push_back(candidate);
        pos += len;
        found = true;
        break;
      }
    }
    if (!found) return {vocab.unk_token};
  }
  return pieces;
}

// Contiguous subword positions of one word, half-open.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

struct SubwordAlignment {
  std::vector<TokenRange> ranges;  // one per word, in order

  std::size_t word_count() const { return ranges.size(); }
  std::size_t subword_count() const { return ranges.empty() ? 0 : ranges.back().end; }
};

struct SubwordSequence {
  std::vector<std::string> pieces;
  SubwordAlignment alignment;
};

// Tokenizes every word of the sentence and records where its pieces sit in
// the concatenated sequence. The result always has at least as many pieces
// as words.
inline SubwordSequence align(const Sentence& sentence, const SubwordVocab& vocab) {
  SubwordSequence out;
  for (const Token& token : sentence.tokens) {
    std::vector<std::string> pieces = wordpiece_tokenize(token.form, vocab);
    std::size_t begin = out.pieces.size();
    for (std::string& p : pieces) out.pieces.push_back(std::move(p));
    out.alignment.ranges.push_back({begin, out.pieces.size()});
  }
  return out;
}

// Row i of the result is the arithmetic mean of the subword vectors in
// word i's range.
inline Eigen::MatrixXd pool_word_vectors(const Eigen::MatrixXd& subword_vectors,
                                         const SubwordAlignment& alignment) {
  const std::size_t m = static_cast<std::size_t>(subword_vectors.rows());
  std::size_t expected = 0;
  for (std::size_t i = 0; i < alignment.ranges.size(); ++i) {
    const TokenRange& r = alignment.ranges[i];
    if (r.begin != expected || r.end <= r.begin) {
      throw DataError("subword alignment ranges are not contiguous");
    }
    expected = r.end;
  }
  if (expected != m) {
    throw DataError("subword alignment covers " + std::to_string(expected) +
                    " rows but the matrix has " + std::to_string(m));
  }
  Eigen::MatrixXd pooled(static_cast<Eigen::Index>(alignment.ranges.size()),
                         subword_vectors.cols());
  for (std::size_t i = 0; i < alignment.ranges.size(); ++i) {
    const TokenRange& r = alignment.ranges[i];
    pooled.row(static_cast<Eigen::Index>(i)) =
        subword_vectors
            .middleRows(static_cast<Eigen::Index>(r.begin),
                        static_cast<Eigen::Index>(r.end - r.begin))
            .colwise()
            .mean();
  }
  return pooled;
}

}  // namespace udparse
