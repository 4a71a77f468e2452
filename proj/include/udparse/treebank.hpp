// CoNLL-U reading and writing, the dependency-tree data model, and
// structural validation.
//
// Multiword-token ranges and empty nodes are kept verbatim and reproduced
// on output, but they are invisible to scoring, decoding and evaluation:
// only syntactic word rows enter `Sentence::tokens`.
#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/util.hpp"

namespace udparse {

inline constexpr int kNoHead = -1;

// Byte offsets into Sentence::raw_text, half-open.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

// One syntactic word row. Column text is stored verbatim except ID and
// HEAD, which are numeric.
struct Token {
  int index = 0;  // 1-based position
  std::string form;
  std::string lemma = "_";
  std::string upos = "_";
  std::string xpos = "_";
  std::string feats = "_";
  int head = kNoHead;  // 0 = ROOT; kNoHead when the column was "_"
  std::string deprel = "_";
  std::string deps = "_";
  std::string misc = "_";
  std::optional<CharSpan> span;

  bool has_head() const { return head != kNoHead; }
};

// A multiword-token or empty-node row, kept as raw text. `after_word` is
// the number of word rows that precede it inside the sentence block.
struct PassthroughRow {
  std::size_t after_word = 0;
  std::string line;
};

struct Sentence {
  std::string sent_id;
  std::vector<std::string> comments;  // full lines, including leading '#'
  std::vector<Token> tokens;
  std::vector<PassthroughRow> passthrough;
  std::optional<std::string> raw_text;  // from "# text = ..."

  std::size_t size() const { return tokens.size(); }
};

namespace detail {

inline bool is_all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

// "# sent_id = x" / "# text = x" metadata values.
inline std::optional<std::string> comment_value(std::string_view line,
                                                std::string_view key) {
  std::string_view body = line;
  if (body.empty() || body.front() != '#') return std::nullopt;
  body.remove_prefix(1);
  body = trim(body);
  if (body.substr(0, key.size()) != key) return std::nullopt;
  body.remove_prefix(key.size());
  body = trim(body);
  if (body.empty() || body.front() != '=') return std::nullopt;
  body.remove_prefix(1);
  if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
  return std::string(body);
}

}  // namespace detail

// Parses CoNLL-U text: one Sentence per blank-line-delimited block, comment
// lines captured as metadata, multiword tokens and empty nodes preserved
// but not scored. Throws ParseError (with the offending line number) on a
// malformed ID column, a wrong column count, or a non-integer HEAD on a
// word row ("_" is accepted as "not annotated").
inline std::vector<Sentence> parse_conllu(std::istream& in) {
  std::vector<Sentence> sentences;
  Sentence current;
  bool in_block = false;
  std::string line;
  std::size_t lineno = 0;

  auto flush = [&] {
    if (!in_block) return;
    sentences.push_back(std::move(current));
    current = Sentence{};
    in_block = false;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') {
      in_block = true;
      if (auto v = detail::comment_value(line, "sent_id")) current.sent_id = *v;
      if (auto v = detail::comment_value(line, "text")) current.raw_text = *v;
      current.comments.push_back(line);
      continue;
    }
    in_block = true;
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 10) {
      throw ParseError(lineno, "expected 10 tab-separated columns, got " +
                                   std::to_string(cols.size()));
    }
    const std::string& id = cols[0];
    auto dash = id.find('-');
    auto dot = id.find('.');
    if (dash != std::string::npos) {
      std::string_view lo = std::string_view(id).substr(0, dash);
      std::string_view hi = std::string_view(id).substr(dash + 1);
      if (!detail::is_all_digits(lo) || !detail::is_all_digits(hi)) {
        throw ParseError(lineno, "malformed multiword token id \"" + id + "\"");
      }
      if (parse_integer(lo, lineno) > parse_integer(hi, lineno)) {
        throw ParseError(lineno, "backwards multiword token range \"" + id + "\"");
      }
      current.passthrough.push_back({current.tokens.size(), line});
      continue;
    }
    if (dot != std::string::npos) {
      std::string_view lo = std::string_view(id).substr(0, dot);
      std::string_view sub = std::string_view(id).substr(dot + 1);
      if (!detail::is_all_digits(lo) || !detail::is_all_digits(sub)) {
        throw ParseError(lineno, "malformed empty node id \"" + id + "\"");
      }
      current.passthrough.push_back({current.tokens.size(), line});
      continue;
    }
    if (!detail::is_all_digits(id)) {
      throw ParseError(lineno, "malformed token id \"" + id + "\"");
    }
    Token tok;
    tok.index = static_cast<int>(parse_integer(id, lineno));
    if (tok.index != static_cast<int>(current.tokens.size()) + 1) {
      throw ParseError(lineno, "token id " + id + " out of sequence (expected " +
                                   std::to_string(current.tokens.size() + 1) + ")");
    }
    tok.form = cols[1];
    tok.lemma = cols[2];
    tok.upos = cols[3];
    tok.xpos = cols[4];
    tok.feats = cols[5];
    const std::string& head = cols[6];
    if (head == "_") {
      tok.head = kNoHead;
    } else if (detail::is_all_digits(head)) {
      const long long value = parse_integer(head, lineno);
      if (value > 100000000) {
        throw ParseError(lineno, "HEAD value \"" + head + "\" is out of range");
      }
      tok.head = static_cast<int>(value);
    } else {
      throw ParseError(lineno, "HEAD must be an integer or \"_\", got \"" + head + "\"");
    }
    tok.deprel = cols[7];
    tok.deps = cols[8];
    tok.misc = cols[9];
    current.tokens.push_back(std::move(tok));
  }
  flush();
  return sentences;
}

inline std::vector<Sentence> parse_conllu(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_conllu(in);
}

inline std::vector<Sentence> load_conllu_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return parse_conllu(in);
}

inline void write_conllu(std::ostream& out, const Sentence& sentence) {
  for (const std::string& c : sentence.comments) out << c << '\n';
  std::size_t next_extra = 0;
  for (std::size_t word = 0; word <= sentence.tokens.size(); ++word) {
    while (next_extra < sentence.passthrough.size() &&
           sentence.passthrough[next_extra].after_word == word) {
      out << sentence.passthrough[next_extra].line << '\n';
      ++next_extra;
    }
    if (word == sentence.tokens.size()) break;
    const Token& t = sentence.tokens[word];
    out << t.index << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos
        << '\t' << t.xpos << '\t' << t.feats << '\t';
    if (t.has_head()) {
      out << t.head;
    } else {
      out << '_';
    }
    out << '\t' << t.deprel << '\t' << t.deps << '\t' << t.misc << '\n';
  }
}

// Blocks are separated by exactly one blank line; the stream ends with one.
inline void write_conllu(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const Sentence& s : sentences) {
    write_conllu(out, s);
    out << '\n';
  }
}

inline std::string write_conllu(const std::vector<Sentence>& sentences) {
  std::ostringstream out;
  write_conllu(out, sentences);
  return out.str();
}

// Structural validation of a head assignment. heads[i] is the head of
// token i+1; 0 means ROOT. Returns human-readable violations; an empty
// list means the assignment is a valid tree (single-rootedness enforced
// only when requested).
inline std::vector<std::string> validate_heads(const std::vector<int>& heads,
                                               bool single_root) {
  std::vector<std::string> violations;
  const int n = static_cast<int>(heads.size());
  std::vector<bool> usable(static_cast<std::size_t>(n) + 1, false);
  for (int i = 0; i < n; ++i) {
    const int h = heads[static_cast<std::size_t>(i)];
    if (h == kNoHead) {
      violations.push_back("token " + std::to_string(i + 1) + " has no head");
    } else if (h < 0 || h > n) {
      violations.push_back("token " + std::to_string(i + 1) + " head " +
                           std::to_string(h) + " out of range");
    } else if (h == i + 1) {
      violations.push_back("cycle {" + std::to_string(i + 1) + "}");
    } else {
      usable[static_cast<std::size_t>(i) + 1] = true;
    }
  }

  // Reachability from ROOT over the usable arcs.
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n) + 1);
  int root_children = 0;
  for (int i = 0; i < n; ++i) {
    if (!usable[static_cast<std::size_t>(i) + 1]) continue;
    children[static_cast<std::size_t>(heads[static_cast<std::size_t>(i)])].push_back(i + 1);
    if (heads[static_cast<std::size_t>(i)] == 0) ++root_children;
  }
  std::vector<bool> reached(static_cast<std::size_t>(n) + 1, false);
  std::vector<int> stack{0};
  reached[0] = true;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int c : children[static_cast<std::size_t>(v)]) {
      if (!reached[static_cast<std::size_t>(c)]) {
        reached[static_cast<std::size_t>(c)] = true;
        stack.push_back(c);
      }
    }
  }

  // Unreached tokens with usable heads sit on (or hang off) a cycle; walk
  // parents to find each cycle once.
  std::vector<bool> reported(static_cast<std::size_t>(n) + 1, false);
  for (int i = 1; i <= n; ++i) {
    if (reached[static_cast<std::size_t>(i)] || !usable[static_cast<std::size_t>(i)] ||
        reported[static_cast<std::size_t>(i)]) {
      continue;
    }
    // Find the cycle this token leads into.
    std::vector<int> seen_order;
    std::vector<int> state(static_cast<std::size_t>(n) + 1, 0);
    int v = i;
    while (v != 0 && usable[static_cast<std::size_t>(v)] && state[static_cast<std::size_t>(v)] == 0) {
      state[static_cast<std::size_t>(v)] = 1;
      seen_order.push_back(v);
      v = heads[static_cast<std::size_t>(v) - 1];
    }
    if (v != 0 && usable[static_cast<std::size_t>(v)] && state[static_cast<std::size_t>(v)] == 1) {
      std::vector<int> cycle;
      bool collecting = false;
      for (int u : seen_order) {
        if (u == v) collecting = true;
        if (collecting) cycle.push_back(u);
      }
      std::sort(cycle.begin(), cycle.end());
      bool fresh = false;
      for (int u : cycle) {
        if (!reported[static_cast<std::size_t>(u)]) fresh = true;
        reported[static_cast<std::size_t>(u)] = true;
      }
      if (fresh) {
        std::string msg = "cycle {";
        for (std::size_t k = 0; k < cycle.size(); ++k) {
          if (k) msg += ',';
          msg += std::to_string(cycle[k]);
        }
        msg += '}';
        violations.push_back(msg);
      }
    }
  }

  if (single_root && n >= 1 && root_children != 1) {
    violations.push_back(std::to_string(root_children) + " root children");
  }
  return violations;
}

inline std::vector<std::string> validate_tree(const Sentence& sentence,
                                              bool single_root) {
  std::vector<int> heads;
  heads.reserve(sentence.tokens.size());
  for (const Token& t : sentence.tokens) heads.push_back(t.head);
  return validate_heads(heads, single_root);
}

inline std::vector<int> gold_heads(const Sentence& sentence) {
  std::vector<int> heads;
  heads.reserve(sentence.tokens.size());
  for (const Token& t : sentence.tokens) {
    if (!t.has_head()) {
      throw DataError("sentence \"" + sentence.sent_id + "\": token " +
                      std::to_string(t.index) + " has no head annotation");
    }
    heads.push_back(t.head);
  }
  return heads;
}

// Recovers character offsets by matching token forms left to right against
// raw_text, skipping whitespace between them. Words covered by a multiword
// token all receive the span of its surface form. Returns false (leaving
// all spans unset) when the text cannot be matched.
inline bool assign_char_spans(Sentence& sentence) {
  if (!sentence.raw_text) return false;
  const std::string& text = *sentence.raw_text;

  // Multiword coverage: token index -> (surface, last covered index).
  struct Mwt {
    std::string surface;
    int last = 0;
  };
  std::vector<std::optional<Mwt>> mwt_at(sentence.tokens.size() + 2);
  for (const PassthroughRow& row : sentence.passthrough) {
    std::vector<std::string> cols = split(row.line, '\t');
    if (cols.size() != 10) continue;
    auto dash = cols[0].find('-');
    if (dash == std::string::npos) continue;  // empty nodes have no surface
    int lo = static_cast<int>(parse_integer(std::string_view(cols[0]).substr(0, dash)));
    int hi = static_cast<int>(parse_integer(std::string_view(cols[0]).substr(dash + 1)));
    if (lo >= 1 && static_cast<std::size_t>(lo) < mwt_at.size()) {
      mwt_at[static_cast<std::size_t>(lo)] = Mwt{cols[1], hi};
    }
  }

  auto skip_blank = [&](std::size_t pos) {
    while (pos < text.size() &&
           (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n')) {
      ++pos;
    }
    return pos;
  };

  std::vector<std::optional<CharSpan>> spans(sentence.tokens.size());
  std::size_t cursor = 0;
  std::size_t i = 0;
  while (i < sentence.tokens.size()) {
    const int index = sentence.tokens[i].index;
    const std::string* surface = &sentence.tokens[i].form;
    int last = index;
    if (mwt_at[static_cast<std::size_t>(index)]) {
      surface = &mwt_at[static_cast<std::size_t>(index)]->surface;
      last = mwt_at[static_cast<std::size_t>(index)]->last;
    }
    cursor = skip_blank(cursor);
    if (surface->empty() || text.compare(cursor, surface->size(), *surface) != 0) {
      return false;
    }
    CharSpan span{cursor, cursor + surface->size()};
    cursor = span.end;
    while (i < sentence.tokens.size() && sentence.tokens[i].index <= last) {
      spans[i] = span;
      ++i;
    }
  }
  for (std::size_t k = 0; k < spans.size(); ++k) sentence.tokens[k].span = spans[k];
  return true;
}

// Total number of syntactic words in a corpus.
inline std::size_t word_count(const std::vector<Sentence>& corpus) {
  std::size_t n = 0;
  for (const Sentence& s : corpus) n += s.tokens.size();
  return n;
}

// Gives every sentence without a sent_id a positional one ("s1", "s2", ...).
inline void ensure_sent_ids(std::vector<Sentence>& corpus) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].sent_id.empty()) corpus[i].sent_id = "s" + std::to_string(i + 1);
  }
}

}  // namespace udparse
