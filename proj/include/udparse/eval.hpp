// LAS/UAS computation in two modes, following the CoNLL 2018 shared-task
// semantics: gold-tokenization accuracy, and raw-text evaluation where
// gold and system tokens are first aligned by character spans and
// precision/recall/F1 are reported over the aligned pairs. All tokens
// count; the relation subtype after ":" is ignored when comparing labels.
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/treebank.hpp"
#include "udparse/util.hpp"

namespace udparse {

enum class EvalMode { gold, raw };

struct Metrics {
  double uas_precision = 0.0, uas_recall = 0.0, uas_f1 = 0.0;
  double las_precision = 0.0, las_recall = 0.0, las_f1 = 0.0;
  long aligned_count = 0, gold_count = 0, system_count = 0;
};

namespace detail {

inline std::string_view universal_relation(std::string_view deprel) {
  auto colon = deprel.find(':');
  return colon == std::string_view::npos ? deprel : deprel.substr(0, colon);
}

struct EvalCounts {
  long gold = 0, system = 0, aligned = 0;
  long uas_correct = 0, las_correct = 0;

  EvalCounts& operator+=(const EvalCounts& other) {
    gold += other.gold;
    system += other.system;
    aligned += other.aligned;
    uas_correct += other.uas_correct;
    las_correct += other.las_correct;
    return *this;
  }
};

inline double percent(long num, long den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

inline double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace detail

// Pairs of (gold token index, system token index) whose character spans
// coincide. Tokens sharing a span (words under one multiword token) are
// distinguished by their occurrence order within it, so identical
// segmentations align fully while merged or resegmented tokens drop out.
inline std::vector<std::pair<int, int>> align_tokens(const Sentence& gold,
                                                     const Sentence& system) {
  using Key = std::tuple<std::size_t, std::size_t, int>;
  auto keys_of = [](const Sentence& s) {
    std::map<std::pair<std::size_t, std::size_t>, int> seen;
    std::map<Key, int> keys;
    for (const Token& t : s.tokens) {
      if (!t.span) {
        throw DataError(
            "token \"" + t.form +
            "\" has no character offsets; raw-mode alignment needs them "
            "(use gold mode for pre-tokenized data)");
      }
      const int occurrence = seen[{t.span->begin, t.span->end}]++;
      keys[{t.span->begin, t.span->end, occurrence}] = t.index;
    }
    return keys;
  };
  std::map<Key, int> gold_keys = keys_of(gold);
  std::map<Key, int> system_keys = keys_of(system);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [key, gold_index] : gold_keys) {
    auto it = system_keys.find(key);
    if (it != system_keys.end()) pairs.emplace_back(gold_index, it->second);
  }
  return pairs;
}

namespace detail {

inline EvalCounts score_sentence_gold(const Sentence& gold, const Sentence& system) {
  if (gold.size() != system.size()) {
    throw DataError("sentence \"" + gold.sent_id + "\": gold has " +
                    std::to_string(gold.size()) + " tokens, system has " +
                    std::to_string(system.size()) + " (gold mode requires equal counts)");
  }
  EvalCounts counts;
  counts.gold = counts.system = counts.aligned = static_cast<long>(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Token& g = gold.tokens[i];
    const Token& s = system.tokens[i];
    if (!g.has_head() || !s.has_head()) {
      throw DataError("sentence \"" + gold.sent_id + "\": token " +
                      std::to_string(i + 1) + " lacks a head annotation");
    }
    if (s.head == g.head) {
      ++counts.uas_correct;
      if (universal_relation(s.deprel) == universal_relation(g.deprel)) {
        ++counts.las_correct;
      }
    }
  }
  return counts;
}

inline EvalCounts score_sentence_raw(Sentence gold, Sentence system) {
  auto need_spans = [](Sentence& s) {
    bool have = !s.tokens.empty();
    for (const Token& t : s.tokens) {
      if (!t.span) have = false;
    }
    if (!have && !assign_char_spans(s)) {
      throw DataError("sentence \"" + s.sent_id +
                      "\" has no recoverable character offsets; use gold mode");
    }
  };
  need_spans(gold);
  need_spans(system);
  if (gold.raw_text && system.raw_text && *gold.raw_text != *system.raw_text) {
    throw DataError("sentence \"" + gold.sent_id +
                    "\": gold and system raw text differ");
  }

  std::vector<std::pair<int, int>> pairs = align_tokens(gold, system);
  std::vector<int> gold_to_system(gold.size() + 1, -1);
  gold_to_system[0] = 0;  // ROOT aligns with ROOT
  for (const auto& [g, s] : pairs) gold_to_system[static_cast<std::size_t>(g)] = s;

  EvalCounts counts;
  counts.gold = static_cast<long>(gold.size());
  counts.system = static_cast<long>(system.size());
  counts.aligned = static_cast<long>(pairs.size());
  for (const auto& [g, s] : pairs) {
    const Token& gt = gold.tokens[static_cast<std::size_t>(g) - 1];
    const Token& st = system.tokens[static_cast<std::size_t>(s) - 1];
    if (!gt.has_head() || !st.has_head()) {
      throw DataError("sentence \"" + gold.sent_id + "\": token " +
                      std::to_string(g) + " lacks a head annotation");
    }
    if (gt.head < 0 || gt.head > static_cast<int>(gold.size())) {
      throw DataError("sentence \"" + gold.sent_id + "\": token " +
                      std::to_string(g) + " head out of range");
    }
    if (gold_to_system[static_cast<std::size_t>(gt.head)] == st.head) {
      ++counts.uas_correct;
      if (universal_relation(st.deprel) == universal_relation(gt.deprel)) {
        ++counts.las_correct;
      }
    }
  }
  return counts;
}

inline Metrics finish(const EvalCounts& counts, EvalMode mode) {
  Metrics m;
  m.aligned_count = counts.aligned;
  m.gold_count = counts.gold;
  m.system_count = counts.system;
  if (mode == EvalMode::gold) {
    // Token universes coincide; precision, recall and F1 all reduce to
    // plain accuracy.
    m.uas_precision = m.uas_recall = m.uas_f1 = percent(counts.uas_correct, counts.gold);
    m.las_precision = m.las_recall = m.las_f1 = percent(counts.las_correct, counts.gold);
  } else {
    m.uas_precision = percent(counts.uas_correct, counts.system);
    m.uas_recall = percent(counts.uas_correct, counts.gold);
    m.uas_f1 = f1(m.uas_precision, m.uas_recall);
    m.las_precision = percent(counts.las_correct, counts.system);
    m.las_recall = percent(counts.las_correct, counts.gold);
    m.las_f1 = f1(m.las_precision, m.las_recall);
  }
  return m;
}

}  // namespace detail

inline Metrics score(const std::vector<Sentence>& gold,
                     const std::vector<Sentence>& system, EvalMode mode) {
  if (gold.size() != system.size()) {
    throw DataError("gold corpus has " + std::to_string(gold.size()) +
                    " sentences, system has " + std::to_string(system.size()));
  }
  detail::EvalCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    total += mode == EvalMode::gold
                 ? detail::score_sentence_gold(gold[i], system[i])
                 : detail::score_sentence_raw(gold[i], system[i]);
  }
  return detail::finish(total, mode);
}

inline Metrics score(const Sentence& gold, const Sentence& system, EvalMode mode) {
  return score(std::vector<Sentence>{gold}, std::vector<Sentence>{system}, mode);
}

// Tab-separated key/value report.
inline std::string format_metrics(const Metrics& m) {
  std::string out;
  out += "UAS\t" + format_percent(m.uas_f1) + "\n";
  out += "LAS\t" + format_percent(m.las_f1) + "\n";
  out += "UAS_precision\t" + format_percent(m.uas_precision) + "\n";
  out += "UAS_recall\t" + format_percent(m.uas_recall) + "\n";
  out += "LAS_precision\t" + format_percent(m.las_precision) + "\n";
  out += "LAS_recall\t" + format_percent(m.las_recall) + "\n";
  out += "aligned\t" + std::to_string(m.aligned_count) + "\n";
  out += "gold_tokens\t" + std::to_string(m.gold_count) + "\n";
  out += "system_tokens\t" + std::to_string(m.system_count) + "\n";
  return out;
}

}  // namespace udparse
