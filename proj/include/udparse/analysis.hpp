// Transfer-analysis metrics and experiment plumbing: training/test
// vocabulary overlap tau, unsegmented word score eta, mean typological
// syntactic similarity sigma-bar, word-budgeted treebank mixing, and the
// per-language transfer report.
//
// tau and eta are computed over WordPiece types and tokens with the same
// vocabulary the parser uses, exactly as defined:
//   tau = 100 * |type_w(test) and type_w(train)| / |type_w(test)|
//   eta = 100 * |token_g(test)| / |token_w(test)|
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/rng.hpp"
#include "udparse/subword.hpp"
#include "udparse/treebank.hpp"
#include "udparse/util.hpp"

namespace udparse {

namespace detail {

inline std::set<std::string> wordpiece_type_set(const std::vector<Sentence>& corpus,
                                                const SubwordVocab& vocab) {
  std::set<std::string> types;
  std::unordered_set<std::string> seen_forms;
  for (const Sentence& s : corpus) {
    for (const Token& t : s.tokens) {
      if (!seen_forms.insert(t.form).second) continue;
      for (std::string& piece : wordpiece_tokenize(t.form, vocab)) {
        types.insert(std::move(piece));
      }
    }
  }
  return types;
}

}  // namespace detail

// Percentage of test-set WordPiece types that also occur in the training
// data.
inline double tau(const std::vector<Sentence>& train_corpus,
                  const std::vector<Sentence>& test_corpus,
                  const SubwordVocab& vocab) {
  std::set<std::string> test_types = detail::wordpiece_type_set(test_corpus, vocab);
  if (test_types.empty()) throw DataError("test corpus yields no subword types");
  std::set<std::string> train_types = detail::wordpiece_type_set(train_corpus, vocab);
  std::size_t shared = 0;
  for (const std::string& t : test_types) shared += train_types.count(t);
  return 100.0 * static_cast<double>(shared) / static_cast<double>(test_types.size());
}

// 100 * gold tokens / WordPiece tokens; higher means less segmented text.
inline double eta(const std::vector<Sentence>& test_corpus, const SubwordVocab& vocab) {
  std::size_t gold_tokens = 0;
  std::size_t subword_tokens = 0;
  std::unordered_map<std::string, std::size_t> piece_counts;
  for (const Sentence& s : test_corpus) {
    for (const Token& t : s.tokens) {
      ++gold_tokens;
      auto it = piece_counts.find(t.form);
      if (it == piece_counts.end()) {
        it = piece_counts.emplace(t.form, wordpiece_tokenize(t.form, vocab).size()).first;
      }
      subword_tokens += it->second;
    }
  }
  if (subword_tokens == 0) throw DataError("test corpus yields no subword tokens");
  return 100.0 * static_cast<double>(gold_tokens) / static_cast<double>(subword_tokens);
}

// Mean over training languages of 1 - d, d given directly.
inline double sigma_bar_from_distances(const std::vector<double>& distances) {
  if (distances.empty()) throw DataError("sigma-bar needs at least one training language");
  double total = 0.0;
  for (double d : distances) {
    if (d < 0.0 || d > 1.0) {
      throw DataError("syntactic distance " + format_double(d) + " outside [0, 1]");
    }
    total += std::clamp(1.0 - d, 0.0, 1.0);
  }
  return total / static_cast<double>(distances.size());
}

// Mean over training languages of 1 - d, with d the cosine distance
// between syntactic feature vectors.
inline double sigma_bar(const Eigen::VectorXd& test_features,
                        const std::vector<Eigen::VectorXd>& training_features) {
  if (training_features.empty()) {
    throw DataError("sigma-bar needs at least one training language");
  }
  double total = 0.0;
  const double test_norm = test_features.norm();
  if (test_norm == 0.0) throw DataError("test feature vector is all zeros");
  for (const Eigen::VectorXd& train : training_features) {
    if (train.size() != test_features.size()) {
      throw DataError("feature vectors have different lengths");
    }
    const double train_norm = train.norm();
    if (train_norm == 0.0) throw DataError("training feature vector is all zeros");
    const double cosine_distance = 1.0 - test_features.dot(train) / (test_norm * train_norm);
    total += std::clamp(1.0 - cosine_distance, 0.0, 1.0);
  }
  return total / static_cast<double>(training_features.size());
}

// Language features or pairwise distances, loaded from a file with header
// "LANGFEAT v1" (rows "lang f1 ... fk") or "DIST v1" (rows "langA langB d").
class TypologyTable {
 public:
  static TypologyTable parse(std::istream& in) {
    TypologyTable table;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("typology file has no header");
    ++lineno;
    std::vector<std::string> head = split_ws(line);
    if (head.size() == 2 && head[0] == "LANGFEAT" && head[1] == "v1") {
      table.kind_ = Kind::features;
    } else if (head.size() == 2 && head[0] == "DIST" && head[1] == "v1") {
      table.kind_ = Kind::distances;
    } else {
      throw ParseError(lineno, "expected \"LANGFEAT v1\" or \"DIST v1\" header");
    }
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      std::vector<std::string> fields = split_ws(body);
      if (table.kind_ == Kind::features) {
        if (fields.size() < 2) throw ParseError(lineno, "feature row needs values");
        Eigen::VectorXd v(static_cast<Eigen::Index>(fields.size() - 1));
        for (std::size_t i = 1; i < fields.size(); ++i) {
          v(static_cast<Eigen::Index>(i - 1)) = parse_double(fields[i], lineno);
        }
        table.features_[fields[0]] = std::move(v);
      } else {
        if (fields.size() != 3) throw ParseError(lineno, "distance row is \"langA langB d\"");
        const double d = parse_double(fields[2], lineno);
        if (d < 0.0 || d > 1.0) throw ParseError(lineno, "distance outside [0, 1]");
        table.distances_[{fields[0], fields[1]}] = d;
      }
    }
    return table;
  }

  static TypologyTable load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open typology file: " + path);
    return parse(in);
  }

  bool has_distances() const { return kind_ == Kind::distances; }

  double distance(const std::string& a, const std::string& b) const {
    auto it = distances_.find({a, b});
    if (it == distances_.end()) it = distances_.find({b, a});
    if (it == distances_.end()) {
      throw DataError("no distance between \"" + a + "\" and \"" + b + "\"");
    }
    return it->second;
  }

  const Eigen::VectorXd& features(const std::string& lang) const {
    auto it = features_.find(lang);
    if (it == features_.end()) {
      throw DataError("no feature vector for language \"" + lang + "\"");
    }
    return it->second;
  }

  // Mean similarity of `test_lang` to the training languages.
  double sigma_bar_for(const std::string& test_lang,
                       const std::vector<std::string>& training_langs) const {
    if (kind_ == Kind::distances) {
      std::vector<double> ds;
      ds.reserve(training_langs.size());
      for (const std::string& t : training_langs) ds.push_back(distance(test_lang, t));
      return sigma_bar_from_distances(ds);
    }
    std::vector<Eigen::VectorXd> train;
    train.reserve(training_langs.size());
    for (const std::string& t : training_langs) train.push_back(features(t));
    return sigma_bar(features(test_lang), train);
  }

 private:
  enum class Kind { features, distances };
  Kind kind_ = Kind::features;
  std::map<std::string, Eigen::VectorXd> features_;
  std::map<std::pair<std::string, std::string>, double> distances_;
};

// ---------------------------------------------------------------------------
// Treebank mixing

struct MixSource {
  std::string language;
  std::string path;
  long budget = 0;  // words
};

struct MixSpec {
  std::vector<MixSource> sources;
  std::uint64_t seed = 1;

  // Flat key=value text: "seed=..." plus repeated "source=LANG PATH BUDGET".
  static MixSpec from_kv(const KeyValueFile& kv) {
    MixSpec spec;
    if (auto v = kv.get("seed")) spec.seed = static_cast<std::uint64_t>(parse_integer(*v));
    for (const std::string& value : kv.get_all("source")) {
      std::vector<std::string> fields = split_ws(value);
      if (fields.size() != 3) {
        throw ParseError("source needs \"language path budget\", got \"" + value + "\"");
      }
      MixSource src{fields[0], fields[1], parse_integer(fields[2])};
      if (src.budget <= 0) throw ParseError("budget must be positive: \"" + value + "\"");
      spec.sources.push_back(std::move(src));
    }
    if (spec.sources.empty()) throw ParseError("mix spec lists no sources");
    return spec;
  }
};

struct MixResult {
  std::vector<Sentence> corpus;
  std::vector<std::string> warnings;
};

// Per language: sentences in seeded-shuffle order until the cumulative word
// count first reaches the budget (the boundary sentence is kept); the
// blocks are concatenated and globally shuffled with the same stream. A
// source smaller than its budget is used whole, with a warning.
inline MixResult mix_corpora(
    const std::vector<std::pair<MixSource, std::vector<Sentence>>>& sources,
    std::uint64_t seed) {
  MixResult result;
  SplitMix64 rng(mix64(seed ^ 0x6d69785f72756e73ULL));
  for (const auto& [source, corpus] : sources) {
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    deterministic_shuffle(order, rng);
    long taken = 0;
    std::size_t used = 0;
    for (; used < order.size() && taken < source.budget; ++used) {
      taken += static_cast<long>(corpus[order[used]].tokens.size());
      result.corpus.push_back(corpus[order[used]]);
    }
    if (taken < source.budget) {
      result.warnings.push_back("language " + source.language + ": only " +
                                std::to_string(taken) + " of " +
                                std::to_string(source.budget) + " budgeted words available");
    }
  }
  deterministic_shuffle(result.corpus, rng);
  return result;
}

inline MixResult mix_treebanks(const MixSpec& spec) {
  std::vector<std::pair<MixSource, std::vector<Sentence>>> sources;
  sources.reserve(spec.sources.size());
  for (const MixSource& src : spec.sources) {
    sources.emplace_back(src, load_conllu_file(src.path));
  }
  return mix_corpora(sources, spec.seed);
}

// ---------------------------------------------------------------------------
// Transfer report

struct TransferRecord {
  std::string language;
  double las = 0.0;
  double tau = 0.0;
  double eta = 0.0;
  double sigma_bar = 0.0;
  bool in_family = false;  // has a relative among the training languages
};

// Wide TSV, one row per language, sorted by LAS descending.
inline std::string emit_report(std::vector<TransferRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const TransferRecord& a, const TransferRecord& b) {
                     return a.las > b.las;
                   });
  std::string out = "language\tLAS\ttau\teta\tsigma\tin_family\n";
  for (const TransferRecord& r : records) {
    out += r.language + "\t" + format_double(r.las) + "\t" + format_double(r.tau) +
           "\t" + format_double(r.eta) + "\t" + format_double(r.sigma_bar) + "\t" +
           (r.in_family ? "1" : "0") + "\n";
  }
  return out;
}

// Long-format companion for plotting: one (language, metric, value) row
// per metric.
inline std::string emit_report_long(std::vector<TransferRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const TransferRecord& a, const TransferRecord& b) {
                     return a.las > b.las;
                   });
  std::string out = "language\tmetric\tvalue\n";
  for (const TransferRecord& r : records) {
    out += r.language + "\tLAS\t" + format_double(r.las) + "\n";
    out += r.language + "\ttau\t" + format_double(r.tau) + "\n";
    out += r.language + "\teta\t" + format_double(r.eta) + "\n";
    out += r.language + "\tsigma\t" + format_double(r.sigma_bar) + "\n";
  }
  return out;
}

inline std::vector<TransferRecord> parse_report(std::string_view text) {
  std::vector<TransferRecord> records;
  std::size_t lineno = 0;
  for (const std::string& line : split(text, '\n')) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "language\tLAS\ttau\teta\tsigma\tin_family") {
        throw ParseError(lineno, "bad transfer report header");
      }
      continue;
    }
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 6) throw ParseError(lineno, "expected 6 columns");
    TransferRecord r;
    r.language = cols[0];
    r.las = parse_double(cols[1], lineno);
    r.tau = parse_double(cols[2], lineno);
    r.eta = parse_double(cols[3], lineno);
    r.sigma_bar = parse_double(cols[4], lineno);
    if (cols[5] == "1") {
      r.in_family = true;
    } else if (cols[5] == "0") {
      r.in_family = false;
    } else {
      throw ParseError(lineno, "in_family must be 0 or 1");
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace udparse
