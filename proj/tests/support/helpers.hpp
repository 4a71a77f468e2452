// Shared test fixtures and independent oracles. The arithmetic oracles
// here are deliberate straight-line re-implementations (plain loops, no
// shared code with the library paths they check).
#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "udparse/embeddings.hpp"
#include "udparse/rng.hpp"
#include "udparse/scorer.hpp"
#include "udparse/scores.hpp"
#include "udparse/subword.hpp"
#include "udparse/treebank.hpp"

namespace testsupport {

using namespace udparse;

// --------------------------------------------------------------------------
// Random fixtures

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     SplitMix64& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.next_in(-scale, scale);
  }
  return m;
}

// Parameters with every tensor randomized (init_params leaves the bilinear
// forms at zero, which would make scoring trivially zero).
inline BiaffineParams random_params(const BiaffineConfig& config,
                                    std::vector<std::string> labels,
                                    std::uint64_t seed, double scale = 0.6) {
  BiaffineParams p = init_params(config, std::move(labels), seed);
  SplitMix64 rng(mix64(seed ^ 0xabcdef));
  for (auto& [name, tensor] : tensor_views(p)) {
    *tensor = random_matrix(tensor->rows(), tensor->cols(), rng, scale);
  }
  return p;
}

inline ScoreMatrix random_raw_scores(int n, std::uint64_t seed, double scale = 2.0) {
  ScoreMatrix scores(n);
  SplitMix64 rng(seed);
  for (int c = 1; c <= n; ++c) {
    for (int h = 0; h <= n; ++h) {
      if (h != c) scores.at(h, c) = rng.next_in(-scale, scale);
    }
  }
  return scores;
}

// --------------------------------------------------------------------------
// Straight-line biaffine arithmetic (independent of the Eigen path)

inline std::vector<double> project_relu_oracle(const std::vector<double>& x,
                                               const Eigen::MatrixXd& weight,
                                               const Eigen::MatrixXd& bias) {
  std::vector<double> out(static_cast<std::size_t>(weight.rows()));
  for (Eigen::Index i = 0; i < weight.rows(); ++i) {
    double z = bias(i, 0);
    for (Eigen::Index j = 0; j < weight.cols(); ++j) {
      z += weight(i, j) * x[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = z > 0.0 ? z : 0.0;
  }
  return out;
}

inline std::vector<double> position_vector(const Eigen::MatrixXd& word_vectors,
                                           const BiaffineParams& params, int position) {
  std::vector<double> x(static_cast<std::size_t>(params.config.input_dim));
  for (int d = 0; d < params.config.input_dim; ++d) {
    x[static_cast<std::size_t>(d)] =
        position == 0 ? params.root_embedding(d, 0) : word_vectors(position - 1, d);
  }
  return x;
}

inline double arc_score_oracle(const Eigen::MatrixXd& word_vectors,
                               const BiaffineParams& params, int head, int dep) {
  std::vector<double> head_proj = project_relu_oracle(
      position_vector(word_vectors, params, head), params.arc_head_weight,
      params.arc_head_bias);
  head_proj.push_back(1.0);
  std::vector<double> dep_proj = project_relu_oracle(
      position_vector(word_vectors, params, dep), params.arc_dep_weight,
      params.arc_dep_bias);
  double s = 0.0;
  for (std::size_t i = 0; i < head_proj.size(); ++i) {
    for (std::size_t j = 0; j < dep_proj.size(); ++j) {
      s += head_proj[i] * params.arc_bilinear(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(j)) *
           dep_proj[j];
    }
  }
  return s;
}

inline double label_score_oracle(const Eigen::MatrixXd& word_vectors,
                                 const BiaffineParams& params, int head, int dep,
                                 int label) {
  std::vector<double> head_proj = project_relu_oracle(
      position_vector(word_vectors, params, head), params.label_head_weight,
      params.label_head_bias);
  head_proj.push_back(1.0);
  std::vector<double> dep_proj = project_relu_oracle(
      position_vector(word_vectors, params, dep), params.label_dep_weight,
      params.label_dep_bias);
  dep_proj.push_back(1.0);
  const Eigen::MatrixXd& bilinear = params.label_bilinear[static_cast<std::size_t>(label)];
  double s = 0.0;
  for (std::size_t i = 0; i < head_proj.size(); ++i) {
    for (std::size_t j = 0; j < dep_proj.size(); ++j) {
      s += head_proj[i] * bilinear(static_cast<Eigen::Index>(i),
                                   static_cast<Eigen::Index>(j)) *
           dep_proj[j];
    }
  }
  return s;
}

// --------------------------------------------------------------------------
// Reachability oracle for tree validity: walk children from ROOT and count
// visits (independent of validate_heads).

inline bool tree_by_reachability(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  for (int h : heads) {
    if (h < 0 || h > n) return false;
  }
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) {
    if (heads[static_cast<std::size_t>(i)] == i + 1) return false;
    children[static_cast<std::size_t>(heads[static_cast<std::size_t>(i)])].push_back(i + 1);
  }
  std::vector<int> stack{0};
  int visits = 0;
  std::vector<bool> seen(static_cast<std::size_t>(n) + 1, false);
  seen[0] = true;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int c : children[static_cast<std::size_t>(v)]) {
      if (seen[static_cast<std::size_t>(c)]) return false;
      seen[static_cast<std::size_t>(c)] = true;
      ++visits;
      stack.push_back(c);
    }
  }
  return visits == n;
}

// --------------------------------------------------------------------------
// Synthetic single-root treebank with per-form deterministic labels, plus a
// vocabulary where every form is a single piece.

struct ToyData {
  std::vector<Sentence> sentences;
  SubwordVocab vocab;
};

inline ToyData make_toy_treebank(int num_sentences, std::uint64_t seed,
                                 int num_forms = 20) {
  static const std::vector<std::string> kRelations = {"amod", "det", "nsubj", "obj"};
  ToyData data;
  std::vector<std::string> entries = {"[UNK]"};
  for (int f = 0; f < num_forms; ++f) entries.push_back("w" + std::to_string(f));
  data.vocab = SubwordVocab::from_entries(entries);

  SplitMix64 rng(seed);
  for (int s = 0; s < num_sentences; ++s) {
    Sentence sent;
    sent.sent_id = "toy" + std::to_string(s + 1);
    const int n = 3 + static_cast<int>(rng.next_below(5));
    for (int i = 1; i <= n; ++i) {
      Token t;
      t.index = i;
      t.form = "w" + std::to_string(rng.next_below(static_cast<std::uint64_t>(num_forms)));
      t.head = i == 1 ? 0 : 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i - 1)));
      t.deprel = t.head == 0 ? "root" : kRelations[hash_bytes(t.form) % kRelations.size()];
      sent.tokens.push_back(std::move(t));
    }
    sent.comments.push_back("# sent_id = " + sent.sent_id);
    data.sentences.push_back(std::move(sent));
  }
  return data;
}

// --------------------------------------------------------------------------
// Filesystem and stream helpers

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::uint64_t counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("udparse_test_" + std::to_string(mix64(counter++ ^
                                                   static_cast<std::uint64_t>(::getpid()))));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CaptureStream {
  explicit CaptureStream(std::ostream& stream) : stream_(stream) {
    old_ = stream_.rdbuf(buffer_.rdbuf());
  }
  ~CaptureStream() { stream_.rdbuf(old_); }
  std::string str() const { return buffer_.str(); }

 private:
  std::ostream& stream_;
  std::ostringstream buffer_;
  std::streambuf* old_;
};

}  // namespace testsupport
