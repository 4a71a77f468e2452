// Arc and label score tables for one sentence.
//
// Rows of an arc table are candidate heads (0 = ROOT, 1..n the words),
// columns are dependents 1..n. Self-arc cells (head == dependent) hold a
// -infinity sentinel.
#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <limits>
#include <vector>

#include "udparse/error.hpp"

namespace udparse {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class Tag>
class ArcTable {
 public:
  ArcTable() = default;

  explicit ArcTable(int word_count, double fill = 0.0)
      : values_(Eigen::MatrixXd::Constant(word_count + 1, word_count, fill)) {
    for (int c = 1; c <= word_count; ++c) at(c, c) = kNegInf;
  }

  static ArcTable from_matrix(Eigen::MatrixXd values) {
    if (values.rows() != values.cols() + 1) {
      throw DataError("arc table must have one more row than columns");
    }
    ArcTable t;
    t.values_ = std::move(values);
    return t;
  }

  int word_count() const { return static_cast<int>(values_.cols()); }

  double at(int head, int dep) const {
    assert(head >= 0 && head <= word_count() && dep >= 1 && dep <= word_count());
    return values_(head, dep - 1);
  }
  double& at(int head, int dep) {
    assert(head >= 0 && head <= word_count() && dep >= 1 && dep <= word_count());
    return values_(head, dep - 1);
  }

  const Eigen::MatrixXd& matrix() const { return values_; }
  Eigen::MatrixXd& matrix() { return values_; }

 private:
  Eigen::MatrixXd values_;
};

struct RawArcTag {};
struct LogProbTag {};

// Raw biaffine arc scores.
using ScoreMatrix = ArcTable<RawArcTag>;
// Column-wise locally normalized scores: for each dependent c,
// sum over heads h != c of exp(at(h, c)) equals 1.
using NormalizedScores = ArcTable<LogProbTag>;

// Per-arc scores over the dependency label inventory.
class LabelScores {
 public:
  LabelScores() = default;

  LabelScores(int word_count, int label_count)
      : tables_(static_cast<std::size_t>(label_count),
                Eigen::MatrixXd::Zero(word_count + 1, word_count)) {
    for (auto& t : tables_) {
      for (int c = 1; c <= word_count; ++c) t(c, c - 1) = kNegInf;
    }
  }

  int word_count() const {
    return tables_.empty() ? 0 : static_cast<int>(tables_.front().cols());
  }
  int label_count() const { return static_cast<int>(tables_.size()); }

  double at(int head, int dep, int label) const {
    return tables_[static_cast<std::size_t>(label)](head, dep - 1);
  }
  double& at(int head, int dep, int label) {
    return tables_[static_cast<std::size_t>(label)](head, dep - 1);
  }

  // Highest-scoring label for the arc (head, dep); ties go to the smaller
  // label index.
  int argmax_at(int head, int dep) const {
    int best = 0;
    for (int r = 1; r < label_count(); ++r) {
      if (at(head, dep, r) > at(head, dep, best)) best = r;
    }
    return best;
  }

  // Scores over all labels for one arc.
  Eigen::VectorXd arc_scores(int head, int dep) const {
    Eigen::VectorXd v(label_count());
    for (int r = 0; r < label_count(); ++r) v(r) = at(head, dep, r);
    return v;
  }

 private:
  std::vector<Eigen::MatrixXd> tables_;  // one (n+1) x n table per label
};

}  // namespace udparse
