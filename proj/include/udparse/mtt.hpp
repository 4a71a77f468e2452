// Globally normalized arc objective: local normalization, log-partition
// over all non-projective dependency trees via Kirchhoff's Matrix-Tree
// Theorem, tree log-probabilities, arc marginals, and the training loss.
//
// Weights are exp of locally normalized scores, so every matrix entry is
// in [0, 1]. The determinant is evaluated through a pivoted LU
// factorization with log-domain accumulation of the diagonal factors,
// which keeps sentences of a few hundred words well inside double range.
#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>
#include <cmath>
#include <string>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/scores.hpp"
#include "udparse/treebank.hpp"

namespace udparse {

// Column-wise log-softmax over candidate heads. -inf cells stay -inf; a
// column with no finite entry is an error.
inline NormalizedScores local_normalize(const ScoreMatrix& scores) {
  const int n = scores.word_count();
  Eigen::MatrixXd out(n + 1, n);
  for (int c = 1; c <= n; ++c) {
    double max = kNegInf;
    for (int h = 0; h <= n; ++h) {
      max = std::max(max, scores.at(h, c));
    }
    if (!(max > kNegInf)) {
      throw DataError("dependent " + std::to_string(c) +
                      " has no finite head score");
    }
    double sum = 0.0;
    for (int h = 0; h <= n; ++h) {
      const double s = scores.at(h, c);
      if (s > kNegInf) sum += std::exp(s - max);
    }
    const double lse = max + std::log(sum);
    for (int h = 0; h <= n; ++h) {
      const double s = scores.at(h, c);
      out(h, c - 1) = (s > kNegInf) ? s - lse : kNegInf;
    }
  }
  return NormalizedScores::from_matrix(std::move(out));
}

namespace detail {

inline double arc_weight(const NormalizedScores& logp, int head, int dep) {
  const double v = logp.at(head, dep);
  return v > kNegInf ? std::exp(v) : 0.0;
}

// Kirchhoff matrix whose determinant sums the weights of all trees.
//
// Multi-root: rows/columns index the dependents; the diagonal holds total
// incoming weight (ROOT included), off-diagonal (h, c) holds -w[h -> c].
//
// Single-root (exactly one ROOT child): the word-word Kirchhoff matrix
// with its first row replaced by the ROOT arc weights.
inline Eigen::MatrixXd kirchhoff_matrix(const NormalizedScores& logp,
                                        bool single_root) {
  const int n = logp.word_count();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int c = 1; c <= n; ++c) {
    double diag = single_root ? 0.0 : arc_weight(logp, 0, c);
    for (int h = 1; h <= n; ++h) {
      if (h == c) continue;
      const double w = arc_weight(logp, h, c);
      diag += w;
      if (!single_root || h >= 2) m(h - 1, c - 1) = -w;
    }
    if (!single_root || c >= 2) m(c - 1, c - 1) = diag;
  }
  if (single_root) {
    for (int c = 1; c <= n; ++c) m(0, c - 1) = arc_weight(logp, 0, c);
  }
  return m;
}

struct LogDet {
  double value = 0.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
};

inline LogDet guarded_log_det(const Eigen::MatrixXd& m) {
  LogDet result;
  result.lu.compute(m);
  const Eigen::MatrixXd& factors = result.lu.matrixLU();
  double log_abs = 0.0;
  double sign = static_cast<double>(result.lu.permutationP().determinant());
  for (Eigen::Index i = 0; i < factors.rows(); ++i) {
    const double pivot = factors(i, i);
    if (std::abs(pivot) < 1e-300 || !std::isfinite(pivot)) {
      throw DataError("degenerate arc weights: Kirchhoff matrix is singular");
    }
    log_abs += std::log(std::abs(pivot));
    if (pivot < 0.0) sign = -sign;
  }
  if (sign <= 0.0) {
    throw DataError("degenerate arc weights: non-positive tree-weight sum");
  }
  result.value = log_abs;
  return result;
}

}  // namespace detail

// log of the summed weight of every valid dependency tree,
// sum_y exp(sum of logp over the arcs of y).
inline double log_partition(const NormalizedScores& logp, bool single_root) {
  if (logp.word_count() < 1) throw DataError("log_partition needs n >= 1");
  return detail::guarded_log_det(detail::kirchhoff_matrix(logp, single_root)).value;
}

// Log-probability of one tree under the globally normalized model.
inline double tree_log_prob(const NormalizedScores& logp,
                            const std::vector<int>& heads, bool single_root) {
  std::vector<std::string> violations = validate_heads(heads, single_root);
  if (!violations.empty()) {
    throw DataError("invalid tree: " + violations.front());
  }
  double total = 0.0;
  for (int c = 1; c <= static_cast<int>(heads.size()); ++c) {
    total += logp.at(heads[static_cast<std::size_t>(c) - 1], c);
  }
  return total - log_partition(logp, single_root);
}

// Arc posterior mu[h, c] = P((h, c) in y), the gradient of the
// log-partition with respect to logp[h, c]. Computed from the inverse of
// the Kirchhoff matrix.
inline Eigen::MatrixXd arc_marginals(const NormalizedScores& logp,
                                     bool single_root) {
  const int n = logp.word_count();
  if (n < 1) throw DataError("arc_marginals needs n >= 1");
  detail::LogDet det = detail::guarded_log_det(detail::kirchhoff_matrix(logp, single_root));
  const Eigen::MatrixXd inv = det.lu.inverse();

  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n + 1, n);
  for (int c = 1; c <= n; ++c) {
    for (int h = 0; h <= n; ++h) {
      if (h == c) continue;
      const double w = detail::arc_weight(logp, h, c);
      if (w == 0.0) continue;
      double sensitivity;
      if (single_root) {
        if (h == 0) {
          sensitivity = inv(c - 1, 0);
        } else {
          sensitivity = (c >= 2 ? inv(c - 1, c - 1) : 0.0) -
                        (h >= 2 ? inv(c - 1, h - 1) : 0.0);
        }
      } else {
        sensitivity = inv(c - 1, c - 1) - (h >= 1 ? inv(c - 1, h - 1) : 0.0);
      }
      mu(h, c - 1) = w * sensitivity;
    }
  }
  return mu;
}

// Per-sentence loss pieces. `value` is the per-token average the trainer
// minimizes; the *_sum fields are the raw sums entering batch averaging.
struct SentenceLoss {
  double value = 0.0;
  double arc_nll_sum = 0.0;    // -log p(gold tree)
  double label_nll_sum = 0.0;  // summed label cross-entropy at gold arcs
  int tokens = 0;
};

namespace detail {

// Cross-entropy of the gold label under a softmax over one arc's label
// scores; optionally produces the softmax gradient.
inline double label_cross_entropy(const Eigen::VectorXd& scores, int gold,
                                  Eigen::VectorXd* dscores = nullptr) {
  const double max = scores.maxCoeff();
  const double lse = max + std::log((scores.array() - max).exp().sum());
  if (dscores) {
    *dscores = ((scores.array() - lse).exp()).matrix();
    (*dscores)(gold) -= 1.0;
  }
  return lse - scores(gold);
}

}  // namespace detail

// Negative log-likelihood of the gold tree plus label cross-entropy at the
// gold arcs, averaged over tokens.
inline SentenceLoss loss(const ScoreMatrix& scores, const LabelScores& label_scores,
                         const std::vector<int>& gold_heads,
                         const std::vector<int>& gold_labels, bool single_root) {
  const int n = scores.word_count();
  if (static_cast<int>(gold_heads.size()) != n ||
      static_cast<int>(gold_labels.size()) != n) {
    throw DataError("gold annotation length does not match the score table");
  }
  SentenceLoss out;
  out.tokens = n;
  NormalizedScores logp = local_normalize(scores);
  out.arc_nll_sum = -tree_log_prob(logp, gold_heads, single_root);
  for (int c = 1; c <= n; ++c) {
    const int h = gold_heads[static_cast<std::size_t>(c) - 1];
    out.label_nll_sum += detail::label_cross_entropy(
        label_scores.arc_scores(h, c), gold_labels[static_cast<std::size_t>(c) - 1]);
  }
  out.value = (out.arc_nll_sum + out.label_nll_sum) / n;
  return out;
}

}  // namespace udparse
