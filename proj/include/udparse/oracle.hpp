// Brute-force verification tools, bounded to short sentences. These
// enumerate every valid head assignment directly and never touch the
// determinant or contraction code paths they are used to check.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/scores.hpp"

namespace udparse {

inline constexpr int kMaxOracleWords = 8;

namespace detail {

// Tree test by parent chasing: every token must reach ROOT within n steps.
inline bool heads_form_tree(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  for (int start = 1; start <= n; ++start) {
    int v = start;
    int steps = 0;
    while (v != 0) {
      if (++steps > n) return false;
      v = heads[static_cast<std::size_t>(v) - 1];
    }
  }
  return true;
}

}  // namespace detail

// Calls fn(heads) for every valid dependency tree over n words, in
// odometer order (heads of dependent 1 vary slowest, each head counting
// up from 0).
template <class Fn>
void for_each_tree(int n, bool single_root, Fn&& fn) {
  if (n < 1) throw DataError("tree enumeration needs n >= 1");
  if (n > kMaxOracleWords) {
    throw DataError("tree enumeration is bounded to n <= " +
                    std::to_string(kMaxOracleWords));
  }
  std::vector<int> heads(static_cast<std::size_t>(n), 0);
  while (true) {
    bool valid = true;
    if (single_root) {
      int root_children = 0;
      for (int h : heads) {
        if (h == 0) ++root_children;
      }
      valid = root_children == 1;
    }
    if (valid) {
      bool self_head = false;
      for (int c = 1; c <= n; ++c) {
        if (heads[static_cast<std::size_t>(c) - 1] == c) self_head = true;
      }
      if (!self_head && detail::heads_form_tree(heads)) fn(heads);
    }
    // Advance the odometer, least-significant position last.
    int pos = n - 1;
    while (pos >= 0) {
      if (++heads[static_cast<std::size_t>(pos)] <= n) break;
      heads[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) return;
  }
}

// Exhaustive maximum over all valid head assignments. Under ties the first
// tree in enumeration order wins.
inline std::vector<int> brute_force_best_tree(const NormalizedScores& logp,
                                              bool single_root) {
  std::vector<int> best;
  double best_score = kNegInf;
  for_each_tree(logp.word_count(), single_root, [&](const std::vector<int>& heads) {
    double score = 0.0;
    for (int c = 1; c <= static_cast<int>(heads.size()); ++c) {
      score += logp.at(heads[static_cast<std::size_t>(c) - 1], c);
    }
    if (score > best_score) {
      best_score = score;
      best = heads;
    }
  });
  if (best.empty()) throw DataError("no valid tree exists");
  return best;
}

// log sum over all valid trees of exp(sum of logp over arcs), accumulated
// as a streaming log-sum-exp.
inline double brute_force_log_partition(const NormalizedScores& logp,
                                        bool single_root) {
  double max_score = kNegInf;
  double scaled_sum = 0.0;
  for_each_tree(logp.word_count(), single_root, [&](const std::vector<int>& heads) {
    double score = 0.0;
    for (int c = 1; c <= static_cast<int>(heads.size()); ++c) {
      score += logp.at(heads[static_cast<std::size_t>(c) - 1], c);
    }
    if (score <= kNegInf) return;
    if (score > max_score) {
      scaled_sum = scaled_sum * std::exp(max_score - score) + 1.0;
      max_score = score;
    } else {
      scaled_sum += std::exp(score - max_score);
    }
  });
  if (!(max_score > kNegInf)) throw DataError("no valid tree has finite weight");
  return max_score + std::log(scaled_sum);
}

// Arc posteriors by enumeration.
inline Eigen::MatrixXd brute_force_marginals(const NormalizedScores& logp,
                                             bool single_root) {
  const int n = logp.word_count();
  const double log_z = brute_force_log_partition(logp, single_root);
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n + 1, n);
  for_each_tree(n, single_root, [&](const std::vector<int>& heads) {
    double score = 0.0;
    for (int c = 1; c <= n; ++c) {
      score += logp.at(heads[static_cast<std::size_t>(c) - 1], c);
    }
    const double p = std::exp(score - log_z);
    for (int c = 1; c <= n; ++c) {
      mu(heads[static_cast<std::size_t>(c) - 1], c - 1) += p;
    }
  });
  return mu;
}

}  // namespace udparse
