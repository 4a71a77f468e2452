// Exact non-projective decoding: Chu-Liu-Edmonds maximum-weight
// arborescence plus label assignment.
//
// Decoding operates on the locally normalized scores, the quantity the
// model is trained on. Score ties prefer the lower head index, so runs
// reproduce bit for bit.
#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/scores.hpp"
#include "udparse/treebank.hpp"

namespace udparse {

namespace detail {

struct CleArc {
  int head = 0;
  int dep = 0;
  double weight = 0.0;
  int below = -1;  // index of the corresponding arc one contraction earlier
};

struct CleLevel {
  int num_nodes = 0;
  std::vector<CleArc> arcs;
  std::vector<int> best_in;   // arc index per node, -1 for the root
  std::vector<int> cycle;     // contracted cycle, empty at the last level
  std::vector<int> node_map;  // node id -> id at the next level
};

// Best incoming arc per non-root node. Arcs are scanned in order, strict
// improvement replaces, so earlier-listed arcs win ties.
inline void pick_best_in(CleLevel& level) {
  level.best_in.assign(static_cast<std::size_t>(level.num_nodes), -1);
  for (std::size_t a = 0; a < level.arcs.size(); ++a) {
    const CleArc& arc = level.arcs[a];
    int& slot = level.best_in[static_cast<std::size_t>(arc.dep)];
    if (slot < 0 || arc.weight > level.arcs[static_cast<std::size_t>(slot)].weight) {
      slot = static_cast<int>(a);
    }
  }
  for (int v = 1; v < level.num_nodes; ++v) {
    if (level.best_in[static_cast<std::size_t>(v)] < 0) {
      throw DataError("node " + std::to_string(v) + " has no candidate head");
    }
  }
}

// Any cycle in the chosen-head graph; empty if none.
inline std::vector<int> find_cycle(const CleLevel& level) {
  std::vector<int> state(static_cast<std::size_t>(level.num_nodes), 0);
  state[0] = 2;
  for (int start = 1; start < level.num_nodes; ++start) {
    if (state[static_cast<std::size_t>(start)] != 0) continue;
    std::vector<int> path;
    int v = start;
    while (state[static_cast<std::size_t>(v)] == 0) {
      state[static_cast<std::size_t>(v)] = 1;
      path.push_back(v);
      v = level.arcs[static_cast<std::size_t>(level.best_in[static_cast<std::size_t>(v)])].head;
    }
    if (state[static_cast<std::size_t>(v)] == 1) {
      std::vector<int> cycle;
      bool in_cycle = false;
      for (int u : path) {
        if (u == v) in_cycle = true;
        if (in_cycle) cycle.push_back(u);
      }
      return cycle;
    }
    for (int u : path) state[static_cast<std::size_t>(u)] = 2;
  }
  return {};
}

// Runs the contraction loop and unrolls the chosen arcs back to the
// original graph. Returns, per node, the index of its chosen level-0 arc.
inline std::vector<int> max_arborescence(int num_nodes, std::vector<CleArc> arcs) {
  std::vector<CleLevel> levels;
  levels.push_back({num_nodes, std::move(arcs), {}, {}, {}});

  while (true) {
    CleLevel& level = levels.back();
    pick_best_in(level);
    level.cycle = find_cycle(level);
    if (level.cycle.empty()) break;

    // Contract the cycle into one fresh node.
    std::vector<bool> in_cycle(static_cast<std::size_t>(level.num_nodes), false);
    for (int v : level.cycle) in_cycle[static_cast<std::size_t>(v)] = true;
    level.node_map.assign(static_cast<std::size_t>(level.num_nodes), -1);
    int next_id = 0;
    for (int v = 0; v < level.num_nodes; ++v) {
      if (!in_cycle[static_cast<std::size_t>(v)]) level.node_map[static_cast<std::size_t>(v)] = next_id++;
    }
    const int contracted = next_id++;
    for (int v : level.cycle) level.node_map[static_cast<std::size_t>(v)] = contracted;

    CleLevel next;
    next.num_nodes = next_id;
    // Keep only the best parallel arc per (head, dep) pair; first wins ties.
    std::vector<int> slot(static_cast<std::size_t>(next_id) * static_cast<std::size_t>(next_id), -1);
    for (std::size_t a = 0; a < level.arcs.size(); ++a) {
      const CleArc& arc = level.arcs[a];
      const int h = level.node_map[static_cast<std::size_t>(arc.head)];
      const int d = level.node_map[static_cast<std::size_t>(arc.dep)];
      if (h == d || d == 0) continue;
      double weight = arc.weight;
      if (d == contracted) {
        weight -= level.arcs[static_cast<std::size_t>(level.best_in[static_cast<std::size_t>(arc.dep)])].weight;
      }
      int& s = slot[static_cast<std::size_t>(h) * static_cast<std::size_t>(next_id) + static_cast<std::size_t>(d)];
      if (s < 0 || weight > next.arcs[static_cast<std::size_t>(s)].weight) {
        if (s < 0) {
          s = static_cast<int>(next.arcs.size());
          next.arcs.push_back({h, d, weight, static_cast<int>(a)});
        } else {
          next.arcs[static_cast<std::size_t>(s)] = {h, d, weight, static_cast<int>(a)};
        }
      }
    }
    levels.push_back(std::move(next));
  }

  // Chosen arc indices at the deepest level.
  std::vector<int> chosen;
  {
    const CleLevel& top = levels.back();
    for (int v = 1; v < top.num_nodes; ++v) {
      chosen.push_back(top.best_in[static_cast<std::size_t>(v)]);
    }
  }
  // Expand contractions, deepest first.
  for (std::size_t k = levels.size() - 1; k-- > 0;) {
    const CleLevel& level = levels[k];
    const CleLevel& above = levels[k + 1];
    std::vector<int> expanded;
    expanded.reserve(chosen.size() + level.cycle.size());
    const int contracted_id = level.node_map[static_cast<std::size_t>(level.cycle.front())];
    int entry_dep = -1;
    for (int arc_above : chosen) {
      const int below = above.arcs[static_cast<std::size_t>(arc_above)].below;
      const CleArc& arc = level.arcs[static_cast<std::size_t>(below)];
      expanded.push_back(below);
      if (level.node_map[static_cast<std::size_t>(arc.dep)] == contracted_id) {
        entry_dep = arc.dep;
      }
    }
    if (entry_dep < 0) throw std::logic_error("cycle expansion lost its entry arc");
    for (int v : level.cycle) {
      if (v != entry_dep) expanded.push_back(level.best_in[static_cast<std::size_t>(v)]);
    }
    chosen = std::move(expanded);
  }

  const CleLevel& base = levels.front();
  std::vector<int> result(static_cast<std::size_t>(num_nodes), -1);
  for (int a : chosen) {
    const CleArc& arc = base.arcs[static_cast<std::size_t>(a)];
    result[static_cast<std::size_t>(arc.dep)] = a;
  }
  return result;
}

// forced_root = 0 allows every ROOT arc; otherwise only (0, forced_root).
inline std::vector<int> decode_once(const NormalizedScores& logp, int forced_root) {
  const int n = logp.word_count();
  std::vector<CleArc> arcs;
  arcs.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int c = 1; c <= n; ++c) {
    for (int h = 0; h <= n; ++h) {
      if (h == c) continue;
      if (h == 0 && forced_root != 0 && c != forced_root) continue;
      const double w = logp.at(h, c);
      if (w > kNegInf) arcs.push_back({h, c, w, -1});
    }
  }
  std::vector<int> chosen = max_arborescence(n + 1, arcs);
  std::vector<int> heads(static_cast<std::size_t>(n), 0);
  for (int c = 1; c <= n; ++c) {
    const int a = chosen[static_cast<std::size_t>(c)];
    if (a < 0) throw std::logic_error("decoder left a node unattached");
    const CleArc& arc = arcs[static_cast<std::size_t>(a)];
    heads[static_cast<std::size_t>(arc.dep) - 1] = arc.head;
  }
  return heads;
}

}  // namespace detail

// Total normalized score of a head assignment.
inline double tree_score(const NormalizedScores& logp, const std::vector<int>& heads) {
  double total = 0.0;
  for (int c = 1; c <= static_cast<int>(heads.size()); ++c) {
    total += logp.at(heads[static_cast<std::size_t>(c) - 1], c);
  }
  return total;
}

// Maximum-weight arborescence rooted at ROOT. With single_root, the result
// has exactly one ROOT child; when the unconstrained optimum violates
// that, CLE is re-run once per forced root child and the best result wins
// (ties to the smaller child index), which stays exact.
inline std::vector<int> mst_decode(const NormalizedScores& logp, bool single_root) {
  const int n = logp.word_count();
  if (n < 1) throw DataError("mst_decode needs n >= 1");
  std::vector<int> heads = detail::decode_once(logp, 0);
  if (!single_root) return heads;

  int root_children = 0;
  for (int h : heads) {
    if (h == 0) ++root_children;
  }
  if (root_children == 1) return heads;

  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= n; ++k) {
    if (!(logp.at(0, k) > kNegInf)) continue;
    std::vector<int> candidate = detail::decode_once(logp, k);
    const double score = tree_score(logp, candidate);
    if (score > best_score) {
      best_score = score;
      best = std::move(candidate);
    }
  }
  if (best.empty()) throw DataError("no feasible single-root tree");
  return best;
}

// Argmax label per arc of the given head assignment; ties break toward the
// smaller label index.
inline std::vector<int> assign_labels(const LabelScores& label_scores,
                                      const std::vector<int>& heads) {
  std::vector<std::string> violations = validate_heads(heads, false);
  if (!violations.empty()) {
    throw DataError("invalid tree: " + violations.front());
  }
  std::vector<int> labels(heads.size(), 0);
  for (int c = 1; c <= static_cast<int>(heads.size()); ++c) {
    labels[static_cast<std::size_t>(c) - 1] =
        label_scores.argmax_at(heads[static_cast<std::size_t>(c) - 1], c);
  }
  return labels;
}

}  // namespace udparse
