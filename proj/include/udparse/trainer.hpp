// Training loop: Adam over the biaffine parameters with the globally
// normalized arc objective plus label cross-entropy, periodic dev
// evaluation, patience-based early stopping, and checkpoint selection by
// best dev LAS. The embedding provider is frozen, so per-sentence word
// vectors are computed once up front; that pass doubles as the provider
// coverage check, which therefore fails before the first update.
//
// Everything is deterministic under a fixed config: batching uses the run
// seed, and parallel gradient accumulation reduces chunks in a fixed
// order.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "udparse/decoder.hpp"
#include "udparse/embeddings.hpp"
#include "udparse/error.hpp"
#include "udparse/eval.hpp"
#include "udparse/mtt.hpp"
#include "udparse/rng.hpp"
#include "udparse/scorer.hpp"
#include "udparse/subword.hpp"
#include "udparse/treebank.hpp"
#include "udparse/util.hpp"

namespace udparse {

struct TrainConfig {
  double learning_rate = 5e-6;
  int arc_dim = 400;
  int label_dim = 100;
  long eval_every = 500;  // updates between validations
  int patience = 10;      // consecutive stagnant validations before stopping
  int batch_size = 32;    // sentences per update
  std::uint64_t seed = 1;
  bool single_root = true;
  long max_updates = 1000000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; 0 disables clipping
  int threads = 1;

  std::vector<std::pair<std::string, std::string>> to_kv() const {
    return {
        {"learning_rate", format_double(learning_rate)},
        {"arc_dim", std::to_string(arc_dim)},
        {"label_dim", std::to_string(label_dim)},
        {"eval_every", std::to_string(eval_every)},
        {"patience", std::to_string(patience)},
        {"batch_size", std::to_string(batch_size)},
        {"seed", std::to_string(seed)},
        {"single_root", single_root ? "true" : "false"},
        {"max_updates", std::to_string(max_updates)},
        {"adam_beta1", format_double(adam_beta1)},
        {"adam_beta2", format_double(adam_beta2)},
        {"adam_epsilon", format_double(adam_epsilon)},
        {"clip_norm", format_double(clip_norm)},
        {"threads", std::to_string(threads)},
    };
  }

  static TrainConfig from_kv(const KeyValueFile& kv) {
    TrainConfig c;
    static const std::set<std::string> known = {
        "learning_rate", "arc_dim", "label_dim", "eval_every", "patience",
        "batch_size", "seed", "single_root", "max_updates", "adam_beta1",
        "adam_beta2", "adam_epsilon", "clip_norm", "threads"};
    for (const auto& [key, value] : kv.items()) {
      if (!known.count(key)) throw ParseError("unknown training config key: " + key);
    }
    auto get = [&kv](const char* key) { return kv.get(key); };
    if (auto v = get("learning_rate")) c.learning_rate = parse_double(*v);
    if (auto v = get("arc_dim")) c.arc_dim = static_cast<int>(parse_integer(*v));
    if (auto v = get("label_dim")) c.label_dim = static_cast<int>(parse_integer(*v));
    if (auto v = get("eval_every")) c.eval_every = parse_integer(*v);
    if (auto v = get("patience")) c.patience = static_cast<int>(parse_integer(*v));
    if (auto v = get("batch_size")) c.batch_size = static_cast<int>(parse_integer(*v));
    if (auto v = get("seed")) c.seed = static_cast<std::uint64_t>(parse_integer(*v));
    if (auto v = get("single_root")) {
      if (*v == "true" || *v == "1") {
        c.single_root = true;
      } else if (*v == "false" || *v == "0") {
        c.single_root = false;
      } else {
        throw ParseError("single_root must be true or false, got \"" + *v + "\"");
      }
    }
    if (auto v = get("max_updates")) c.max_updates = parse_integer(*v);
    if (auto v = get("adam_beta1")) c.adam_beta1 = parse_double(*v);
    if (auto v = get("adam_beta2")) c.adam_beta2 = parse_double(*v);
    if (auto v = get("adam_epsilon")) c.adam_epsilon = parse_double(*v);
    if (auto v = get("clip_norm")) c.clip_norm = parse_double(*v);
    if (auto v = get("threads")) c.threads = static_cast<int>(parse_integer(*v));
    c.validate();
    return c;
  }

  void validate() const {
    if (learning_rate <= 0 || arc_dim <= 0 || label_dim <= 0 || eval_every <= 0 ||
        patience <= 0 || batch_size <= 0 || max_updates <= 0 || threads <= 0) {
      throw DataError("training config values must be positive");
    }
    if (clip_norm < 0) throw DataError("clip_norm must be >= 0");
  }
};

// Sorted unique DEPREL strings of a corpus.
inline std::vector<std::string> collect_label_inventory(
    const std::vector<Sentence>& corpus) {
  std::set<std::string> labels;
  for (const Sentence& s : corpus) {
    for (const Token& t : s.tokens) labels.insert(t.deprel);
  }
  return {labels.begin(), labels.end()};
}

inline std::vector<int> label_ids_for(const Sentence& sentence,
                                      const std::vector<std::string>& inventory) {
  std::vector<int> ids;
  ids.reserve(sentence.tokens.size());
  for (const Token& t : sentence.tokens) {
    auto it = std::lower_bound(inventory.begin(), inventory.end(), t.deprel);
    if (it == inventory.end() || *it != t.deprel) {
      throw DataError("label \"" + t.deprel + "\" is not in the inventory");
    }
    ids.push_back(static_cast<int>(it - inventory.begin()));
  }
  return ids;
}

// One sentence ready for scoring: pooled word vectors plus gold structure.
struct SentenceExample {
  Eigen::MatrixXd word_vectors;  // n x D
  std::vector<int> heads;
  std::vector<int> label_ids;          // empty when labels are not needed
  std::vector<std::string> gold_rels;  // DEPREL strings, for evaluation
};

inline Eigen::MatrixXd pooled_word_vectors(const Sentence& sentence,
                                           const SubwordVocab& vocab,
                                           const EmbeddingProvider& provider) {
  SubwordSequence seq = align(sentence, vocab);
  Eigen::MatrixXd vectors = provider.embed(seq.pieces, sentence.sent_id);
  return pool_word_vectors(vectors, seq.alignment);
}

// Loss of a scored sentence against its gold annotation.
inline SentenceLoss sentence_loss(const ScoreMatrix& scores,
                                  const LabelScores& label_scores,
                                  const Sentence& gold,
                                  const std::vector<std::string>& inventory,
                                  bool single_root) {
  return loss(scores, label_scores, gold_heads(gold), label_ids_for(gold, inventory),
              single_root);
}

// Sum-form loss for one sentence; gradients are accumulated unnormalized
// into `grad` and divided by the batch token count later.
inline SentenceLoss sentence_loss_grad(const SentenceExample& example,
                                       const BiaffineParams& params,
                                       bool single_root, BiaffineParams& grad) {
  const int n = static_cast<int>(example.word_vectors.rows());
  ArcTrace arc_trace = arc_forward(example.word_vectors, params);
  NormalizedScores logp = local_normalize(arc_trace.scores);

  SentenceLoss out;
  out.tokens = n;

  // Arc term: d(arc NLL)/d(logp) = marginals - gold indicator, then back
  // through the column log-softmax.
  Eigen::MatrixXd dlogp = arc_marginals(logp, single_root);
  double gold_sum = 0.0;
  for (int c = 1; c <= n; ++c) {
    gold_sum += logp.at(example.heads[static_cast<std::size_t>(c) - 1], c);
    dlogp(example.heads[static_cast<std::size_t>(c) - 1], c - 1) -= 1.0;
  }
  out.arc_nll_sum = log_partition(logp, single_root) - gold_sum;

  Eigen::MatrixXd dscores(n + 1, n);
  for (int c = 1; c <= n; ++c) {
    const double column_sum = dlogp.col(c - 1).sum();
    for (int h = 0; h <= n; ++h) {
      if (h == c) {
        dscores(h, c - 1) = 0.0;
        continue;
      }
      const double lp = logp.at(h, c);
      const double p = lp > kNegInf ? std::exp(lp) : 0.0;
      dscores(h, c - 1) = dlogp(h, c - 1) - p * column_sum;
    }
  }
  arc_backward(arc_trace, params, dscores, grad);

  // Label term: softmax cross-entropy at the gold arcs only.
  LabelTrace label_trace = label_forward(example.word_vectors, params);
  std::vector<LabelArcGrad> arc_grads(static_cast<std::size_t>(n));
  for (int c = 1; c <= n; ++c) {
    LabelArcGrad& g = arc_grads[static_cast<std::size_t>(c) - 1];
    g.head = example.heads[static_cast<std::size_t>(c) - 1];
    g.dep = c;
    out.label_nll_sum += detail::label_cross_entropy(
        label_trace.scores.arc_scores(g.head, c),
        example.label_ids[static_cast<std::size_t>(c) - 1], &g.dscores);
  }
  label_backward(label_trace, params, arc_grads, example.word_vectors, grad);

  out.value = (out.arc_nll_sum + out.label_nll_sum) / n;
  return out;
}

struct BatchLoss {
  double loss = 0.0;  // mean over tokens
  long tokens = 0;
};

// Loss and gradient of the batch objective: total NLL divided by the total
// token count. With threads > 1, sentences are split into contiguous
// chunks whose partial gradients are reduced in chunk order.
inline BatchLoss batch_loss_grad(std::span<const SentenceExample> batch,
                                 const BiaffineParams& params, bool single_root,
                                 int threads, BiaffineParams& grad) {
  grad = zero_like(params);
  double nll_sum = 0.0;
  long tokens = 0;

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(batch.size())));
  if (workers == 1) {
    for (const SentenceExample& example : batch) {
      SentenceLoss l = sentence_loss_grad(example, params, single_root, grad);
      nll_sum += l.arc_nll_sum + l.label_nll_sum;
      tokens += l.tokens;
    }
  } else {
    std::vector<BiaffineParams> partial_grads(static_cast<std::size_t>(workers), zero_like(params));
    std::vector<double> partial_nll(static_cast<std::size_t>(workers), 0.0);
    std::vector<long> partial_tokens(static_cast<std::size_t>(workers), 0);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    const std::size_t chunk = (batch.size() + static_cast<std::size_t>(workers) - 1) /
                              static_cast<std::size_t>(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          const std::size_t begin = static_cast<std::size_t>(w) * chunk;
          const std::size_t end = std::min(batch.size(), begin + chunk);
          for (std::size_t i = begin; i < end; ++i) {
            SentenceLoss l = sentence_loss_grad(batch[i], params, single_root,
                                                partial_grads[static_cast<std::size_t>(w)]);
            partial_nll[static_cast<std::size_t>(w)] += l.arc_nll_sum + l.label_nll_sum;
            partial_tokens[static_cast<std::size_t>(w)] += l.tokens;
          }
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (std::thread& t : pool) t.join();
    auto total_views = tensor_views(grad);
    for (int w = 0; w < workers; ++w) {
      if (errors[static_cast<std::size_t>(w)]) std::rethrow_exception(errors[static_cast<std::size_t>(w)]);
      nll_sum += partial_nll[static_cast<std::size_t>(w)];
      tokens += partial_tokens[static_cast<std::size_t>(w)];
      auto part_views = tensor_views(partial_grads[static_cast<std::size_t>(w)]);
      for (std::size_t t = 0; t < total_views.size(); ++t) {
        *total_views[t].second += *part_views[t].second;
      }
    }
  }

  if (tokens == 0) throw DataError("batch contains no tokens");
  for (auto& [name, tensor] : tensor_views(grad)) *tensor /= static_cast<double>(tokens);
  return {nll_sum / static_cast<double>(tokens), tokens};
}

// Scales the gradient so its global L2 norm is at most max_norm; returns
// the pre-clip norm.
inline double clip_global_norm(BiaffineParams& grad, double max_norm) {
  double squared = 0.0;
  for (auto& [name, tensor] : tensor_views(grad)) squared += tensor->squaredNorm();
  const double norm = std::sqrt(squared);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, tensor] : tensor_views(grad)) *tensor *= scale;
  }
  return norm;
}

struct AdamState {
  long step = 0;
  BiaffineParams first_moment;
  BiaffineParams second_moment;

  static AdamState init(const BiaffineParams& params) {
    return {0, zero_like(params), zero_like(params)};
  }
};

inline void adam_update(BiaffineParams& params, const BiaffineParams& grad,
                        AdamState& state, const TrainConfig& config) {
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto p = tensor_views(params);
  auto g = tensor_views(const_cast<BiaffineParams&>(grad));
  auto m = tensor_views(state.first_moment);
  auto v = tensor_views(state.second_moment);
  for (std::size_t t = 0; t < p.size(); ++t) {
    Eigen::MatrixXd& mt = *m[t].second;
    Eigen::MatrixXd& vt = *v[t].second;
    const Eigen::MatrixXd& gt = *g[t].second;
    mt = b1 * mt + (1.0 - b1) * gt;
    vt = b2 * vt + (1.0 - b2) * gt.cwiseProduct(gt);
    p[t].second->array() -=
        config.learning_rate * (mt.array() / correction1) /
        ((vt.array() / correction2).sqrt() + config.adam_epsilon);
  }
}

// Stop when `patience` consecutive validations fail to beat the best LAS.
struct EarlyStopping {
  int patience = 10;
  double best = -1.0;
  int stale = 0;

  // Returns true when this validation sets a new best.
  bool observe(double las) {
    if (las > best) {
      best = las;
      stale = 0;
      return true;
    }
    ++stale;
    return false;
  }

  bool should_stop() const { return stale >= patience; }
};

struct TrainLogEntry {
  long update = 0;
  double train_loss = 0.0;  // mean batch loss since the previous validation
  double dev_las = 0.0;
};

struct TrainResult {
  BiaffineParams best;
  double best_las = -1.0;
  long best_update = 0;
  long total_updates = 0;
  std::vector<TrainLogEntry> entries;
};

namespace detail {

// Gold-tokenization LAS of decoded trees against cached gold structure;
// matches eval's gold-mode semantics (all tokens, subtype-stripped labels).
inline double cached_dev_las(const BiaffineParams& params,
                             const std::vector<SentenceExample>& dev,
                             bool single_root) {
  long correct = 0, total = 0;
  for (const SentenceExample& example : dev) {
    NormalizedScores logp = local_normalize(arc_scores(example.word_vectors, params));
    std::vector<int> heads = mst_decode(logp, single_root);
    LabelScores labels = label_scores(example.word_vectors, params);
    std::vector<int> predicted = assign_labels(labels, heads);
    for (std::size_t i = 0; i < heads.size(); ++i) {
      ++total;
      if (heads[i] == example.heads[i] &&
          universal_relation(params.labels[static_cast<std::size_t>(predicted[i])]) ==
              universal_relation(example.gold_rels[i])) {
        ++correct;
      }
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

inline std::vector<SentenceExample> build_examples(
    const std::vector<Sentence>& corpus, const SubwordVocab& vocab,
    const EmbeddingProvider& provider, const std::vector<std::string>* inventory,
    bool single_root, const char* which) {
  std::vector<SentenceExample> examples;
  examples.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Sentence& s = corpus[i];
    if (s.tokens.empty()) {
      throw DataError(std::string(which) + " sentence " + std::to_string(i + 1) +
                      " has no tokens");
    }
    std::vector<std::string> violations = validate_tree(s, single_root);
    if (!violations.empty()) {
      throw DataError(std::string(which) + " sentence \"" + s.sent_id +
                      "\" is not a valid tree: " + violations.front());
    }
    SentenceExample example;
    example.word_vectors = pooled_word_vectors(s, vocab, provider);
    example.heads = gold_heads(s);
    if (inventory) example.label_ids = label_ids_for(s, *inventory);
    for (const Token& t : s.tokens) example.gold_rels.push_back(t.deprel);
    examples.push_back(std::move(example));
  }
  return examples;
}

}  // namespace detail

inline TrainResult train(const TrainConfig& config,
                         const std::vector<Sentence>& train_set,
                         const std::vector<Sentence>& dev_set,
                         const SubwordVocab& vocab,
                         const EmbeddingProvider& provider) {
  config.validate();
  if (train_set.empty() || dev_set.empty()) {
    throw DataError("training needs non-empty train and dev sets");
  }

  std::vector<std::string> inventory = collect_label_inventory(train_set);
  // Embedding and validation pass; provider gaps surface here, before any
  // update happens.
  std::vector<SentenceExample> train_examples = detail::build_examples(
      train_set, vocab, provider, &inventory, config.single_root, "train");
  std::vector<SentenceExample> dev_examples = detail::build_examples(
      dev_set, vocab, provider, nullptr, config.single_root, "dev");

  BiaffineConfig model_config{provider.dim(), config.arc_dim, config.label_dim};
  BiaffineParams params = init_params(model_config, inventory, config.seed);
  AdamState adam = AdamState::init(params);
  EarlyStopping stopping{config.patience};
  SplitMix64 shuffle_rng(mix64(config.seed ^ 0x7261696e5f726e67ULL));

  TrainResult result;
  result.best = params;

  std::vector<std::size_t> order(train_examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  BiaffineParams grad = zero_like(params);
  std::vector<SentenceExample> batch;
  long update = 0;
  double loss_since_eval = 0.0;
  long batches_since_eval = 0;
  bool done = false;

  auto validate_now = [&]() {
    const double las = detail::cached_dev_las(params, dev_examples, config.single_root);
    const double mean_loss =
        batches_since_eval == 0 ? 0.0 : loss_since_eval / static_cast<double>(batches_since_eval);
    result.entries.push_back({update, mean_loss, las});
    loss_since_eval = 0.0;
    batches_since_eval = 0;
    if (stopping.observe(las)) {
      result.best = params;
      result.best_las = las;
      result.best_update = update;
    }
    return stopping.should_stop();
  };

  while (!done) {
    deterministic_shuffle(order, shuffle_rng);
    for (std::size_t start = 0; start < order.size() && !done;
         start += static_cast<std::size_t>(config.batch_size)) {
      batch.clear();
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_examples[order[i]]);

      BatchLoss batch_loss =
          batch_loss_grad(batch, params, config.single_root, config.threads, grad);
      clip_global_norm(grad, config.clip_norm);
      adam_update(params, grad, adam, config);
      ++update;
      loss_since_eval += batch_loss.loss;
      ++batches_since_eval;

      if (update % config.eval_every == 0) {
        if (validate_now()) done = true;
      }
      if (update >= config.max_updates && !done) {
        if (update % config.eval_every != 0) validate_now();
        done = true;
      }
    }
  }
  result.total_updates = update;
  if (result.best_las < 0.0) {
    // No validation improved on the initial sentinel; keep final params.
    result.best = params;
    result.best_las = 0.0;
    result.best_update = update;
  }
  return result;
}

// Tab-separated training log with a config provenance header.
inline std::string render_train_log(const TrainConfig& config,
                                    const TrainResult& result) {
  std::string out = "# udparse training log\n";
  for (const auto& [key, value] : config.to_kv()) {
    out += "# " + key + "=" + value + "\n";
  }
  out += "# best_las=" + format_double(result.best_las) + "\n";
  out += "# best_update=" + std::to_string(result.best_update) + "\n";
  out += "# total_updates=" + std::to_string(result.total_updates) + "\n";
  out += "update\ttrain_loss\tdev_LAS\n";
  for (const TrainLogEntry& e : result.entries) {
    out += std::to_string(e.update) + "\t" + format_double(e.train_loss) + "\t" +
           format_double(e.dev_las) + "\n";
  }
  return out;
}

// Fills HEAD and DEPREL from decoding; every other column is copied.
inline std::vector<Sentence> parse_sentences(const BiaffineParams& params,
                                             const SubwordVocab& vocab,
                                             const EmbeddingProvider& provider,
                                             std::vector<Sentence> sentences,
                                             bool single_root) {
  if (provider.dim() != params.config.input_dim) {
    throw DataError("provider dimension " + std::to_string(provider.dim()) +
                    " does not match checkpoint input_dim " +
                    std::to_string(params.config.input_dim));
  }
  for (Sentence& s : sentences) {
    if (s.tokens.empty()) continue;
    Eigen::MatrixXd vectors = pooled_word_vectors(s, vocab, provider);
    NormalizedScores logp = local_normalize(arc_scores(vectors, params));
    std::vector<int> heads = mst_decode(logp, single_root);
    std::vector<int> labels = assign_labels(label_scores(vectors, params), heads);
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      s.tokens[i].head = heads[i];
      s.tokens[i].deprel = params.labels[static_cast<std::size_t>(labels[i])];
    }
  }
  return sentences;
}

}  // namespace udparse
