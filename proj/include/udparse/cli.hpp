// Batch command-line front door. Subcommands: train, parse, evaluate,
// analyze, mix, oracle. Exit codes: 0 success, 1 usage error, 2 data
// error; diagnostics go to stderr.
#pragma once

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "udparse/analysis.hpp"
#include "udparse/checkpoint.hpp"
#include "udparse/decoder.hpp"
#include "udparse/embeddings.hpp"
#include "udparse/error.hpp"
#include "udparse/eval.hpp"
#include "udparse/mtt.hpp"
#include "udparse/oracle.hpp"
#include "udparse/scorer.hpp"
#include "udparse/subword.hpp"
#include "udparse/trainer.hpp"
#include "udparse/treebank.hpp"
#include "udparse/util.hpp"

namespace udparse {
namespace cli {

// Flag combinations that cannot be executed; reported as usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProviderOptions {
  std::string embeddings_path;
  int pseudo_dim = 768;
  std::uint64_t pseudo_seed = 1;
};

inline void add_provider_flags(CLI::App* cmd, ProviderOptions& opts) {
  cmd->add_option("--embeddings", opts.embeddings_path,
                  "embedding table file (EMB v1); default is the pseudo-random backend");
  cmd->add_option("--pseudo-dim", opts.pseudo_dim,
                  "dimensionality of the pseudo-random backend");
  cmd->add_option("--pseudo-seed", opts.pseudo_seed,
                  "seed of the pseudo-random backend");
}

inline std::shared_ptr<EmbeddingProvider> make_provider(const ProviderOptions& opts) {
  if (!opts.embeddings_path.empty()) {
    return load_embedding_file(opts.embeddings_path);
  }
  return std::make_shared<PseudoRandomProvider>(opts.pseudo_seed, opts.pseudo_dim);
}

inline void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

// One whitespace-tokenized sentence per non-empty line.
inline std::vector<Sentence> sentences_from_text(std::istream& in) {
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    Sentence s;
    s.sent_id = "s" + std::to_string(out.size() + 1);
    s.raw_text = line;
    s.comments.push_back("# sent_id = " + s.sent_id);
    s.comments.push_back("# text = " + line);
    int index = 0;
    for (const std::string& form : split_ws(line)) {
      Token t;
      t.index = ++index;
      t.form = form;
      s.tokens.push_back(std::move(t));
    }
    assign_char_spans(s);
    out.push_back(std::move(s));
  }
  return out;
}

// "SCORES v1 n=N" followed by n+1 rows of n raw scores; "-inf" marks
// banned arcs.
inline ScoreMatrix parse_scores_file(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("scores file has no header");
  std::vector<std::string> head = split_ws(line);
  if (head.size() != 3 || head[0] != "SCORES" || head[1] != "v1" ||
      head[2].substr(0, 2) != "n=") {
    throw ParseError(1, "expected header \"SCORES v1 n=N\"");
  }
  const int n = static_cast<int>(parse_integer(std::string_view(head[2]).substr(2), 1));
  if (n < 1) throw ParseError(1, "n must be >= 1");
  ScoreMatrix scores(n);
  for (int h = 0; h <= n; ++h) {
    if (!std::getline(in, line)) throw ParseError("scores file ends early");
    std::vector<std::string> fields = split_ws(line);
    if (static_cast<int>(fields.size()) != n) {
      throw ParseError(static_cast<std::size_t>(h) + 2,
                       "expected " + std::to_string(n) + " values");
    }
    for (int c = 1; c <= n; ++c) {
      const std::string& f = fields[static_cast<std::size_t>(c) - 1];
      double v;
      if (f == "-inf") {
        v = kNegInf;
      } else {
        v = parse_double(f, static_cast<std::size_t>(h) + 2);
      }
      scores.at(h, c) = (h == c) ? kNegInf : v;
    }
  }
  return scores;
}

inline std::string heads_to_string(const std::vector<int>& heads) {
  std::string out;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(heads[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand bodies

struct TrainArgs {
  std::string config_path;
  std::string train_path, dev_path, vocab_path;
  std::string checkpoint_out = "model.ckpt";
  std::string log_out;
  ProviderOptions provider;
};

inline int run_train(const TrainArgs& args, const TrainConfig& config) {
  if (args.train_path.empty() || args.dev_path.empty() || args.vocab_path.empty()) {
    throw UsageError("train needs --train, --dev and --vocab");
  }
  SubwordVocab vocab = SubwordVocab::load(args.vocab_path);
  std::shared_ptr<EmbeddingProvider> provider = make_provider(args.provider);
  std::vector<Sentence> train_set = load_conllu_file(args.train_path);
  std::vector<Sentence> dev_set = load_conllu_file(args.dev_path);
  ensure_sent_ids(train_set);
  ensure_sent_ids(dev_set);

  TrainResult result = train(config, train_set, dev_set, vocab, *provider);

  save_checkpoint(args.checkpoint_out, result.best);
  std::string config_text;
  for (const auto& [key, value] : config.to_kv()) config_text += key + "=" + value + "\n";
  write_text_file(args.checkpoint_out + ".config", config_text);
  const std::string log_path =
      args.log_out.empty() ? args.checkpoint_out + ".log" : args.log_out;
  write_text_file(log_path, render_train_log(config, result));

  std::cout << "checkpoint\t" << args.checkpoint_out << '\n';
  std::cout << "log\t" << log_path << '\n';
  std::cout << "best_LAS\t" << format_percent(result.best_las) << '\n';
  std::cout << "best_update\t" << result.best_update << '\n';
  std::cout << "total_updates\t" << result.total_updates << '\n';
  return 0;
}

struct ParseArgs {
  std::string checkpoint_path, vocab_path;
  std::string input_path;
  std::string output_path;
  bool text_input = false;
  ProviderOptions provider;
  bool single_root = true;
};

inline int run_parse(const ParseArgs& args) {
  if (args.checkpoint_path.empty() || args.vocab_path.empty()) {
    throw UsageError("parse needs --checkpoint and --vocab");
  }
  BiaffineParams params = load_checkpoint(args.checkpoint_path);
  SubwordVocab vocab = SubwordVocab::load(args.vocab_path);
  std::shared_ptr<EmbeddingProvider> provider = make_provider(args.provider);

  std::vector<Sentence> sentences;
  if (args.text_input) {
    if (args.input_path.empty()) {
      sentences = sentences_from_text(std::cin);
    } else {
      std::ifstream in(args.input_path, std::ios::binary);
      if (!in) throw DataError("cannot open file: " + args.input_path);
      sentences = sentences_from_text(in);
    }
  } else if (args.input_path.empty()) {
    sentences = parse_conllu(std::cin);
  } else {
    sentences = load_conllu_file(args.input_path);
  }
  ensure_sent_ids(sentences);

  std::vector<Sentence> parsed =
      parse_sentences(params, vocab, *provider, std::move(sentences), args.single_root);
  write_or_print(args.output_path, write_conllu(parsed));
  return 0;
}

struct EvaluateArgs {
  std::string gold_path, system_path;
  std::string mode = "gold";
  bool json = false;
};

inline int run_evaluate(const EvaluateArgs& args) {
  EvalMode mode;
  if (args.mode == "gold") {
    mode = EvalMode::gold;
  } else if (args.mode == "raw") {
    mode = EvalMode::raw;
  } else {
    throw UsageError("--mode must be gold or raw");
  }
  std::vector<Sentence> gold = load_conllu_file(args.gold_path);
  std::vector<Sentence> system = load_conllu_file(args.system_path);
  Metrics m = score(gold, system, mode);
  if (args.json) {
    nlohmann::json j;
    j["uas"] = {{"precision", m.uas_precision}, {"recall", m.uas_recall}, {"f1", m.uas_f1}};
    j["las"] = {{"precision", m.las_precision}, {"recall", m.las_recall}, {"f1", m.las_f1}};
    j["aligned"] = m.aligned_count;
    j["gold_tokens"] = m.gold_count;
    j["system_tokens"] = m.system_count;
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << format_metrics(m);
  }
  return 0;
}

struct AnalyzeArgs {
  std::string manifest_path;
  std::string output_path;
  std::string long_output_path;
};

inline int run_analyze(const AnalyzeArgs& args) {
  KeyValueFile kv = KeyValueFile::load(args.manifest_path);
  auto require = [&kv](const char* key) {
    auto v = kv.get(key);
    if (!v) throw ParseError(std::string("analyze manifest needs ") + key + "=");
    return *v;
  };
  SubwordVocab vocab = SubwordVocab::load(require("vocab"));
  std::vector<Sentence> train_corpus = load_conllu_file(require("train_corpus"));
  TypologyTable typology = TypologyTable::load(require("typology"));
  std::vector<std::string> train_langs;
  for (const std::string& l : split(require("train_langs"), ',')) {
    if (!l.empty()) train_langs.push_back(l);
  }
  if (train_langs.empty()) throw ParseError("train_langs lists no languages");
  EvalMode mode = EvalMode::gold;
  if (auto v = kv.get("mode")) {
    if (*v == "raw") {
      mode = EvalMode::raw;
    } else if (*v != "gold") {
      throw ParseError("mode must be gold or raw");
    }
  }

  std::vector<TransferRecord> records;
  for (const std::string& value : kv.get_all("record")) {
    std::vector<std::string> fields = split_ws(value);
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError("record needs \"language gold system [in_family]\", got \"" +
                       value + "\"");
    }
    TransferRecord r;
    r.language = fields[0];
    std::vector<Sentence> gold = load_conllu_file(fields[1]);
    std::vector<Sentence> system = load_conllu_file(fields[2]);
    r.las = score(gold, system, mode).las_f1;
    r.tau = tau(train_corpus, gold, vocab);
    r.eta = eta(gold, vocab);
    r.sigma_bar = typology.sigma_bar_for(r.language, train_langs);
    r.in_family = fields.size() == 4 && fields[3] == "1";
    records.push_back(std::move(r));
  }
  write_or_print(args.output_path, emit_report(records));
  if (!args.long_output_path.empty()) {
    write_text_file(args.long_output_path, emit_report_long(records));
  }
  return 0;
}

struct MixArgs {
  std::string spec_path;
  std::string output_path;
};

inline int run_mix(const MixArgs& args) {
  MixSpec spec = MixSpec::from_kv(KeyValueFile::load(args.spec_path));
  MixResult result = mix_treebanks(spec);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << '\n';
  write_or_print(args.output_path, write_conllu(result.corpus));
  return 0;
}

struct OracleArgs {
  std::string scores_path;
  int random_n = 0;
  std::uint64_t random_seed = 1;
  bool single_root = true;
};

inline int run_oracle(const OracleArgs& args) {
  ScoreMatrix raw;
  if (!args.scores_path.empty()) {
    std::ifstream in(args.scores_path, std::ios::binary);
    if (!in) throw DataError("cannot open scores file: " + args.scores_path);
    raw = parse_scores_file(in);
  } else if (args.random_n >= 1) {
    raw = ScoreMatrix(args.random_n);
    SplitMix64 rng(args.random_seed);
    for (int c = 1; c <= args.random_n; ++c) {
      for (int h = 0; h <= args.random_n; ++h) {
        if (h != c) raw.at(h, c) = rng.next_in(-2.0, 2.0);
      }
    }
  } else {
    throw UsageError("oracle needs --scores FILE or --random-n N");
  }

  NormalizedScores logp = local_normalize(raw);
  const double z_enum = brute_force_log_partition(logp, args.single_root);
  const double z_det = log_partition(logp, args.single_root);
  std::vector<int> best_enum = brute_force_best_tree(logp, args.single_root);
  std::vector<int> best_cle = mst_decode(logp, args.single_root);
  Eigen::MatrixXd mu_enum = brute_force_marginals(logp, args.single_root);
  Eigen::MatrixXd mu_det = arc_marginals(logp, args.single_root);

  std::cout << "n\t" << logp.word_count() << '\n';
  std::cout << "single_root\t" << (args.single_root ? "true" : "false") << '\n';
  std::cout << "log_partition_enumeration\t" << format_double(z_enum) << '\n';
  std::cout << "log_partition_determinant\t" << format_double(z_det) << '\n';
  std::cout << "log_partition_abs_diff\t" << format_double(std::abs(z_enum - z_det)) << '\n';
  std::cout << "best_tree_enumeration\t" << heads_to_string(best_enum) << '\n';
  std::cout << "best_tree_cle\t" << heads_to_string(best_cle) << '\n';
  std::cout << "best_tree_enumeration_score\t"
            << format_double(tree_score(logp, best_enum)) << '\n';
  std::cout << "best_tree_cle_score\t" << format_double(tree_score(logp, best_cle)) << '\n';
  std::cout << "marginal_max_abs_diff\t"
            << format_double((mu_enum - mu_det).cwiseAbs().maxCoeff()) << '\n';
  return 0;
}

}  // namespace cli

// Entry point shared by the binary and the tests.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"universal dependency parsing toolkit"};
  app.require_subcommand(1);

  cli::TrainArgs train_args;
  TrainConfig train_config;
  CLI::App* train_cmd = app.add_subcommand("train", "train a parser");
  train_cmd->add_option("--config", train_args.config_path, "key=value training config file");
  train_cmd->add_option("--train", train_args.train_path, "training CoNLL-U file");
  train_cmd->add_option("--dev", train_args.dev_path, "development CoNLL-U file");
  train_cmd->add_option("--vocab", train_args.vocab_path, "subword vocabulary file");
  train_cmd->add_option("--checkpoint-out", train_args.checkpoint_out, "checkpoint output path");
  train_cmd->add_option("--log-out", train_args.log_out, "training log output path");
  cli::add_provider_flags(train_cmd, train_args.provider);
  double lr_flag = 0;
  long eval_every_flag = 0, max_updates_flag = 0;
  int arc_dim_flag = 0, label_dim_flag = 0, patience_flag = 0, batch_flag = 0, threads_flag = 0;
  std::uint64_t seed_flag = 0;
  double clip_flag = -1;
  bool train_single_root = true;
  train_cmd->add_option("--learning-rate", lr_flag, "Adam learning rate");
  train_cmd->add_option("--arc-dim", arc_dim_flag, "arc projection size");
  train_cmd->add_option("--label-dim", label_dim_flag, "label projection size");
  train_cmd->add_option("--eval-every", eval_every_flag, "updates between validations");
  train_cmd->add_option("--patience", patience_flag, "stagnant validations before stopping");
  train_cmd->add_option("--batch-size", batch_flag, "sentences per update");
  train_cmd->add_option("--seed", seed_flag, "run seed");
  train_cmd->add_option("--max-updates", max_updates_flag, "hard cap on updates");
  train_cmd->add_option("--clip-norm", clip_flag, "gradient clipping norm (0 disables)");
  train_cmd->add_option("--threads", threads_flag, "gradient worker threads");
  CLI::Option* train_root_flag =
      train_cmd->add_flag("--single-root,!--multi-root", train_single_root,
                          "constrain trees to one ROOT child");

  cli::ParseArgs parse_args;
  CLI::App* parse_cmd = app.add_subcommand("parse", "parse sentences with a checkpoint");
  parse_cmd->add_option("--checkpoint", parse_args.checkpoint_path, "checkpoint file")->required();
  parse_cmd->add_option("--vocab", parse_args.vocab_path, "subword vocabulary file")->required();
  parse_cmd->add_option("--input", parse_args.input_path, "input file (default stdin)");
  parse_cmd->add_option("--output", parse_args.output_path, "output file (default stdout)");
  parse_cmd->add_flag("--text", parse_args.text_input,
                      "input is raw text, one whitespace-tokenized sentence per line");
  parse_cmd->add_flag("--single-root,!--multi-root", parse_args.single_root,
                      "constrain trees to one ROOT child");
  cli::add_provider_flags(parse_cmd, parse_args.provider);

  cli::EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a system file against gold");
  eval_cmd->add_option("gold", eval_args.gold_path, "gold CoNLL-U file")->required();
  eval_cmd->add_option("system", eval_args.system_path, "system CoNLL-U file")->required();
  eval_cmd->add_option("--mode", eval_args.mode, "gold or raw tokenization");
  eval_cmd->add_flag("--json", eval_args.json, "emit structured JSON instead of TSV");

  cli::AnalyzeArgs analyze_args;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "compute transfer metrics");
  analyze_cmd->add_option("manifest", analyze_args.manifest_path, "analysis manifest file")
      ->required();
  analyze_cmd->add_option("--output", analyze_args.output_path, "report output (default stdout)");
  analyze_cmd->add_option("--long-output", analyze_args.long_output_path,
                          "long-format plot table output");

  cli::MixArgs mix_args;
  CLI::App* mix_cmd = app.add_subcommand("mix", "sample a word-budgeted training mix");
  mix_cmd->add_option("spec", mix_args.spec_path, "mix spec file")->required();
  mix_cmd->add_option("--output", mix_args.output_path, "output file (default stdout)");

  cli::OracleArgs oracle_args;
  CLI::App* oracle_cmd =
      app.add_subcommand("oracle", "brute-force verification of partition/decoding (n <= 8)");
  oracle_cmd->add_option("--scores", oracle_args.scores_path, "raw scores file (SCORES v1)");
  oracle_cmd->add_option("--random-n", oracle_args.random_n, "generate a random instance");
  oracle_cmd->add_option("--random-seed", oracle_args.random_seed, "seed for --random-n");
  oracle_cmd->add_flag("--single-root,!--multi-root", oracle_args.single_root,
                       "constrain trees to one ROOT child");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) {
      TrainConfig config;
      if (!train_args.config_path.empty()) {
        config = TrainConfig::from_kv(KeyValueFile::load(train_args.config_path));
      }
      if (train_cmd->count("--learning-rate")) config.learning_rate = lr_flag;
      if (train_cmd->count("--arc-dim")) config.arc_dim = arc_dim_flag;
      if (train_cmd->count("--label-dim")) config.label_dim = label_dim_flag;
      if (train_cmd->count("--eval-every")) config.eval_every = eval_every_flag;
      if (train_cmd->count("--patience")) config.patience = patience_flag;
      if (train_cmd->count("--batch-size")) config.batch_size = batch_flag;
      if (train_cmd->count("--seed")) config.seed = seed_flag;
      if (train_cmd->count("--max-updates")) config.max_updates = max_updates_flag;
      if (train_cmd->count("--clip-norm")) config.clip_norm = clip_flag;
      if (train_cmd->count("--threads")) config.threads = threads_flag;
      if (train_root_flag->count()) config.single_root = train_single_root;
      config.validate();
      return cli::run_train(train_args, config);
    }
    if (parse_cmd->parsed()) return cli::run_parse(parse_args);
    if (eval_cmd->parsed()) return cli::run_evaluate(eval_args);
    if (analyze_cmd->parsed()) return cli::run_analyze(analyze_args);
    if (mix_cmd->parsed()) return cli::run_mix(mix_args);
    if (oracle_cmd->parsed()) return cli::run_oracle(oracle_args);
  } catch (const cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace udparse
