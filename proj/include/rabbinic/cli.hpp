#pragma once

// Command-line front end. run() takes explicit streams so tests can drive it
// in-process. Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rabbinic/challenge.hpp"
#include "rabbinic/common.hpp"
#include "rabbinic/embed.hpp"
#include "rabbinic/wordpiece.hpp"

namespace rabbinic::cli {

inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;

namespace detail {

inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path);
  return read_lines(in);
}

inline std::vector<std::string> read_corpora(const std::vector<std::string>& paths) {
  std::vector<std::string> lines;
  for (const auto& p : paths) {
    auto more = read_lines(p);
    lines.insert(lines.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  return lines;
}

/// Routes library warnings to `err` for the lifetime of the guard.
class WarningsTo {
 public:
  explicit WarningsTo(std::ostream& err)
      : previous_(set_warning_handler([&err](std::string_view m) { err << "warning: " << m << '\n'; })) {}
  ~WarningsTo() { set_warning_handler(previous_); }
  WarningsTo(const WarningsTo&) = delete;
  WarningsTo& operator=(const WarningsTo&) = delete;

 private:
  WarningHandler previous_;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace detail

/// Parsed flags for every subcommand; only the chosen one's fields matter.
struct Options {
  // train-vocab
  std::vector<std::string> corpora;
  std::size_t vocab_size = 128000;
  std::uint64_t vocab_min_freq = 1;
  std::string out;
  // tokenize / filter-corpus
  std::string vocab;
  bool no_abbrev = false;
  bool ids = false;
  bool pieces = false;
  std::size_t max_tokens = 128;
  // train-skipgram
  embed::SkipgramConfig skipgram;
  // eval
  std::string dataset;
  std::string method;
  std::string embeddings;
  std::string contextual;
  challenge::EvalConfig eval;
  bool shuffle_labels = false;
  // report
  std::vector<std::string> inputs;
};

inline int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  detail::WarningsTo route(err);
  Options o;
  CLI::App app{"Rabbinic Hebrew tokenization and homograph disambiguation toolkit", "rabbinic"};
  app.require_subcommand(1);

  auto* train_vocab = app.add_subcommand("train-vocab", "Train a wordpiece vocabulary from plain-text corpora");
  train_vocab->add_option("--corpus", o.corpora, "Corpus file, one instance per line (repeatable)")->required();
  train_vocab->add_option("--vocab-size", o.vocab_size, "Target number of pieces")->capture_default_str();
  train_vocab->add_option("--min-freq", o.vocab_min_freq, "Minimum character and pair frequency")
      ->capture_default_str();
  train_vocab->add_option("--out", o.out, "Output vocabulary file")->required();

  auto* tokenize = app.add_subcommand("tokenize", "Tokenize stdin line by line");
  tokenize->add_option("--vocab", o.vocab, "Vocabulary file")->required();
  tokenize->add_flag("--no-abbrev", o.no_abbrev, "Split abbreviation marks like ordinary punctuation");
  auto* ids_flag = tokenize->add_flag("--ids", o.ids, "Print piece ids");
  auto* pieces_flag = tokenize->add_flag("--pieces", o.pieces, "Print piece strings (default)");
  ids_flag->excludes(pieces_flag);

  auto* filter = app.add_subcommand("filter-corpus", "Keep stdin lines that encode to fewer than N tokens");
  filter->add_option("--vocab", o.vocab, "Vocabulary file")->required();
  filter->add_option("--max-tokens", o.max_tokens, "Exclusive limit, counting [CLS] and [SEP]")
      ->capture_default_str();

  auto* skipgram = app.add_subcommand("train-skipgram", "Train skipgram embeddings with negative sampling");
  skipgram->add_option("--corpus", o.corpora, "Corpus file (repeatable)")->required();
  skipgram->add_option("--dim", o.skipgram.dim)->capture_default_str();
  skipgram->add_option("--window", o.skipgram.window)->capture_default_str();
  skipgram->add_option("--negatives", o.skipgram.negatives)->capture_default_str();
  skipgram->add_option("--min-freq", o.skipgram.min_frequency)->capture_default_str();
  skipgram->add_option("--epochs", o.skipgram.epochs)->capture_default_str();
  skipgram->add_option("--lr", o.skipgram.learning_rate)->capture_default_str();
  skipgram->add_option("--seed", o.skipgram.seed)->capture_default_str();
  skipgram->add_option("--out", o.out, "Output word2vec text file")->required();

  auto* eval = app.add_subcommand("eval", "Cross-validate a homograph classifier on a challenge set");
  eval->add_option("--dataset", o.dataset, "Challenge TSV")->required();
  eval->add_option("--method", o.method)->required()->check(CLI::IsMember({"w2v-bilstm", "contextual-mlp"}));
  eval->add_option("--embeddings", o.embeddings, "word2vec text file (w2v-bilstm)");
  eval->add_option("--contextual", o.contextual, "Contextual vector TSV (contextual-mlp)");
  eval->add_option("--folds", o.eval.folds)->capture_default_str();
  eval->add_option("--seed", o.eval.seed)->capture_default_str();
  eval->add_option("--window", o.eval.window, "Context words on each side")->capture_default_str();
  eval->add_option("--lstm-hidden", o.eval.lstm_hidden)->capture_default_str();
  eval->add_option("--mlp-hidden", o.eval.mlp_hidden)->capture_default_str();
  eval->add_option("--epochs", o.eval.train.epochs)->capture_default_str();
  eval->add_option("--batch-size", o.eval.train.batch_size)->capture_default_str();
  eval->add_option("--lr", o.eval.train.learning_rate)->capture_default_str();
  eval->add_flag("--per-fold", o.eval.per_fold, "Average per-fold F1 instead of pooling held-out predictions");
  eval->add_option("--threads", o.eval.threads, "Homographs evaluated in parallel")->capture_default_str();
  eval->add_flag("--shuffle-labels", o.shuffle_labels, "Permute labels first (chance-level control)");
  eval->add_option("--out", o.out, "Output JSON (default: stdout)");

  auto* report = app.add_subcommand("report", "Render eval results as a markdown table");
  report->add_option("--in", o.inputs, "Eval JSON (repeatable; one column each)")->required();
  report->add_option("--out", o.out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
    if (eval->parsed()) {
      if (o.method == "w2v-bilstm" && o.embeddings.empty()) {
        throw detail::UsageError("--embeddings is required for --method w2v-bilstm");
      }
      if (o.method == "contextual-mlp" && o.contextual.empty()) {
        throw detail::UsageError("--contextual is required for --method contextual-mlp");
      }
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  } catch (const detail::UsageError& e) {
    err << e.what() << '\n' << "Run with --help for more information.\n";
    return kUsageError;
  }

  try {
    if (train_vocab->parsed()) {
      wordpiece::TrainerConfig cfg;
      cfg.vocab_size = o.vocab_size;
      cfg.min_frequency = o.vocab_min_freq;
      const auto counts = wordpiece::count_words(detail::read_corpora(o.corpora));
      const auto vocab = wordpiece::train_vocab(counts, cfg);
      wordpiece::save_vocab(vocab, o.out);
      err << "wrote " << vocab.size() << " pieces to " << o.out << '\n';
    } else if (tokenize->parsed()) {
      const auto vocab = wordpiece::load_vocab(o.vocab);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto enc = wordpiece::encode(line, vocab, {.add_specials = false, .abbreviations = !o.no_abbrev});
        for (std::size_t i = 0; i < enc.ids.size(); ++i) {
          if (i) out << ' ';
          if (o.ids) {
            out << enc.ids[i];
          } else {
            out << vocab.piece(enc.ids[i]);
          }
        }
        out << '\n';
      }
    } else if (filter->parsed()) {
      const auto vocab = wordpiece::load_vocab(o.vocab);
      std::size_t total = 0, kept = 0;
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++total;
        if (wordpiece::count_tokens(line, vocab) < o.max_tokens) {
          out << line << '\n';
          ++kept;
        }
      }
      err << "kept " << kept << " of " << total << " lines\n";
    } else if (skipgram->parsed()) {
      const auto result = embed::train_skipgram(detail::read_corpora(o.corpora), o.skipgram);
      for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        err << "epoch " << e + 1 << " loss " << format_double(result.epoch_losses[e]) << '\n';
      }
      embed::save_embeddings(result.table, o.out);
      err << "wrote " << result.table.size() << " vectors to " << o.out << '\n';
    } else if (eval->parsed()) {
      auto set = challenge::load_challenge(o.dataset);
      if (o.shuffle_labels) set = challenge::shuffle_labels(set, o.eval.seed);
      std::optional<embed::EmbeddingTable> table;
      std::optional<embed::ContextualVectors> ctx;
      challenge::Resources res;
      if (!o.embeddings.empty()) {
        table = embed::load_embeddings(o.embeddings);
        res.embeddings = &*table;
      }
      if (!o.contextual.empty()) {
        ctx = embed::load_contextual(o.contextual);
        res.contextual = &*ctx;
      }
      const auto run = challenge::evaluate_method(set, challenge::parse_method(o.method), res, o.eval);
      if (o.out.empty()) {
        out << challenge::to_json(run).dump(2) << '\n';
      } else {
        challenge::save_eval_run(run, o.out);
      }
      for (const auto& r : run.rows) err << r.homograph_id << '\t' << challenge::percent(r.metrics.avg_f1) << '\n';
    } else if (report->parsed()) {
      challenge::EvalReport rep;
      std::map<std::string, int> seen;
      for (const auto& path : o.inputs) {
        const auto r = challenge::load_eval_run(path);
        std::string column = challenge::to_string(r.method);
        if (const int n = ++seen[column]; n > 1) column += " #" + std::to_string(n);
        rep.add(column, r);
      }
      const auto text = challenge::render_report(rep);
      if (o.out.empty()) {
        out << text;
      } else {
        std::ofstream f(o.out, std::ios::binary);
        if (!f || !(f << text)) throw Error("cannot write " + o.out);
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDomainError;
  }
  return kOk;
}

/// Synthetic challenge set, embeddings, contextual vectors and corpus.
inline int run_synth(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  detail::WarningsTo route(err);
  challenge::SynthConfig c;
  std::string out_dir;
  CLI::App app{"Write a synthetic homograph benchmark with a planted signal", "rabbinic-synth"};
  app.add_option("--homographs", c.n_homographs)->capture_default_str();
  app.add_option("--sentences", c.n_sentences, "Per homograph; must be even")->capture_default_str();
  app.add_option("--vocab-size", c.vocab_size, "Filler words")->capture_default_str();
  app.add_option("--dim", c.embedding_dim, "Static embedding dimension")->capture_default_str();
  app.add_option("--contextual-dim", c.contextual_dim)->capture_default_str();
  app.add_option("--seed", c.seed)->capture_default_str();
  app.add_option("--out-dir", out_dir, "Directory for challenge.tsv, embeddings.txt, contextual.tsv, corpus.txt")
      ->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsageError;
  }
  try {
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    const auto data = challenge::synthesize_dataset(c);
    challenge::save_challenge(data.set, (dir / "challenge.tsv").string());
    embed::save_embeddings(data.embeddings, (dir / "embeddings.txt").string());
    embed::save_contextual(data.contextual, (dir / "contextual.tsv").string());
    std::ofstream corpus(dir / "corpus.txt", std::ios::binary);
    for (const auto& [h, entries] : data.set) {
      for (const auto& e : entries) corpus << e.text << '\n';
    }
    if (!corpus) throw Error("cannot write corpus.txt");
    err << "wrote " << challenge::entry_count(data.set) << " entries to " << out_dir << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDomainError;
  }
  return kOk;
}

}  // namespace rabbinic::cli
