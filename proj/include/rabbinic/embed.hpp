#pragma once

// Static skipgram embeddings (negative sampling), word2vec text files, and
// externally computed contextual vectors.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rabbinic/common.hpp"
#include "rabbinic/hebtext.hpp"
#include "rabbinic/matrix.hpp"

namespace rabbinic::embed {

/// Word -> dense vector. Input vectors are the embeddings; output vectors
/// exist only on freshly trained tables.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(std::vector<std::string> words, Matrix input, Matrix output = Matrix())
      : words_(std::move(words)), input_(std::move(input)), output_(std::move(output)) {
    if (input_.rows() != static_cast<Eigen::Index>(words_.size())) {
      throw Error("embedding table: " + std::to_string(words_.size()) + " words but " +
                  std::to_string(input_.rows()) + " vectors");
    }
    if (input_.cols() == 0 && !words_.empty()) throw Error("embedding table: dim must be positive");
    if (output_.size() != 0 && (output_.rows() != input_.rows() || output_.cols() != input_.cols())) {
      throw Error("embedding table: output vectors have the wrong shape");
    }
    if (!input_.allFinite() || !output_.allFinite()) throw Error("embedding table: non-finite value");
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], i).second) throw Error("embedding table: duplicate word '" + words_[i] + "'");
    }
  }

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(input_.cols()); }
  const std::vector<std::string>& words() const { return words_; }
  const Matrix& input_vectors() const { return input_; }
  const Matrix& output_vectors() const { return output_; }

  std::optional<std::size_t> index_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Row view of a word's embedding.
  auto vector(std::size_t i) const { return input_.row(static_cast<Eigen::Index>(i)); }

  double cosine(const std::string& a, const std::string& b) const {
    const auto ia = index_of(a);
    const auto ib = index_of(b);
    if (!ia || !ib) throw Error("cosine: word not in table");
    const auto va = vector(*ia);
    const auto vb = vector(*ib);
    const double denom = va.norm() * vb.norm();
    return denom == 0 ? 0.0 : va.dot(vb) / denom;
  }

  bool operator==(const EmbeddingTable& o) const {
    return words_ == o.words_ && input_ == o.input_ && output_.size() == o.output_.size() &&
           (output_.size() == 0 || output_ == o.output_);
  }

 private:
  std::vector<std::string> words_;
  Matrix input_;
  Matrix output_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SkipgramConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::uint64_t min_frequency = 7;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 42;
};

struct WordVocab {
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
};

/// Words with count >= min_frequency, by descending count then bytewise.
inline WordVocab build_word_vocab(const std::vector<std::vector<std::string>>& sentences,
                                  std::uint64_t min_frequency) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& s : sentences) {
    for (const auto& w : s) ++counts[w];
  }
  if (counts.empty()) throw Error("build_word_vocab: empty corpus");
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [w, c] : counts) {
    if (c >= min_frequency) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.empty()) {
    warn("build_word_vocab: no word reaches min_frequency " + std::to_string(min_frequency) +
         "; vocabulary is empty");
  }
  WordVocab v;
  for (auto& [w, c] : kept) {
    v.words.push_back(w);
    v.counts.push_back(c);
  }
  return v;
}

/// Pretokenizes raw lines (normalize + abbreviation-aware split).
inline std::vector<std::vector<std::string>> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(hebtext::token_texts(l));
  return out;
}

inline WordVocab build_word_vocab(const std::vector<std::string>& lines, std::uint64_t min_frequency) {
  return build_word_vocab(tokenize_lines(lines), min_frequency);
}

// ---------------------------------------------------------------------------
// SGNS objective

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// loss = -log s(u.v) - sum_j log s(-u.n_j), with gradients w.r.t. the
/// center vector u, the context output vector v and each negative n_j.
struct SgnsGradient {
  double loss = 0;
  Vector d_center;
  Vector d_context;
  std::vector<Vector> d_negatives;
};

inline SgnsGradient sgns_loss_grad(const Vector& center, const Vector& context, const std::vector<Vector>& negatives) {
  if (center.size() != context.size()) throw ContractError("sgns_loss_grad: dim mismatch");
  SgnsGradient g;
  const double pos = center.dot(context);
  g.loss = -log_sigmoid(pos);
  const double g_pos = sigmoid(pos) - 1.0;
  g.d_center = g_pos * context;
  g.d_context = g_pos * center;
  for (const auto& n : negatives) {
    if (n.size() != center.size()) throw ContractError("sgns_loss_grad: dim mismatch");
    const double s = center.dot(n);
    g.loss -= log_sigmoid(-s);
    const double g_neg = sigmoid(s);
    g.d_center += g_neg * n;
    g.d_negatives.push_back(g_neg * center);
  }
  return g;
}

struct SkipgramResult {
  EmbeddingTable table;
  std::vector<double> epoch_losses;  // mean per (center, context) pair
};

/// Trains on pretokenized sentences. Out-of-vocabulary tokens are dropped
/// before windowing. Learning rate decays linearly to 1e-4 of its start.
inline SkipgramResult train_skipgram(const std::vector<std::vector<std::string>>& sentences,
                                     const SkipgramConfig& config) {
  if (config.dim == 0) throw Error("train_skipgram: dim must be positive");
  if (config.window == 0 || config.negatives == 0 || config.epochs == 0 || config.min_frequency == 0) {
    throw Error("train_skipgram: window, negatives, epochs and min_frequency must be positive");
  }
  if (!(config.learning_rate > 0)) throw Error("train_skipgram: learning_rate must be positive");
  const WordVocab vocab = build_word_vocab(sentences, config.min_frequency);
  if (vocab.words.empty()) throw Error("train_skipgram: empty vocabulary");

  const auto n_words = static_cast<Eigen::Index>(vocab.words.size());
  const auto dim = static_cast<Eigen::Index>(config.dim);
  std::unordered_map<std::string, int> id;
  for (std::size_t i = 0; i < vocab.words.size(); ++i) id.emplace(vocab.words[i], static_cast<int>(i));

  std::vector<std::vector<int>> corpus;
  std::size_t n_tokens = 0;
  for (const auto& s : sentences) {
    std::vector<int> ids;
    for (const auto& w : s) {
      if (auto it = id.find(w); it != id.end()) ids.push_back(it->second);
    }
    n_tokens += ids.size();
    corpus.push_back(std::move(ids));
  }

  // Unigram^0.75 sampling by inverse CDF.
  std::vector<double> cdf(vocab.counts.size());
  double total = 0;
  for (std::size_t i = 0; i < vocab.counts.size(); ++i) {
    total += std::pow(static_cast<double>(vocab.counts[i]), 0.75);
    cdf[i] = total;
  }
  Rng rng(config.seed);
  auto draw_negative = [&] {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  };

  Matrix input(n_words, dim);
  const double bound = 0.5 / static_cast<double>(config.dim);
  for (Eigen::Index r = 0; r < n_words; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) input(r, c) = rng.uniform(-bound, bound);
  }
  Matrix output = Matrix::Zero(n_words, dim);

  SkipgramResult result;
  const double total_steps = static_cast<double>(config.epochs) * static_cast<double>(std::max<std::size_t>(n_tokens, 1));
  double step = 0;
  const auto window = static_cast<std::ptrdiff_t>(config.window);
  std::vector<int> neg_ids;
  std::vector<Vector> negs;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0;
    std::size_t pairs = 0;
    for (const auto& ids : corpus) {
      const auto len = static_cast<std::ptrdiff_t>(ids.size());
      for (std::ptrdiff_t i = 0; i < len; ++i) {
        const double lr = config.learning_rate * std::max(1e-4, 1.0 - step / total_steps);
        step += 1;
        const int center = ids[static_cast<std::size_t>(i)];
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - window); j <= std::min(len - 1, i + window); ++j) {
          if (j == i) continue;
          const int context = ids[static_cast<std::size_t>(j)];
          neg_ids.clear();
          negs.clear();
          for (std::size_t k = 0; k < config.negatives; ++k) {
            const int n = draw_negative();
            if (n == context) continue;
            neg_ids.push_back(n);
            negs.push_back(output.row(n).transpose());
          }
          const auto g = sgns_loss_grad(input.row(center).transpose(), output.row(context).transpose(), negs);
          input.row(center) -= lr * g.d_center.transpose();
          output.row(context) -= lr * g.d_context.transpose();
          for (std::size_t k = 0; k < neg_ids.size(); ++k) output.row(neg_ids[k]) -= lr * g.d_negatives[k].transpose();
          const double loss = g.loss;
          loss_sum += loss;
          ++pairs;
        }
      }
    }
    result.epoch_losses.push_back(pairs ? loss_sum / static_cast<double>(pairs) : 0.0);
  }
  result.table = EmbeddingTable(vocab.words, std::move(input), std::move(output));
  return result;
}

inline SkipgramResult train_skipgram(const std::vector<std::string>& lines, const SkipgramConfig& config) {
  return train_skipgram(tokenize_lines(lines), config);
}

// ---------------------------------------------------------------------------
// word2vec text format: "<count> <dim>" then "<word> v1 ... vdim" per line.

inline void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << table.size() << ' ' << table.dim() << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words()[i];
    const auto v = table.vector(i);
    for (Eigen::Index c = 0; c < v.size(); ++c) out << ' ' << format_float(v(c));
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

namespace detail {
inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_size(std::string_view s, std::size_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && !s.empty();
}
}  // namespace detail

inline EmbeddingTable parse_embeddings(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(source + ": empty embeddings file");
  ++line_no;
  const auto header = detail::split_ws(line);
  std::size_t count = 0, dim = 0;
  if (header.size() != 2 || !detail::parse_size(header[0], count) || !detail::parse_size(header[1], dim)) {
    throw Error(source + ":1: header must be '<count> <dim>'");
  }
  if (dim == 0) throw Error(source + ":1: dim must be positive");
  std::vector<std::string> words;
  words.reserve(count);
  Matrix m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (words.size() == count) throw Error(where + "more rows than the header count " + std::to_string(count));
    if (fields.size() != dim + 1) {
      throw Error(where + "expected " + std::to_string(dim) + " values, found " + std::to_string(fields.size() - 1));
    }
    const std::string word(fields[0]);
    if (!seen.emplace(word, line_no).second) throw Error(where + "duplicate word '" + word + "'");
    const auto r = static_cast<Eigen::Index>(words.size());
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0;
      if (!parse_double(fields[c + 1], v) || !std::isfinite(v)) {
        throw Error(where + "bad number '" + std::string(fields[c + 1]) + "'");
      }
      m(r, static_cast<Eigen::Index>(c)) = v;
    }
    words.push_back(word);
  }
  if (words.size() != count) {
    throw Error(source + ": header promises " + std::to_string(count) + " rows, found " +
                std::to_string(words.size()));
  }
  return EmbeddingTable(std::move(words), std::move(m));
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embeddings " + path);
  return parse_embeddings(in, path);
}

// ---------------------------------------------------------------------------
// Contextual vectors: "sentence_id <TAB> token_index <TAB> v1,v2,...,vd".

struct ContextKey {
  std::string sentence_id;
  std::size_t token_index = 0;
  auto operator<=>(const ContextKey&) const = default;
};

class ContextualVectors {
 public:
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const std::map<ContextKey, std::vector<double>>& entries() const { return vectors_; }

  /// Throws Error on a duplicate key or a dim mismatch.
  void insert(ContextKey key, std::vector<double> v) {
    if (v.empty()) throw Error("contextual vector for " + key.sentence_id + " is empty");
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) {
      throw Error("contextual vector for (" + key.sentence_id + ", " + std::to_string(key.token_index) + ") has dim " +
                  std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    }
    auto name = "(" + key.sentence_id + ", " + std::to_string(key.token_index) + ")";
    if (!vectors_.emplace(std::move(key), std::move(v)).second) throw Error("duplicate contextual key " + name);
  }

  const std::vector<double>* find(const std::string& sentence_id, std::size_t token_index) const {
    auto it = vectors_.find(ContextKey{sentence_id, token_index});
    return it == vectors_.end() ? nullptr : &it->second;
  }

  bool operator==(const ContextualVectors&) const = default;

 private:
  std::size_t dim_ = 0;
  std::map<ContextKey, std::vector<double>> vectors_;
};

inline ContextualVectors parse_contextual(std::istream& in, const std::string& source = "<stream>") {
  ContextualVectors cv;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ": row " + std::to_string(row) + ": ";
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t tab; (tab = rest.find('\t')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, tab));
      rest.remove_prefix(tab + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 3) throw Error(where + "expected 3 tab-separated fields");
    std::size_t index = 0;
    if (fields[0].empty()) throw Error(where + "empty sentence_id");
    if (!detail::parse_size(fields[1], index)) throw Error(where + "bad token_index '" + std::string(fields[1]) + "'");
    std::vector<double> v;
    std::string_view vals = fields[2];
    while (true) {
      const auto comma = vals.find(',');
      const auto field = vals.substr(0, comma);
      double x = 0;
      if (!parse_double(field, x) || !std::isfinite(x)) throw Error(where + "bad number '" + std::string(field) + "'");
      v.push_back(x);
      if (comma == std::string_view::npos) break;
      vals.remove_prefix(comma + 1);
    }
    try {
      cv.insert(ContextKey{std::string(fields[0]), index}, std::move(v));
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  if (cv.size() == 0) throw Error(source + ": no contextual vectors");
  return cv;
}

inline ContextualVectors load_contextual(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open contextual vectors " + path);
  return parse_contextual(in, path);
}

inline void save_contextual(const ContextualVectors& cv, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (const auto& [key, v] : cv.entries()) {
    out << key.sentence_id << '\t' << key.token_index << '\t';
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_double(v[i]);
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

// ---------------------------------------------------------------------------

/// The k tokens on each side of the homograph (the homograph itself is
/// excluded), looked up in `table`. Out-of-vocabulary tokens and positions
/// past either sentence edge are zero rows. Result is 2k x dim.
inline Matrix context_window(const std::vector<std::string>& tokens, std::size_t homograph_index, std::size_t k,
                             const EmbeddingTable& table) {
  if (homograph_index >= tokens.size()) {
    throw ContractError("context_window: homograph index " + std::to_string(homograph_index) + " out of range");
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(2 * k), static_cast<Eigen::Index>(table.dim()));
  const auto h = static_cast<std::ptrdiff_t>(homograph_index);
  const auto kk = static_cast<std::ptrdiff_t>(k);
  for (std::ptrdiff_t slot = 0; slot < 2 * kk; ++slot) {
    const std::ptrdiff_t pos = slot < kk ? h - kk + slot : h + 1 + (slot - kk);
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(tokens.size())) continue;
    if (auto i = table.index_of(tokens[static_cast<std::size_t>(pos)])) out.row(slot) = table.vector(*i);
  }
  return out;
}

}  // namespace rabbinic::embed
