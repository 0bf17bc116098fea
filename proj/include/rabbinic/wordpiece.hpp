#pragma once

// WordPiece vocabulary training and greedy longest-match encoding.
//
// Abbreviation marks are ordinary alphabet symbols, so a frequent
// abbreviation that the pretokenizer keeps whole (עכ"ל) can be learned as a
// single piece.

#include <unicode/utf8.h>

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rabbinic/common.hpp"
#include "rabbinic/hebtext.hpp"

namespace rabbinic::wordpiece {

inline constexpr std::string_view kContinuation = "##";
inline constexpr std::array<std::string_view, 5> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;
inline constexpr int kMask = 4;
inline constexpr std::size_t kDefaultMaxWordLength = 100;

inline bool is_continuation(std::string_view piece) {
  return piece.size() > kContinuation.size() && piece.starts_with(kContinuation);
}

inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size();) {
    i = hebtext::detail::decode_at(s, i).next;
    ++n;
  }
  return n;
}

namespace detail {
struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};
using PieceIndex = std::unordered_map<std::string, int, StringHash, std::equal_to<>>;
}  // namespace detail

/// Ordered piece list; index is the id. Immutable after construction.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>(kSpecials.begin(), kSpecials.end())) {}

  /// Throws Error if pieces are duplicated, specials are not at ids 0..4,
  /// or a piece is empty or the bare continuation prefix.
  explicit Vocabulary(std::vector<std::string> pieces, std::size_t max_word_length = kDefaultMaxWordLength)
      : pieces_(std::move(pieces)), max_word_length_(max_word_length) {
    for (std::size_t i = 0; i < kSpecials.size(); ++i) {
      if (i >= pieces_.size() || pieces_[i] != kSpecials[i]) {
        throw Error("vocabulary id " + std::to_string(i) + " must be " + std::string(kSpecials[i]));
      }
    }
    detail::PieceIndex all;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const std::string& p = pieces_[i];
      const int id = static_cast<int>(i);
      if (p.empty()) throw Error("vocabulary id " + std::to_string(i) + " is empty");
      if (p == kContinuation) throw Error("vocabulary id " + std::to_string(i) + " is the bare continuation prefix");
      auto [it, fresh] = all.emplace(p, id);
      if (!fresh) {
        throw Error("vocabulary id " + std::to_string(i) + " duplicates id " + std::to_string(it->second) + " ('" +
                    p + "')");
      }
      if (i < kSpecials.size()) continue;
      if (is_continuation(p)) {
        std::string_view rest = std::string_view(p).substr(kContinuation.size());
        continuation_.emplace(std::string(rest), id);
        max_continuation_chars_ = std::max(max_continuation_chars_, utf8_length(rest));
      } else {
        initial_.emplace(p, id);
        max_initial_chars_ = std::max(max_initial_chars_, utf8_length(p));
      }
    }
  }

  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  std::size_t max_word_length() const { return max_word_length_; }

  std::optional<int> id(std::string_view piece) const {
    if (is_continuation(piece)) return find_continuation(piece.substr(kContinuation.size()));
    for (std::size_t i = 0; i < kSpecials.size(); ++i) {
      if (piece == kSpecials[i]) return static_cast<int>(i);
    }
    return find_initial(piece);
  }

  /// Word-initial piece lookup.
  std::optional<int> find_initial(std::string_view s) const {
    auto it = initial_.find(s);
    if (it == initial_.end()) return std::nullopt;
    return it->second;
  }
  /// Continuation lookup by the text after "##".
  std::optional<int> find_continuation(std::string_view s) const {
    auto it = continuation_.find(s);
    if (it == continuation_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t max_initial_chars() const { return max_initial_chars_; }
  std::size_t max_continuation_chars() const { return max_continuation_chars_; }

  bool operator==(const Vocabulary& o) const { return pieces_ == o.pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::size_t max_word_length_;
  detail::PieceIndex initial_;
  detail::PieceIndex continuation_;
  std::size_t max_initial_chars_ = 0;
  std::size_t max_continuation_chars_ = 0;
};

// ---------------------------------------------------------------------------
// Encoding

/// Greedy longest match. Returns exactly {kUnk} when some position has no
/// matching piece or the word is longer than vocab.max_word_length().
inline std::vector<int> encode_word(std::string_view word, const Vocabulary& vocab) {
  if (word.empty()) throw ContractError("encode_word: empty word");
  std::vector<std::size_t> bounds;  // byte offset of every char boundary
  bounds.reserve(word.size() + 1);
  for (std::size_t i = 0; i < word.size();) {
    bounds.push_back(i);
    i = hebtext::detail::decode_at(word, i).next;
  }
  bounds.push_back(word.size());
  const std::size_t n = bounds.size() - 1;
  if (n > vocab.max_word_length()) return {kUnk};

  std::vector<int> ids;
  std::size_t start = 0;
  while (start < n) {
    const bool initial = start == 0;
    const std::size_t longest = initial ? vocab.max_initial_chars() : vocab.max_continuation_chars();
    std::size_t end = std::min(n, start + longest);
    std::optional<int> found;
    for (; end > start; --end) {
      const auto sub = word.substr(bounds[start], bounds[end] - bounds[start]);
      found = initial ? vocab.find_initial(sub) : vocab.find_continuation(sub);
      if (found) break;
    }
    if (!found) return {kUnk};
    ids.push_back(*found);
    start = end;
  }
  return ids;
}

inline std::vector<std::string> encode_word_pieces(std::string_view word, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : encode_word(word, vocab)) out.push_back(vocab.piece(id));
  return out;
}

/// Concatenates pieces with continuation prefixes removed.
inline std::string decode_pieces(const std::vector<std::string>& pieces) {
  std::string out;
  for (const auto& p : pieces) {
    out += is_continuation(p) ? std::string_view(p).substr(kContinuation.size()) : std::string_view(p);
  }
  return out;
}

/// alignment[i] is the index of the raw token that produced ids[i];
/// [CLS] aligns to -1 and [SEP] to the raw-token count.
struct EncodedText {
  std::vector<int> ids;
  std::vector<std::ptrdiff_t> alignment;
  bool operator==(const EncodedText&) const = default;
};

struct EncodeOptions {
  bool add_specials = false;
  bool abbreviations = true;
};

inline EncodedText encode(std::string_view text, const Vocabulary& vocab, EncodeOptions opts = {}) {
  const auto norm = hebtext::normalize(text);
  const auto tokens = hebtext::pretokenize(norm, {.abbreviations = opts.abbreviations});
  EncodedText out;
  out.ids.reserve(tokens.size() * 2 + 2);
  out.alignment.reserve(tokens.size() * 2 + 2);
  if (opts.add_specials) {
    out.ids.push_back(kCls);
    out.alignment.push_back(-1);
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    for (int id : encode_word(tokens[t].text, vocab)) {
      out.ids.push_back(id);
      out.alignment.push_back(static_cast<std::ptrdiff_t>(t));
    }
  }
  if (opts.add_specials) {
    out.ids.push_back(kSep);
    out.alignment.push_back(static_cast<std::ptrdiff_t>(tokens.size()));
  }
  return out;
}

/// Encoded length including [CLS] and [SEP].
inline std::size_t count_tokens(std::string_view line, const Vocabulary& vocab) {
  return encode(line, vocab, {.add_specials = true}).ids.size();
}

/// Keeps lines whose encoded length is strictly below max_tokens.
inline std::vector<std::string> filter_instances(const std::vector<std::string>& lines, const Vocabulary& vocab,
                                                 std::size_t max_tokens = 128) {
  std::vector<std::string> kept;
  for (const auto& line : lines) {
    if (count_tokens(line, vocab) < max_tokens) kept.push_back(line);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Training

using WordCounts = std::map<std::string, std::uint64_t>;

struct TrainerConfig {
  std::size_t vocab_size = 128000;
  std::uint64_t min_frequency = 1;
  std::size_t max_word_length = kDefaultMaxWordLength;
};

struct Merge {
  std::string left;
  std::string right;
  std::string merged;
  bool operator==(const Merge&) const = default;
};

struct TrainResult {
  Vocabulary vocab;
  std::vector<Merge> merges;
};

/// Counts RawToken texts over corpus lines.
inline WordCounts count_words(const std::vector<std::string>& lines, hebtext::PretokenizeOptions opts = {}) {
  WordCounts counts;
  for (const auto& line : lines) {
    for (auto& w : hebtext::token_texts(line, opts)) ++counts[std::move(w)];
  }
  return counts;
}

/// Splits a word into its initial character and "##"-prefixed continuation
/// characters.
inline std::vector<std::string> split_symbols(std::string_view word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const auto next = hebtext::detail::decode_at(word, i).next;
    std::string sym = i == 0 ? std::string() : std::string(kContinuation);
    sym.append(word.substr(i, next - i));
    out.push_back(std::move(sym));
    i = next;
  }
  return out;
}

inline std::string merge_strings(std::string_view left, std::string_view right) {
  std::string m(left);
  m.append(is_continuation(right) ? right.substr(kContinuation.size()) : right);
  return m;
}

/// True when pair score count_ab / (count_a * count_b) of x is strictly
/// larger than that of y. Cross-multiplied in 128-bit to stay exact.
inline bool score_greater(std::uint64_t ab_x, std::uint64_t a_x, std::uint64_t b_x, std::uint64_t ab_y,
                          std::uint64_t a_y, std::uint64_t b_y) {
  using u128 = unsigned __int128;
  return static_cast<u128>(ab_x) * (static_cast<u128>(a_y) * b_y) >
         static_cast<u128>(ab_y) * (static_cast<u128>(a_x) * b_x);
}

/// Pair-merge WordPiece training. Each step merges the adjacent pair with
/// the highest count(ab) / (count(a) * count(b)) among pairs seen at least
/// min_frequency times. Ties go to the lexicographically smallest merged
/// string, then the smallest left piece. Stops at vocab_size pieces or when
/// no pair remains.
inline TrainResult train(const WordCounts& word_counts, const TrainerConfig& config) {
  if (word_counts.empty()) throw Error("train_vocab: empty corpus");
  if (config.min_frequency == 0) throw Error("train_vocab: min_frequency must be positive");
  for (const auto& [w, c] : word_counts) {
    if (c == 0) throw Error("train_vocab: zero count for word '" + w + "'");
    if (w.empty()) throw Error("train_vocab: empty word");
  }

  // Character frequencies over all positions.
  std::map<std::string, std::uint64_t> char_freq;
  for (const auto& [w, c] : word_counts) {
    if (utf8_length(w) > config.max_word_length) continue;
    for (std::size_t i = 0; i < w.size();) {
      const auto next = hebtext::detail::decode_at(w, i).next;
      char_freq[w.substr(i, next - i)] += c;
      i = next;
    }
  }
  auto char_ok = [&](const std::string& sym) {
    std::string_view ch = is_continuation(sym) ? std::string_view(sym).substr(kContinuation.size()) : sym;
    auto it = char_freq.find(std::string(ch));
    return it != char_freq.end() && it->second >= config.min_frequency;
  };

  struct Word {
    std::vector<int> syms;
    std::uint64_t count;
  };
  std::vector<std::vector<std::string>> split;
  std::vector<std::uint64_t> split_counts;
  std::set<std::string> alphabet;
  for (const auto& [w, c] : word_counts) {
    if (utf8_length(w) > config.max_word_length) continue;
    auto syms = split_symbols(w);
    if (!std::all_of(syms.begin(), syms.end(), char_ok)) continue;
    alphabet.insert(syms.begin(), syms.end());
    split.push_back(std::move(syms));
    split_counts.push_back(c);
  }

  const std::size_t minimum = kSpecials.size() + alphabet.size();
  if (config.vocab_size < minimum) {
    throw Error("train_vocab: vocab_size " + std::to_string(config.vocab_size) +
                " is below the minimum feasible size " + std::to_string(minimum) + " (specials + alphabet)");
  }

  std::vector<std::string> pieces(kSpecials.begin(), kSpecials.end());
  detail::PieceIndex piece_id;
  for (std::size_t i = 0; i < pieces.size(); ++i) piece_id.emplace(pieces[i], static_cast<int>(i));
  for (const auto& a : alphabet) {
    piece_id.emplace(a, static_cast<int>(pieces.size()));
    pieces.push_back(a);
  }

  std::vector<Word> words;
  words.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    Word w{{}, split_counts[i]};
    for (const auto& s : split[i]) w.syms.push_back(piece_id.at(s));
    words.push_back(std::move(w));
  }

  // Symbol ids are piece ids.
  std::vector<std::uint64_t> sym_count(pieces.size(), 0);
  for (const auto& w : words) {
    for (int s : w.syms) sym_count[static_cast<std::size_t>(s)] += w.count;
  }

  auto key = [](int a, int b) { return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b); };
  auto left_of = [](std::uint64_t k) { return static_cast<int>(k >> 32); };
  auto right_of = [](std::uint64_t k) { return static_cast<int>(k & 0xffffffffULL); };

  std::unordered_map<std::uint64_t, std::uint64_t> pair_count;
  std::unordered_map<std::uint64_t, std::unordered_set<std::size_t>> pair_words;
  std::vector<std::unordered_set<std::uint64_t>> sym_pairs(pieces.size());

  auto add_pair = [&](std::uint64_t k, std::int64_t delta) {
    auto& c = pair_count[k];
    const bool was_zero = c == 0;
    c = static_cast<std::uint64_t>(static_cast<std::int64_t>(c) + delta);
    if (was_zero && c > 0) {
      sym_pairs[static_cast<std::size_t>(left_of(k))].insert(k);
      sym_pairs[static_cast<std::size_t>(right_of(k))].insert(k);
    } else if (c == 0) {
      sym_pairs[static_cast<std::size_t>(left_of(k))].erase(k);
      sym_pairs[static_cast<std::size_t>(right_of(k))].erase(k);
      pair_count.erase(k);
    }
  };

  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    const auto& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
      const auto k = key(w.syms[i], w.syms[i + 1]);
      add_pair(k, static_cast<std::int64_t>(w.count));
      pair_words[k].insert(wi);
    }
  }

  struct Candidate {
    std::uint64_t ab, a, b;
    std::string merged;
    std::string left;
    std::uint64_t pair;
  };
  // priority_queue pops the "largest": best score, then smallest strings.
  auto worse = [](const Candidate& x, const Candidate& y) {
    if (score_greater(y.ab, y.a, y.b, x.ab, x.a, x.b)) return true;
    if (score_greater(x.ab, x.a, x.b, y.ab, y.a, y.b)) return false;
    if (x.merged != y.merged) return x.merged > y.merged;
    return x.left > y.left;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);

  auto push = [&](std::uint64_t k) {
    auto it = pair_count.find(k);
    if (it == pair_count.end() || it->second < config.min_frequency) return;
    const int l = left_of(k);
    const int r = right_of(k);
    const auto& ls = pieces[static_cast<std::size_t>(l)];
    heap.push(Candidate{it->second, sym_count[static_cast<std::size_t>(l)], sym_count[static_cast<std::size_t>(r)],
                        merge_strings(ls, pieces[static_cast<std::size_t>(r)]), ls, k});
  };
  for (const auto& [k, c] : pair_count) push(k);

  std::vector<Merge> merges;
  while (pieces.size() < config.vocab_size && !heap.empty()) {
    Candidate best = heap.top();
    heap.pop();
    const int a = left_of(best.pair);
    const int b = right_of(best.pair);
    auto pc = pair_count.find(best.pair);
    if (pc == pair_count.end() || pc->second != best.ab || sym_count[static_cast<std::size_t>(a)] != best.a ||
        sym_count[static_cast<std::size_t>(b)] != best.b) {
      continue;  // stale
    }

    // Two different pairs can produce the same string; both map to one piece.
    int m = 0;
    if (auto it = piece_id.find(best.merged); it != piece_id.end()) {
      m = it->second;
    } else {
      m = static_cast<int>(pieces.size());
      piece_id.emplace(best.merged, m);
      pieces.push_back(best.merged);
      sym_count.push_back(0);
      sym_pairs.emplace_back();
    }
    merges.push_back(Merge{pieces[static_cast<std::size_t>(a)], pieces[static_cast<std::size_t>(b)], best.merged});

    std::unordered_map<std::uint64_t, std::int64_t> delta;
    std::vector<std::size_t> affected(pair_words[best.pair].begin(), pair_words[best.pair].end());
    std::sort(affected.begin(), affected.end());
    for (std::size_t wi : affected) {
      auto& w = words[wi];
      const auto freq = static_cast<std::int64_t>(w.count);
      std::vector<int> out;
      out.reserve(w.syms.size());
      std::size_t hits = 0;
      for (std::size_t i = 0; i < w.syms.size();) {
        if (i + 1 < w.syms.size() && w.syms[i] == a && w.syms[i + 1] == b) {
          out.push_back(m);
          i += 2;
          ++hits;
        } else {
          out.push_back(w.syms[i]);
          ++i;
        }
      }
      if (hits == 0) continue;
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) delta[key(w.syms[i], w.syms[i + 1])] -= freq;
      for (std::size_t i = 0; i + 1 < out.size(); ++i) {
        const auto k = key(out[i], out[i + 1]);
        delta[k] += freq;
        pair_words[k].insert(wi);
      }
      const auto moved = static_cast<std::uint64_t>(freq) * hits;
      sym_count[static_cast<std::size_t>(a)] -= moved;
      sym_count[static_cast<std::size_t>(b)] -= moved;
      sym_count[static_cast<std::size_t>(m)] += moved;
      w.syms = std::move(out);
    }
    pair_words.erase(best.pair);

    std::set<std::uint64_t> repush;
    for (const auto& [k, d] : delta) {
      if (d == 0) continue;
      add_pair(k, d);
      repush.insert(k);
    }
    for (int s : {a, b, m}) {
      for (auto k : sym_pairs[static_cast<std::size_t>(s)]) repush.insert(k);
    }
    for (auto k : repush) push(k);
  }

  return TrainResult{Vocabulary(std::move(pieces), config.max_word_length), std::move(merges)};
}

inline Vocabulary train_vocab(const WordCounts& word_counts, const TrainerConfig& config) {
  return train(word_counts, config).vocab;
}

// ---------------------------------------------------------------------------
// Vocabulary files: UTF-8, one piece per line, line number - 1 = id.

inline void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (const auto& p : vocab.pieces()) out << p << '\n';
  if (!out) throw Error("write failed: " + path);
}

inline Vocabulary parse_vocab(std::string_view content, const std::string& source = "<memory>",
                              std::size_t max_word_length = kDefaultMaxWordLength) {
  std::vector<std::string> pieces;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  detail::PieceIndex seen;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.ends_with('\r')) line.remove_suffix(1);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    for (std::size_t i = 0; i < line.size();) {
      UChar32 c = 0;
      auto at = static_cast<int32_t>(i);
      U8_NEXT(line.data(), at, static_cast<int32_t>(line.size()), c);
      if (c < 0) throw Error(where + "invalid UTF-8");
      i = static_cast<std::size_t>(at);
    }
    if (line.empty()) throw Error(where + "empty piece");
    if (auto [it, fresh] = seen.emplace(std::string(line), static_cast<int>(line_no)); !fresh) {
      throw Error(where + "duplicate piece '" + std::string(line) + "' (first on line " + std::to_string(it->second) +
                  ")");
    }
    if (line_no <= kSpecials.size() && line != kSpecials[line_no - 1]) {
      throw Error(where + "expected special token " + std::string(kSpecials[line_no - 1]));
    }
    pieces.emplace_back(line);
  }
  if (pieces.size() < kSpecials.size()) {
    throw Error(source + ": missing special tokens (" + std::to_string(pieces.size()) + " lines)");
  }
  return Vocabulary(std::move(pieces), max_word_length);
}

inline Vocabulary load_vocab(const std::string& path, std::size_t max_word_length = kDefaultMaxWordLength) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open vocabulary " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_vocab(ss.str(), path, max_word_length);
}

}  // namespace rabbinic::wordpiece
