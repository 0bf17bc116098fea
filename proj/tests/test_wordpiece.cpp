#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rabbinic/wordpiece.hpp"

using namespace rabbinic::wordpiece;

namespace {

Vocabulary make_vocab(std::vector<std::string> extra) {
  std::vector<std::string> pieces(kSpecials.begin(), kSpecials.end());
  pieces.insert(pieces.end(), extra.begin(), extra.end());
  return Vocabulary(pieces);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("rabbinic_wp_" + name)).string();
}

std::vector<std::string> non_special(const Vocabulary& v) {
  return {v.pieces().begin() + kSpecials.size(), v.pieces().end()};
}

}  // namespace

TEST(Vocabulary, RejectsBadPieceLists) {
  EXPECT_THROW(Vocabulary({"[PAD]", "[UNK]"}), rabbinic::Error);
  EXPECT_THROW(make_vocab({"a", "a"}), rabbinic::Error);
  EXPECT_THROW(make_vocab({"##"}), rabbinic::Error);
  EXPECT_THROW(make_vocab({""}), rabbinic::Error);
  EXPECT_NO_THROW(make_vocab({"a", "##a"}));
}

TEST(EncodeWord, GreedyLongestMatch) {
  auto v = make_vocab({"a", "##b", "ab", "abc", "##c"});
  EXPECT_EQ(encode_word_pieces("abc", v), (std::vector<std::string>{"abc"}));
  EXPECT_EQ(encode_word_pieces("abb", v), (std::vector<std::string>{"ab", "##b"}));
  EXPECT_EQ(encode_word_pieces("ba", v), (std::vector<std::string>{"[UNK]"}));
}

TEST(EncodeWord, WholeWordUnkOnAnyGap) {
  auto v = make_vocab({"a", "##b"});
  EXPECT_EQ(encode_word("abx", v), (std::vector<int>{kUnk}));
}

TEST(EncodeWord, TooLongIsUnk) {
  auto v = Vocabulary({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "א", "##א"}, 5);
  EXPECT_EQ(encode_word("אאאאא", v).size(), 5u);
  EXPECT_EQ(encode_word("אאאאאא", v), (std::vector<int>{kUnk}));
}

TEST(EncodeWord, EmptyWordIsContractError) {
  EXPECT_THROW(encode_word("", make_vocab({"a"})), rabbinic::ContractError);
}

TEST(EncodeWord, MatchesAllPrefixesOracle) {
  std::mt19937_64 rng(3);
  const std::u32string alpha = U"אבגדה\"'";
  for (int trial = 0; trial < 2000; ++trial) {
    std::set<std::string> pieces;
    const int n = 3 + static_cast<int>(rng() % 25);
    for (int i = 0; i < n; ++i) {
      std::u32string p;
      const std::size_t len = 1 + rng() % 4;
      for (std::size_t k = 0; k < len; ++k) p.push_back(alpha[rng() % alpha.size()]);
      pieces.insert((rng() % 2 ? "##" : "") + oracle::encode(p));
    }
    const auto v = make_vocab({pieces.begin(), pieces.end()});
    for (int w = 0; w < 5; ++w) {
      std::u32string word;
      const std::size_t len = 1 + rng() % 8;
      for (std::size_t k = 0; k < len; ++k) word.push_back(alpha[rng() % alpha.size()]);
      const auto s = oracle::encode(word);
      const auto got = encode_word_pieces(s, v);
      ASSERT_EQ(got, oracle::brute_max_match(s, pieces)) << s;
      if (got != std::vector<std::string>{"[UNK]"}) ASSERT_EQ(decode_pieces(got), s);
    }
  }
}

TEST(EncodeWord, MonotoneCoverage) {
  std::mt19937_64 rng(8);
  const std::u32string alpha = U"אבגד";
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) {
    std::u32string w;
    for (std::size_t k = 0; k < 1 + rng() % 6; ++k) w.push_back(alpha[rng() % alpha.size()]);
    corpus.push_back(oracle::encode(w));
  }
  std::vector<std::string> pieces;
  auto unk_count = [&] {
    const auto v = make_vocab(pieces);
    int unk = 0;
    for (auto& w : corpus) unk += encode_word(w, v) == std::vector<int>{kUnk};
    return unk;
  };
  int prev = unk_count();
  std::set<std::string> have;
  for (int step = 0; step < 40; ++step) {
    std::u32string p;
    for (std::size_t k = 0; k < 1 + rng() % 3; ++k) p.push_back(alpha[rng() % alpha.size()]);
    std::string s = (rng() % 2 ? "##" : "") + oracle::encode(p);
    if (!have.insert(s).second) continue;
    pieces.push_back(s);
    const int now = unk_count();
    ASSERT_LE(now, prev);
    prev = now;
  }
}

TEST(Encode, AcronymPieceIsOneId) {
  auto v = make_vocab({"עכ\"ל", "ע", "##כ", "##ל", "\""});
  const auto enc = encode("עכ״ל", v);
  ASSERT_EQ(enc.ids.size(), 1u);
  EXPECT_EQ(v.piece(enc.ids[0]), "עכ\"ל");
  EXPECT_GE(enc.ids[0], 5);

  // ע ##כ | " | ל has no word-initial piece
  const auto plain = encode("עכ״ל", v, {.abbreviations = false});
  EXPECT_EQ(plain.ids, (std::vector<int>{*v.id("ע"), *v.id("##כ"), *v.id("\""), kUnk}));
}

TEST(Encode, EmptyWithSpecials) {
  const auto enc = encode("", make_vocab({"a"}), {.add_specials = true});
  EXPECT_EQ(enc.ids, (std::vector<int>{kCls, kSep}));
}

TEST(Encode, AlignmentNonDecreasingAndIdsInRange) {
  std::mt19937_64 rng(4);
  WordCounts counts;
  for (int i = 0; i < 200; ++i) {
    for (auto& w : rabbinic::hebtext::token_texts(oracle::fuzz_string(rng))) ++counts[w];
  }
  const auto v = train_vocab(counts, {.vocab_size = 300});
  for (int i = 0; i < 1000; ++i) {
    const auto enc = encode(oracle::fuzz_string(rng), v, {.add_specials = true});
    ASSERT_EQ(enc.ids.size(), enc.alignment.size());
    for (std::size_t k = 0; k < enc.ids.size(); ++k) {
      ASSERT_GE(enc.ids[k], 0);
      ASSERT_LT(static_cast<std::size_t>(enc.ids[k]), v.size());
      if (k > 0) ASSERT_LE(enc.alignment[k - 1], enc.alignment[k]);
    }
  }
}

TEST(CountTokens, FilterBoundaryAt128) {
  auto v = make_vocab({"א"});
  auto line_of = [](int words) {
    std::string s;
    for (int i = 0; i < words; ++i) s += i ? " א" : "א";
    return s;
  };
  EXPECT_EQ(count_tokens(line_of(125), v), 127u);
  EXPECT_EQ(count_tokens(line_of(126), v), 128u);
  const auto kept = filter_instances({line_of(125), line_of(126), ""}, v);
  EXPECT_EQ(kept, (std::vector<std::string>{line_of(125), ""}));
  EXPECT_EQ(count_tokens("", v), 2u);
  EXPECT_EQ(filter_instances(kept, v), kept);
}

TEST(Train, SingleWordMerges) {
  const auto r = train({{"ab", 10}}, {.vocab_size = 8, .min_frequency = 1});
  EXPECT_EQ(non_special(r.vocab), (std::vector<std::string>{"##b", "a", "ab"}));
}

TEST(Train, BudgetEqualToAlphabetMeansNoMerges) {
  const auto r = train({{"ab", 10}, {"ba", 3}}, {.vocab_size = 9, .min_frequency = 1});
  EXPECT_TRUE(r.merges.empty());
  EXPECT_EQ(r.vocab.size(), 9u);
}

TEST(Train, TieBrokenLexicographically) {
  const auto r = train({{"ab", 5}, {"cd", 5}}, {.vocab_size = 10, .min_frequency = 1});
  ASSERT_EQ(r.merges.size(), 1u);
  EXPECT_EQ(r.merges[0].merged, "ab");
}

TEST(Train, Errors) {
  EXPECT_THROW(train({}, {}), rabbinic::Error);
  try {
    train({{"abc", 1}}, {.vocab_size = 6});
    FAIL();
  } catch (const rabbinic::Error& e) {
    EXPECT_NE(std::string(e.what()).find("minimum feasible size 8"), std::string::npos) << e.what();
  }
}

TEST(Train, MinFrequencyDropsRareCharacters) {
  const auto r = train({{"ab", 3}, {"az", 1}}, {.vocab_size = 100, .min_frequency = 2});
  const auto& p = r.vocab.pieces();
  EXPECT_EQ(std::count(p.begin(), p.end(), "##z"), 0);
  EXPECT_EQ(std::count(p.begin(), p.end(), "ab"), 1);
}

TEST(Train, MatchesBruteForceMergeForMerge) {
  std::mt19937_64 rng(17);
  const std::u32string alpha = U"אבגדהו\"'";
  for (int trial = 0; trial < 200; ++trial) {
    WordCounts counts;
    const int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      std::u32string w;
      for (std::size_t k = 0; k < 1 + rng() % 7; ++k) w.push_back(alpha[rng() % alpha.size()]);
      counts[oracle::encode(w)] += 1 + rng() % 9;
    }
    const std::size_t size = 10 + rng() % 60;
    const std::uint64_t minf = 1 + rng() % 3;
    TrainResult got;
    try {
      got = train(counts, {.vocab_size = size, .min_frequency = minf});
    } catch (const rabbinic::Error&) {
      continue;  // infeasible budget
    }
    const auto want = oracle::brute_train(counts, size, minf);
    ASSERT_EQ(got.vocab.pieces(), want.pieces) << "trial " << trial;
    ASSERT_EQ(got.merges.size(), want.merges.size());
    for (std::size_t i = 0; i < want.merges.size(); ++i) {
      ASSERT_EQ(got.merges[i].left, want.merges[i].left);
      ASSERT_EQ(got.merges[i].right, want.merges[i].right);
    }
  }
}

TEST(Train, Deterministic) {
  std::mt19937_64 rng(21);
  std::vector<std::string> lines;
  for (int i = 0; i < 300; ++i) lines.push_back(oracle::fuzz_string(rng));
  const auto counts = count_words(lines);
  const auto a = train_vocab(counts, {.vocab_size = 400});
  const auto b = train_vocab(counts, {.vocab_size = 400});
  EXPECT_EQ(a.pieces(), b.pieces());
}

TEST(Train, FrequentAbbreviationBecomesOnePiece) {
  std::vector<std::string> lines;
  for (int i = 0; i < 50; ++i) lines.push_back("עכ\"ל הרב אמרי' שם");
  const auto v = train_vocab(count_words(lines), {.vocab_size = 200});
  EXPECT_EQ(encode("עכ\"ל", v).ids.size(), 1u);
  EXPECT_EQ(encode("אמרי'", v).ids.size(), 1u);
}

TEST(VocabFile, RoundTrip) {
  std::vector<std::string> pieces(kSpecials.begin(), kSpecials.end());
  for (int i = 0; pieces.size() < 1000; ++i) pieces.push_back((i % 3 ? "##" : "") + std::to_string(i) + "א");
  const Vocabulary v(pieces);
  const auto path = temp_path("roundtrip.txt");
  save_vocab(v, path);
  EXPECT_EQ(load_vocab(path), v);
  std::filesystem::remove(path);
}

TEST(VocabFile, LoadErrors) {
  auto expect_error = [](const std::string& content, const std::string& needle) {
    const auto path = temp_path("bad.txt");
    {
      std::ofstream out(path, std::ios::binary);
      out << content;
    }
    try {
      load_vocab(path);
      ADD_FAILURE() << "no error for: " << needle;
    } catch (const rabbinic::Error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
    std::filesystem::remove(path);
  };
  const std::string specials = "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n";
  expect_error(specials + "a\nb\na\n", ":8: duplicate piece 'a'");
  expect_error("[UNK]\n[PAD]\n[CLS]\n[SEP]\n[MASK]\n", ":1: expected special token [PAD]");
  expect_error(specials + "a\xff\n", ":6: invalid UTF-8");
  expect_error("[PAD]\n[UNK]\n", "missing special tokens");
  expect_error("", "missing special tokens");
}
