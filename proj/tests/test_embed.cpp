#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rabbinic/embed.hpp"

using namespace rabbinic;
using namespace rabbinic::embed;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("rabbinic_embed_" + name)).string();
}

struct CaptureWarnings {
  std::vector<std::string> seen;
  WarningHandler previous;
  CaptureWarnings() {
    previous = set_warning_handler([this](std::string_view m) { seen.emplace_back(m); });
  }
  ~CaptureWarnings() { set_warning_handler(previous); }
};

std::vector<std::vector<std::string>> repeat_word(const std::string& w, int n) {
  return {std::vector<std::string>(static_cast<std::size_t>(n), w)};
}

// Flat coordinate view over (u, v, negatives) for finite differences.
struct SgnsPoint {
  Vector u, v;
  std::vector<Vector> negs;
};

double sgns_loss_only(const SgnsPoint& p) { return sgns_loss_grad(p.u, p.v, p.negs).loss; }

double& coord(SgnsPoint& p, std::size_t i) {
  const auto d = static_cast<std::size_t>(p.u.size());
  if (i < d) return p.u(static_cast<Eigen::Index>(i));
  i -= d;
  if (i < d) return p.v(static_cast<Eigen::Index>(i));
  i -= d;
  return p.negs[i / d](static_cast<Eigen::Index>(i % d));
}

double analytic(const SgnsGradient& g, std::size_t i, std::size_t d) {
  if (i < d) return g.d_center(static_cast<Eigen::Index>(i));
  i -= d;
  if (i < d) return g.d_context(static_cast<Eigen::Index>(i));
  i -= d;
  return g.d_negatives[i / d](static_cast<Eigen::Index>(i % d));
}

}  // namespace

TEST(WordVocab, ThresholdBoundary) {
  std::vector<std::vector<std::string>> corpus = {std::vector<std::string>(6, "a"), std::vector<std::string>(7, "b")};
  const auto v = build_word_vocab(corpus, 7);
  ASSERT_EQ(v.words, std::vector<std::string>{"b"});
  EXPECT_EQ(v.counts, std::vector<std::uint64_t>{7});
}

TEST(WordVocab, OrderByCountThenBytes) {
  const auto v = build_word_vocab(std::vector<std::string>{"ג ב א ב", "ג א ב"}, 1);
  EXPECT_EQ(v.words, (std::vector<std::string>{"ב", "א", "ג"}));
  EXPECT_EQ(v.counts, (std::vector<std::uint64_t>{3, 2, 2}));
}

TEST(WordVocab, AllBelowThresholdWarnsAndIsEmpty) {
  CaptureWarnings w;
  const auto v = build_word_vocab(repeat_word("x", 3), 7);
  EXPECT_TRUE(v.words.empty());
  EXPECT_EQ(w.seen.size(), 1u);
}

TEST(WordVocab, EmptyCorpusIsError) {
  EXPECT_THROW(build_word_vocab(std::vector<std::string>{}, 1), Error);
  EXPECT_THROW(build_word_vocab(std::vector<std::string>{"", "  "}, 1), Error);
}

TEST(Sgns, ZeroDotGivesHalfGradient) {
  Vector u = Vector::Zero(3), v = Vector::Zero(3);
  u(0) = 1;
  v(1) = 1;
  const auto g = sgns_loss_grad(u, v, {});
  EXPECT_DOUBLE_EQ(g.loss, std::log(2.0));
  // d loss / d(u.v) = sigmoid(0) - 1, so d/du = -0.5 v.
  EXPECT_DOUBLE_EQ(g.d_center(1), -0.5);
  EXPECT_DOUBLE_EQ(g.d_context(0), -0.5);
}

TEST(Sgns, LossFiniteForHugeDots) {
  Vector u = Vector::Constant(4, 100), v = Vector::Constant(4, -100);
  const auto g = sgns_loss_grad(u, v, {Vector(v * -1)});
  EXPECT_TRUE(std::isfinite(g.loss));
  EXPECT_NEAR(g.loss, 80000.0, 1e-6);
  EXPECT_TRUE(g.d_center.allFinite());
}

TEST(Sgns, GradientMatchesCentralDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(12));
    SgnsPoint p;
    auto rand_vec = [&] {
      Vector x(d);
      for (Eigen::Index i = 0; i < d; ++i) x(i) = rng.normal();
      return x;
    };
    p.u = rand_vec();
    p.v = rand_vec();
    for (std::uint64_t k = 0, nk = rng.below(6); k < nk; ++k) p.negs.push_back(rand_vec());
    const auto g = sgns_loss_grad(p.u, p.v, p.negs);
    const auto dim = static_cast<std::size_t>(d);
    const std::size_t n = dim * (2 + p.negs.size());
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double saved = coord(p, i);
      coord(p, i) = saved + 1e-5;
      const double plus = sgns_loss_only(p);
      coord(p, i) = saved - 1e-5;
      const double minus = sgns_loss_only(p);
      coord(p, i) = saved;
      const double num = (plus - minus) / 2e-5;
      const double a = analytic(g, i, dim);
      worst = std::max(worst, std::abs(a - num) / std::max(1e-8, std::abs(a) + std::abs(num)));
    }
    EXPECT_LT(worst, 1e-4) << "trial " << trial;
  }
}

TEST(Skipgram, ConfigErrors) {
  const auto corpus = repeat_word("a", 10);
  SkipgramConfig c;
  c.min_frequency = 1;
  c.dim = 0;
  EXPECT_THROW(train_skipgram(corpus, c), Error);
  c.dim = 4;
  c.min_frequency = 100;
  CaptureWarnings w;
  EXPECT_THROW(train_skipgram(corpus, c), Error);
}

TEST(Skipgram, InitialisationAndShapes) {
  SkipgramConfig c;
  c.dim = 8;
  c.min_frequency = 1;
  c.epochs = 1;
  c.learning_rate = 1e-12;
  const auto r = train_skipgram(std::vector<std::string>{"א ב ג ד", "ב ג"}, c);
  EXPECT_EQ(r.table.size(), 4u);
  EXPECT_EQ(r.table.dim(), 8u);
  EXPECT_LE(r.table.input_vectors().cwiseAbs().maxCoeff(), 0.5 / 8 + 1e-9);
  EXPECT_LT(r.table.output_vectors().cwiseAbs().maxCoeff(), 1e-9);
  ASSERT_EQ(r.epoch_losses.size(), 1u);
}

namespace {

// A and B share contexts drawn from P; C only ever sees contexts from Q.
std::vector<std::vector<std::string>> similarity_corpus() {
  Rng rng(3);
  const std::vector<std::string> p = {"p0", "p1", "p2", "p3", "p4", "p5"};
  const std::vector<std::string> q = {"q0", "q1", "q2", "q3", "q4", "q5"};
  std::vector<std::vector<std::string>> out;
  for (int i = 0; i < 600; ++i) {
    const int which = i % 3;
    const auto& ctx = which == 2 ? q : p;
    std::vector<std::string> s;
    for (int j = 0; j < 2; ++j) s.push_back(ctx[rng.below(ctx.size())]);
    s.push_back(which == 0 ? "A" : which == 1 ? "B" : "C");
    for (int j = 0; j < 2; ++j) s.push_back(ctx[rng.below(ctx.size())]);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Skipgram, SharedContextsMeanSimilarVectors) {
  SkipgramConfig c;
  c.dim = 20;
  c.window = 2;
  c.min_frequency = 1;
  c.epochs = 20;
  const auto r = train_skipgram(similarity_corpus(), c);
  const double ab = r.table.cosine("A", "B");
  const double ac = r.table.cosine("A", "C");
  EXPECT_GT(ab, ac + 0.2) << "cos(A,B)=" << ab << " cos(A,C)=" << ac;
}

TEST(Skipgram, LossNonIncreasingOverFirstEpochs) {
  // 40 topics of 12 words; each sentence draws from a single topic.
  Rng rng(9);
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 2000; ++i) {
    const auto topic = rng.below(40);
    std::vector<std::string> s;
    for (int j = 0; j < 8; ++j) s.push_back("t" + std::to_string(topic) + "_" + std::to_string(rng.below(12)));
    corpus.push_back(s);
  }
  SkipgramConfig c;
  c.dim = 32;
  c.min_frequency = 1;
  c.epochs = 5;
  const auto r = train_skipgram(corpus, c);
  ASSERT_GE(r.epoch_losses.size(), 3u);
  for (double l : r.epoch_losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LE(r.epoch_losses[1], r.epoch_losses[0]);
  EXPECT_LE(r.epoch_losses[2], r.epoch_losses[1]);
}

TEST(Skipgram, SeedDeterminism) {
  SkipgramConfig c;
  c.dim = 10;
  c.min_frequency = 1;
  c.epochs = 2;
  const auto a = train_skipgram(similarity_corpus(), c);
  const auto b = train_skipgram(similarity_corpus(), c);
  EXPECT_TRUE(a.table == b.table);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  c.seed = 43;
  const auto d = train_skipgram(similarity_corpus(), c);
  EXPECT_FALSE(a.table == d.table);
}

TEST(EmbeddingFile, RoundTripTenByFour) {
  Rng rng(11);
  std::vector<std::string> words;
  Matrix m(10, 4);
  for (int i = 0; i < 10; ++i) {
    words.push_back("מילה" + std::to_string(i));
    for (int j = 0; j < 4; ++j) m(i, j) = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(9)) - 4);
  }
  const EmbeddingTable t(words, m);
  const auto path = temp_path("rt.txt");
  save_embeddings(t, path);
  const auto back = load_embeddings(path);
  ASSERT_EQ(back.words(), words);
  ASSERT_EQ(back.dim(), 4u);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double a = m(i, j), b = back.input_vectors()(i, j);
      EXPECT_LE(std::abs(a - b), 5e-7 * std::abs(a)) << a << " vs " << b;
    }
  }
  std::filesystem::remove(path);
}

TEST(EmbeddingFile, ArityErrorNamesLine) {
  std::istringstream in("2 3\na 1 2 3\nb 1 2 3 4\n");
  try {
    parse_embeddings(in, "f.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("f.txt:3:"), std::string::npos) << e.what();
  }
}

TEST(EmbeddingFile, Errors) {
  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    EXPECT_THROW(parse_embeddings(in), Error) << text;
  };
  bad("");
  bad("2\n");
  bad("1 2\na 1 x\n");
  bad("1 2\na 1 nan\n");
  bad("2 2\na 1 2\n");
  bad("1 2\na 1 2\nb 1 2\n");
  bad("2 2\na 1 2\na 3 4\n");
  EXPECT_THROW(load_embeddings(temp_path("does_not_exist")), Error);
}

TEST(EmbeddingFile, AcceptsTrailingSpaces) {
  std::istringstream in("1 2\nw 0.5 -1 \n");
  const auto t = parse_embeddings(in);
  EXPECT_DOUBLE_EQ(t.input_vectors()(0, 1), -1.0);
}

TEST(Contextual, RoundTripExact) {
  ContextualVectors cv;
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    std::vector<double> v;
    for (int j = 0; j < 3; ++j) v.push_back(rng.normal() / 3.0);
    cv.insert({"s" + std::to_string(i), static_cast<std::size_t>(i * 2)}, v);
  }
  const auto path = temp_path("ctx.tsv");
  save_contextual(cv, path);
  const auto back = load_contextual(path);
  EXPECT_EQ(back.size(), 5u);
  EXPECT_TRUE(back == cv);
  ASSERT_NE(back.find("s3", 6), nullptr);
  EXPECT_EQ(back.find("s3", 5), nullptr);
  std::filesystem::remove(path);
}

TEST(Contextual, RaggedDimAndDuplicatesNameRow) {
  {
    std::istringstream in("s1\t0\t1,2,3\ns2\t0\t1,2,3,4\n");
    try {
      parse_contextual(in, "c.tsv");
      FAIL();
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
  }
  {
    std::istringstream in("s1\t4\t1,2\ns2\t4\t1,2\ns1\t4\t3,4\n");
    try {
      parse_contextual(in, "c.tsv");
      FAIL();
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
  }
  for (const std::string text : {"", "s1\t0\n", "s1\t-1\t1\n", "s1\tx\t1\n", "s1\t0\t1,,2\n", "\t0\t1\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_contextual(in), Error) << text;
  }
}

namespace {

EmbeddingTable small_table() {
  std::vector<std::string> words;
  Matrix m(9, 2);
  for (int i = 0; i < 9; ++i) {
    words.push_back("w" + std::to_string(i));
    m(i, 0) = i + 1;
    m(i, 1) = -(i + 1);
  }
  return EmbeddingTable(words, m);
}

std::vector<std::string> nine_tokens() {
  std::vector<std::string> t;
  for (int i = 0; i < 9; ++i) t.push_back("w" + std::to_string(i));
  return t;
}

}  // namespace

TEST(ContextWindow, AllNeighboursPresent) {
  const auto w = context_window(nine_tokens(), 4, 4, small_table());
  ASSERT_EQ(w.rows(), 8);
  const int expected[] = {0, 1, 2, 3, 5, 6, 7, 8};
  for (int r = 0; r < 8; ++r) EXPECT_EQ(w(r, 0), expected[r] + 1);
}

TEST(ContextWindow, LeftEdgePadding) {
  const auto w = context_window(nine_tokens(), 0, 4, small_table());
  EXPECT_TRUE(w.topRows(4).isZero());
  EXPECT_EQ(w(4, 0), 2);
  EXPECT_EQ(w(7, 0), 5);
}

TEST(ContextWindow, RightEdgeAndOov) {
  auto tokens = nine_tokens();
  tokens[7] = "unknown";
  const auto w = context_window(tokens, 8, 4, small_table());
  EXPECT_TRUE(w.bottomRows(4).isZero());
  EXPECT_EQ(w(0, 0), 5);
  EXPECT_TRUE(w.row(3).isZero());
}

TEST(ContextWindow, IndexOutOfRangeIsContractError) {
  EXPECT_THROW(context_window(nine_tokens(), 9, 4, small_table()), ContractError);
}

TEST(EmbeddingTable, Invariants) {
  EXPECT_THROW(EmbeddingTable({"a", "a"}, Matrix::Zero(2, 2)), Error);
  EXPECT_THROW(EmbeddingTable({"a"}, Matrix::Zero(2, 2)), Error);
  Matrix m = Matrix::Zero(1, 2);
  m(0, 0) = std::nan("");
  EXPECT_THROW(EmbeddingTable({"a"}, m), Error);
}
