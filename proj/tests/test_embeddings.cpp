#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "ehrsum/embeddings.hpp"
#include "ehrsum/error.hpp"
#include "ehrsum/random.hpp"

using namespace ehrsum;

namespace {

std::vector<std::vector<std::string>> two_topic_corpus(std::size_t sentences, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::string>> corpus;
  for (std::size_t s = 0; s < sentences; ++s) {
    const char topic = (s % 2 == 0) ? 'a' : 'b';
    std::vector<std::string> sent;
    for (int i = 0; i < 12; ++i) sent.push_back(std::string(1, topic) + std::to_string(rng.below(10)));
    corpus.push_back(std::move(sent));
  }
  return corpus;
}

// Least-squares slope below zero, last epoch below the first, and no epoch
// more than 1% above its predecessor. Once the online loss reaches its noise
// floor, single epochs can tick up slightly.
bool falling_trend(const std::vector<double>& loss) {
  const double n = static_cast<double>(loss.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < loss.size(); ++i) {
    sx += i;
    sy += loss[i];
    sxy += i * loss[i];
    sxx += static_cast<double>(i * i);
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  bool bounded = true;
  for (std::size_t i = 1; i < loss.size(); ++i) bounded = bounded && loss[i] <= 1.01 * loss[i - 1];
  return slope < 0 && loss.back() < loss.front() && bounded;
}

}  // namespace

TEST_CASE("vocab reserves PAD and UNK and respects min_count") {
  const auto v = build_vocab({{"a", "a", "b"}}, 2);
  CHECK(v.size() == 3);
  CHECK(v.contains("a"));
  CHECK_FALSE(v.contains("b"));
  CHECK(v.id("b") == Vocab::kUnk);
  CHECK(v.word(Vocab::kPad) == Vocab::kPadToken);
  CHECK(v.word(Vocab::kUnk) == Vocab::kUnkToken);
  CHECK(build_vocab({}, 1).size() == 2);
  CHECK_THROWS_AS(build_vocab({{"a"}}, 0), ValidationError);
}

TEST_CASE("vocab ids follow a frequency-count oracle") {
  Rng rng(1);
  std::vector<std::vector<std::string>> corpus(10);
  std::map<std::string, std::size_t> freq;
  for (int i = 0; i < 1000; ++i) {
    // Skewed draw so frequencies differ and some tie.
    const std::string w = "w" + std::to_string(rng.below(1 + rng.below(40)));
    corpus[i % 10].push_back(w);
    ++freq[w];
  }
  for (std::size_t min_count : {1u, 3u, 10u}) {
    std::vector<std::pair<std::string, std::size_t>> expected;
    for (const auto& [w, c] : freq) {
      if (c >= min_count) expected.emplace_back(w, c);
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const auto v = build_vocab(corpus, min_count);
    REQUIRE(v.size() == expected.size() + 2);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(v.word(i + 2) == expected[i].first);
    CHECK(build_vocab(corpus, min_count).words() == v.words());
  }
}

TEST_CASE("char vocab covers printable ASCII and maps other bytes to UNK") {
  CharVocab c;
  for (int ch = 32; ch < 127; ++ch) CHECK(c.id(static_cast<unsigned char>(ch)) >= 2);
  CHECK(c.id(0xC3) == CharVocab::kUnk);
  c.add(0xC3);
  CHECK(c.id(0xC3) >= 2);
  const auto copy = CharVocab::from_chars(c.chars());
  CHECK(copy.size() == c.size());
  CHECK(copy.id(0xC3) == c.id(0xC3));
  CHECK(copy.id('z') == c.id('z'));
}

TEST_CASE("a three-word vector file loads exactly") {
  const Vocab v({"alpha", "beta", "gamma"});
  const std::string file = "3 2\nalpha 0.25 -1.5\nbeta 1e-3 2\ngamma 0.1 0.30000000000000004\n";
  const auto loaded = parse_embeddings(file, v, 1);
  CHECK(loaded.oov_rows == 0);
  CHECK(loaded.skipped_words == 0);
  const auto& m = loaded.table.matrix;
  CHECK(m.rows() == 5);
  CHECK(m(v.id("alpha"), 0) == 0.25);
  CHECK(m(v.id("alpha"), 1) == -1.5);
  CHECK(m(v.id("beta"), 0) == 1e-3);
  CHECK(m(v.id("gamma"), 1) == 0.30000000000000004);
  CHECK(m(Vocab::kPad, 0) == 0.0);
}

TEST_CASE("loading reports OOV rows and skipped words") {
  const Vocab v({"alpha", "delta"});
  const auto loaded = parse_embeddings("2 4\nalpha 1 2 3 4\nzeta 1 1 1 1\n", v, 3);
  CHECK(loaded.oov_rows == 1);
  CHECK(loaded.skipped_words == 1);
  for (double x : loaded.table.matrix.row(v.id("delta"))) CHECK(std::abs(x) <= 0.5 / 4);
  const auto again = parse_embeddings("2 4\nalpha 1 2 3 4\nzeta 1 1 1 1\n", v, 3);
  CHECK(again.table.matrix == loaded.table.matrix);
}

TEST_CASE("dimension mismatch names the line") {
  const Vocab v({"a", "b"});
  try {
    parse_embeddings("2 3\na 1 2 3\nb 1 2\n", v, 1);
    FAIL("expected a throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_embeddings("", v, 1), ValidationError);
  CHECK_THROWS_AS(parse_embeddings("2 3\na 1 x 3\n", v, 1), ValidationError);
}

TEST_CASE("load then save round-trips bit-identically") {
  Rng rng(4);
  const Vocab v({"one", "two", "three"});
  EmbeddingTable t{Matrix(v.size(), 5)};
  for (std::size_t r = 2; r < v.size(); ++r) {
    for (double& x : t.matrix.row(r)) x = rng.uniform(-1, 1) * std::pow(10.0, static_cast<double>(rng.below(9)) - 4);
  }
  const std::string text = format_embeddings(t, v);
  const auto back = parse_embeddings(text, v, 9);
  for (std::size_t r = 2; r < v.size(); ++r) {
    for (std::size_t c = 0; c < 5; ++c) CHECK(back.table.matrix(r, c) == t.matrix(r, c));
  }
  CHECK(format_embeddings(back.table, v) == text);

  const auto path = std::filesystem::temp_directory_path() / "ehrsum_test_vectors.txt";
  save_embeddings(path, t, v);
  CHECK(embeddings_dim(path) == 5);
  CHECK(embedding_words(path) == v.words());
  CHECK(load_embeddings(path, v, 9).table.matrix == back.table.matrix);
  std::filesystem::remove(path);
}

TEST_CASE("word2vec rejects degenerate settings") {
  const auto corpus = two_topic_corpus(4, 1);
  const auto v = build_vocab(corpus, 1);
  Word2VecConfig cfg;
  cfg.dim = 1;
  CHECK_THROWS_AS(train_word2vec(corpus, v, cfg), ValidationError);
  cfg.dim = 8;
  cfg.window = 0;
  CHECK_THROWS_AS(train_word2vec(corpus, v, cfg), ValidationError);
  cfg.window = 5;
  CHECK_THROWS_AS(train_word2vec({{"a0", "a1", "a2"}}, v, cfg), ValidationError);
  CHECK_THROWS_AS(parse_word2vec_mode("glove"), ValidationError);
}

TEST_CASE("zero epochs leave the table at its initialization") {
  const auto corpus = two_topic_corpus(10, 2);
  const auto v = build_vocab(corpus, 1);
  Word2VecConfig cfg;
  cfg.dim = 10;
  cfg.epochs = 0;
  const auto a = train_word2vec(corpus, v, cfg);
  cfg.epochs = 1;
  const auto b = train_word2vec(corpus, v, cfg);
  CHECK(a.epoch_loss.empty());
  CHECK(a.table.matrix.rows() == v.size());
  CHECK_FALSE(a.table.matrix == b.table.matrix);
  cfg.epochs = 0;
  CHECK(train_word2vec(corpus, v, cfg).table.matrix == a.table.matrix);
}

TEST_CASE("word2vec separates two topics and its loss falls") {
  const auto corpus = two_topic_corpus(200, 3);
  const auto v = build_vocab(corpus, 1);
  for (Word2VecMode mode : {Word2VecMode::kCbow, Word2VecMode::kSkipGram}) {
    Word2VecConfig cfg;
    cfg.mode = mode;
    cfg.dim = 20;
    cfg.window = 3;
    cfg.epochs = 5;
    cfg.seed = 7;
    const auto result = train_word2vec(corpus, v, cfg);
    CHECK(all_finite(result.table.matrix));
    CHECK(falling_trend(result.epoch_loss));

    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 2; i < v.size(); ++i) {
      for (std::size_t j = i + 1; j < v.size(); ++j) {
        const double c = cosine(result.table.matrix.row(i), result.table.matrix.row(j));
        if (v.word(i)[0] == v.word(j)[0]) {
          intra += c;
          ++n_intra;
        } else {
          inter += c;
          ++n_inter;
        }
      }
    }
    CHECK(intra / n_intra - inter / n_inter >= 0.2);

    const auto again = train_word2vec(corpus, v, cfg);
    CHECK(again.table.matrix == result.table.matrix);
    CHECK(again.epoch_loss == result.epoch_loss);
  }
}

TEST_CASE("word2vec loss trends down over five epochs on random corpora of 1000+ tokens") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t vocab_size = 20 + rng.below(200);
    std::vector<std::vector<std::string>> corpus;
    std::size_t tokens = 0;
    while (tokens < 1000) {
      std::vector<std::string> sent(3 + rng.below(20));
      for (auto& w : sent) w = "w" + std::to_string(rng.below(1 + rng.below(vocab_size)));
      tokens += sent.size();
      corpus.push_back(std::move(sent));
    }
    const auto v = build_vocab(corpus, 1);
    for (Word2VecMode mode : {Word2VecMode::kCbow, Word2VecMode::kSkipGram}) {
      Word2VecConfig cfg;
      cfg.mode = mode;
      cfg.dim = 20;
      cfg.epochs = 5;
      cfg.seed = seed;
      const auto result = train_word2vec(corpus, v, cfg);
      CHECK(falling_trend(result.epoch_loss));
      CHECK(all_finite(result.table.matrix));
    }
  }
}
