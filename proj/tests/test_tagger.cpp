#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "ehrsum/error.hpp"
#include "ehrsum/synthetic.hpp"
#include "ehrsum/tagger.hpp"
#include "oracles.hpp"
#include "tagger_check.hpp"

using namespace ehrsum;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.word_dim = 16;
  c.char_dim = 8;
  c.char_hidden = 8;
  c.context_hidden = 16;
  c.score_hidden = 16;
  return c;
}

std::vector<LabeledDocument> small_separable(std::size_t n_docs) {
  synthetic::SeparableConfig c;
  c.n_docs = n_docs;
  return synthetic::separable_corpus(c);
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ehrsum_tagger_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

bool params_finite(TaggerModel& model) {
  for (Param* p : model.params()) {
    if (!all_finite(p->value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zeroed model emits all-zero m x 10 scores for any length") {
  auto docs = small_separable(5);
  TaggerModel model = make_model(small_config(), docs, 1);
  model.zero();
  for (std::size_t m = 1; m <= 9; ++m) {
    std::vector<std::string> words(m, "bax");
    auto doc = synthetic::make_document("z", words, std::vector<LabelId>(m, 0));
    const Matrix s = model.emissions(doc.tokens);
    CHECK(s.rows() == m);
    CHECK(s.cols() == LabelSet::kSize);
    for (double v : s.storage()) CHECK(v == 0.0);
  }
  CHECK_THROWS_AS(model.emissions({}), ValidationError);
}

TEST_CASE("hybrid embedding has word plus both char directions and is a function of the word") {
  auto docs = small_separable(5);
  ModelConfig cfg;  // defaults: 100 + 2 * 25
  TaggerModel model = make_model(cfg, docs, 2);
  CHECK(model.embedding_dim() == 150);
  auto doc = synthetic::make_document("e", {"a", "bax", "a", "Unseen"}, {0, 0, 0, 0});
  const Matrix e = model.embed_tokens(doc.tokens);
  CHECK(e.rows() == 4);
  CHECK(e.cols() == 150);
  for (std::size_t k = 0; k < 150; ++k) CHECK(e(0, k) == e(2, k));
  for (double v : e.storage()) CHECK(std::isfinite(v));
  CHECK(model.embed_tokens({}).rows() == 0);

  cfg.use_chars = false;
  TaggerModel plain = make_model(cfg, docs, 2);
  CHECK(plain.embedding_dim() == 100);
}

TEST_CASE("unknown words share the UNK row and lowercasing folds case") {
  auto docs = small_separable(20);
  TaggerModel model = make_model(small_config(), docs, 3);
  CHECK(model.word_id("nothing-like-this") == Vocab::kUnk);
  const auto lex = synthetic::separable_lexicon(3);
  std::string upper = lex[0];
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  CHECK(model.word_id(upper) == model.word_id(lex[0]));
  CHECK(model.word_id(lex[0]) != Vocab::kUnk);
}

TEST_CASE("end-to-end gradient matches central differences through the whole stack") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto t = oracle::tiny_tagger(seed, oracle::tiny_config());
    const auto report = oracle::end_to_end_gradient(t, 0.3, 100 + seed);
    INFO("seed " << seed << " worst param " << report.worst_param);
    CHECK(report.worst < 1e-3);
  }
}

TEST_CASE("end-to-end gradient without chars and without the hidden scoring layer") {
  for (std::uint64_t seed = 21; seed <= 30; ++seed) {
    auto t = oracle::tiny_tagger(seed, oracle::tiny_config(false, 0));
    const auto report = oracle::end_to_end_gradient(t, 0.0, seed);
    INFO("seed " << seed << " worst param " << report.worst_param);
    CHECK(report.worst < 1e-3);
  }
}

TEST_CASE("dropout is off in eval mode so emissions do not depend on the generator") {
  auto t = oracle::tiny_tagger(5, oracle::tiny_config());
  Rng a(1), b(2);
  const auto ca = t.model.forward(t.doc.tokens, Mode::kEval, 0.5, &a);
  const auto cb = t.model.forward(t.doc.tokens, Mode::kEval, 0.5, &b);
  CHECK(ca.emissions.storage() == cb.emissions.storage());
  CHECK(ca.emissions.storage() == t.model.emissions(t.doc.tokens).storage());
  Rng c(1), d(2);
  const auto ta = t.model.forward(t.doc.tokens, Mode::kTrain, 0.5, &c);
  const auto tb = t.model.forward(t.doc.tokens, Mode::kTrain, 0.5, &d);
  CHECK(ta.emissions.storage() != tb.emissions.storage());
  CHECK_THROWS_AS(t.model.forward(t.doc.tokens, Mode::kTrain, 0.5, nullptr), ValidationError);
}

TEST_CASE("loss equals the CRF negative log-likelihood and is non-negative") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto t = oracle::tiny_tagger(seed, oracle::tiny_config());
    const double l = t.model.loss(t.doc);
    CHECK(l >= 0.0);
    t.model.zero_grad();
    Rng rng(1);
    CHECK(t.model.loss_and_backward(t.doc, Mode::kEval, 0.0, &rng) == doctest::Approx(l).epsilon(1e-14));
  }
}

TEST_CASE("predict is deterministic, length-preserving and batch invariant") {
  auto docs = small_separable(30);
  TaggerModel model = make_model(small_config(), docs, 4);
  for (const auto& d : docs) {
    const auto a = model.predict(d.tokens);
    const auto b = model.predict(d.tokens);
    CHECK(a == b);
    CHECK(a.size() == d.tokens.size());
  }
  CHECK(model.predict({}).empty());

  // the same doc decoded alone and after every other doc in the corpus
  const auto alone = model.predict(docs[7].tokens);
  for (const auto& d : docs) (void)model.predict(d.tokens);
  CHECK(model.predict(docs[7].tokens) == alone);
  const EvalReport whole = evaluate(model, docs);
  std::vector<LabeledDocument> reversed(docs.rbegin(), docs.rend());
  const EvalReport back = evaluate(model, reversed);
  CHECK(whole.confusion == back.confusion);
}

TEST_CASE("training config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.patience = c.max_epochs;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);

  auto docs = small_separable(10);
  TaggerModel model = make_model(small_config(), docs, 1);
  CHECK_THROWS_AS(train(model, TrainConfig{}, docs, {}), ValidationError);
  CHECK_THROWS_AS(train(model, TrainConfig{}, {}, docs), ValidationError);
}

TEST_CASE("separable task: loss falls over the first three epochs and predictions follow the word rule") {
  const auto split = split_dataset(synthetic::separable_corpus({}), 1);
  TaggerModel model = make_model(ModelConfig{}, split.train, 1);
  TrainConfig tc;
  tc.max_epochs = 10;
  const TrainResult r = train(model, tc, split.train, split.dev);
  REQUIRE(r.history.size() >= 3);
  CHECK(r.history[1].train_loss < r.history[0].train_loss);
  CHECK(r.history[2].train_loss < r.history[1].train_loss);
  CHECK(r.best_dev_f1 >= 0.98);
  CHECK_FALSE(r.diverged);

  // rule oracle: word k of the lexicon carries label k % 10
  const auto lexicon = synthetic::separable_lexicon(synthetic::SeparableConfig{}.lexicon);
  std::map<std::string, LabelId> rule;
  for (std::size_t k = 0; k < lexicon.size(); ++k) rule[lexicon[k]] = static_cast<LabelId>(k % LabelSet::kSize);
  std::size_t agree = 0, total = 0;
  for (const auto& d : split.test) {
    const auto pred = model.predict(d.tokens);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      agree += pred[i] == rule.at(d.tokens[i].text);
      ++total;
    }
  }
  CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.98);
}

TEST_CASE("a plateaued dev score stops training after patience epochs") {
  const auto split = split_dataset(small_separable(60), 2);
  TaggerModel model = make_model(small_config(), split.train, 2);
  TrainConfig tc;
  tc.learning_rate = 1e-12;
  tc.max_epochs = 10;
  const TrainResult r = train(model, tc, split.train, split.dev);
  CHECK(r.history.size() == 4);
  CHECK(r.stopped_early);
  CHECK(r.best_epoch == 1);
  CHECK(r.history[0].improved);
  for (std::size_t e = 1; e < r.history.size(); ++e) CHECK_FALSE(r.history[e].improved);
  CHECK(r.history[1].learning_rate == doctest::Approx(1e-12 * 0.9));
}

TEST_CASE("divergence aborts and leaves the last good parameters") {
  const auto split = split_dataset(small_separable(60), 3);
  TaggerModel model = make_model(small_config(), split.train, 3);
  TrainConfig tc;
  tc.learning_rate = 1e300;
  tc.max_epochs = 5;
  tc.patience = 2;
  const TrainResult r = train(model, tc, split.train, split.dev);
  CHECK(r.diverged);
  CHECK(params_finite(model));
  for (const auto& d : split.dev) CHECK(model.predict(d.tokens).size() == d.tokens.size());
}

TEST_CASE("the model ends holding its best-dev parameters") {
  const auto split = split_dataset(small_separable(80), 4);
  TaggerModel model = make_model(small_config(), split.train, 4);
  TrainConfig tc;
  tc.max_epochs = 6;
  tc.learning_rate = 0.01;
  const TrainResult r = train(model, tc, split.train, split.dev);
  REQUIRE(r.best_epoch >= 1);
  CHECK(evaluate(model, split.dev).weighted_f1 == r.history[r.best_epoch - 1].dev_weighted_f1);
  CHECK(r.best_dev_f1 == r.history[r.best_epoch - 1].dev_weighted_f1);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  const auto split = split_dataset(small_separable(60), 5);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 2;
  tc.learning_rate = 0.01;
  std::vector<std::string> bytes;
  std::vector<std::vector<EpochRecord>> histories;
  for (int run = 0; run < 2; ++run) {
    TaggerModel model = make_model(small_config(), split.train, 9);
    histories.push_back(train(model, tc, split.train, split.dev).history);
    bytes.push_back(encode_model(model));
  }
  CHECK(bytes[0] == bytes[1]);
  REQUIRE(histories[0].size() == histories[1].size());
  for (std::size_t e = 0; e < histories[0].size(); ++e) {
    CHECK(histories[0][e].train_loss == histories[1][e].train_loss);
    CHECK(histories[0][e].dev_weighted_f1 == histories[1][e].dev_weighted_f1);
  }
}

TEST_CASE("checkpoint round-trip reproduces bytes and metrics exactly") {
  const auto split = split_dataset(small_separable(40), 6);
  TaggerModel model = make_model(small_config(), split.train, 6);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 1;
  train(model, tc, split.train, split.dev);

  const std::string bytes = encode_model(model);
  const TaggerModel back = decode_model(bytes);
  CHECK(encode_model(back) == bytes);
  const EvalReport a = evaluate(model, split.test);
  const EvalReport b = evaluate(back, split.test);
  CHECK(a.confusion == b.confusion);
  CHECK(a.weighted_f1 == b.weighted_f1);
  CHECK(per_label_csv(a) == per_label_csv(b));
  for (const auto& d : split.test) CHECK(model.emissions(d.tokens).storage() == back.emissions(d.tokens).storage());

  const auto dir = scratch_dir("ckpt");
  save_model(dir / "m.ckpt", model);
  CHECK(encode_model(load_model(dir / "m.ckpt")) == bytes);
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto docs = small_separable(5);
  const std::string bytes = encode_model(make_model(small_config(), docs, 1));
  CHECK_THROWS_AS(decode_model(bytes.substr(0, bytes.size() - 3)), ValidationError);
  CHECK_THROWS_AS(decode_model(bytes + "x"), ValidationError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_model(bad), ValidationError);
  std::string version = bytes;
  version[8] = 9;
  CHECK_THROWS_AS(decode_model(version), ValidationError);
  CHECK_THROWS_AS(decode_model(""), ValidationError);

  Archive archive = decode_archive(bytes);
  archive.arrays.pop_back();
  CHECK_THROWS_AS(decode_model(encode_archive(archive)), ValidationError);
}

TEST_CASE("pretrained embeddings: table comes from the file, frozen mode leaves it untouched") {
  const auto split = split_dataset(small_separable(60), 7);
  const auto dir = scratch_dir("pre");
  Vocab vocab(synthetic::separable_lexicon(20));  // 10 lexicon words are left without a vector
  EmbeddingTable table{Matrix(vocab.size(), 6)};
  Rng rng(3);
  for (double& v : table.matrix.storage()) v = rng.uniform(-1, 1);
  save_embeddings(dir / "vec.txt", table, vocab);

  ModelConfig cfg = small_config();
  cfg.word_mode = WordEmbeddingMode::kPretrainedFrozen;
  CHECK_THROWS_AS(make_model(cfg, split.train, 1), ValidationError);
  ModelSetup setup;
  setup.embeddings = dir / "vec.txt";
  setup.extra_docs = &split.dev;
  TaggerModel frozen = make_model(cfg, split.train, 1, &setup);
  CHECK(frozen.config().word_dim == 6);
  CHECK(setup.oov_rows > 0);
  const auto& w = vocab.words();
  for (std::size_t k = 0; k < 3; ++k) {
    const auto row = frozen.word_table.value.row(frozen.word_id(w[k]));
    for (std::size_t j = 0; j < 6; ++j) CHECK(row[j] == table.matrix(vocab.id(w[k]), j));
  }
  const Matrix before = frozen.word_table.value;
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 1;
  tc.learning_rate = 0.01;
  train(frozen, tc, split.train, split.dev);
  CHECK(frozen.word_table.value.storage() == before.storage());

  cfg.word_mode = WordEmbeddingMode::kPretrainedFinetuned;
  TaggerModel tuned = make_model(cfg, split.train, 1, &setup);
  CHECK(tuned.word_table.value.storage() == before.storage());
  train(tuned, tc, split.train, split.dev);
  CHECK(tuned.word_table.value.storage() != before.storage());
}

TEST_CASE("word mode names parse both ways") {
  for (auto m : {WordEmbeddingMode::kPretrainedFrozen, WordEmbeddingMode::kPretrainedFinetuned,
                 WordEmbeddingMode::kLearned}) {
    CHECK(parse_word_mode(word_mode_name(m)) == m);
  }
  CHECK(parse_word_mode("pretrained") == WordEmbeddingMode::kPretrainedFinetuned);
  CHECK_THROWS_AS(parse_word_mode("glove"), ValidationError);
}

TEST_CASE("ablation grid emits one row per configuration and skips missing embedding files") {
  const auto split = split_dataset(small_separable(40), 8);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 1;
  std::vector<AblationSpec> specs{{"chars", std::nullopt, true, WordEmbeddingMode::kLearned},
                                  {"no-chars", std::nullopt, false, WordEmbeddingMode::kLearned}};
  auto rows = ablation_run(specs, small_config(), tc, split.train, split.dev);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK_FALSE(r.skipped);
    CHECK(r.epochs_run >= 1);
    CHECK(r.dev_f1 >= 0.0);
  }
  CHECK(rows[0].name == "chars");

  specs.push_back({"missing", std::filesystem::path("/nonexistent/vectors.txt"), true,
                   WordEmbeddingMode::kPretrainedFinetuned});
  rows = ablation_run(specs, small_config(), tc, split.train, split.dev);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].skipped);
  const std::string csv = ablation_csv(rows);
  CHECK(csv.rfind("name,status,dev_f1,best_epoch,epochs_run,note\n", 0) == 0);
  CHECK(csv.find("missing,skipped,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("suffix task: character features beat word identity alone") {
  const auto split = split_dataset(synthetic::morphology_corpus({}), 1);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.max_epochs = 6;
  ModelConfig on = small_config(), off = small_config();
  off.use_chars = false;
  TaggerModel a = make_model(on, split.train, 1);
  TaggerModel b = make_model(off, split.train, 1);
  const double f_on = train(a, tc, split.train, split.dev).best_dev_f1;
  const double f_off = train(b, tc, split.train, split.dev).best_dev_f1;
  CHECK(f_on - f_off >= 0.05);
}
