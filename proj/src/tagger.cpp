#include "ehrsum/tagger.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "ehrsum/error.hpp"
#include "ehrsum/kernels.hpp"

namespace ehrsum {
namespace {

std::string lowered(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void scale_rows(Matrix& m, const std::vector<double>& mask) {
  auto flat = m.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] *= mask[i];
}

}  // namespace

std::string_view word_mode_name(WordEmbeddingMode mode) {
  switch (mode) {
    case WordEmbeddingMode::kPretrainedFrozen:
      return "pretrained-frozen";
    case WordEmbeddingMode::kPretrainedFinetuned:
      return "pretrained-finetuned";
    case WordEmbeddingMode::kLearned:
      return "learned";
  }
  return "";
}

WordEmbeddingMode parse_word_mode(std::string_view name) {
  for (auto m : {WordEmbeddingMode::kPretrainedFrozen, WordEmbeddingMode::kPretrainedFinetuned,
                 WordEmbeddingMode::kLearned}) {
    if (word_mode_name(m) == name) return m;
  }
  if (name == "pretrained") return WordEmbeddingMode::kPretrainedFinetuned;
  throw ValidationError("unknown word embedding mode '" + std::string(name) +
                        "' (pretrained-frozen | pretrained-finetuned | learned)");
}

TaggerModel::TaggerModel(ModelConfig config, Vocab words, CharVocab chars)
    : config_(config),
      words_(std::move(words)),
      chars_(std::move(chars)),
      word_table("word_table", words_.size(), config_.word_dim),
      char_table("char_table", config_.use_chars ? chars_.size() : 0, config_.char_dim),
      char_lstm("char_lstm", config_.char_dim, config_.use_chars ? config_.char_hidden : 0),
      context_lstm("context_lstm", embedding_dim(), config_.context_hidden),
      score_hidden("score_hidden", 2 * config_.context_hidden, config_.score_hidden),
      score_output("score_output",
                   config_.score_hidden > 0 ? config_.score_hidden : 2 * config_.context_hidden,
                   LabelSet::kSize),
      crf_transitions("crf.T", LabelSet::kSize, LabelSet::kSize),
      crf_begin("crf.begin", LabelSet::kSize, 1),
      crf_end("crf.end", LabelSet::kSize, 1) {
  if (config_.word_dim == 0 || config_.context_hidden == 0) {
    throw ValidationError("word_dim and context_hidden must be positive");
  }
  if (config_.use_chars && (config_.char_dim == 0 || config_.char_hidden == 0)) {
    throw ValidationError("char_dim and char_hidden must be positive when characters are enabled");
  }
}

std::size_t TaggerModel::embedding_dim() const {
  return config_.word_dim + (config_.use_chars ? 2 * config_.char_hidden : 0);
}

void TaggerModel::init(std::uint64_t seed) {
  Rng rng(seed);
  const bool pretrained = config_.word_mode != WordEmbeddingMode::kLearned;
  if (!pretrained) {
    const double bound = std::sqrt(3.0 / static_cast<double>(config_.word_dim));
    for (double& v : word_table.value.storage()) v = rng.uniform(-bound, bound);
    for (double& v : word_table.value.row(Vocab::kPad)) v = 0.0;
  }
  if (config_.use_chars) {
    const double bound = std::sqrt(3.0 / static_cast<double>(config_.char_dim));
    for (double& v : char_table.value.storage()) v = rng.uniform(-bound, bound);
    char_lstm.init(rng);
  }
  context_lstm.init(rng);
  if (config_.score_hidden > 0) score_hidden.init(rng);
  score_output.init(rng);
  crf_transitions.value.fill(0.0);
  crf_begin.value.fill(0.0);
  crf_end.value.fill(0.0);
}

void TaggerModel::zero() {
  for (Param* p : params()) p->value.fill(0.0);
}

void TaggerModel::set_word_embeddings(const EmbeddingTable& table) {
  if (table.matrix.rows() != word_table.value.rows() || table.matrix.cols() != word_table.value.cols()) {
    throw ValidationError("word embedding table is " + std::to_string(table.matrix.rows()) + "x" +
                          std::to_string(table.matrix.cols()) + ", model expects " +
                          std::to_string(word_table.value.rows()) + "x" + std::to_string(word_table.value.cols()));
  }
  word_table.value = table.matrix;
}

std::size_t TaggerModel::word_id(std::string_view token) const {
  return config_.lowercase_words ? words_.id(lowered(token)) : words_.id(token);
}

ForwardCache TaggerModel::forward(const std::vector<Token>& tokens, Mode mode, double dropout_rate,
                                  Rng* rng) const {
  if (tokens.empty()) throw ValidationError("cannot run the tagger on an empty document");
  if (mode == Mode::kTrain && dropout_rate > 0.0 && rng == nullptr) {
    throw ValidationError("training-mode dropout needs a random generator");
  }
  const std::size_t m = tokens.size();
  const std::size_t E = embedding_dim();
  const std::size_t dw = config_.word_dim;
  ForwardCache c;

  c.embeddings = Matrix(m, E);
  c.word_ids.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    c.word_ids[i] = word_id(tokens[i].text);
    const auto src = word_table.value.row(c.word_ids[i]);
    std::copy(src.begin(), src.end(), c.embeddings.row(i).begin());
  }
  if (config_.use_chars) {
    const std::size_t ch = config_.char_hidden;
    c.chars.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      auto& cc = c.chars[i];
      const auto& text = tokens[i].text;
      Matrix char_inputs(text.size(), config_.char_dim);
      cc.ids.resize(text.size());
      for (std::size_t k = 0; k < text.size(); ++k) {
        cc.ids[k] = chars_.id(static_cast<unsigned char>(text[k]));
        const auto src = char_table.value.row(cc.ids[k]);
        std::copy(src.begin(), src.end(), char_inputs.row(k).begin());
      }
      cc.lstm = char_lstm.forward(char_inputs);
      auto e = c.embeddings.row(i);
      const std::size_t l = text.size();
      std::copy_n(cc.lstm.output.row(l - 1).begin(), ch, e.begin() + static_cast<std::ptrdiff_t>(dw));
      std::copy_n(cc.lstm.output.row(0).begin() + static_cast<std::ptrdiff_t>(ch), ch,
                  e.begin() + static_cast<std::ptrdiff_t>(dw + ch));
    }
  }

  const double embed_rate = config_.dropout_embeddings ? dropout_rate : 0.0;
  c.embed_mask = mode == Mode::kTrain ? dropout_mask(m * E, embed_rate, mode, *rng)
                                      : std::vector<double>(m * E, 1.0);
  c.embed_dropped = c.embeddings;
  scale_rows(c.embed_dropped, c.embed_mask);

  c.context = context_lstm.forward(c.embed_dropped);
  const std::size_t H2 = context_lstm.output_size();
  const double context_rate = config_.dropout_context ? dropout_rate : 0.0;
  c.context_mask = mode == Mode::kTrain ? dropout_mask(m * H2, context_rate, mode, *rng)
                                        : std::vector<double>(m * H2, 1.0);
  c.context_dropped = c.context.output;
  scale_rows(c.context_dropped, c.context_mask);

  c.emissions = Matrix(m, LabelSet::kSize);
  if (config_.score_hidden > 0) {
    c.hidden = Matrix(m, config_.score_hidden);
    for (std::size_t j = 0; j < m; ++j) {
      auto a = c.hidden.row(j);
      score_hidden.forward(c.context_dropped.row(j), a);
      for (double& v : a) v = std::tanh(v);
      score_output.forward(a, c.emissions.row(j));
    }
  } else {
    for (std::size_t j = 0; j < m; ++j) score_output.forward(c.context_dropped.row(j), c.emissions.row(j));
  }
  return c;
}

Matrix TaggerModel::embed_tokens(const std::vector<Token>& tokens) const {
  if (tokens.empty()) return Matrix(0, embedding_dim());
  return forward(tokens, Mode::kEval, 0.0, nullptr).embeddings;
}

Matrix TaggerModel::emissions(const std::vector<Token>& tokens) const {
  return forward(tokens, Mode::kEval, 0.0, nullptr).emissions;
}

void TaggerModel::backward(const ForwardCache& c, const Matrix& d_emissions) {
  const std::size_t m = c.emissions.rows();
  const std::size_t H2 = context_lstm.output_size();
  Matrix d_context(m, H2);
  if (config_.score_hidden > 0) {
    std::vector<double> d_hidden(config_.score_hidden);
    for (std::size_t j = 0; j < m; ++j) {
      std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
      score_output.backward(c.hidden.row(j), d_emissions.row(j), d_hidden);
      const auto a = c.hidden.row(j);
      for (std::size_t k = 0; k < d_hidden.size(); ++k) d_hidden[k] *= 1.0 - a[k] * a[k];
      score_hidden.backward(c.context_dropped.row(j), d_hidden, d_context.row(j));
    }
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      score_output.backward(c.context_dropped.row(j), d_emissions.row(j), d_context.row(j));
    }
  }
  scale_rows(d_context, c.context_mask);
  Matrix d_embed = context_lstm.backward(c.context, d_context);
  scale_rows(d_embed, c.embed_mask);

  const std::size_t dw = config_.word_dim;
  if (config_.word_mode != WordEmbeddingMode::kPretrainedFrozen) {
    for (std::size_t i = 0; i < m; ++i) {
      kernels::axpy(1.0, d_embed.row(i).first(dw), word_table.grad.row(c.word_ids[i]));
    }
  }
  if (config_.use_chars) {
    const std::size_t ch = config_.char_hidden;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& cc = c.chars[i];
      const std::size_t l = cc.ids.size();
      Matrix d_out(l, 2 * ch);
      const auto de = d_embed.row(i);
      std::copy_n(de.begin() + static_cast<std::ptrdiff_t>(dw), ch, d_out.row(l - 1).begin());
      std::copy_n(de.begin() + static_cast<std::ptrdiff_t>(dw + ch), ch,
                  d_out.row(0).begin() + static_cast<std::ptrdiff_t>(ch));
      const Matrix d_chars = char_lstm.backward(cc.lstm, d_out);
      for (std::size_t k = 0; k < l; ++k) kernels::axpy(1.0, d_chars.row(k), char_table.grad.row(cc.ids[k]));
    }
  }
}

namespace {

std::vector<std::size_t> as_indices(const std::vector<LabelId>& labels) {
  return {labels.begin(), labels.end()};
}

}  // namespace

double TaggerModel::loss_and_backward(const LabeledDocument& doc, Mode mode, double dropout_rate, Rng* rng) {
  const ForwardCache cache = forward(doc.tokens, mode, dropout_rate, rng);
  const auto gold = as_indices(doc.labels);
  CrfLoss nll = sequence_nll(crf(), cache.emissions, gold);
  kernels::axpy(1.0, nll.grad.transitions.flat(), crf_transitions.grad.flat());
  kernels::axpy(1.0, nll.grad.begin, crf_begin.grad.flat());
  kernels::axpy(1.0, nll.grad.end, crf_end.grad.flat());
  backward(cache, nll.grad.emissions);
  return nll.loss;
}

double TaggerModel::loss(const LabeledDocument& doc) const {
  const Matrix s = emissions(doc.tokens);
  const auto gold = as_indices(doc.labels);
  return log_partition(crf(), s) - sequence_score(crf(), s, gold);
}

std::vector<LabelId> TaggerModel::predict(const std::vector<Token>& tokens) const {
  if (tokens.empty()) return {};
  const auto best = viterbi(crf(), emissions(tokens));
  return {best.labels.begin(), best.labels.end()};
}

CrfView TaggerModel::crf() const {
  return {LabelSet::kSize, crf_transitions.value.flat(), crf_begin.value.flat(), crf_end.value.flat()};
}

std::vector<Param*> TaggerModel::params() {
  std::vector<Param*> out{&word_table};
  if (config_.use_chars) {
    out.push_back(&char_table);
    for (Param* p : char_lstm.params()) out.push_back(p);
  }
  for (Param* p : context_lstm.params()) out.push_back(p);
  if (config_.score_hidden > 0) {
    for (Param* p : score_hidden.params()) out.push_back(p);
  }
  for (Param* p : score_output.params()) out.push_back(p);
  out.push_back(&crf_transitions);
  out.push_back(&crf_begin);
  out.push_back(&crf_end);
  return out;
}

std::vector<const Param*> TaggerModel::params() const {
  auto mutable_params = const_cast<TaggerModel*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<Param*> TaggerModel::trainable_params() {
  auto all = params();
  if (config_.word_mode == WordEmbeddingMode::kPretrainedFrozen) all.erase(all.begin());
  return all;
}

void TaggerModel::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

std::vector<std::vector<std::string>> word_corpus(const std::vector<LabeledDocument>& docs, bool lowercase) {
  std::vector<std::vector<std::string>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    std::vector<std::string> words;
    words.reserve(d.tokens.size());
    for (const auto& t : d.tokens) words.push_back(lowercase ? lowered(t.text) : t.text);
    out.push_back(std::move(words));
  }
  return out;
}

CharVocab build_char_vocab(const std::vector<LabeledDocument>& docs) {
  CharVocab v;
  for (const auto& d : docs) {
    for (const auto& t : d.tokens) {
      for (char c : t.text) v.add(static_cast<unsigned char>(c));
    }
  }
  return v;
}

TaggerModel make_model(const ModelConfig& config, const std::vector<LabeledDocument>& train_docs,
                       std::uint64_t seed, ModelSetup* setup) {
  ModelConfig cfg = config;
  const bool pretrained = cfg.word_mode != WordEmbeddingMode::kLearned;
  Vocab vocab = build_vocab(word_corpus(train_docs, cfg.lowercase_words), 1);
  if (pretrained) {
    if (!setup || !setup->embeddings) throw ValidationError("pretrained word mode needs an embeddings file");
    cfg.word_dim = embeddings_dim(*setup->embeddings);
    if (setup->extra_docs) {
      std::unordered_set<std::string> in_file;
      for (auto& w : embedding_words(*setup->embeddings)) in_file.insert(std::move(w));
      std::vector<std::string> words = vocab.words();
      for (const auto& doc_words : word_corpus(*setup->extra_docs, cfg.lowercase_words)) {
        for (const auto& w : doc_words) {
          if (!vocab.contains(w) && in_file.count(w)) words.push_back(w);
        }
      }
      vocab = Vocab(words);  // duplicates collapse to their first position
    }
  }
  TaggerModel model(cfg, vocab, build_char_vocab(train_docs));
  model.init(seed);
  if (pretrained) {
    auto loaded = load_embeddings(*setup->embeddings, model.words(), seed);
    model.set_word_embeddings(loaded.table);
    setup->oov_rows = loaded.oov_rows;
  }
  return model;
}

}  // namespace ehrsum
