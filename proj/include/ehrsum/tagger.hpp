#pragma once

// Word-level topic tagger for HPI notes:
//   token embedding   e_i = [word vector ; char-BiLSTM final states]
//   contextual layer  h_j = BiLSTM(e)_j
//   label scoring     s_j = W2 tanh(W1 h_j + b1) + b2
//   sequence layer    linear-chain CRF over s
// Forward passes keep caches so the full stack backpropagates exactly.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrsum/corpus.hpp"
#include "ehrsum/crf.hpp"
#include "ehrsum/embeddings.hpp"
#include "ehrsum/metrics.hpp"
#include "ehrsum/nn.hpp"

namespace ehrsum {

enum class WordEmbeddingMode { kPretrainedFrozen, kPretrainedFinetuned, kLearned };
std::string_view word_mode_name(WordEmbeddingMode mode);
WordEmbeddingMode parse_word_mode(std::string_view name);

struct ModelConfig {
  std::size_t word_dim = 100;
  std::size_t char_dim = 25;
  std::size_t char_hidden = 25;      // per direction
  std::size_t context_hidden = 100;  // per direction
  std::size_t score_hidden = 64;     // 0 scores h_j with a single affine map
  bool use_chars = true;
  bool lowercase_words = true;
  bool dropout_embeddings = true;
  bool dropout_context = true;
  WordEmbeddingMode word_mode = WordEmbeddingMode::kLearned;
};

struct CharCache {
  std::vector<std::size_t> ids;
  BiLstmCache lstm;
};

struct ForwardCache {
  std::vector<std::size_t> word_ids;
  std::vector<CharCache> chars;
  Matrix embeddings;             // m x E, before dropout
  std::vector<double> embed_mask;
  Matrix embed_dropped;
  BiLstmCache context;
  std::vector<double> context_mask;
  Matrix context_dropped;        // m x 2H
  Matrix hidden;                 // m x score_hidden, post-tanh
  Matrix emissions;              // m x L
};

class TaggerModel {
 public:
  TaggerModel(ModelConfig config, Vocab words, CharVocab chars);

  const ModelConfig& config() const { return config_; }
  const Vocab& words() const { return words_; }
  const CharVocab& chars() const { return chars_; }
  std::size_t embedding_dim() const;

  // Glorot/LSTM initialization; the learned word table is drawn uniformly
  // from +-sqrt(3/word_dim) so rows start with roughly unit norm.
  void init(std::uint64_t seed);
  void zero();
  // Copies a |V| x word_dim table; throws ValidationError on shape mismatch.
  void set_word_embeddings(const EmbeddingTable& table);

  std::size_t word_id(std::string_view token) const;

  // e_1..e_m without dropout.
  Matrix embed_tokens(const std::vector<Token>& tokens) const;

  // Throws ValidationError on an empty token sequence. rng may be null in
  // eval mode.
  ForwardCache forward(const std::vector<Token>& tokens, Mode mode, double dropout_rate, Rng* rng) const;
  Matrix emissions(const std::vector<Token>& tokens) const;

  // Accumulates parameter gradients for d loss / d emissions.
  void backward(const ForwardCache& cache, const Matrix& d_emissions);

  // CRF negative log-likelihood of the gold labels; gradients accumulated.
  double loss_and_backward(const LabeledDocument& doc, Mode mode, double dropout_rate, Rng* rng);
  double loss(const LabeledDocument& doc) const;

  // Viterbi decode in eval mode; empty input yields empty output.
  std::vector<LabelId> predict(const std::vector<Token>& tokens) const;

  CrfView crf() const;

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::vector<Param*> trainable_params();
  void zero_grad();

 private:
  ModelConfig config_;
  Vocab words_;
  CharVocab chars_;

 public:
  Param word_table;
  Param char_table;
  BiLstm char_lstm;
  BiLstm context_lstm;
  Dense score_hidden;
  Dense score_output;
  Param crf_transitions;
  Param crf_begin;
  Param crf_end;
};

// Lowercased token texts, as used for vocabulary building.
std::vector<std::vector<std::string>> word_corpus(const std::vector<LabeledDocument>& docs, bool lowercase);
CharVocab build_char_vocab(const std::vector<LabeledDocument>& docs);

struct TrainConfig {
  double learning_rate = 0.001;
  double decay = 0.9;  // applied per epoch
  double dropout = 0.5;
  std::size_t batch_size = 20;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  double min_improvement = 1e-6;

  // Throws ValidationError unless all values are positive and
  // patience < max_epochs.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_weighted_f1 = 0.0;
  double dev_accuracy = 0.0;
  double learning_rate = 0.0;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch completed
  double best_dev_f1 = 0.0;
  bool stopped_early = false;
  bool diverged = false;
};

// Mini-batch Adam on summed CRF loss with global-norm clipping, per-epoch
// learning-rate decay, dev-F1 early stopping. The model ends holding the
// best-dev parameters. Throws ValidationError on empty train or dev sets.
TrainResult train(TaggerModel& model, const TrainConfig& config, const std::vector<LabeledDocument>& train_docs,
                  const std::vector<LabeledDocument>& dev_docs);

EvalReport evaluate(const TaggerModel& model, const std::vector<LabeledDocument>& docs);

struct ModelSetup {
  std::optional<std::filesystem::path> embeddings;  // required for pretrained modes
  // Pretrained modes also admit words from these docs that have a vector in
  // the embeddings file.
  const std::vector<LabeledDocument>* extra_docs = nullptr;
  std::size_t oov_rows = 0;  // out: vocab rows without a pretrained vector
};

// Vocabulary from the training docs, optional pretrained table, seeded init.
TaggerModel make_model(const ModelConfig& config, const std::vector<LabeledDocument>& train_docs,
                       std::uint64_t seed, ModelSetup* setup = nullptr);

struct AblationSpec {
  std::string name;
  std::optional<std::filesystem::path> embeddings;  // required for pretrained modes
  bool use_chars = true;
  WordEmbeddingMode word_mode = WordEmbeddingMode::kLearned;
};

struct AblationResult {
  std::string name;
  bool skipped = false;
  std::string note;
  double dev_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

// One training run per grid row with identical seeds; a row whose embedding file
// is missing is reported as skipped.
std::vector<AblationResult> ablation_run(const std::vector<AblationSpec>& specs, const ModelConfig& base,
                                         const TrainConfig& train_config,
                                         const std::vector<LabeledDocument>& train_docs,
                                         const std::vector<LabeledDocument>& dev_docs);
std::string ablation_csv(const std::vector<AblationResult>& rows);

// ---- checkpoints -------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

struct Archive {
  std::uint32_t version = kCheckpointVersion;
  std::string metadata;  // JSON
  std::vector<NamedArray> arrays;
};

std::string encode_archive(const Archive& archive);
// Throws ValidationError on a bad magic, unsupported version or truncation.
Archive decode_archive(std::string_view bytes);

std::string encode_model(const TaggerModel& model);
TaggerModel decode_model(std::string_view bytes);
void save_model(const std::filesystem::path& path, const TaggerModel& model);
TaggerModel load_model(const std::filesystem::path& path);

}  // namespace ehrsum
