#pragma once

// Word and character vocabularies, word-vector tables, and word2vec
// (CBOW / skip-gram with negative sampling) pretraining.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ehrsum/matrix.hpp"

namespace ehrsum {

class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();
  // Builds from an explicit ordered word list (PAD/UNK are prepended).
  explicit Vocab(const std::vector<std::string>& words);

  std::size_t size() const { return words_.size(); }
  std::size_t id(std::string_view word) const;  // kUnk when absent
  bool contains(std::string_view word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  // Words in id order, excluding PAD and UNK.
  std::vector<std::string> words() const { return {words_.begin() + 2, words_.end()}; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Frequency >= min_count; ids ordered by frequency desc, then lexicographic.
// Throws ValidationError when min_count is 0.
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count);

// Byte-level character vocabulary. Always covers printable ASCII; other bytes
// get ids only when seen by build().
class CharVocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  CharVocab();
  void add(unsigned char c);
  std::size_t id(unsigned char c) const;
  std::size_t size() const { return size_; }
  // Bytes with ids, in id order (excluding PAD/UNK).
  std::vector<unsigned char> chars() const;
  static CharVocab from_chars(const std::vector<unsigned char>& chars);

 private:
  std::vector<std::size_t> ids_;  // 256 entries; 0 when unmapped
  std::size_t size_ = 2;
};

struct EmbeddingTable {
  Matrix matrix;  // |V| x dim
  std::size_t dim() const { return matrix.cols(); }
};

bool all_finite(const Matrix& m);

struct LoadedEmbeddings {
  EmbeddingTable table;
  std::size_t oov_rows = 0;       // vocab words (not PAD/UNK) missing from the file
  std::size_t skipped_words = 0;  // file words absent from the vocab
};

// word2vec text format: "count dim" header, then "word v1 ... vd" lines.
// OOV rows are drawn uniformly from [-0.5/d, 0.5/d] with the given seed; the
// PAD row is zero. Throws ValidationError on a dimension mismatch, naming the
// line.
LoadedEmbeddings parse_embeddings(std::string_view content, const Vocab& vocab, std::uint64_t seed);
LoadedEmbeddings load_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                                 std::uint64_t seed);
// Words listed in a vector file, in file order.
std::vector<std::string> embedding_words(const std::filesystem::path& path);
// Reads dim from the header without loading.
std::size_t embeddings_dim(const std::filesystem::path& path);

// Writes every vocab word except PAD/UNK with shortest round-trip decimals.
std::string format_embeddings(const EmbeddingTable& table, const Vocab& vocab);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table,
                     const Vocab& vocab);

enum class Word2VecMode { kCbow, kSkipGram };
Word2VecMode parse_word2vec_mode(std::string_view name);

struct Word2VecConfig {
  Word2VecMode mode = Word2VecMode::kCbow;
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.0;  // 0 picks 0.05 for CBOW, 0.025 for skip-gram
  std::uint64_t seed = 1;
};

struct Word2VecResult {
  EmbeddingTable table;               // input vectors, one row per vocab id
  std::vector<double> epoch_loss;     // mean negative-sampling loss per epoch
};

// Single-threaded and bit-reproducible for a fixed seed and kernel backend.
// Tokens outside the vocab are dropped. Throws ValidationError when the
// corpus holds fewer than window+1 in-vocabulary tokens, or dim < 2, or
// window < 1.
Word2VecResult train_word2vec(const std::vector<std::vector<std::string>>& corpus, const Vocab& vocab,
                              const Word2VecConfig& config);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace ehrsum
