#include "ehrsum/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ehrsum/corpus.hpp"
#include "ehrsum/error.hpp"
#include "ehrsum/format.hpp"
#include "ehrsum/kernels.hpp"
#include "ehrsum/random.hpp"

namespace ehrsum {

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& words) {
  words_.emplace_back(kPadToken);
  words_.emplace_back(kUnkToken);
  ids_.emplace(std::string(kPadToken), kPad);
  ids_.emplace(std::string(kUnkToken), kUnk);
  for (const auto& w : words) {
    if (ids_.emplace(w, words_.size()).second) words_.push_back(w);
  }
}

std::size_t Vocab::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view word) const { return ids_.count(std::string(word)) > 0; }

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  if (min_count == 0) throw ValidationError("min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& w : sentence) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count && w != Vocab::kPadToken && w != Vocab::kUnkToken) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(std::move(w));
  return Vocab(words);
}

CharVocab::CharVocab() : ids_(256, 0) {
  for (int c = 0x20; c < 0x7f; ++c) add(static_cast<unsigned char>(c));
}

void CharVocab::add(unsigned char c) {
  if (ids_[c] == 0) ids_[c] = size_++;
}

std::size_t CharVocab::id(unsigned char c) const { return ids_[c] == 0 ? kUnk : ids_[c]; }

std::vector<unsigned char> CharVocab::chars() const {
  std::vector<unsigned char> out(size_ - 2);
  for (std::size_t c = 0; c < 256; ++c) {
    if (ids_[c] != 0) out[ids_[c] - 2] = static_cast<unsigned char>(c);
  }
  return out;
}

CharVocab CharVocab::from_chars(const std::vector<unsigned char>& chars) {
  CharVocab v;
  v.ids_.assign(256, 0);
  v.size_ = 2;
  for (unsigned char c : chars) v.add(c);
  return v;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.storage().begin(), m.storage().end(), [](double x) { return std::isfinite(x); });
}

namespace {

double parse_number(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw ValidationError("embeddings line " + std::to_string(line_no) + ": bad number '" +
                          std::string(field) + "'");
  }
  return v;
}

std::vector<std::string_view> split_spaces(std::string_view line) {
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

std::size_t parse_header_dim(std::string_view header) {
  const auto fields = split_spaces(header);
  if (fields.size() != 2) throw ValidationError("embeddings line 1: expected header 'count dim'");
  const double dim = parse_number(fields[1], 1);
  if (dim < 1 || dim != std::floor(dim)) throw ValidationError("embeddings line 1: bad dimension");
  return static_cast<std::size_t>(dim);
}

}  // namespace

LoadedEmbeddings parse_embeddings(std::string_view content, const Vocab& vocab, std::uint64_t seed) {
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= content.size()) return false;
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    line = content.substr(pos, nl - pos);
    pos = nl + 1;
    return true;
  };
  std::string_view line;
  if (!next_line(line)) throw ValidationError("embeddings file is empty");
  const std::size_t dim = parse_header_dim(line);

  LoadedEmbeddings out;
  out.table.matrix = Matrix(vocab.size(), dim);
  std::vector<bool> found(vocab.size(), false);
  std::size_t line_no = 1;
  while (next_line(line)) {
    ++line_no;
    const auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (fields.size() != dim + 1) {
      throw ValidationError("embeddings line " + std::to_string(line_no) + ": expected " +
                            std::to_string(dim) + " values, found " + std::to_string(fields.size() - 1));
    }
    if (!vocab.contains(fields[0])) {
      ++out.skipped_words;
      continue;
    }
    const std::size_t id = vocab.id(fields[0]);
    auto row = out.table.matrix.row(id);
    for (std::size_t k = 0; k < dim; ++k) row[k] = parse_number(fields[k + 1], line_no);
    found[id] = true;
  }
  Rng rng(seed);
  const double bound = 0.5 / static_cast<double>(dim);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (found[id] || id == Vocab::kPad) continue;
    for (double& v : out.table.matrix.row(id)) v = rng.uniform(-bound, bound);
    if (id != Vocab::kUnk) ++out.oov_rows;
  }
  return out;
}

LoadedEmbeddings load_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                                 std::uint64_t seed) {
  return parse_embeddings(read_file(path), vocab, seed);
}

std::vector<std::string> embedding_words(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> words;
  while (std::getline(in, line)) {
    const auto fields = split_spaces(line);
    if (!fields.empty()) words.emplace_back(fields[0]);
  }
  return words;
}

std::size_t embeddings_dim(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  return parse_header_dim(header);
}

std::string format_embeddings(const EmbeddingTable& table, const Vocab& vocab) {
  std::string out = std::to_string(vocab.size() - 2) + " " + std::to_string(table.dim()) + "\n";
  for (std::size_t id = 2; id < vocab.size(); ++id) {
    out += vocab.word(id);
    for (double v : table.matrix.row(id)) {
      out.push_back(' ');
      out += format_double(v);
    }
    out.push_back('\n');
  }
  return out;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table,
                     const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << format_embeddings(table, vocab);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(kernels::dot(a, a));
  const double nb = std::sqrt(kernels::dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kernels::dot(a, b) / (na * nb);
}

}  // namespace ehrsum
