// Checkpoint layout (little-endian):
//   "EHRSUMCK" | u32 version | u64 metadata bytes | metadata (JSON)
//   | u32 array count | per array: u32 name bytes | name | u64 rows | u64 cols
//   | rows*cols f64 values

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "ehrsum/error.hpp"
#include "ehrsum/tagger.hpp"

namespace ehrsum {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'E', 'H', 'R', 'S', 'U', 'M', 'C', 'K'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValidationError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["word_dim"] = c.word_dim;
  j["char_dim"] = c.char_dim;
  j["char_hidden"] = c.char_hidden;
  j["context_hidden"] = c.context_hidden;
  j["score_hidden"] = c.score_hidden;
  j["use_chars"] = c.use_chars;
  j["lowercase_words"] = c.lowercase_words;
  j["dropout_embeddings"] = c.dropout_embeddings;
  j["dropout_context"] = c.dropout_context;
  j["word_mode"] = word_mode_name(c.word_mode);
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.word_dim = j.at("word_dim").get<std::size_t>();
  c.char_dim = j.at("char_dim").get<std::size_t>();
  c.char_hidden = j.at("char_hidden").get<std::size_t>();
  c.context_hidden = j.at("context_hidden").get<std::size_t>();
  c.score_hidden = j.at("score_hidden").get<std::size_t>();
  c.use_chars = j.at("use_chars").get<bool>();
  c.lowercase_words = j.at("lowercase_words").get<bool>();
  c.dropout_embeddings = j.at("dropout_embeddings").get<bool>();
  c.dropout_context = j.at("dropout_context").get<bool>();
  c.word_mode = parse_word_mode(j.at("word_mode").get<std::string>());
  return c;
}

}  // namespace

std::string encode_archive(const Archive& archive) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, archive.version);
  put<std::uint64_t>(out, archive.metadata.size());
  out += archive.metadata;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& a : archive.arrays) {
    if (a.data.size() != a.rows * a.cols) throw ValidationError("array " + a.name + " has inconsistent shape");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint64_t>(out, a.rows);
    put<std::uint64_t>(out, a.cols);
    out.append(reinterpret_cast<const char*>(a.data.data()), a.data.size() * sizeof(double));
  }
  return out;
}

Archive decode_archive(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw ValidationError("not a checkpoint file (bad magic)");
  }
  Archive archive;
  archive.version = in.get<std::uint32_t>();
  if (archive.version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(archive.version));
  }
  archive.metadata = std::string(in.take(in.get<std::uint64_t>()));
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = std::string(in.take(in.get<std::uint32_t>()));
    a.rows = in.get<std::uint64_t>();
    a.cols = in.get<std::uint64_t>();
    const auto raw = in.take(a.rows * a.cols * sizeof(double));
    a.data.resize(a.rows * a.cols);
    std::memcpy(a.data.data(), raw.data(), raw.size());
    archive.arrays.push_back(std::move(a));
  }
  if (!in.done()) throw ValidationError("trailing bytes after checkpoint arrays");
  return archive;
}

std::string encode_model(const TaggerModel& model) {
  nlohmann::ordered_json meta;
  meta["format"] = "ehrsum-tagger";
  meta["config"] = config_json(model.config());
  meta["labels"] = LabelSet::kNames;
  meta["words"] = model.words().words();
  std::vector<int> chars;
  for (unsigned char c : model.chars().chars()) chars.push_back(c);
  meta["chars"] = chars;

  Archive archive;
  archive.metadata = meta.dump();
  for (const Param* p : model.params()) {
    archive.arrays.push_back({p->name, p->value.rows(), p->value.cols(), p->value.storage()});
  }
  return encode_archive(archive);
}

TaggerModel decode_model(std::string_view bytes) {
  const Archive archive = decode_archive(bytes);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(archive.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint metadata: ") + e.what());
  }
  if (meta.value("format", "") != "ehrsum-tagger") throw ValidationError("checkpoint is not a tagger model");
  std::vector<unsigned char> chars;
  for (int c : meta.at("chars")) chars.push_back(static_cast<unsigned char>(c));
  TaggerModel model(config_from_json(meta.at("config")), Vocab(meta.at("words").get<std::vector<std::string>>()),
                    CharVocab::from_chars(chars));
  auto params = model.params();
  if (params.size() != archive.arrays.size()) throw ValidationError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = archive.arrays[i];
    Param& p = *params[i];
    if (a.name != p.name || a.rows != p.value.rows() || a.cols != p.value.cols()) {
      throw ValidationError("checkpoint array " + a.name + " does not match parameter " + p.name);
    }
    p.value.storage() = a.data;
  }
  return model;
}

void save_model(const std::filesystem::path& path, const TaggerModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  const std::string bytes = encode_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TaggerModel load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace ehrsum
