#include "run.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>

#include "ehrsum/error.hpp"
#include "ehrsum/kernels.hpp"

#ifndef EHRSUM_VERSION
#define EHRSUM_VERSION "unknown"
#endif

namespace ehrsum::cli {
namespace {

using Setter = std::function<void(const nlohmann::json&)>;

void apply(const nlohmann::json& obj, const std::string& where, const std::map<std::string, Setter>& setters) {
  if (!obj.is_object()) throw ValidationError("config: " + where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError("config: unknown key '" + where + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("config: '" + where + key + "' has the wrong type");
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const nlohmann::json& v) { field = v.get<T>(); };
}

Setter set_path(std::optional<fs::path>& field) {
  return [&field](const nlohmann::json& v) { field = fs::path(v.get<std::string>()); };
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json opt_path(const std::optional<fs::path>& p) { return p ? Json(p->string()) : Json(nullptr); }

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  std::string word_mode = std::string(word_mode_name(c.model.word_mode));
  std::string w2v_mode = c.word2vec.mode == Word2VecMode::kCbow ? "cbow" : "skipgram";
  std::string grouping = std::string(mode_name(c.mode));
  apply(j, "",
        {{"seed", set(c.seed)},
         {"synthetic", set(c.synthetic)},
         {"split", set(c.split)},
         {"mode", set(grouping)},
         {"sections", set(c.sections)},
         {"model",
          [&](const nlohmann::json& v) {
            auto& m = c.model;
            apply(v, "model.",
                  {{"word_dim", set(m.word_dim)},
                   {"char_dim", set(m.char_dim)},
                   {"char_hidden", set(m.char_hidden)},
                   {"context_hidden", set(m.context_hidden)},
                   {"score_hidden", set(m.score_hidden)},
                   {"use_chars", set(m.use_chars)},
                   {"lowercase_words", set(m.lowercase_words)},
                   {"dropout_embeddings", set(m.dropout_embeddings)},
                   {"dropout_context", set(m.dropout_context)},
                   {"word_mode", set(word_mode)}});
          }},
         {"train",
          [&](const nlohmann::json& v) {
            auto& t = c.train;
            apply(v, "train.",
                  {{"learning_rate", set(t.learning_rate)},
                   {"decay", set(t.decay)},
                   {"dropout", set(t.dropout)},
                   {"batch_size", set(t.batch_size)},
                   {"max_epochs", set(t.max_epochs)},
                   {"patience", set(t.patience)},
                   {"clip_norm", set(t.clip_norm)},
                   {"min_improvement", set(t.min_improvement)}});
          }},
         {"word2vec",
          [&](const nlohmann::json& v) {
            auto& w = c.word2vec;
            apply(v, "word2vec.",
                  {{"mode", set(w2v_mode)},
                   {"dim", set(w.dim)},
                   {"window", set(w.window)},
                   {"negatives", set(w.negatives)},
                   {"epochs", set(w.epochs)},
                   {"learning_rate", set(w.learning_rate)},
                   {"min_count", set(c.min_count)}});
          }},
         {"paths",
          [&](const nlohmann::json& v) {
            auto& p = c.paths;
            apply(v, "paths.",
                  {{"notes", set_path(p.notes)},
                   {"annotations", set_path(p.annotations)},
                   {"gazetteer", set_path(p.gazetteer)},
                   {"embeddings", set_path(p.embeddings)},
                   {"headers", set_path(p.headers)},
                   {"model", set_path(p.model)},
                   {"input", set_path(p.input)},
                   {"demographics", set_path(p.demographics)},
                   {"run", set_path(p.run)}});
          }},
         {"ablation", [&](const nlohmann::json& v) {
            if (!v.is_array()) throw ValidationError("config: 'ablation' must be an array");
            for (const auto& row : v) {
              AblationSpec spec;
              std::string mode = "learned";
              std::optional<fs::path> emb;
              apply(row, "ablation[].",
                    {{"name", set(spec.name)},
                     {"use_chars", set(spec.use_chars)},
                     {"word_mode", set(mode)},
                     {"embeddings", set_path(emb)}});
              if (spec.name.empty()) throw ValidationError("config: every ablation row needs a name");
              spec.word_mode = parse_word_mode(mode);
              spec.embeddings = emb;
              c.ablation.push_back(std::move(spec));
            }
          }}});
  c.model.word_mode = parse_word_mode(word_mode);
  c.word2vec.mode = parse_word2vec_mode(w2v_mode);
  c.mode = parse_mode(grouping);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path), nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

Json run_config_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["synthetic"] = c.synthetic;
  j["split"] = c.split;
  j["mode"] = mode_name(c.mode);
  j["sections"] = c.sections;
  const auto& m = c.model;
  j["model"] = {{"word_dim", m.word_dim},
                {"char_dim", m.char_dim},
                {"char_hidden", m.char_hidden},
                {"context_hidden", m.context_hidden},
                {"score_hidden", m.score_hidden},
                {"use_chars", m.use_chars},
                {"lowercase_words", m.lowercase_words},
                {"dropout_embeddings", m.dropout_embeddings},
                {"dropout_context", m.dropout_context},
                {"word_mode", word_mode_name(m.word_mode)}};
  const auto& t = c.train;
  j["train"] = {{"learning_rate", t.learning_rate}, {"decay", t.decay},           {"dropout", t.dropout},
                {"batch_size", t.batch_size},       {"max_epochs", t.max_epochs}, {"patience", t.patience},
                {"clip_norm", t.clip_norm},         {"min_improvement", t.min_improvement}};
  const auto& w = c.word2vec;
  j["word2vec"] = {{"mode", w.mode == Word2VecMode::kCbow ? "cbow" : "skipgram"},
                   {"dim", w.dim},
                   {"window", w.window},
                   {"negatives", w.negatives},
                   {"epochs", w.epochs},
                   {"learning_rate", w.learning_rate},
                   {"min_count", c.min_count}};
  const auto& p = c.paths;
  j["paths"] = {{"notes", opt_path(p.notes)},           {"annotations", opt_path(p.annotations)},
                {"gazetteer", opt_path(p.gazetteer)},   {"embeddings", opt_path(p.embeddings)},
                {"headers", opt_path(p.headers)},       {"model", opt_path(p.model)},
                {"input", opt_path(p.input)},           {"demographics", opt_path(p.demographics)},
                {"run", opt_path(p.run)}};
  Json rows = Json::array();
  for (const auto& s : c.ablation) {
    rows.push_back({{"name", s.name},
                    {"use_chars", s.use_chars},
                    {"word_mode", word_mode_name(s.word_mode)},
                    {"embeddings", opt_path(s.embeddings)}});
  }
  j["ablation"] = rows;
  return j;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeFailure("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

Manifest::Manifest(fs::path dir, std::string command, std::vector<std::string> argv) : dir_(std::move(dir)) {
  doc_["command"] = std::move(command);
  doc_["argv"] = std::move(argv);
  doc_["code_version"] = EHRSUM_VERSION;
  doc_["kernel_backend"] = kernels::backend_name(kernels::active_backend());
  doc_["seed"] = nullptr;
  doc_["config"] = nullptr;
  doc_["inputs"] = Json::array();
  doc_["outputs"] = Json::array();
  doc_["status"] = "running";
  doc_["started_at"] = nullptr;
  doc_["finished_at"] = nullptr;
}

void Manifest::set_config(const RunConfig& config) {
  doc_["seed"] = config.seed;
  doc_["config"] = run_config_json(config);
}

void Manifest::set_field(const std::string& key, Json value) { doc_[key] = std::move(value); }

void Manifest::add_input(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw ValidationError("input not found: " + path.string());
  }
  for (const auto& f : files) {
    doc_["inputs"].push_back({{"path", f.string()}, {"sha256", sha256_hex(read_file(f))}});
  }
  write();
}

void Manifest::add_output(const std::string& name) {
  if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) outputs_.push_back(name);
}

void Manifest::start() {
  doc_["started_at"] = utc_now();
  write();
}

void Manifest::finish(const std::string& status, const std::string& error) {
  doc_["status"] = status;
  if (!error.empty()) doc_["error"] = error;
  doc_["outputs"] = outputs_;
  doc_["finished_at"] = utc_now();
  write();
}

void Manifest::write() const { write_text(dir_ / "manifest.json", doc_.dump(2) + "\n"); }

void write_text(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

Json eval_json(const EvalReport& r) {
  Json j;
  j["tokens"] = r.tokens;
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["weighted_precision"] = r.weighted_precision;
  j["weighted_recall"] = r.weighted_recall;
  j["weighted_f1"] = r.weighted_f1;
  Json labels = Json::array();
  for (std::size_t k = 0; k < EvalReport::L; ++k) {
    const auto& m = r.per_label[k];
    labels.push_back({{"label", LabelSet::kNames[k]},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"f1", m.f1},
                      {"support", m.support},
                      {"predicted", m.predicted}});
  }
  j["per_label"] = labels;
  j["confusion"] = r.confusion;  // rows predicted, columns gold
  return j;
}

EvalReport eval_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.tokens = j.at("tokens").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.weighted_precision = j.at("weighted_precision").get<double>();
    r.weighted_recall = j.at("weighted_recall").get<double>();
    r.weighted_f1 = j.at("weighted_f1").get<double>();
    const auto& labels = j.at("per_label");
    if (labels.size() != EvalReport::L) throw ValidationError("metrics: expected 10 labels");
    for (std::size_t k = 0; k < EvalReport::L; ++k) {
      auto& m = r.per_label[k];
      m.precision = labels[k].at("precision").get<double>();
      m.recall = labels[k].at("recall").get<double>();
      m.f1 = labels[k].at("f1").get<double>();
      m.support = labels[k].at("support").get<std::size_t>();
      m.predicted = labels[k].at("predicted").get<std::size_t>();
    }
    r.confusion = j.at("confusion").get<decltype(r.confusion)>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("metrics json: ") + e.what());
  }
  return r;
}

Json history_json(const TrainResult& r) {
  Json epochs = Json::array();
  for (const auto& e : r.history) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"dev_weighted_f1", e.dev_weighted_f1},
                      {"dev_accuracy", e.dev_accuracy},
                      {"learning_rate", e.learning_rate},
                      {"improved", e.improved}});
  }
  Json j;
  j["best_epoch"] = r.best_epoch;
  j["best_dev_weighted_f1"] = r.best_dev_f1;
  j["stopped_early"] = r.stopped_early;
  j["diverged"] = r.diverged;
  j["epochs"] = epochs;
  return j;
}

}  // namespace ehrsum::cli
