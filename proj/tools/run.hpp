#pragma once

// Run configuration, manifests and report serialization for the ehrsum CLI.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ehrsum/embeddings.hpp"
#include "ehrsum/metrics.hpp"
#include "ehrsum/overlap.hpp"
#include "ehrsum/tagger.hpp"

namespace ehrsum::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Paths {
  std::optional<fs::path> notes;
  std::optional<fs::path> annotations;  // directory of NAME.txt + NAME.xml
  std::optional<fs::path> gazetteer;
  std::optional<fs::path> embeddings;
  std::optional<fs::path> headers;
  std::optional<fs::path> model;
  std::optional<fs::path> input;
  std::optional<fs::path> demographics;  // CSV: subject_id,gender
  std::optional<fs::path> run;           // report: a previous run directory
};

struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  TrainConfig train;
  Word2VecConfig word2vec;
  std::size_t min_count = 1;
  GroupingMode mode = GroupingMode::kByAdmission;
  std::vector<std::string> sections;
  std::vector<AblationSpec> ablation;
  std::string synthetic;        // "separable" | "morphology" | "" (use annotations)
  std::string split = "test";   // evaluate: train | dev | test | all
  Paths paths;
};

// Unknown keys and wrong types are ValidationErrors.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const fs::path& path);
Json run_config_json(const RunConfig& c);

std::string sha256_hex(std::string_view bytes);

// manifest.json in the run directory: written when a command starts and
// rewritten with status, outputs and end time when it finishes.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command, std::vector<std::string> argv);

  void set_config(const RunConfig& config);
  void set_field(const std::string& key, Json value);
  // Records a digest for a file, or for every file under a directory.
  void add_input(const fs::path& path);
  void add_output(const std::string& name);

  void start();
  void finish(const std::string& status, const std::string& error = {});

 private:
  void write() const;

  fs::path dir_;
  Json doc_;
  std::vector<std::string> outputs_;
};

void write_text(const fs::path& path, std::string_view content);

Json eval_json(const EvalReport& r);
EvalReport eval_from_json(const nlohmann::json& j);
Json history_json(const TrainResult& r);

}  // namespace ehrsum::cli
