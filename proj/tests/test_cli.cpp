#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <map>

#include "doctest.h"
#include "ehrsum/corpus.hpp"
#include "ehrsum/embeddings.hpp"
#include "ehrsum/overlap.hpp"
#include "ehrsum/synthetic.hpp"
#include "json.hpp"

using namespace ehrsum;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "ehrsum_cli_test";

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result ehrsum_cli(const std::string& args, const std::string& env = {}) {
  fs::create_directories(kRoot);
  const auto out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = "cd '" + kRoot.string() + "' && " + env + " '" + EHRSUM_CLI + "' " + args + " > '" +
                          out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

void write(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

std::string notes_jsonl(const std::vector<NoteRecord>& notes) {
  std::string out;
  for (const auto& n : notes) {
    nlohmann::json j{{"note_id", n.note_id},
                     {"subject_id", n.subject_id},
                     {"category", n.category},
                     {"chart_time", n.chart_time},
                     {"text", n.text}};
    if (n.hadm_id) j["hadm_id"] = *n.hadm_id;
    if (n.hours_outside_icu) j["hours_outside_icu"] = *n.hours_outside_icu;
    out += j.dump() + "\n";
  }
  return out;
}

std::string gazetteer_tsv(const Gazetteer& gaz) {
  std::string out;
  for (const auto& [phrase, cuis] : gaz.entries()) {
    for (const auto& c : cuis) out += phrase + "\t" + c + "\n";
  }
  return out;
}

void write_fixture() {
  const auto fx = synthetic::three_patient_fixture();
  write(kRoot / "fixture" / "notes.jsonl", notes_jsonl(fx.notes));
  write(kRoot / "fixture" / "gaz.tsv", gazetteer_tsv(fx.gazetteer));
}

const char* kSmallConfig = R"({
  "seed": 3,
  "model": {"word_dim": 12, "char_dim": 6, "char_hidden": 6, "context_hidden": 12, "score_hidden": 12},
  "train": {"max_epochs": 3, "patience": 2, "learning_rate": 0.01}
})";

nlohmann::json manifest(const std::string& dir) { return nlohmann::json::parse(read_file(kRoot / dir / "manifest.json")); }

}  // namespace

TEST_CASE("recall --mode by-admission reproduces the 3-patient fixture") {
  write_fixture();
  const auto fx = synthetic::three_patient_fixture();
  for (const auto& [mode, expected] : {std::pair{std::string("by-admission"), fx.by_admission},
                                       std::pair{std::string("by-subject"), fx.by_subject}}) {
    const auto r = ehrsum_cli("recall --notes fixture/notes.jsonl --gazetteer fixture/gaz.tsv --mode " + mode +
                              " --out-dir recall-" + mode);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const RecallReport rep = parse_per_summary_csv(read_file(kRoot / ("recall-" + mode) / "per_summary.csv"));
    REQUIRE(rep.per_summary.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(rep.per_summary[i].recall - expected[i]) <= 1e-12);
    const auto agg = nlohmann::json::parse(read_file(kRoot / ("recall-" + mode) / "aggregate.json"));
    double mean = 0.0;
    for (double v : expected) mean += v;
    CHECK(std::abs(agg.at("mean_recall").get<double>() - mean / 3.0) <= 1e-12);
    CHECK(manifest("recall-" + mode).at("status") == "ok");
  }
}

TEST_CASE("train twice with the same seed gives identical metrics, history and checkpoint") {
  write(kRoot / "small.json", kSmallConfig);
  std::map<std::string, std::string> first;
  nlohmann::json first_manifest;
  for (int run = 0; run < 2; ++run) {
    const auto r = ehrsum_cli("train --config small.json --synthetic separable --out-dir train-det");
    INFO(r.err);
    REQUIRE(r.code == 0);
    auto m = manifest("train-det");
    CHECK(m.at("lr_decay_schedule") == "per-epoch");
    m.erase("started_at");
    m.erase("finished_at");
    for (const char* f : {"metrics.json", "history.json", "model.ckpt", "split.json", "per_label_test.csv"}) {
      const std::string bytes = read_file(kRoot / "train-det" / f);
      if (run == 0) first[f] = bytes;
      else CHECK_MESSAGE(bytes == first[f], f);
    }
    if (run == 0) first_manifest = m;
    else CHECK(m == first_manifest);
  }
}

TEST_CASE("evaluate and report read the training run back") {
  write(kRoot / "small.json", kSmallConfig);
  REQUIRE(ehrsum_cli("train --config small.json --synthetic separable --out-dir train-eval").code == 0);
  const auto e = ehrsum_cli("evaluate --config small.json --synthetic separable --model train-eval/model.ckpt "
                            "--split test --out-dir eval");
  INFO(e.err);
  REQUIRE(e.code == 0);
  const auto trained = nlohmann::json::parse(read_file(kRoot / "train-eval" / "metrics.json"));
  const auto evaluated = nlohmann::json::parse(read_file(kRoot / "eval" / "metrics.json"));
  CHECK(trained.at("test") == evaluated.at("test"));

  const auto rep = ehrsum_cli("report --run train-eval --out-dir report");
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("Average/Total") != std::string::npos);
  CHECK(rep.out.find("not reproducible") != std::string::npos);
  CHECK(ehrsum_cli("report --run fixture --out-dir report2").code == 1);
}

TEST_CASE("predict on an empty input writes empty output and succeeds") {
  write(kRoot / "small.json", kSmallConfig);
  REQUIRE(ehrsum_cli("train --config small.json --synthetic separable --out-dir train-pred").code == 0);
  write(kRoot / "empty.txt", "");
  const auto r = ehrsum_cli("predict --model train-pred/model.ckpt --input empty.txt --out-dir pred-empty");
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  CHECK(read_file(kRoot / "pred-empty" / "predictions.tsv").empty());

  write(kRoot / "note.txt", "She was admitted with fever .\n");
  const auto p = ehrsum_cli("predict --model train-pred/model.ckpt --input note.txt --out-dir pred");
  CHECK(p.code == 0);
  CHECK(std::count(p.out.begin(), p.out.end(), '\n') == 6);
}

TEST_CASE("usage errors and validation errors exit 1, runtime failures exit 2") {
  write_fixture();
  auto r = ehrsum_cli("recall --no-such-flag");
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(ehrsum_cli("").code == 1);
  CHECK(ehrsum_cli("frobnicate").code == 1);
  CHECK(ehrsum_cli("--help").code == 0);

  r = ehrsum_cli("recall --notes fixture/notes.jsonl --out-dir no-gaz");
  CHECK(r.code == 1);
  CHECK(manifest("no-gaz").at("status") == "validation_error");
  CHECK(ehrsum_cli("recall --notes missing.jsonl --gazetteer fixture/gaz.tsv --out-dir x").code == 1);
  CHECK(ehrsum_cli("recall --notes fixture/notes.jsonl --gazetteer fixture/gaz.tsv --mode sideways --out-dir x").code ==
        1);

  write(kRoot / "bad.json", R"({"train": {"learnign_rate": 0.1}})");
  r = ehrsum_cli("train --config bad.json --synthetic separable --out-dir bad");
  CHECK(r.code == 1);
  CHECK(r.err.find("learnign_rate") != std::string::npos);
  write(kRoot / "patience.json", R"({"train": {"max_epochs": 3, "patience": 3}})");
  CHECK(ehrsum_cli("train --config patience.json --synthetic separable --out-dir bad").code == 1);

  write(kRoot / "a-file", "x");
  CHECK(ehrsum_cli("recall --notes fixture/notes.jsonl --gazetteer fixture/gaz.tsv --out-dir a-file/sub").code == 2);

  write(kRoot / "diverge.json", R"({"model": {"word_dim": 8, "char_dim": 4, "char_hidden": 4, "context_hidden": 8,
    "score_hidden": 8}, "train": {"learning_rate": 1e300, "max_epochs": 3, "patience": 2}})");
  r = ehrsum_cli("train --config diverge.json --synthetic separable --out-dir diverge");
  CHECK(r.code == 2);
  CHECK(manifest("diverge").at("status") == "runtime_failure");
  CHECK(fs::exists(kRoot / "diverge" / "model.ckpt"));
}

TEST_CASE("flags override config values and the environment sets the default run directory") {
  write_fixture();
  write(kRoot / "seeded.json", R"({"seed": 5, "mode": "by-subject"})");
  auto r = ehrsum_cli("recall --config seeded.json --notes fixture/notes.jsonl --gazetteer fixture/gaz.tsv "
                      "--seed 7 --mode by-admission --out-dir override");
  REQUIRE(r.code == 0);
  const auto m = manifest("override");
  CHECK(m.at("seed") == 7);
  CHECK(m.at("config").at("mode") == "by_admission");

  fs::remove_all(kRoot / "env-runs");
  r = ehrsum_cli("recall --notes fixture/notes.jsonl --gazetteer fixture/gaz.tsv", "EHRSUM_OUT_DIR=env-runs");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(kRoot / "env-runs" / "per_summary.csv"));
}

TEST_CASE("manifest records SHA-256 digests of every input") {
  write(kRoot / "digest" / "abc.txt", "abc");  // a bare header name
  write(kRoot / "digest" / "notes.jsonl", R"({"subject_id": "1", "category": "Discharge summary", "text": "abc: x"})"
                                          "\n");
  const auto r = ehrsum_cli("split-sections --notes digest/notes.jsonl --headers digest/abc.txt --out-dir digest-run");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto m = manifest("digest-run");
  std::map<std::string, std::string> digests;
  for (const auto& in : m.at("inputs")) digests[fs::path(in.at("path").get<std::string>()).filename()] = in.at("sha256");
  // FIPS 180-2 example message "abc"
  CHECK(digests.at("abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(digests.size() == 2);
  CHECK(m.at("code_version").is_string());
  CHECK(m.at("status") == "ok");
}

TEST_CASE("section splitting, concept extraction and embedding pretraining write their outputs") {
  write_fixture();
  const std::string summary =
      "Chief Complaint: chest pain\nHistory of Present Illness: 70 yo with term01 and term02.\n";
  write(kRoot / "sect" / "notes.jsonl",
        nlohmann::json({{"subject_id", "9"}, {"hadm_id", "90"}, {"category", "Discharge summary"}, {"text", summary}})
                .dump() +
            "\n");
  auto r = ehrsum_cli("split-sections --notes sect/notes.jsonl --out-dir sect-run");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto rows = parse_csv(read_file(kRoot / "sect-run" / "sections.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][3] == "Chief Complaint");
  CHECK(rows[2][3] == "History of Present Illness");

  r = ehrsum_cli("extract-cuis --notes sect/notes.jsonl --gazetteer fixture/gaz.tsv --out-dir cui-run");
  REQUIRE(r.code == 0);
  const auto spans = parse_csv(read_file(kRoot / "cui-run" / "concepts.csv"));
  REQUIRE(spans.size() == 3);
  CHECK(spans[1][6] == "term01");
  CHECK(spans[2][6] == "term02");

  r = ehrsum_cli("pretrain-embeddings --notes fixture/notes.jsonl --mode skipgram --out-dir w2v-run", "");
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(embeddings_dim(kRoot / "w2v-run" / "vectors.txt") == 100);
  const auto loss = nlohmann::json::parse(read_file(kRoot / "w2v-run" / "loss.json"));
  CHECK(loss.at("mode") == "skipgram");
  CHECK(loss.at("epoch_loss").size() == 5);
}
