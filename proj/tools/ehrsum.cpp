// ehrsum: discharge-summary concept recall and HPI topic tagging.
//
// Every command writes its outputs and a manifest.json into the run
// directory (--out-dir, else $EHRSUM_OUT_DIR, else runs/<command>).
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "ehrsum/concepts.hpp"
#include "ehrsum/corpus.hpp"
#include "ehrsum/error.hpp"
#include "ehrsum/format.hpp"
#include "ehrsum/overlap.hpp"
#include "ehrsum/synthetic.hpp"
#include "ehrsum/tagger.hpp"
#include "run.hpp"

using namespace ehrsum;
using namespace ehrsum::cli;

namespace {

struct Flags {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string mode;
  std::string gazetteer;
  std::string embeddings;
  std::string headers;
  std::string notes;
  std::string annotations;
  std::string model;
  std::string input;
  std::string demographics;
  std::string synthetic;
  std::string split;
  std::string run;
  std::vector<std::string> sections;
};

struct Context {
  std::string command;
  RunConfig config;
  fs::path out;
  Manifest* manifest;

  void write(const std::string& name, std::string_view content) const {
    write_text(out / name, content);
    manifest->add_output(name);
  }
};

const fs::path& require(const std::optional<fs::path>& p, const char* flag) {
  if (!p) throw ValidationError(std::string("missing required input ") + flag);
  return *p;
}

// ---- inputs ------------------------------------------------------------------

std::vector<NoteRecord> load_notes(const Context& ctx) {
  auto notes = read_notes(require(ctx.config.paths.notes, "--notes"));
  for (const auto& n : notes) validate(n);
  return notes;
}

std::vector<HeaderPattern> load_headers(const Context& ctx) {
  return ctx.config.paths.headers ? load_header_config(*ctx.config.paths.headers) : default_headers();
}

Gazetteer load_gazetteer(const Context& ctx) {
  auto gaz = Gazetteer::load(require(ctx.config.paths.gazetteer, "--gazetteer"));
  if (gaz.empty()) throw ValidationError("gazetteer is empty");
  return gaz;
}

std::vector<LabeledDocument> load_documents(const Context& ctx) {
  const auto& c = ctx.config;
  std::vector<LabeledDocument> docs;
  if (c.synthetic == "separable") {
    docs = synthetic::separable_corpus({});
  } else if (c.synthetic == "morphology") {
    docs = synthetic::morphology_corpus({});
  } else if (!c.synthetic.empty()) {
    throw ValidationError("unknown synthetic corpus '" + c.synthetic + "' (separable | morphology)");
  } else {
    docs = load_annotation_dir(require(c.paths.annotations, "--annotations"));
  }
  if (docs.empty()) throw ValidationError("no annotated documents found");
  for (const auto& d : docs) validate(d);
  return docs;
}

std::map<std::string, std::string, std::less<>> load_demographics(const fs::path& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty()) throw ValidationError(path.string() + ": empty demographics file");
  std::ptrdiff_t subject = -1, sex = -1;
  for (std::size_t k = 0; k < rows[0].size(); ++k) {
    const auto& h = rows[0][k];
    if (h == "subject_id") subject = static_cast<std::ptrdiff_t>(k);
    if (h == "gender" || h == "sex") sex = static_cast<std::ptrdiff_t>(k);
  }
  if (subject < 0 || sex < 0) throw ValidationError(path.string() + ": needs subject_id and gender columns");
  std::map<std::string, std::string, std::less<>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      throw ValidationError(path.string() + ": row " + std::to_string(r + 1) + " has the wrong column count");
    }
    out[rows[r][subject]] = rows[r][sex];
  }
  return out;
}

// ---- commands ------------------------------------------------------------------

void cmd_split_sections(Context& ctx) {
  const auto notes = load_notes(ctx);
  const auto headers = load_headers(ctx);
  std::ostringstream csv;
  csv << "note_id,subject_id,hadm_id,section,header_begin,body_begin,body_end,body\n";
  std::size_t n_summaries = 0, n_sections = 0;
  for (const auto& note : notes) {
    if (!note.is_discharge()) continue;
    ++n_summaries;
    const auto ss = split_sections(note, headers);
    for (const auto& s : ss.sections) {
      ++n_sections;
      csv << csv_escape(note.note_id) << ',' << csv_escape(note.subject_id) << ','
          << csv_escape(note.hadm_id.value_or("")) << ',' << csv_escape(s.name) << ',' << s.header_begin << ','
          << s.body_begin << ',' << s.body_end << ',' << csv_escape(ss.body(s)) << '\n';
    }
  }
  if (n_summaries == 0) throw ValidationError("no discharge summaries in the notes file");
  ctx.write("sections.csv", csv.str());
  std::cout << n_summaries << " summaries, " << n_sections << " sections\n";
}

void cmd_extract_cuis(Context& ctx) {
  const auto notes = load_notes(ctx);
  const auto gaz = load_gazetteer(ctx);
  std::ostringstream csv;
  csv << "note_id,subject_id,cui,start,end,n_tokens,text\n";
  std::size_t n_spans = 0;
  for (const auto& note : notes) {
    for (const auto& s : subsumption_filter(extract_concepts(note.text, gaz))) {
      ++n_spans;
      csv << csv_escape(note.note_id) << ',' << csv_escape(note.subject_id) << ',' << csv_escape(s.cui) << ','
          << s.start << ',' << s.end << ',' << s.n_tokens << ','
          << csv_escape(std::string_view(note.text).substr(s.start, s.end - s.start)) << '\n';
    }
  }
  ctx.write("concepts.csv", csv.str());
  std::cout << notes.size() << " notes, " << n_spans << " concept spans\n";
}

void cmd_recall(Context& ctx) {
  const auto notes = load_notes(ctx);
  const auto gaz = load_gazetteer(ctx);
  const RecallReport report = upper_bound_report(notes, gaz, ctx.config.mode);
  ctx.write("per_summary.csv", per_summary_csv(report));
  ctx.write("aggregate.json", aggregate_json(report));
  for (auto axis : {ScatterAxis::kOtherNotes, ScatterAxis::kOtherCuis, ScatterAxis::kHoursOutsideIcu}) {
    try {
      const auto rows = scatter_data(report, axis);
      ctx.write("scatter_" + std::string(axis_name(axis)) + ".csv", scatter_csv(rows, axis));
    } catch (const ValidationError& e) {
      // a covariate missing from the notes only drops its scatter file
      std::cerr << "skipping scatter: " << e.what() << '\n';
    }
  }
  if (!ctx.config.sections.empty()) {
    std::optional<std::map<std::string, std::string, std::less<>>> structured;
    if (ctx.config.paths.demographics) structured = load_demographics(*ctx.config.paths.demographics);
    const auto rows = section_recall_report(notes, gaz, load_headers(ctx), ctx.config.sections,
                                            structured ? &*structured : nullptr);
    ctx.write("section_recall.csv", section_recall_csv(rows));
  }
  std::cout << "mode " << mode_name(report.mode) << ": mean recall " << format_double(report.mean_recall) << " over "
            << report.per_summary.size() << " summaries (" << report.n_skipped << " skipped, " << report.n_vacuous
            << " vacuous)\n";
}

void cmd_pretrain(Context& ctx) {
  const auto notes = load_notes(ctx);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& note : notes) {
    std::vector<std::string> words;
    for (auto& t : tokenize(note.text)) {
      if (ctx.config.model.lowercase_words) {
        for (char& ch : t.text) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
      words.push_back(std::move(t.text));
    }
    corpus.push_back(std::move(words));
  }
  const Vocab vocab = build_vocab(corpus, ctx.config.min_count);
  const Word2VecResult result = train_word2vec(corpus, vocab, ctx.config.word2vec);
  save_embeddings(ctx.out / "vectors.txt", result.table, vocab);
  ctx.manifest->add_output("vectors.txt");
  Json loss;
  loss["mode"] = ctx.config.word2vec.mode == Word2VecMode::kCbow ? "cbow" : "skipgram";
  loss["vocab_size"] = vocab.size();
  loss["epoch_loss"] = result.epoch_loss;
  ctx.write("loss.json", loss.dump(2) + "\n");
  std::cout << vocab.size() << " words x " << result.table.dim() << " dims; final epoch loss "
            << format_double(result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << '\n';
}

Json split_json(const DatasetSplit& split) {
  auto ids = [](const std::vector<LabeledDocument>& docs) {
    std::vector<std::string> out;
    for (const auto& d : docs) out.push_back(d.doc_id);
    return out;
  };
  return Json{{"train", ids(split.train)}, {"dev", ids(split.dev)}, {"test", ids(split.test)}};
}

void cmd_train(Context& ctx) {
  const auto& c = ctx.config;
  c.train.validate();
  const DatasetSplit split = split_dataset(load_documents(ctx), c.seed);
  if (split.dev.empty()) throw ValidationError("too few documents for a dev split");
  ModelSetup setup;
  setup.extra_docs = &split.dev;
  if (c.model.word_mode != WordEmbeddingMode::kLearned) setup.embeddings = require(c.paths.embeddings, "--embeddings");
  TaggerModel model = make_model(c.model, split.train, c.seed, &setup);
  const TrainResult result = train(model, c.train, split.train, split.dev);

  save_model(ctx.out / "model.ckpt", model);
  ctx.manifest->add_output("model.ckpt");
  ctx.write("split.json", split_json(split).dump(2) + "\n");
  ctx.write("history.json", history_json(result).dump(2) + "\n");
  Json metrics;
  const EvalReport dev = evaluate(model, split.dev);
  metrics["dev"] = eval_json(dev);
  ctx.write("per_label_dev.csv", per_label_csv(dev));
  ctx.write("confusion_dev.csv", confusion_csv(dev));
  if (!split.test.empty()) {
    const EvalReport test = evaluate(model, split.test);
    metrics["test"] = eval_json(test);
    ctx.write("per_label_test.csv", per_label_csv(test));
    ctx.write("confusion_test.csv", confusion_csv(test));
  }
  ctx.write("metrics.json", metrics.dump(2) + "\n");

  for (const auto& e : result.history) {
    std::cout << "epoch " << e.epoch << " loss " << format_double(e.train_loss) << " dev_f1 "
              << format_double(e.dev_weighted_f1) << (e.improved ? " *" : "") << '\n';
  }
  std::cout << "best dev weighted F1 " << format_double(result.best_dev_f1) << " at epoch " << result.best_epoch
            << (result.stopped_early ? " (stopped early)" : "") << '\n';
  if (result.diverged) throw RuntimeFailure("training diverged; model.ckpt holds the last good parameters");
}

void cmd_evaluate(Context& ctx) {
  const auto& c = ctx.config;
  const TaggerModel model = load_model(require(c.paths.model, "--model"));
  auto docs = load_documents(ctx);
  std::vector<LabeledDocument> chosen;
  if (c.split == "all") {
    chosen = std::move(docs);
  } else {
    DatasetSplit split = split_dataset(std::move(docs), c.seed);
    if (c.split == "train") chosen = std::move(split.train);
    else if (c.split == "dev") chosen = std::move(split.dev);
    else if (c.split == "test") chosen = std::move(split.test);
    else throw ValidationError("unknown split '" + c.split + "' (train | dev | test | all)");
  }
  if (chosen.empty()) throw ValidationError("the " + c.split + " split is empty");
  const EvalReport report = evaluate(model, chosen);
  Json metrics;
  metrics[c.split] = eval_json(report);
  ctx.write("metrics.json", metrics.dump(2) + "\n");
  ctx.write("per_label.csv", per_label_csv(report));
  ctx.write("confusion.csv", confusion_csv(report));
  std::cout << format_report(report);
}

void cmd_predict(Context& ctx) {
  const TaggerModel model = load_model(require(ctx.config.paths.model, "--model"));
  const std::string text = read_file(require(ctx.config.paths.input, "--input"));
  const auto tokens = tokenize(text);
  const auto labels = model.predict(tokens);
  std::ostringstream tsv;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tsv << tokens[i].text << '\t' << tokens[i].start << '\t' << tokens[i].end << '\t' << LabelSet::name(labels[i])
        << '\n';
  }
  ctx.write("predictions.tsv", tsv.str());
  std::cout << tsv.str();
}

void cmd_ablate(Context& ctx) {
  const auto& c = ctx.config;
  c.train.validate();
  const DatasetSplit split = split_dataset(load_documents(ctx), c.seed);
  if (split.dev.empty()) throw ValidationError("too few documents for a dev split");
  std::vector<AblationSpec> specs = c.ablation;
  if (specs.empty()) {
    specs = {{"learned+chars", std::nullopt, true, WordEmbeddingMode::kLearned},
             {"learned-chars", std::nullopt, false, WordEmbeddingMode::kLearned}};
    if (c.paths.embeddings) {
      specs.push_back({"pretrained+chars", c.paths.embeddings, true, WordEmbeddingMode::kPretrainedFinetuned});
      specs.push_back({"pretrained-chars", c.paths.embeddings, false, WordEmbeddingMode::kPretrainedFinetuned});
      specs.push_back({"frozen+chars", c.paths.embeddings, true, WordEmbeddingMode::kPretrainedFrozen});
    }
  }
  for (auto& s : specs) {
    if (s.word_mode != WordEmbeddingMode::kLearned && !s.embeddings) s.embeddings = c.paths.embeddings;
  }
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  const auto rows = ablation_run(specs, c.model, tc, split.train, split.dev);
  const std::string csv = ablation_csv(rows);
  ctx.write("ablation.csv", csv);
  std::cout << csv;
}

constexpr std::string_view kReferenceTargets =
    "Published reference targets (MIMIC-III, restricted data; not reproducible here)\n"
    "  concept recall upper bound      by subject 0.431, by admission 0.375\n"
    "  tagger dev F1                   learned embeddings 0.886, pretrained 0.873\n"
    "  character features (dev F1)     with 0.873, without 0.847\n"
    "  tagger test                     accuracy 0.88, weighted F1 0.876\n"
    "  per-label test F1               Demographics 0.96, Vitals/Labs 0.40\n";

void cmd_report(Context& ctx) {
  const fs::path& dir = require(ctx.config.paths.run, "--run");
  if (!fs::is_directory(dir)) throw ValidationError("not a run directory: " + dir.string());
  std::ostringstream out;
  bool any = false;
  if (fs::exists(dir / "manifest.json")) {
    const auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
    out << "run: " << m.value("command", "?") << " (status " << m.value("status", "?") << ", seed "
        << m.value("seed", nlohmann::json()).dump() << ")\n\n";
  }
  if (fs::exists(dir / "history.json")) {
    any = true;
    const auto h = nlohmann::json::parse(read_file(dir / "history.json"));
    out << "epoch  train_loss  dev_weighted_f1\n";
    for (const auto& e : h.at("epochs")) {
      out << e.at("epoch").get<std::size_t>() << "  " << format_double(e.at("train_loss").get<double>()) << "  "
          << format_double(e.at("dev_weighted_f1").get<double>()) << (e.at("improved").get<bool>() ? " *" : "")
          << '\n';
    }
    out << '\n';
  }
  if (fs::exists(dir / "metrics.json")) {
    any = true;
    const auto m = nlohmann::json::parse(read_file(dir / "metrics.json"));
    for (const auto& [split, report] : m.items()) {
      out << "[" << split << "]\n" << format_report(eval_from_json(report)) << '\n';
    }
  }
  if (fs::exists(dir / "aggregate.json")) {
    any = true;
    out << "concept recall\n" << read_file(dir / "aggregate.json") << '\n';
  }
  if (fs::exists(dir / "ablation.csv")) {
    any = true;
    out << "ablation\n" << read_file(dir / "ablation.csv") << '\n';
  }
  if (!any) throw ValidationError(dir.string() + " holds no metrics, history, recall or ablation outputs");
  out << kReferenceTargets;
  ctx.write("report.txt", out.str());
  std::cout << out.str();
}

// ---- plumbing -----------------------------------------------------------------

using Handler = void (*)(Context&);

struct Command {
  const char* name;
  const char* help;
  Handler run;
  std::vector<std::string> options;  // beyond --config/--seed/--out-dir
};

const std::vector<Command>& commands() {
  static const std::vector<Command> list{
      {"split-sections", "Split discharge summaries into header-delimited sections", cmd_split_sections,
       {"--notes", "--headers"}},
      {"extract-cuis", "Extract maximal gazetteer concept spans from every note", cmd_extract_cuis,
       {"--notes", "--gazetteer"}},
      {"recall", "Concept recall of discharge summaries against the rest of the record", cmd_recall,
       {"--notes", "--gazetteer", "--mode", "--headers", "--section", "--demographics"}},
      {"pretrain-embeddings", "Train word2vec vectors on note text", cmd_pretrain, {"--notes", "--mode"}},
      {"train", "Train the BiLSTM-CRF topic tagger", cmd_train,
       {"--annotations", "--synthetic", "--embeddings", "--mode"}},
      {"evaluate", "Score a checkpoint on an annotated split", cmd_evaluate,
       {"--model", "--annotations", "--synthetic", "--split"}},
      {"predict", "Label the tokens of a plain-text note", cmd_predict, {"--model", "--input"}},
      {"ablate", "Dev F1 for a grid of embedding and character configurations", cmd_ablate,
       {"--annotations", "--synthetic", "--embeddings"}},
      {"report", "Render the metrics of a previous run directory", cmd_report, {"--run"}},
  };
  return list;
}

void add_option(CLI::App& sub, const std::string& name, Flags& f, const std::string& command) {
  if (name == "--notes") sub.add_option("--notes", f.notes, "Notes file (.csv or .jsonl)");
  else if (name == "--headers") sub.add_option("--headers", f.headers, "Section header config");
  else if (name == "--gazetteer") sub.add_option("--gazetteer", f.gazetteer, "phrase<TAB>CUI file");
  else if (name == "--section") sub.add_option("--section", f.sections, "Section for per-section recall (repeatable)");
  else if (name == "--demographics") sub.add_option("--demographics", f.demographics, "CSV with subject_id,gender");
  else if (name == "--annotations") sub.add_option("--annotations", f.annotations, "Directory of NAME.txt + NAME.xml");
  else if (name == "--synthetic") sub.add_option("--synthetic", f.synthetic, "Built-in corpus: separable | morphology");
  else if (name == "--embeddings") sub.add_option("--embeddings", f.embeddings, "word2vec text-format vectors");
  else if (name == "--model") sub.add_option("--model", f.model, "Checkpoint written by train");
  else if (name == "--input") sub.add_option("--input", f.input, "Plain-text note");
  else if (name == "--split") sub.add_option("--split", f.split, "train | dev | test | all");
  else if (name == "--run") sub.add_option("--run", f.run, "Run directory to report on");
  else if (name == "--mode") {
    const char* help = command == "recall"                ? "by-admission | by-subject"
                       : command == "pretrain-embeddings" ? "cbow | skipgram"
                                                          : "learned | pretrained-finetuned | pretrained-frozen";
    sub.add_option("--mode", f.mode, help);
  }
}

void apply_flags(const CLI::App& sub, const std::string& command, const Flags& f, RunConfig& c) {
  auto given = [&](const char* name) {
    try {
      return sub.count(name) > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  };
  if (given("--seed")) c.seed = f.seed;
  if (given("--notes")) c.paths.notes = f.notes;
  if (given("--headers")) c.paths.headers = f.headers;
  if (given("--gazetteer")) c.paths.gazetteer = f.gazetteer;
  if (given("--demographics")) c.paths.demographics = f.demographics;
  if (given("--annotations")) c.paths.annotations = f.annotations;
  if (given("--embeddings")) c.paths.embeddings = f.embeddings;
  if (given("--model")) c.paths.model = f.model;
  if (given("--input")) c.paths.input = f.input;
  if (given("--run")) c.paths.run = f.run;
  if (given("--synthetic")) c.synthetic = f.synthetic;
  if (given("--split")) c.split = f.split;
  if (given("--section")) c.sections = f.sections;
  if (given("--mode")) {
    if (command == "recall") c.mode = parse_mode(f.mode);
    else if (command == "pretrain-embeddings") c.word2vec.mode = parse_word2vec_mode(f.mode);
    else c.model.word_mode = parse_word_mode(f.mode);
  }
  c.train.seed = c.seed;
  c.word2vec.seed = c.seed;
}

std::vector<fs::path> input_paths(const RunConfig& c) {
  std::vector<fs::path> out;
  for (const auto* p : {&c.paths.notes, &c.paths.annotations, &c.paths.gazetteer, &c.paths.embeddings,
                        &c.paths.headers, &c.paths.model, &c.paths.input, &c.paths.demographics}) {
    if (*p) out.push_back(**p);
  }
  return out;
}

int run(const Command& cmd, const CLI::App& sub, const Flags& flags, std::vector<std::string> argv) {
  fs::path out = flags.out_dir;
  if (out.empty()) {
    const char* env = std::getenv("EHRSUM_OUT_DIR");
    out = env && *env ? fs::path(env) : fs::path("runs") / cmd.name;
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    std::cerr << "error: cannot create run directory " << out << '\n';
    return 2;
  }
  Manifest manifest(out, cmd.name, std::move(argv));
  Context ctx{cmd.name, {}, out, &manifest};
  try {
    manifest.start();
    if (!flags.config.empty()) {
      manifest.add_input(flags.config);
      ctx.config = load_run_config(flags.config);
    }
    apply_flags(sub, cmd.name, flags, ctx.config);
    manifest.set_config(ctx.config);
    if (std::string_view(cmd.name) == "train" || std::string_view(cmd.name) == "ablate") {
      manifest.set_field("lr_decay_schedule", "per-epoch");
    }
    for (const auto& p : input_paths(ctx.config)) {
      if (std::string_view(cmd.name) == "ablate" && p == ctx.config.paths.embeddings && !fs::exists(p)) continue;
      manifest.add_input(p);
    }
    cmd.run(ctx);
    manifest.finish("ok");
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    manifest.finish("validation_error", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    try {
      manifest.finish("runtime_failure", e.what());
    } catch (const std::exception&) {
    }
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept recall of discharge summaries and BiLSTM-CRF tagging of HPI topics", "ehrsum"};
  app.set_version_flag("--version", EHRSUM_VERSION);
  app.require_subcommand(1);
  Flags flags;
  std::vector<std::pair<const Command*, CLI::App*>> subs;
  for (const auto& cmd : commands()) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", flags.config, "JSON run config; flags override its values");
    sub->add_option("--seed", flags.seed, "Random seed for splits, initialization and sampling");
    sub->add_option("--out-dir", flags.out_dir, "Run directory (default $EHRSUM_OUT_DIR or runs/<command>)");
    for (const auto& o : cmd.options) add_option(*sub, o, flags, cmd.name);
    subs.emplace_back(&cmd, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* shown = &app;
    for (const auto& [cmd, sub] : subs) {
      if (sub->parsed()) shown = sub;
    }
    std::cerr << shown->help();
    return 1;
  }

  for (const auto& [cmd, sub] : subs) {
    if (sub->parsed()) return run(*cmd, *sub, flags, std::vector<std::string>(argv + 1, argv + argc));
  }
  return 1;
}
