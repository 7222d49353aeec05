#pragma once

// Clinical note ingestion: section splitting, tokenization, span annotations
// and train/dev/test partitioning.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace ehrsum {

struct NoteRecord {
  std::string note_id;  // row id; synthesized from position when absent
  std::string subject_id;
  std::optional<std::string> hadm_id;
  std::string category;
  std::string chart_time;
  std::string text;
  std::optional<double> hours_outside_icu;

  // category starts with "discharge", case-insensitively
  bool is_discharge() const;
};

// Throws ValidationError when subject_id or text is empty.
void validate(const NoteRecord& note);

struct Section {
  std::string name;           // canonical header name or "UNKNOWN"
  std::size_t header_begin;   // header match [header_begin, body_begin)
  std::size_t body_begin;
  std::size_t body_end;       // exclusive; next header or end of text
};

struct SectionedSummary {
  const NoteRecord* source = nullptr;
  std::vector<Section> sections;

  std::string_view body(const Section& s) const;
  // First section with this name, if any.
  const Section* find(std::string_view name) const;
};

// A header pattern is tried at every line start with match_continuous, so it is
// implicitly anchored even without a leading '^'.
struct HeaderPattern {
  std::string name;
  std::string source;
  std::regex re;
};

inline constexpr std::string_view kUnknownSection = "UNKNOWN";

HeaderPattern make_header(std::string name, std::string pattern);
// "Name" alone expands to a case-insensitive "^\s*Name\s*:[ \t]*".
HeaderPattern header_for_name(std::string name);
std::vector<HeaderPattern> default_headers();

// One pattern per line: either "Name<TAB>regex" or a bare header name.
// Blank lines and lines starting with '#' are skipped.
std::vector<HeaderPattern> parse_header_config(std::string_view content);
std::vector<HeaderPattern> load_header_config(const std::filesystem::path& path);

SectionedSummary split_sections(const NoteRecord& note,
                                const std::vector<HeaderPattern>& headers);

struct Token {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Token&, const Token&) = default;
};

// Maximal runs of alphanumerics (bytes >= 0x80 count as word characters so
// UTF-8 sequences stay whole), or single punctuation characters. Whitespace
// separates tokens and is never part of one.
std::vector<Token> tokenize(std::string_view text);

using LabelId = std::uint8_t;

struct LabelSet {
  static constexpr std::size_t kSize = 10;
  static constexpr std::array<std::string_view, kSize> kNames = {
      "Demographics",       "DiagnosisHistory", "MedicationHistory",
      "ProcedureHistory",   "Symptoms/Signs",   "Vitals/Labs",
      "Procedures/Results", "Meds/Treatments",  "PatientMovement",
      "Other"};
  static constexpr LabelId kOther = 9;

  static std::string_view name(LabelId id) { return kNames.at(id); }
  // Accepts the canonical names plus a few spellings seen in exports
  // ("Movement", "Patient Movement", "Symptoms_Signs", ...).
  static std::optional<LabelId> find(std::string_view name);
  // Throws ValidationError naming the label when unknown.
  static LabelId parse(std::string_view name);
};

struct LabeledDocument {
  std::string doc_id;
  std::string text;
  std::vector<Token> tokens;
  std::vector<LabelId> labels;
};

struct AnnotatedSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  LabelId label = LabelSet::kOther;
};

// Reads span annotations from an XML export. Recognizes both
//   <span start="0" end="10" label="Demographics"/>
// and MAE-style tags such as
//   <Demographics id="D0" spans="0~10" text="..."/>
// under a <TAGS> element. Throws ValidationError on unknown labels, malformed
// offsets, or XML syntax errors.
std::vector<AnnotatedSpan> parse_annotation_xml(std::string_view xml,
                                                std::size_t text_size);

// Labels each token from the span covering its midpoint; when several spans
// cover it the one starting latest wins. Uncovered tokens get Other.
LabeledDocument label_tokens(std::string doc_id, std::string text,
                             const std::vector<AnnotatedSpan>& spans);

LabeledDocument parse_annotations(std::string_view xml, std::string text,
                                  std::string doc_id = {});

// Loads every NAME.xml in dir that has a NAME.txt beside it, sorted by name.
std::vector<LabeledDocument> load_annotation_dir(const std::filesystem::path& dir);

// Checks |tokens| == |labels|, label ids in range and token offsets.
void validate(const LabeledDocument& doc);

struct DatasetSplit {
  std::vector<LabeledDocument> train;
  std::vector<LabeledDocument> dev;
  std::vector<LabeledDocument> test;
};

struct SplitSizes {
  std::size_t train, dev, test;
};
SplitSizes split_sizes(std::size_t n);

// Seeded shuffle, then floor(0.7n) / floor(0.15n) / remainder.
DatasetSplit split_dataset(std::vector<LabeledDocument> docs, std::uint64_t seed);

// ---- note files -----------------------------------------------------------

// CSV (RFC 4180 quoting, header row) or JSON lines, chosen by extension
// (.jsonl/.json vs anything else). Required columns: subject_id, text.
// Optional: note_id (or row_id), hadm_id, category, chart_time (or charttime),
// hours_outside_icu.
std::vector<NoteRecord> read_notes(const std::filesystem::path& path);
std::vector<NoteRecord> parse_notes_csv(std::string_view content);
std::vector<NoteRecord> parse_notes_jsonl(std::string_view content);

// Minimal RFC 4180 reader: quoted fields may contain commas, quotes ("") and
// newlines.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);
std::string csv_escape(std::string_view field);

std::string read_file(const std::filesystem::path& path);

}  // namespace ehrsum
