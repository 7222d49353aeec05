#pragma once

// Seeded synthetic corpora with known structure, used by the test suites,
// the acceptance harness and the CLI smoke runs.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ehrsum/concepts.hpp"
#include "ehrsum/corpus.hpp"

namespace ehrsum::synthetic {

// Builds a document from whitespace-joined words, one token per word.
LabeledDocument make_document(std::string doc_id, const std::vector<std::string>& words,
                              const std::vector<LabelId>& labels);

// Label is a fixed function of word identity: word k of the lexicon carries
// label k % 10.
struct SeparableConfig {
  std::size_t n_docs = 500;
  std::size_t lexicon = 30;
  std::size_t min_len = 6;
  std::size_t max_len = 14;
  std::uint64_t seed = 7;
};
std::vector<std::string> separable_lexicon(std::size_t n);
std::vector<LabeledDocument> separable_corpus(const SeparableConfig& config);

// Each word is a fresh random stem over a..p followed by one suffix letter
// from q..z; the label is the suffix index. Word identity almost never
// repeats across documents, so only characters carry the label.
struct MorphologyConfig {
  std::size_t n_docs = 300;
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  std::size_t min_stem = 3;
  std::size_t max_stem = 6;
  std::uint64_t seed = 11;
};
std::vector<LabeledDocument> morphology_corpus(const MorphologyConfig& config);

// Gazetteer of single-word terms "termNN" mapped to "C90000NN".
Gazetteer term_gazetteer(std::size_t n_terms);

// Three patients; by-admission recalls are 1, 1/2 and 1/4. Patient 3 also has
// a note from a second admission that lifts by-subject recall to 1/2.
struct RecallFixture {
  Gazetteer gazetteer;
  std::vector<NoteRecord> notes;
  std::vector<double> by_admission;  // per summary, input order
  std::vector<double> by_subject;
};
RecallFixture three_patient_fixture();

// Random subjects, admissions and notes over term_gazetteer(n_terms). Some
// discharge notes lack hadm_id; every corpus has at least one discharge note.
struct RandomNotesConfig {
  std::size_t n_subjects = 6;
  std::size_t max_admissions = 3;
  std::size_t max_notes = 5;  // non-discharge notes per admission
  std::size_t n_terms = 25;
  std::size_t max_terms_per_note = 6;
  double p_missing_hadm = 0.1;
};
std::vector<NoteRecord> random_notes(const RandomNotesConfig& config, std::uint64_t seed);

// One admission per summary with hours_outside_icu drawn independently of the
// concept overlap, which is itself random. Uses term_gazetteer(8 * n_summaries).
std::vector<NoteRecord> null_hours_corpus(std::size_t n_summaries, std::uint64_t seed);

}  // namespace ehrsum::synthetic
