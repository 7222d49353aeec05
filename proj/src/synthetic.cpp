#include "ehrsum/synthetic.hpp"

#include <cstdio>

#include "ehrsum/random.hpp"

namespace ehrsum::synthetic {
namespace {

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

std::string term(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "term%02zu", k);
  return buf;
}

std::string cui(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "C9%06zu", k);
  return buf;
}

std::string terms_text(const std::vector<std::size_t>& ks) {
  std::string text = "note";
  for (std::size_t k : ks) text += " " + term(k);
  return text;
}

NoteRecord note(std::string id, std::string subject, std::optional<std::string> hadm, std::string category,
                std::string text) {
  NoteRecord n;
  n.note_id = std::move(id);
  n.subject_id = std::move(subject);
  n.hadm_id = std::move(hadm);
  n.category = std::move(category);
  n.text = std::move(text);
  return n;
}

}  // namespace

LabeledDocument make_document(std::string doc_id, const std::vector<std::string>& words,
                              const std::vector<LabelId>& labels) {
  LabeledDocument doc;
  doc.doc_id = std::move(doc_id);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) doc.text += ' ';
    const std::size_t start = doc.text.size();
    doc.text += words[i];
    doc.tokens.push_back({words[i], start, doc.text.size()});
  }
  doc.labels = labels;
  return doc;
}

std::vector<std::string> separable_lexicon(std::size_t n) {
  static constexpr std::string_view kOnsets = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::vector<std::string> words;
  for (std::size_t k = 0; k < n; ++k) {
    std::string w;
    std::size_t x = k;
    do {
      w += kOnsets[x % kOnsets.size()];
      x /= kOnsets.size();
      w += kVowels[x % kVowels.size()];
      x /= kVowels.size();
    } while (x > 0);
    words.push_back(w + "x");
  }
  return words;
}

std::vector<LabeledDocument> separable_corpus(const SeparableConfig& config) {
  Rng rng(config.seed);
  const auto lexicon = separable_lexicon(config.lexicon);
  std::vector<LabeledDocument> docs;
  for (std::size_t d = 0; d < config.n_docs; ++d) {
    const std::size_t len = between(rng, config.min_len, config.max_len);
    std::vector<std::string> words;
    std::vector<LabelId> labels;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t k = rng.below(lexicon.size());
      words.push_back(lexicon[k]);
      labels.push_back(static_cast<LabelId>(k % LabelSet::kSize));
    }
    docs.push_back(make_document("sep" + std::to_string(d), words, labels));
  }
  return docs;
}

std::vector<LabeledDocument> morphology_corpus(const MorphologyConfig& config) {
  Rng rng(config.seed);
  std::vector<LabeledDocument> docs;
  for (std::size_t d = 0; d < config.n_docs; ++d) {
    const std::size_t len = between(rng, config.min_len, config.max_len);
    std::vector<std::string> words;
    std::vector<LabelId> labels;
    for (std::size_t i = 0; i < len; ++i) {
      std::string w;
      const std::size_t stem = between(rng, config.min_stem, config.max_stem);
      for (std::size_t c = 0; c < stem; ++c) w += static_cast<char>('a' + rng.below(16));
      const auto label = static_cast<LabelId>(rng.below(LabelSet::kSize));
      w += static_cast<char>('q' + label);
      words.push_back(w);
      labels.push_back(label);
    }
    docs.push_back(make_document("morph" + std::to_string(d), words, labels));
  }
  return docs;
}

Gazetteer term_gazetteer(std::size_t n_terms) {
  Gazetteer gaz;
  for (std::size_t k = 0; k < n_terms; ++k) gaz.add(term(k), cui(k));
  return gaz;
}

RecallFixture three_patient_fixture() {
  RecallFixture f;
  f.gazetteer = term_gazetteer(12);
  auto& n = f.notes;
  // Patient 1: both summary terms appear in a nursing note.
  n.push_back(note("1", "p1", "a1", "Discharge summary", terms_text({0, 1})));
  n.push_back(note("2", "p1", "a1", "Nursing", terms_text({1, 0, 7})));
  // Patient 2: two of four terms spread over two notes.
  n.push_back(note("3", "p2", "a2", "Discharge summary", terms_text({2, 3, 4, 5})));
  n.push_back(note("4", "p2", "a2", "Radiology", terms_text({2})));
  n.push_back(note("5", "p2", "a2", "Physician", terms_text({4, 8})));
  // Patient 3: one of four in the same admission, one more in another.
  n.push_back(note("6", "p3", "a3", "Discharge summary", terms_text({6, 9, 10, 11})));
  n.push_back(note("7", "p3", "a3", "Nursing", terms_text({6})));
  n.push_back(note("8", "p3", "a4", "ECG", terms_text({9})));
  f.by_admission = {1.0, 0.5, 0.25};
  f.by_subject = {1.0, 0.5, 0.5};
  return f;
}

std::vector<NoteRecord> random_notes(const RandomNotesConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  static const std::vector<std::string> kCategories = {"Nursing", "Radiology", "Physician", "ECG", "Echo"};
  auto random_terms = [&] {
    std::vector<std::size_t> ks(rng.below(config.max_terms_per_note + 1));
    for (auto& k : ks) k = rng.below(config.n_terms);
    return terms_text(ks);
  };
  std::vector<NoteRecord> notes;
  std::size_t id = 0;
  for (std::size_t s = 0; s < config.n_subjects; ++s) {
    const std::string subject = "s" + std::to_string(s);
    const std::size_t n_adm = 1 + rng.below(config.max_admissions);
    for (std::size_t a = 0; a < n_adm; ++a) {
      const std::string hadm = subject + "a" + std::to_string(a);
      if (rng.bernoulli(0.8)) {
        std::optional<std::string> h = hadm;
        if (rng.bernoulli(config.p_missing_hadm)) h.reset();
        notes.push_back(note(std::to_string(id++), subject, h, "Discharge summary", random_terms()));
      }
      const std::size_t n_other = rng.below(config.max_notes + 1);
      for (std::size_t k = 0; k < n_other; ++k) {
        notes.push_back(note(std::to_string(id++), subject, hadm, kCategories[rng.below(kCategories.size())],
                             random_terms()));
      }
    }
  }
  bool any = false;
  for (const auto& n : notes) any = any || n.is_discharge();
  if (!any) notes.push_back(note(std::to_string(id++), "s0", "s0a0", "Discharge summary", random_terms()));
  rng.shuffle(notes.begin(), notes.end());
  return notes;
}

std::vector<NoteRecord> null_hours_corpus(std::size_t n_summaries, std::uint64_t seed) {
  Rng rng(seed);
  constexpr std::size_t kTerms = 8;
  std::vector<NoteRecord> notes;
  for (std::size_t s = 0; s < n_summaries; ++s) {
    const std::string subject = "s" + std::to_string(s);
    const std::string hadm = "h" + std::to_string(s);
    std::vector<std::size_t> summary(kTerms), other;
    for (std::size_t k = 0; k < kTerms; ++k) {
      summary[k] = s * kTerms + k;
      if (rng.bernoulli(0.5)) other.push_back(summary[k]);
    }
    NoteRecord d = note("d" + std::to_string(s), subject, hadm, "Discharge summary", terms_text(summary));
    d.hours_outside_icu = rng.uniform(0.0, 240.0);
    notes.push_back(std::move(d));
    notes.push_back(note("n" + std::to_string(s), subject, hadm, "Nursing", terms_text(other)));
  }
  return notes;
}

}  // namespace ehrsum::synthetic
