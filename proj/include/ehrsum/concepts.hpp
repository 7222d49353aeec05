#pragma once

// Dictionary-based concept (CUI) extraction with longest-span filtering.

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ehrsum {

class Gazetteer {
 public:
  Gazetteer() = default;

  // Phrases are normalized (tokenized, lowercased, single-spaced) on insert.
  // A phrase may map to several CUIs. Throws ValidationError on an empty
  // phrase or CUI.
  void add(std::string_view phrase, std::string cui);

  // Returns nullptr when the normalized phrase is not present.
  const std::vector<std::string>* lookup(const std::string& normalized) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t max_phrase_len() const { return max_phrase_len_; }
  const std::map<std::string, std::vector<std::string>, std::less<>>& entries() const {
    return entries_;
  }

  // TSV: phrase<TAB>CUI per line; '#' comments and blank lines skipped.
  static Gazetteer parse(std::string_view tsv);
  static Gazetteer load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> entries_;
  std::size_t max_phrase_len_ = 0;
};

std::string normalize_phrase(std::string_view text);

struct ConceptSpan {
  std::string cui;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t n_tokens = 1;
  friend bool operator==(const ConceptSpan&, const ConceptSpan&) = default;
};

// Orders by start, then longer first, then CUI.
bool span_order(const ConceptSpan& a, const ConceptSpan& b);

// Every token n-gram (n <= max_phrase_len) whose normalized form is a key.
// Throws ValidationError when the gazetteer is empty.
std::vector<ConceptSpan> extract_concepts(std::string_view text, const Gazetteer& gaz);

// Keeps exactly the maximal intervals. Among spans sharing an identical
// interval the one with more tokens wins, then the smallest CUI.
std::vector<ConceptSpan> subsumption_filter(std::vector<ConceptSpan> spans);

using CuiSet = std::set<std::string, std::less<>>;

CuiSet cui_set(std::string_view text, const Gazetteer& gaz);

}  // namespace ehrsum
