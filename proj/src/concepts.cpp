#include "ehrsum/concepts.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "ehrsum/corpus.hpp"
#include "ehrsum/error.hpp"

namespace ehrsum {
namespace {

void append_lower(std::string& out, std::string_view token) {
  for (char c : token) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
}

}  // namespace

std::string normalize_phrase(std::string_view text) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    append_lower(out, tok.text);
  }
  return out;
}

void Gazetteer::add(std::string_view phrase, std::string cui) {
  const auto tokens = tokenize(phrase);
  if (tokens.empty()) throw ValidationError("gazetteer phrase is empty");
  if (cui.empty()) throw ValidationError("gazetteer entry '" + std::string(phrase) + "' has no CUI");
  auto& cuis = entries_[normalize_phrase(phrase)];
  if (std::find(cuis.begin(), cuis.end(), cui) == cuis.end()) {
    cuis.insert(std::upper_bound(cuis.begin(), cuis.end(), cui), std::move(cui));
  }
  max_phrase_len_ = std::max(max_phrase_len_, tokens.size());
}

const std::vector<std::string>* Gazetteer::lookup(const std::string& normalized) const {
  auto it = entries_.find(normalized);
  return it == entries_.end() ? nullptr : &it->second;
}

Gazetteer Gazetteer::parse(std::string_view tsv) {
  Gazetteer gaz;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError("gazetteer line " + std::to_string(line_no) + ": expected phrase<TAB>CUI");
    }
    std::string cui = line.substr(tab + 1);
    while (!cui.empty() && std::isspace(static_cast<unsigned char>(cui.back()))) cui.pop_back();
    try {
      gaz.add(line.substr(0, tab), std::move(cui));
    } catch (const ValidationError& e) {
      throw ValidationError("gazetteer line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return gaz;
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) { return parse(read_file(path)); }

bool span_order(const ConceptSpan& a, const ConceptSpan& b) {
  if (a.start != b.start) return a.start < b.start;
  if (a.end != b.end) return a.end > b.end;
  if (a.n_tokens != b.n_tokens) return a.n_tokens > b.n_tokens;
  return a.cui < b.cui;
}

std::vector<ConceptSpan> extract_concepts(std::string_view text, const Gazetteer& gaz) {
  if (gaz.empty()) throw ValidationError("gazetteer is empty");
  const auto tokens = tokenize(text);
  std::vector<ConceptSpan> spans;
  std::string key;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    key.clear();
    for (std::size_t n = 1; n <= gaz.max_phrase_len() && i + n <= tokens.size(); ++n) {
      if (n > 1) key.push_back(' ');
      append_lower(key, tokens[i + n - 1].text);
      if (const auto* cuis = gaz.lookup(key)) {
        for (const auto& cui : *cuis) {
          spans.push_back({cui, tokens[i].start, tokens[i + n - 1].end, n});
        }
      }
    }
  }
  std::sort(spans.begin(), spans.end(), span_order);
  return spans;
}

std::vector<ConceptSpan> subsumption_filter(std::vector<ConceptSpan> spans) {
  // After sorting by (start asc, end desc, tokens desc, cui asc) every earlier
  // span starts at or before the current one, so the current span is covered
  // exactly when some earlier span reaches its end.
  std::sort(spans.begin(), spans.end(), span_order);
  std::vector<ConceptSpan> kept;
  bool any = false;
  std::size_t max_end = 0;
  for (auto& s : spans) {
    if (any && max_end >= s.end) continue;
    max_end = std::max(max_end, s.end);
    any = true;
    kept.push_back(std::move(s));
  }
  return kept;
}

CuiSet cui_set(std::string_view text, const Gazetteer& gaz) {
  CuiSet out;
  for (auto& s : subsumption_filter(extract_concepts(text, gaz))) out.insert(std::move(s.cui));
  return out;
}

}  // namespace ehrsum
