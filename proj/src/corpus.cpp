#include "ehrsum/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "ehrsum/error.hpp"
#include "ehrsum/random.hpp"

namespace ehrsum {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string regex_escape(std::string_view s) {
  static constexpr std::string_view kMeta = R"(\^$.|?*+()[]{}/)";
  std::string out;
  for (char c : s) {
    if (kMeta.find(c) != std::string_view::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::size_t parse_offset(const std::string& raw, std::string_view what) {
  const std::string s = trim(raw);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ValidationError("annotation " + std::string(what) + " offset is not a non-negative integer: '" + raw + "'");
  }
  return value;
}

void check_span(const AnnotatedSpan& span, std::size_t text_size) {
  if (span.start > span.end || span.end > text_size) {
    throw ValidationError("annotation span [" + std::to_string(span.start) + "," +
                          std::to_string(span.end) + ") lies outside text of length " +
                          std::to_string(text_size));
  }
}

void collect_spans(const boost::property_tree::ptree& node, std::string_view tag,
                   std::size_t text_size, std::vector<AnnotatedSpan>& out) {
  using boost::property_tree::ptree;
  if (auto attrs = node.get_child_optional("<xmlattr>")) {
    const auto label = attrs->get_optional<std::string>("label");
    const auto start = attrs->get_optional<std::string>("start");
    const auto end = attrs->get_optional<std::string>("end");
    const auto mae_spans = attrs->get_optional<std::string>("spans");
    if (lower(tag) == "span") {
      if (!label || !start || !end) {
        throw ValidationError("<span> element needs start, end and label attributes");
      }
      AnnotatedSpan span{parse_offset(*start, "start"), parse_offset(*end, "end"),
                         LabelSet::parse(*label)};
      check_span(span, text_size);
      out.push_back(span);
    } else if (mae_spans) {
      const LabelId id = LabelSet::parse(tag);
      std::stringstream ss(*mae_spans);
      std::string part;
      while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        const auto tilde = part.find('~');
        if (tilde == std::string::npos) {
          throw ValidationError("malformed MAE spans attribute: '" + *mae_spans + "'");
        }
        AnnotatedSpan span{parse_offset(part.substr(0, tilde), "start"),
                           parse_offset(part.substr(tilde + 1), "end"), id};
        check_span(span, text_size);
        out.push_back(span);
      }
    }
  }
  for (const auto& [child_tag, child] : node) {
    if (child_tag == "<xmlattr>" || child_tag == "<xmlcomment>") continue;
    collect_spans(child, child_tag, text_size, out);
  }
}

}  // namespace

bool NoteRecord::is_discharge() const { return lower(category).starts_with("discharge"); }

void validate(const NoteRecord& note) {
  if (note.subject_id.empty()) {
    throw ValidationError("note " + note.note_id + " has an empty subject_id");
  }
  if (note.text.empty()) throw ValidationError("note " + note.note_id + " has empty text");
}

std::string_view SectionedSummary::body(const Section& s) const {
  return std::string_view(source->text).substr(s.body_begin, s.body_end - s.body_begin);
}

const Section* SectionedSummary::find(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

HeaderPattern make_header(std::string name, std::string pattern) {
  try {
    std::regex re(pattern, std::regex::ECMAScript | std::regex::optimize);
    return HeaderPattern{std::move(name), std::move(pattern), std::move(re)};
  } catch (const std::regex_error& e) {
    throw ValidationError("bad header pattern for '" + name + "': " + pattern + " (" + e.what() + ")");
  }
}

HeaderPattern header_for_name(std::string name) {
  std::string pattern = "^[ \\t]*" + regex_escape(name) + "[ \\t]*:[ \\t]*(?:\\r?\\n)?";
  std::regex re(pattern, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  return HeaderPattern{std::move(name), std::move(pattern), std::move(re)};
}

std::vector<HeaderPattern> default_headers() {
  std::vector<HeaderPattern> out;
  for (const char* name :
       {"Admission Date", "Discharge Date", "Date of Birth", "Sex", "Service",
        "Allergies", "Attending", "Chief Complaint",
        "Major Surgical or Invasive Procedure", "History of Present Illness",
        "Past Medical History", "Social History", "Family History",
        "Physical Exam", "Pertinent Results", "Brief Hospital Course",
        "Medications on Admission", "Discharge Medications",
        "Discharge Disposition", "Discharge Diagnosis", "Discharge Condition",
        "Discharge Instructions", "Followup Instructions"}) {
    out.push_back(header_for_name(name));
  }
  return out;
}

std::vector<HeaderPattern> parse_header_config(std::string_view content) {
  std::vector<HeaderPattern> out;
  std::stringstream ss{std::string(content)};
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.push_back(header_for_name(trim(line)));
    } else {
      out.push_back(make_header(trim(line.substr(0, tab)), line.substr(tab + 1)));
    }
  }
  if (out.empty()) throw ValidationError("header configuration lists no patterns");
  return out;
}

std::vector<HeaderPattern> load_header_config(const std::filesystem::path& path) {
  return parse_header_config(read_file(path));
}

SectionedSummary split_sections(const NoteRecord& note,
                                const std::vector<HeaderPattern>& headers) {
  if (headers.empty()) throw ValidationError("split_sections needs at least one header pattern");
  const std::string& text = note.text;

  struct Hit {
    std::size_t begin, end;
    const HeaderPattern* header;
  };
  std::vector<Hit> hits;
  std::size_t pos = 0;
  while (pos < text.size()) {
    bool matched = false;
    for (const auto& h : headers) {
      std::smatch m;
      if (std::regex_search(text.cbegin() + static_cast<std::ptrdiff_t>(pos), text.cend(), m, h.re,
                            std::regex_constants::match_continuous) &&
          m.length(0) > 0) {
        const std::size_t end = pos + static_cast<std::size_t>(m.length(0));
        hits.push_back({pos, end, &h});
        pos = end;
        matched = true;
        break;
      }
    }
    // advance to the next line start at or after pos
    if (matched && pos > 0 && text[pos - 1] == '\n') continue;
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }

  SectionedSummary out;
  out.source = &note;
  const std::size_t first = hits.empty() ? text.size() : hits.front().begin;
  if (hits.empty() || first > 0) {
    out.sections.push_back({std::string(kUnknownSection), 0, 0, first});
  }
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const std::size_t body_end = i + 1 < hits.size() ? hits[i + 1].begin : text.size();
    out.sections.push_back({hits[i].header->name, hits[i].begin, hits[i].end, body_end});
  }
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      tokens.push_back({std::string(text.substr(i, j - i)), i, j});
      i = j;
    } else {
      tokens.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
    }
  }
  return tokens;
}

std::optional<LabelId> LabelSet::find(std::string_view name) {
  for (std::size_t i = 0; i < kSize; ++i) {
    if (kNames[i] == name) return static_cast<LabelId>(i);
  }
  // Loose match: case-insensitive, ignoring spaces, '/', '_' and '-'.
  auto squash = [](std::string_view s) {
    std::string out;
    for (char c : s) {
      if (c == ' ' || c == '/' || c == '_' || c == '-') continue;
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
  };
  const std::string key = squash(name);
  for (std::size_t i = 0; i < kSize; ++i) {
    if (squash(kNames[i]) == key) return static_cast<LabelId>(i);
  }
  if (key == "movement") return static_cast<LabelId>(8);
  return std::nullopt;
}

LabelId LabelSet::parse(std::string_view name) {
  if (auto id = find(name)) return *id;
  throw ValidationError("unknown label '" + std::string(name) + "'");
}

std::vector<AnnotatedSpan> parse_annotation_xml(std::string_view xml, std::size_t text_size) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(xml)};
  try {
    boost::property_tree::read_xml(in, tree);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw ValidationError(std::string("annotation XML: ") + e.what());
  }
  std::vector<AnnotatedSpan> spans;
  for (const auto& [tag, child] : tree) collect_spans(child, tag, text_size, spans);
  return spans;
}

LabeledDocument label_tokens(std::string doc_id, std::string text,
                             const std::vector<AnnotatedSpan>& spans) {
  LabeledDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.tokens = tokenize(text);
  doc.text = std::move(text);
  doc.labels.assign(doc.tokens.size(), LabelSet::kOther);

  std::vector<AnnotatedSpan> ordered = spans;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const AnnotatedSpan& a, const AnnotatedSpan& b) { return a.start < b.start; });
  for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
    // midpoint m = (start+end)/2 lies in [s, e)  <=>  2s <= start+end < 2e
    const std::size_t twice_mid = doc.tokens[t].start + doc.tokens[t].end;
    for (const auto& span : ordered) {
      if (2 * span.start > twice_mid) break;
      if (twice_mid < 2 * span.end) doc.labels[t] = span.label;
    }
  }
  return doc;
}

LabeledDocument parse_annotations(std::string_view xml, std::string text, std::string doc_id) {
  auto spans = parse_annotation_xml(xml, text.size());
  return label_tokens(std::move(doc_id), std::move(text), spans);
}

std::vector<LabeledDocument> load_annotation_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("annotation directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> xmls;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".xml") xmls.push_back(entry.path());
  }
  std::sort(xmls.begin(), xmls.end());
  std::vector<LabeledDocument> docs;
  for (const auto& xml_path : xmls) {
    auto txt_path = xml_path;
    txt_path.replace_extension(".txt");
    if (!std::filesystem::exists(txt_path)) continue;
    try {
      docs.push_back(parse_annotations(read_file(xml_path), read_file(txt_path),
                                       xml_path.stem().string()));
    } catch (const ValidationError& e) {
      throw ValidationError(xml_path.string() + ": " + e.what());
    }
  }
  return docs;
}

void validate(const LabeledDocument& doc) {
  if (doc.tokens.size() != doc.labels.size()) {
    throw ValidationError("document " + doc.doc_id + ": token/label count mismatch");
  }
  for (LabelId l : doc.labels) {
    if (l >= LabelSet::kSize) throw ValidationError("document " + doc.doc_id + ": label id out of range");
  }
  for (const auto& t : doc.tokens) {
    if (t.start >= t.end) throw ValidationError("document " + doc.doc_id + ": empty token span");
    if (!doc.text.empty() &&
        (t.end > doc.text.size() || doc.text.compare(t.start, t.end - t.start, t.text) != 0)) {
      throw ValidationError("document " + doc.doc_id + ": token '" + t.text + "' does not match its offsets");
    }
  }
}

SplitSizes split_sizes(std::size_t n) {
  const std::size_t train = n * 70 / 100;
  const std::size_t dev = n * 15 / 100;
  return {train, dev, n - train - dev};
}

DatasetSplit split_dataset(std::vector<LabeledDocument> docs, std::uint64_t seed) {
  if (docs.size() < 3) {
    throw ValidationError("need at least 3 documents to split, got " + std::to_string(docs.size()));
  }
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  const SplitSizes sizes = split_sizes(docs.size());
  DatasetSplit out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& doc = docs[order[k]];
    if (k < sizes.train) {
      out.train.push_back(std::move(doc));
    } else if (k < sizes.train + sizes.dev) {
      out.dev.push_back(std::move(doc));
    } else {
      out.test.push_back(std::move(doc));
    }
  }
  return out;
}

}  // namespace ehrsum
