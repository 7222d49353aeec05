#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "ehrsum/corpus.hpp"
#include "ehrsum/error.hpp"

namespace ehrsum {
namespace {

std::optional<std::string> json_string(const nlohmann::json& row, const char* key) {
  auto it = row.find(key);
  if (it == row.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  if (it->is_number()) return it->dump();
  throw ValidationError(std::string("field '") + key + "' must be a string or number");
}

std::optional<double> parse_hours(const std::string& raw, std::size_t row) {
  if (raw.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc{} || ptr != raw.data() + raw.size()) {
    throw ValidationError("row " + std::to_string(row) + ": hours_outside_icu is not a number: '" + raw + "'");
  }
  return v;
}

void finish(NoteRecord& note, std::size_t row) {
  if (note.note_id.empty()) note.note_id = std::to_string(row);
  if (note.hadm_id && note.hadm_id->empty()) note.hadm_id.reset();
  try {
    validate(note);
  } catch (const ValidationError& e) {
    throw ValidationError("row " + std::to_string(row) + ": " + e.what());
  }
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (field_started || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        field.clear();
        row.clear();
        field_started = false;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (quoted) throw ValidationError("CSV ends inside a quoted field");
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<NoteRecord> parse_notes_csv(std::string_view content) {
  const auto rows = parse_csv(content);
  if (rows.empty()) return {};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    std::string name = rows[0][i];
    for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    col.emplace(name, i);
  }
  auto index = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
    for (const char* n : names) {
      if (auto it = col.find(n); it != col.end()) return it->second;
    }
    return std::nullopt;
  };
  const auto subject = index({"subject_id"});
  const auto text = index({"text"});
  if (!subject || !text) throw ValidationError("notes CSV needs subject_id and text columns");
  const auto note_id = index({"note_id", "row_id"});
  const auto hadm = index({"hadm_id"});
  const auto category = index({"category"});
  const auto chart = index({"chart_time", "charttime"});
  const auto hours = index({"hours_outside_icu"});

  std::vector<NoteRecord> notes;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != rows[0].size()) {
      throw ValidationError("notes CSV row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(rows[0].size()));
    }
    NoteRecord n;
    if (note_id) n.note_id = row[*note_id];
    n.subject_id = row[*subject];
    if (hadm) n.hadm_id = row[*hadm];
    if (category) n.category = row[*category];
    if (chart) n.chart_time = row[*chart];
    n.text = row[*text];
    if (hours) n.hours_outside_icu = parse_hours(row[*hours], r);
    finish(n, r);
    notes.push_back(std::move(n));
  }
  return notes;
}

std::vector<NoteRecord> parse_notes_jsonl(std::string_view content) {
  std::vector<NoteRecord> notes;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("notes JSONL line " + std::to_string(row) + ": " + e.what());
    }
    NoteRecord n;
    try {
      n.note_id = json_string(j, "note_id").value_or(json_string(j, "row_id").value_or(""));
      n.subject_id = json_string(j, "subject_id").value_or("");
      n.hadm_id = json_string(j, "hadm_id");
      n.category = json_string(j, "category").value_or("");
      n.chart_time = json_string(j, "chart_time").value_or(json_string(j, "charttime").value_or(""));
      n.text = json_string(j, "text").value_or("");
      if (auto it = j.find("hours_outside_icu"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw ValidationError("hours_outside_icu must be numeric");
        n.hours_outside_icu = it->get<double>();
      }
    } catch (const ValidationError& e) {
      throw ValidationError("notes JSONL line " + std::to_string(row) + ": " + e.what());
    }
    finish(n, row);
    notes.push_back(std::move(n));
  }
  return notes;
}

std::vector<NoteRecord> read_notes(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return parse_notes_jsonl(content);
  return parse_notes_csv(content);
}

}  // namespace ehrsum
