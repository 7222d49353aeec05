#include "ehrsum/overlap.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "ehrsum/error.hpp"
#include "ehrsum/format.hpp"

namespace ehrsum {
namespace {

const std::string* group_key(const NoteRecord& n, GroupingMode mode) {
  if (mode == GroupingMode::kBySubject) return &n.subject_id;
  return n.hadm_id ? &*n.hadm_id : nullptr;
}

struct OtherNotes {
  CuiSet cuis;
  std::size_t count = 0;
};

// Union of CUI sets of the non-discharge notes, keyed by admission or subject.
std::unordered_map<std::string, OtherNotes> pool_other_notes(const std::vector<NoteRecord>& notes,
                                                             const Gazetteer& gaz,
                                                             GroupingMode mode) {
  std::unordered_map<std::string, OtherNotes> pool;
  for (const auto& n : notes) {
    if (n.is_discharge()) continue;
    const std::string* key = group_key(n, mode);
    if (!key) continue;
    auto& entry = pool[*key];
    entry.cuis.merge(cui_set(n.text, gaz));
    ++entry.count;
  }
  return pool;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<std::string> sex_value(const NoteRecord& note, const std::vector<HeaderPattern>& headers) {
  const auto sectioned = split_sections(note, headers);
  if (const Section* s = sectioned.find("Sex")) return std::string(sectioned.body(*s));
  // MIMIC puts "Sex:" mid-line after the date of birth; fall back to a scan.
  static const std::regex inline_sex(R"(\bSex:[ \t]*([^\s]*))", std::regex::icase);
  std::smatch m;
  if (std::regex_search(note.text, m, inline_sex)) return m[1].str();
  return std::nullopt;
}

}  // namespace

std::string_view mode_name(GroupingMode mode) {
  return mode == GroupingMode::kByAdmission ? "by_admission" : "by_subject";
}

GroupingMode parse_mode(std::string_view name) {
  const std::string n = lower(name);
  if (n == "by-admission" || n == "by_admission" || n == "hadm" || n == "hadm_id") {
    return GroupingMode::kByAdmission;
  }
  if (n == "by-subject" || n == "by_subject" || n == "subject" || n == "subject_id") {
    return GroupingMode::kBySubject;
  }
  throw ValidationError("unknown grouping mode '" + std::string(name) + "' (by-admission | by-subject)");
}

double recall(const CuiSet& discharge, const CuiSet& other) {
  if (discharge.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& c : discharge) hit += other.count(c);
  return static_cast<double>(hit) / static_cast<double>(discharge.size());
}

RecallReport upper_bound_report(const std::vector<NoteRecord>& notes, const Gazetteer& gaz,
                                GroupingMode mode) {
  bool any_discharge = false;
  for (const auto& n : notes) any_discharge |= n.is_discharge();
  if (!any_discharge) throw ValidationError("no discharge-category notes in input");

  const auto pool = pool_other_notes(notes, gaz, mode);
  const OtherNotes none;
  RecallReport report;
  report.mode = mode;
  std::vector<double> all, nonvacuous;
  for (const auto& n : notes) {
    if (!n.is_discharge()) continue;
    const std::string* key = group_key(n, mode);
    if (!key) {
      ++report.n_skipped;
      continue;
    }
    auto it = pool.find(*key);
    const OtherNotes& other = it == pool.end() ? none : it->second;
    const CuiSet discharge = cui_set(n.text, gaz);

    SummaryRecall row;
    row.note_id = n.note_id;
    row.subject_id = n.subject_id;
    row.hadm_id = n.hadm_id;
    row.recall = recall(discharge, other.cuis);
    row.n_discharge_cuis = discharge.size();
    row.n_other_cuis = other.cuis.size();
    row.n_other_notes = other.count;
    row.hours_outside_icu = n.hours_outside_icu;
    row.vacuous = discharge.empty();
    all.push_back(row.recall);
    if (row.vacuous) {
      ++report.n_vacuous;
    } else {
      nonvacuous.push_back(row.recall);
    }
    report.per_summary.push_back(std::move(row));
  }
  report.mean_recall = mean(all);
  report.mean_recall_nonvacuous = mean(nonvacuous);
  return report;
}

std::optional<char> parse_sex(std::string_view value) {
  std::size_t b = 0;
  while (b < value.size() && std::isspace(static_cast<unsigned char>(value[b]))) ++b;
  std::size_t e = b;
  while (e < value.size() && std::isalpha(static_cast<unsigned char>(value[e]))) ++e;
  const std::string word = lower(value.substr(b, e - b));
  if (word == "m" || word == "male") return 'M';
  if (word == "f" || word == "female") return 'F';
  return std::nullopt;
}

GenderRecall gender_recall(const std::vector<NoteRecord>& notes,
                           const std::vector<HeaderPattern>& headers,
                           const std::map<std::string, std::string, std::less<>>& structured) {
  GenderRecall out;
  for (const auto& n : notes) {
    if (!n.is_discharge()) continue;
    auto it = structured.find(n.subject_id);
    const auto recorded = it == structured.end() ? std::nullopt : parse_sex(it->second);
    if (!recorded) {
      ++out.n_skipped;
      continue;
    }
    ++out.n_compared;
    const auto value = sex_value(n, headers);
    const auto in_summary = value ? parse_sex(*value) : std::nullopt;
    if (!in_summary) {
      ++out.n_unparseable;
    } else if (*in_summary == *recorded) {
      ++out.n_matched;
    }
  }
  out.recall = out.n_compared == 0 ? 0.0
                                   : static_cast<double>(out.n_matched) / static_cast<double>(out.n_compared);
  return out;
}

std::vector<SectionRecall> section_recall_report(
    const std::vector<NoteRecord>& notes, const Gazetteer& gaz,
    const std::vector<HeaderPattern>& headers, const std::vector<std::string>& sections,
    const std::map<std::string, std::string, std::less<>>* structured) {
  const auto pool = pool_other_notes(notes, gaz, GroupingMode::kByAdmission);
  const OtherNotes none;

  std::vector<SectionRecall> out;
  std::vector<std::vector<double>> values(sections.size());
  for (const auto& name : sections) out.push_back({name, 0.0, 0, 0});

  for (const auto& n : notes) {
    if (!n.is_discharge()) continue;
    const auto sectioned = split_sections(n, headers);
    const OtherNotes* other = nullptr;
    if (n.hadm_id) {
      auto it = pool.find(*n.hadm_id);
      other = it == pool.end() ? &none : &it->second;
    }
    for (std::size_t k = 0; k < sections.size(); ++k) {
      if (sections[k] == "Sex" && structured) continue;
      const Section* s = sectioned.find(sections[k]);
      if (!s || !other) {
        ++out[k].n_skipped;
        continue;
      }
      values[k].push_back(recall(cui_set(sectioned.body(*s), gaz), other->cuis));
    }
  }
  for (std::size_t k = 0; k < sections.size(); ++k) {
    if (sections[k] == "Sex" && structured) {
      const auto g = gender_recall(notes, headers, *structured);
      out[k].mean_recall = g.recall;
      out[k].n_summaries = g.n_compared;
      out[k].n_skipped = g.n_skipped;
      continue;
    }
    out[k].mean_recall = mean(values[k]);
    out[k].n_summaries = values[k].size();
  }
  return out;
}

std::string_view axis_name(ScatterAxis axis) {
  switch (axis) {
    case ScatterAxis::kOtherNotes:
      return "n_other_notes";
    case ScatterAxis::kOtherCuis:
      return "n_other_cuis";
    case ScatterAxis::kHoursOutsideIcu:
      return "hours_outside_icu";
  }
  return "";
}

ScatterAxis parse_axis(std::string_view name) {
  for (auto a : {ScatterAxis::kOtherNotes, ScatterAxis::kOtherCuis, ScatterAxis::kHoursOutsideIcu}) {
    if (axis_name(a) == name) return a;
  }
  throw ValidationError("unknown scatter axis '" + std::string(name) +
                        "' (n_other_notes | n_other_cuis | hours_outside_icu)");
}

std::vector<std::pair<double, double>> scatter_data(const RecallReport& report, ScatterAxis axis) {
  std::vector<std::pair<double, double>> rows;
  rows.reserve(report.per_summary.size());
  for (const auto& s : report.per_summary) {
    double x = 0.0;
    switch (axis) {
      case ScatterAxis::kOtherNotes:
        x = static_cast<double>(s.n_other_notes);
        break;
      case ScatterAxis::kOtherCuis:
        x = static_cast<double>(s.n_other_cuis);
        break;
      case ScatterAxis::kHoursOutsideIcu:
        if (!s.hours_outside_icu) {
          throw ValidationError("covariate hours_outside_icu missing for summary " + s.note_id);
        }
        x = *s.hours_outside_icu;
        break;
    }
    rows.emplace_back(x, s.recall);
  }
  return rows;
}

double pearson(const std::vector<std::pair<double, double>>& xy) {
  const double n = static_cast<double>(xy.size());
  if (xy.size() < 2) return 0.0;
  double mx = 0, my = 0;
  for (auto [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (auto [x, y] : xy) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string per_summary_csv(const RecallReport& report) {
  std::ostringstream out;
  out << "note_id,subject_id,hadm_id,recall,n_discharge_cuis,n_other_cuis,n_other_notes,"
         "hours_outside_icu,vacuous\n";
  for (const auto& s : report.per_summary) {
    out << csv_escape(s.note_id) << ',' << csv_escape(s.subject_id) << ','
        << csv_escape(s.hadm_id.value_or("")) << ',' << format_double(s.recall) << ','
        << s.n_discharge_cuis << ',' << s.n_other_cuis << ',' << s.n_other_notes << ','
        << (s.hours_outside_icu ? format_double(*s.hours_outside_icu) : "") << ','
        << (s.vacuous ? 1 : 0) << '\n';
  }
  return out.str();
}

RecallReport parse_per_summary_csv(std::string_view content) {
  const auto rows = parse_csv(content);
  if (rows.empty() || rows[0].size() != 9 || rows[0][3] != "recall") {
    throw ValidationError("not a per-summary recall CSV");
  }
  auto number = [](const std::string& s, std::size_t line) {
    double v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw ValidationError("recall CSV row " + std::to_string(line) + ": bad number '" + s + "'");
    }
    return v;
  };
  RecallReport report;
  std::vector<double> all, nonvacuous;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 9) throw ValidationError("recall CSV row " + std::to_string(r) + " has wrong arity");
    SummaryRecall s;
    s.note_id = row[0];
    s.subject_id = row[1];
    if (!row[2].empty()) s.hadm_id = row[2];
    s.recall = number(row[3], r);
    s.n_discharge_cuis = static_cast<std::size_t>(number(row[4], r));
    s.n_other_cuis = static_cast<std::size_t>(number(row[5], r));
    s.n_other_notes = static_cast<std::size_t>(number(row[6], r));
    if (!row[7].empty()) s.hours_outside_icu = number(row[7], r);
    s.vacuous = row[8] == "1";
    all.push_back(s.recall);
    if (s.vacuous) {
      ++report.n_vacuous;
    } else {
      nonvacuous.push_back(s.recall);
    }
    report.per_summary.push_back(std::move(s));
  }
  report.mean_recall = mean(all);
  report.mean_recall_nonvacuous = mean(nonvacuous);
  return report;
}

std::string scatter_csv(const std::vector<std::pair<double, double>>& rows, ScatterAxis axis) {
  std::ostringstream out;
  out << axis_name(axis) << ",recall\n";
  for (auto [x, y] : rows) out << format_double(x) << ',' << format_double(y) << '\n';
  return out.str();
}

std::string section_recall_csv(const std::vector<SectionRecall>& rows) {
  std::ostringstream out;
  out << "section,mean_recall,n_summaries,n_skipped\n";
  for (const auto& r : rows) {
    out << csv_escape(r.section) << ',' << format_double(r.mean_recall) << ',' << r.n_summaries << ','
        << r.n_skipped << '\n';
  }
  return out.str();
}

std::string aggregate_json(const RecallReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(report.mode);
  j["n_summaries"] = report.per_summary.size();
  j["mean_recall"] = report.mean_recall;
  j["mean_recall_nonvacuous"] = report.mean_recall_nonvacuous;
  j["n_vacuous"] = report.n_vacuous;
  j["n_skipped"] = report.n_skipped;
  return j.dump(2) + "\n";
}

}  // namespace ehrsum
