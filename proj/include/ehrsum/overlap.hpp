#pragma once

// Concept recall of discharge summaries against the rest of a patient's
// record: how much of a summary an extractive method could possibly recover.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ehrsum/concepts.hpp"
#include "ehrsum/corpus.hpp"

namespace ehrsum {

enum class GroupingMode { kByAdmission, kBySubject };

std::string_view mode_name(GroupingMode mode);
// Accepts by-admission/by_admission/hadm and by-subject/by_subject/subject.
GroupingMode parse_mode(std::string_view name);

// |discharge & other| / |discharge|; 1.0 for an empty discharge set.
double recall(const CuiSet& discharge, const CuiSet& other);

struct SummaryRecall {
  std::string note_id;
  std::string subject_id;
  std::optional<std::string> hadm_id;
  double recall = 1.0;
  std::size_t n_discharge_cuis = 0;
  std::size_t n_other_cuis = 0;
  std::size_t n_other_notes = 0;
  std::optional<double> hours_outside_icu;
  bool vacuous = false;  // empty discharge CUI set
};

struct RecallReport {
  GroupingMode mode = GroupingMode::kByAdmission;
  std::vector<SummaryRecall> per_summary;  // input order of discharge notes
  double mean_recall = 0.0;                // unweighted; 0 when no summaries
  double mean_recall_nonvacuous = 0.0;
  std::size_t n_vacuous = 0;
  std::size_t n_skipped = 0;  // discharge notes without hadm_id in by-admission mode
};

// Throws ValidationError when no discharge note is present.
RecallReport upper_bound_report(const std::vector<NoteRecord>& notes, const Gazetteer& gaz,
                                GroupingMode mode);

struct GenderRecall {
  double recall = 0.0;
  std::size_t n_compared = 0;
  std::size_t n_matched = 0;
  std::size_t n_unparseable = 0;  // counted as mismatches
  std::size_t n_skipped = 0;      // no structured record for the subject
};

// "M"/"Male"/"F"/"Female" (case-insensitive, first word); nullopt otherwise.
std::optional<char> parse_sex(std::string_view value);

GenderRecall gender_recall(const std::vector<NoteRecord>& notes,
                           const std::vector<HeaderPattern>& headers,
                           const std::map<std::string, std::string, std::less<>>& structured);

struct SectionRecall {
  std::string section;
  double mean_recall = 0.0;
  std::size_t n_summaries = 0;
  std::size_t n_skipped = 0;  // section absent, or no hadm_id
};

// Per-section recall against non-discharge notes of the same admission. A
// "Sex" entry is answered by gender_recall when structured data is given and
// by concept recall otherwise.
std::vector<SectionRecall> section_recall_report(
    const std::vector<NoteRecord>& notes, const Gazetteer& gaz,
    const std::vector<HeaderPattern>& headers, const std::vector<std::string>& sections,
    const std::map<std::string, std::string, std::less<>>* structured = nullptr);

enum class ScatterAxis { kOtherNotes, kOtherCuis, kHoursOutsideIcu };
std::string_view axis_name(ScatterAxis axis);
ScatterAxis parse_axis(std::string_view name);

// One (x, recall) row per summary. Throws ValidationError naming the
// covariate when a summary lacks it.
std::vector<std::pair<double, double>> scatter_data(const RecallReport& report, ScatterAxis axis);

double pearson(const std::vector<std::pair<double, double>>& xy);

std::string per_summary_csv(const RecallReport& report);
std::string scatter_csv(const std::vector<std::pair<double, double>>& rows, ScatterAxis axis);
std::string section_recall_csv(const std::vector<SectionRecall>& rows);
std::string aggregate_json(const RecallReport& report);

// Reads per_summary_csv output back.
RecallReport parse_per_summary_csv(std::string_view content);

}  // namespace ehrsum
