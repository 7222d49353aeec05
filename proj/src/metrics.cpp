#include "ehrsum/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "ehrsum/error.hpp"
#include "ehrsum/format.hpp"

namespace ehrsum {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

void MetricsAccumulator::add(std::span<const LabelId> gold, std::span<const LabelId> predicted) {
  if (gold.size() != predicted.size()) {
    throw ValidationError("gold/predicted length mismatch: " + std::to_string(gold.size()) + " vs " +
                          std::to_string(predicted.size()));
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= EvalReport::L || predicted[i] >= EvalReport::L) {
      throw ValidationError("label id out of range in evaluation");
    }
    ++confusion_[predicted[i]][gold[i]];
  }
  tokens_ += gold.size();
}

EvalReport MetricsAccumulator::report() const {
  EvalReport r;
  r.confusion = confusion_;
  r.tokens = tokens_;
  std::size_t correct = 0;
  for (std::size_t l = 0; l < EvalReport::L; ++l) {
    auto& m = r.per_label[l];
    for (std::size_t k = 0; k < EvalReport::L; ++k) {
      m.support += confusion_[k][l];
      m.predicted += confusion_[l][k];
    }
    const std::size_t tp = confusion_[l][l];
    correct += tp;
    m.precision = ratio(tp, m.predicted);
    m.recall = ratio(tp, m.support);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  r.accuracy = ratio(correct, tokens_);
  std::size_t present = 0;
  double macro = 0.0;
  for (const auto& m : r.per_label) {
    if (m.support > 0 || m.predicted > 0) {
      macro += m.f1;
      ++present;
    }
    const double w = static_cast<double>(m.support);
    r.weighted_f1 += w * m.f1;
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
  }
  if (tokens_ > 0) {
    // Divide once so a perfect prediction scores exactly 1.
    const double n = static_cast<double>(tokens_);
    r.weighted_f1 /= n;
    r.weighted_precision /= n;
    r.weighted_recall /= n;
  }
  r.macro_f1 = present == 0 ? 0.0 : macro / static_cast<double>(present);
  return r;
}

EvalReport compute_report(const std::vector<std::vector<LabelId>>& gold,
                          const std::vector<std::vector<LabelId>>& predicted) {
  if (gold.size() != predicted.size()) throw ValidationError("document count mismatch in evaluation");
  MetricsAccumulator acc;
  for (std::size_t d = 0; d < gold.size(); ++d) acc.add(gold[d], predicted[d]);
  return acc.report();
}

std::string per_label_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "label,precision,recall,f1,support,predicted\n";
  for (std::size_t l = 0; l < EvalReport::L; ++l) {
    const auto& m = report.per_label[l];
    out << csv_escape(LabelSet::name(static_cast<LabelId>(l))) << ',' << format_double(m.precision) << ','
        << format_double(m.recall) << ',' << format_double(m.f1) << ',' << m.support << ',' << m.predicted
        << '\n';
  }
  out << "weighted," << format_double(report.weighted_precision) << ',' << format_double(report.weighted_recall)
      << ',' << format_double(report.weighted_f1) << ',' << report.tokens << ',' << report.tokens << '\n';
  return out.str();
}

std::string confusion_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "predicted\\true";
  for (auto name : LabelSet::kNames) out << ',' << csv_escape(name);
  out << '\n';
  for (std::size_t p = 0; p < EvalReport::L; ++p) {
    out << csv_escape(LabelSet::name(static_cast<LabelId>(p)));
    for (std::size_t g = 0; g < EvalReport::L; ++g) out << ',' << report.confusion[p][g];
    out << '\n';
  }
  return out.str();
}

std::string format_report(const EvalReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %6s %6s %6s %9s\n", "Label", "P", "R", "F1", "Support");
  out += line;
  for (std::size_t l = 0; l < EvalReport::L; ++l) {
    const auto& m = report.per_label[l];
    std::snprintf(line, sizeof line, "%-20s %6.2f %6.2f %6.2f %9zu\n",
                  std::string(LabelSet::name(static_cast<LabelId>(l))).c_str(), m.precision, m.recall, m.f1,
                  m.support);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-20s %6.2f %6.2f %6.2f %9zu\n", "Average/Total", report.weighted_precision,
                report.weighted_recall, report.weighted_f1, report.tokens);
  out += line;
  std::snprintf(line, sizeof line, "accuracy %.4f  macro-F1 %.4f  weighted-F1 %.4f\n", report.accuracy,
                report.macro_f1, report.weighted_f1);
  out += line;
  return out;
}

}  // namespace ehrsum
