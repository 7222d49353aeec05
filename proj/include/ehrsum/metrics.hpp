#pragma once

// Token-level classification metrics for the topic tagger.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ehrsum/corpus.hpp"

namespace ehrsum {

struct LabelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold tokens with this label
  std::size_t predicted = 0;  // predicted tokens with this label
};

struct EvalReport {
  static constexpr std::size_t L = LabelSet::kSize;

  std::array<LabelMetrics, L> per_label{};
  // confusion[p][g]: tokens predicted p whose gold label is g
  std::array<std::array<std::size_t, L>, L> confusion{};
  std::size_t tokens = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;     // over labels present in gold or predictions
  double weighted_f1 = 0.0;  // support-weighted
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
};

class MetricsAccumulator {
 public:
  // Throws ValidationError when lengths differ or a label is out of range.
  void add(std::span<const LabelId> gold, std::span<const LabelId> predicted);
  EvalReport report() const;

 private:
  std::array<std::array<std::size_t, EvalReport::L>, EvalReport::L> confusion_{};
  std::size_t tokens_ = 0;
};

// 0/0 counts as 0 for precision, recall and F1.
EvalReport compute_report(const std::vector<std::vector<LabelId>>& gold,
                          const std::vector<std::vector<LabelId>>& predicted);

std::string per_label_csv(const EvalReport& report);
std::string confusion_csv(const EvalReport& report);
// Plain-text table in the usual P / R / F1 / support layout.
std::string format_report(const EvalReport& report);

}  // namespace ehrsum
