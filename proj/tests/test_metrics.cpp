#include "doctest.h"
#include "ehrsum/error.hpp"
#include "ehrsum/metrics.hpp"
#include "ehrsum/random.hpp"

using namespace ehrsum;

TEST_CASE("perfect predictions give ones and a diagonal confusion matrix") {
  const std::vector<std::vector<LabelId>> gold = {{0, 1, 2, 9}, {4, 4}};
  const auto r = compute_report(gold, gold);
  CHECK(r.accuracy == 1.0);
  CHECK(r.weighted_f1 == 1.0);
  CHECK(r.macro_f1 == 1.0);
  for (std::size_t p = 0; p < 10; ++p) {
    for (std::size_t g = 0; g < 10; ++g) {
      if (p != g) CHECK(r.confusion[p][g] == 0);
    }
  }
  CHECK(r.confusion[4][4] == 2);
  CHECK(r.per_label[4].f1 == 1.0);
  CHECK(r.per_label[5].f1 == 0.0);
  CHECK(r.per_label[5].support == 0);
}

TEST_CASE("twelve-token, three-label fixture matches hand arithmetic") {
  // gold 0 0 0 0 1 1 1 1 2 2 2 2
  // pred 0 0 0 1 1 1 2 2 2 2 2 0
  // label 0: tp 3, predicted 4, support 4 -> P 3/4  R 3/4  F1 3/4
  // label 1: tp 2, predicted 3, support 4 -> P 2/3  R 1/2  F1 4/7
  // label 2: tp 3, predicted 5, support 4 -> P 3/5  R 3/4  F1 2/3
  const std::vector<LabelId> gold = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  const std::vector<LabelId> pred = {0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2, 0};
  MetricsAccumulator acc;
  acc.add(gold, pred);
  const auto r = acc.report();
  CHECK(r.tokens == 12);
  CHECK(r.accuracy == doctest::Approx(8.0 / 12.0));
  CHECK(r.per_label[0].precision == doctest::Approx(0.75));
  CHECK(r.per_label[0].recall == doctest::Approx(0.75));
  CHECK(r.per_label[0].f1 == doctest::Approx(0.75));
  CHECK(r.per_label[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_label[1].recall == doctest::Approx(0.5));
  CHECK(r.per_label[1].f1 == doctest::Approx(4.0 / 7.0));
  CHECK(r.per_label[2].precision == doctest::Approx(0.6));
  CHECK(r.per_label[2].recall == doctest::Approx(0.75));
  CHECK(r.per_label[2].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.weighted_f1 == doctest::Approx((0.75 + 4.0 / 7.0 + 2.0 / 3.0) / 3.0));
  CHECK(r.macro_f1 == doctest::Approx((0.75 + 4.0 / 7.0 + 2.0 / 3.0) / 3.0));
  CHECK(r.confusion[2][1] == 2);
  CHECK(r.confusion[0][2] == 1);
}

TEST_CASE("confusion marginals reconcile with supports and prediction counts") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<LabelId>> gold, pred;
    for (std::size_t d = 0, n = 1 + rng.below(5); d < n; ++d) {
      std::vector<LabelId> g(rng.below(30)), p;
      for (auto& x : g) x = static_cast<LabelId>(rng.below(10));
      for (auto x : g) p.push_back(rng.bernoulli(0.6) ? x : static_cast<LabelId>(rng.below(10)));
      gold.push_back(g);
      pred.push_back(p);
    }
    const auto r = compute_report(gold, pred);
    std::size_t total = 0, diag = 0;
    for (std::size_t l = 0; l < 10; ++l) {
      std::size_t row = 0, col = 0;
      for (std::size_t k = 0; k < 10; ++k) {
        row += r.confusion[l][k];
        col += r.confusion[k][l];
      }
      CHECK(row == r.per_label[l].predicted);
      CHECK(col == r.per_label[l].support);
      total += row;
      diag += r.confusion[l][l];
    }
    CHECK(total == r.tokens);
    if (r.tokens > 0) CHECK(r.accuracy == static_cast<double>(diag) / static_cast<double>(r.tokens));
  }
}

TEST_CASE("metric inputs are validated") {
  MetricsAccumulator acc;
  CHECK_THROWS_AS(acc.add(std::vector<LabelId>{1, 2}, std::vector<LabelId>{1}), ValidationError);
  CHECK_THROWS_AS(acc.add(std::vector<LabelId>{10}, std::vector<LabelId>{1}), ValidationError);
  const auto empty = MetricsAccumulator().report();
  CHECK(empty.tokens == 0);
  CHECK(empty.accuracy == 0.0);
}

TEST_CASE("reports render as CSV and text") {
  const auto r = compute_report({{0, 1, 1}}, {{0, 1, 0}});
  const auto csv = per_label_csv(r);
  CHECK(csv.rfind("label,precision,recall,f1,support", 0) == 0);
  CHECK(csv.find("Demographics") != std::string::npos);
  CHECK(csv.find("\nweighted,") != std::string::npos);
  const auto conf = confusion_csv(r);
  CHECK(conf.find("Symptoms/Signs") != std::string::npos);
  CHECK(format_report(r).find("accuracy") != std::string::npos);
}
