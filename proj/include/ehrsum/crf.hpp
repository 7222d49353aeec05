#pragma once

// Linear-chain CRF over per-position emission scores.
//
// A label sequence y_1..y_m of length m has global score
//   Q(y) = begin[y_1] + sum_t s_t[y_t] + sum_{t<m} T[y_t, y_{t+1}] + end[y_m]
// and probability exp(Q(y)) / Z with Z summed over all L^m sequences. All
// normalizer arithmetic runs in log space.

#include <cstddef>
#include <span>
#include <vector>

#include "ehrsum/corpus.hpp"
#include "ehrsum/matrix.hpp"

namespace ehrsum {

// Read-only view so the CRF can run directly over model parameter storage.
struct CrfView {
  std::size_t labels = 0;
  std::span<const double> transitions;  // labels x labels, row = from
  std::span<const double> begin;        // labels
  std::span<const double> end;          // labels

  double transition(std::size_t from, std::size_t to) const { return transitions[from * labels + to]; }
};

struct CrfParams {
  std::size_t labels = 0;
  Matrix transitions;
  std::vector<double> begin;
  std::vector<double> end;

  explicit CrfParams(std::size_t n = LabelSet::kSize)
      : labels(n), transitions(n, n), begin(n, 0.0), end(n, 0.0) {}
  CrfView view() const { return {labels, transitions.flat(), begin, end}; }
};

using LabelSequence = std::vector<std::size_t>;

// Throws ValidationError when |y| differs from the number of emission rows,
// or a label is out of range.
double sequence_score(const CrfView& crf, const Matrix& emissions, std::span<const std::size_t> y);

// Forward recursion; emissions must have at least one row.
double log_partition(const CrfView& crf, const Matrix& emissions);

struct CrfMarginals {
  double log_z = 0.0;
  Matrix unary;                  // m x L, P(y_t = a)
  Matrix pairwise;               // L x L, sum_t P(y_t = a, y_{t+1} = b)
};

CrfMarginals marginals(const CrfView& crf, const Matrix& emissions);

struct CrfGradients {
  Matrix emissions;  // m x L
  Matrix transitions;
  std::vector<double> begin;
  std::vector<double> end;
};

struct CrfLoss {
  double loss = 0.0;  // log Z - Q(y_true), never negative up to rounding
  CrfGradients grad;
};

// -log P(y_true) with gradients from forward-backward marginals.
CrfLoss sequence_nll(const CrfView& crf, const Matrix& emissions, std::span<const std::size_t> y_true);

struct ViterbiResult {
  LabelSequence labels;
  double score = 0.0;  // sequence_score of labels
};

// Highest-scoring sequence. Among equally scored optima the lexicographically
// smallest sequence is returned. An empty emission matrix yields an empty path.
ViterbiResult viterbi(const CrfView& crf, const Matrix& emissions);

double log_sum_exp(std::span<const double> xs);

}  // namespace ehrsum
