#include "ehrsum/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ehrsum/error.hpp"

namespace ehrsum {
namespace {

void check_shapes(const CrfView& crf, const Matrix& emissions) {
  if (emissions.cols() != crf.labels || crf.transitions.size() != crf.labels * crf.labels ||
      crf.begin.size() != crf.labels || crf.end.size() != crf.labels) {
    throw ValidationError("CRF shape mismatch: " + std::to_string(crf.labels) + " labels, emissions have " +
                          std::to_string(emissions.cols()) + " columns");
  }
}

// alpha[t][a]: log-sum of scores of prefixes ending at t with label a,
// including begin and emissions up to t.
Matrix forward_table(const CrfView& crf, const Matrix& s) {
  const std::size_t m = s.rows(), L = crf.labels;
  Matrix alpha(m, L);
  std::vector<double> terms(L);
  for (std::size_t a = 0; a < L; ++a) alpha(0, a) = crf.begin[a] + s(0, a);
  for (std::size_t t = 1; t < m; ++t) {
    for (std::size_t b = 0; b < L; ++b) {
      for (std::size_t a = 0; a < L; ++a) terms[a] = alpha(t - 1, a) + crf.transition(a, b);
      alpha(t, b) = s(t, b) + log_sum_exp(terms);
    }
  }
  return alpha;
}

// beta[t][a]: log-sum of scores of suffixes after t given label a at t,
// including end but not s_t.
Matrix backward_table(const CrfView& crf, const Matrix& s) {
  const std::size_t m = s.rows(), L = crf.labels;
  Matrix beta(m, L);
  std::vector<double> terms(L);
  for (std::size_t a = 0; a < L; ++a) beta(m - 1, a) = crf.end[a];
  for (std::size_t t = m - 1; t-- > 0;) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) terms[b] = crf.transition(a, b) + s(t + 1, b) + beta(t + 1, b);
      beta(t, a) = log_sum_exp(terms);
    }
  }
  return beta;
}

double final_log_z(const CrfView& crf, const Matrix& alpha) {
  const std::size_t L = crf.labels;
  std::vector<double> terms(L);
  for (std::size_t a = 0; a < L; ++a) terms[a] = alpha(alpha.rows() - 1, a) + crf.end[a];
  return log_sum_exp(terms);
}

}  // namespace

double log_sum_exp(std::span<const double> xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

double sequence_score(const CrfView& crf, const Matrix& emissions, std::span<const std::size_t> y) {
  check_shapes(crf, emissions);
  if (y.size() != emissions.rows()) {
    throw ValidationError("label sequence length " + std::to_string(y.size()) + " != " +
                          std::to_string(emissions.rows()) + " positions");
  }
  if (y.empty()) return 0.0;
  for (std::size_t label : y) {
    if (label >= crf.labels) throw ValidationError("label id out of range: " + std::to_string(label));
  }
  double q = crf.begin[y[0]];
  for (std::size_t t = 0; t < y.size(); ++t) q += emissions(t, y[t]);
  for (std::size_t t = 0; t + 1 < y.size(); ++t) q += crf.transition(y[t], y[t + 1]);
  return q + crf.end[y.back()];
}

double log_partition(const CrfView& crf, const Matrix& emissions) {
  check_shapes(crf, emissions);
  if (emissions.rows() == 0) throw ValidationError("log_partition needs at least one position");
  return final_log_z(crf, forward_table(crf, emissions));
}

CrfMarginals marginals(const CrfView& crf, const Matrix& s) {
  check_shapes(crf, s);
  if (s.rows() == 0) throw ValidationError("marginals need at least one position");
  const std::size_t m = s.rows(), L = crf.labels;
  const Matrix alpha = forward_table(crf, s);
  const Matrix beta = backward_table(crf, s);
  CrfMarginals out;
  out.log_z = final_log_z(crf, alpha);
  out.unary = Matrix(m, L);
  out.pairwise = Matrix(L, L);
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t a = 0; a < L; ++a) out.unary(t, a) = std::exp(alpha(t, a) + beta(t, a) - out.log_z);
  }
  for (std::size_t t = 0; t + 1 < m; ++t) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) {
        out.pairwise(a, b) +=
            std::exp(alpha(t, a) + crf.transition(a, b) + s(t + 1, b) + beta(t + 1, b) - out.log_z);
      }
    }
  }
  return out;
}

CrfLoss sequence_nll(const CrfView& crf, const Matrix& emissions, std::span<const std::size_t> y_true) {
  const double q = sequence_score(crf, emissions, y_true);
  CrfMarginals marg = marginals(crf, emissions);
  const std::size_t m = emissions.rows(), L = crf.labels;

  CrfLoss out;
  out.loss = marg.log_z - q;
  out.grad.emissions = std::move(marg.unary);
  out.grad.transitions = std::move(marg.pairwise);
  out.grad.begin.assign(out.grad.emissions.row(0).begin(), out.grad.emissions.row(0).end());
  out.grad.end.assign(out.grad.emissions.row(m - 1).begin(), out.grad.emissions.row(m - 1).end());
  for (std::size_t t = 0; t < m; ++t) out.grad.emissions(t, y_true[t]) -= 1.0;
  for (std::size_t t = 0; t + 1 < m; ++t) out.grad.transitions(y_true[t], y_true[t + 1]) -= 1.0;
  out.grad.begin[y_true[0]] -= 1.0;
  out.grad.end[y_true[m - 1]] -= 1.0;
  (void)L;
  return out;
}

ViterbiResult viterbi(const CrfView& crf, const Matrix& s) {
  check_shapes(crf, s);
  ViterbiResult out;
  const std::size_t m = s.rows(), L = crf.labels;
  if (m == 0) return out;

  // best[t][a]: best score of a suffix starting with label a at t, counting
  // s_t[a], later emissions and transitions, and end. Decoding forward from
  // this table and taking the smallest maximizing label at each step gives
  // the lexicographically smallest optimum.
  Matrix best(m, L);
  for (std::size_t a = 0; a < L; ++a) best(m - 1, a) = s(m - 1, a) + crf.end[a];
  for (std::size_t t = m - 1; t-- > 0;) {
    for (std::size_t a = 0; a < L; ++a) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < L; ++b) top = std::max(top, crf.transition(a, b) + best(t + 1, b));
      best(t, a) = s(t, a) + top;
    }
  }
  out.labels.resize(m);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < L; ++a) {
    const double v = crf.begin[a] + best(0, a);
    if (v > top) {
      top = v;
      out.labels[0] = a;
    }
  }
  for (std::size_t t = 1; t < m; ++t) {
    const std::size_t prev = out.labels[t - 1];
    double step_top = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < L; ++b) {
      const double v = crf.transition(prev, b) + best(t, b);
      if (v > step_top) {
        step_top = v;
        out.labels[t] = b;
      }
    }
  }
  out.score = sequence_score(crf, s, out.labels);
  return out;
}

}  // namespace ehrsum
