#pragma once

// Independent reference implementations for the test suites. Nothing here
// calls into the library's algorithms except for plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ehrsum/concepts.hpp"
#include "ehrsum/corpus.hpp"
#include "ehrsum/matrix.hpp"
#include "ehrsum/random.hpp"

namespace oracle {

using ehrsum::Matrix;

struct Crf {
  std::size_t labels;
  std::vector<double> transitions;  // row = from
  std::vector<double> begin;
  std::vector<double> end;
};

inline double score(const Crf& crf, const Matrix& e, const std::vector<std::size_t>& y) {
  // Terms accumulate left to right in the order the score is written, so
  // equal sequences give bit-equal scores.
  double q = crf.begin[y.front()];
  for (std::size_t t = 0; t < y.size(); ++t) q += e(t, y[t]);
  for (std::size_t t = 0; t + 1 < y.size(); ++t) q += crf.transitions[y[t] * crf.labels + y[t + 1]];
  return q + crf.end[y.back()];
}

// Calls fn on every label sequence of length m in lexicographic order.
inline void for_each_sequence(std::size_t m, std::size_t labels,
                              const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> y(m, 0);
  while (true) {
    fn(y);
    std::size_t t = m;
    while (t > 0 && ++y[t - 1] == labels) y[--t] = 0;
    if (t == 0) return;
  }
}

struct Enumeration {
  double log_z;
  double best_score;
  std::vector<std::size_t> best;  // lexicographically first argmax
  std::vector<double> scores;     // in enumeration order
};

inline Enumeration enumerate(const Crf& crf, const Matrix& e) {
  Enumeration out{0.0, -std::numeric_limits<double>::infinity(), {}, {}};
  for_each_sequence(e.rows(), crf.labels, [&](const std::vector<std::size_t>& y) {
    const double q = score(crf, e, y);
    out.scores.push_back(q);
    if (q > out.best_score) {
      out.best_score = q;
      out.best = y;
    }
  });
  double sum = 0.0;
  for (double q : out.scores) sum += std::exp(q - out.best_score);
  out.log_z = out.best_score + std::log(sum);
  return out;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, ehrsum::Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.storage()) v = rng.uniform(-scale, scale);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, ehrsum::Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

// Central difference of f with respect to every entry of x.
inline std::vector<double> numeric_gradient(std::span<double> x, const std::function<double()>& f,
                                            double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true value is
// zero from dividing rounding noise by rounding noise.
inline double relative_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline double max_relative_error(std::span<const double> a, std::span<const double> n, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], n[i], floor));
  return worst;
}

// Every contiguous token window whose lowercased, space-joined text is a
// gazetteer key.
inline std::vector<ehrsum::ConceptSpan> ngram_scan(const std::vector<ehrsum::Token>& tokens,
                                                   const ehrsum::Gazetteer& gaz) {
  std::vector<ehrsum::ConceptSpan> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string phrase;
    for (std::size_t j = i; j < tokens.size(); ++j) {
      if (j > i) phrase += ' ';
      for (char c : tokens[j].text) phrase += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      for (const auto& [key, cuis] : gaz.entries()) {
        if (key != phrase) continue;
        for (const auto& cui : cuis) out.push_back({cui, tokens[i].start, tokens[j].end, j - i + 1});
      }
    }
  }
  return out;
}

// Pairwise containment: a span goes when another span's interval strictly
// contains it, or has the same interval and wins on (more tokens, smaller CUI,
// earlier position).
inline std::vector<ehrsum::ConceptSpan> containment_filter(const std::vector<ehrsum::ConceptSpan>& spans) {
  std::vector<ehrsum::ConceptSpan> out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& a = spans[i];
    bool removed = false;
    for (std::size_t j = 0; j < spans.size() && !removed; ++j) {
      if (j == i) continue;
      const auto& b = spans[j];
      if (b.start <= a.start && a.end <= b.end && (b.start != a.start || b.end != a.end)) {
        removed = true;
      } else if (b.start == a.start && b.end == a.end) {
        if (b.n_tokens != a.n_tokens) {
          removed = b.n_tokens > a.n_tokens;
        } else if (b.cui != a.cui) {
          removed = b.cui < a.cui;
        } else {
          removed = j < i;
        }
      }
    }
    if (!removed) out.push_back(a);
  }
  return out;
}

}  // namespace oracle
