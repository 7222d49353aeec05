#include <algorithm>
#include <cmath>

#include "ehrsum/embeddings.hpp"
#include "ehrsum/error.hpp"
#include "ehrsum/kernels.hpp"
#include "ehrsum/random.hpp"

namespace ehrsum {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(-x)) without overflow
double softplus_neg(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

// Unigram^0.75 sampler over ids >= 2.
class NegativeSampler {
 public:
  explicit NegativeSampler(const std::vector<std::size_t>& counts) {
    double total = 0.0;
    cumulative_.resize(counts.size(), 0.0);
    for (std::size_t id = 2; id < counts.size(); ++id) {
      total += std::pow(static_cast<double>(counts[id]), 0.75);
      cumulative_[id] = total;
    }
    total_ = total;
  }

  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform() * total_;
    auto it = std::upper_bound(cumulative_.begin() + 2, cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<std::size_t>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

}  // namespace

Word2VecMode parse_word2vec_mode(std::string_view name) {
  if (name == "cbow") return Word2VecMode::kCbow;
  if (name == "skipgram" || name == "skip-gram" || name == "sg") return Word2VecMode::kSkipGram;
  throw ValidationError("unknown word2vec mode '" + std::string(name) + "' (cbow | skipgram)");
}

Word2VecResult train_word2vec(const std::vector<std::vector<std::string>>& corpus, const Vocab& vocab,
                              const Word2VecConfig& config) {
  if (config.dim < 2) throw ValidationError("word2vec dimension must be at least 2");
  if (config.window < 1) throw ValidationError("word2vec window must be at least 1");

  std::vector<std::vector<std::size_t>> sentences;
  std::vector<std::size_t> counts(vocab.size(), 0);
  std::size_t total_tokens = 0;
  for (const auto& s : corpus) {
    std::vector<std::size_t> ids;
    for (const auto& w : s) {
      const std::size_t id = vocab.id(w);
      if (id < 2) continue;
      ids.push_back(id);
      ++counts[id];
    }
    total_tokens += ids.size();
    if (!ids.empty()) sentences.push_back(std::move(ids));
  }
  if (total_tokens < config.window + 1) {
    throw ValidationError("word2vec corpus has " + std::to_string(total_tokens) +
                          " in-vocabulary tokens; need at least window+1 = " +
                          std::to_string(config.window + 1));
  }

  const std::size_t dim = config.dim;
  Rng rng(config.seed);
  Word2VecResult result;
  Matrix& input = result.table.matrix;
  input = Matrix(vocab.size(), dim);
  const double bound = 0.5 / static_cast<double>(dim);
  for (double& v : input.storage()) v = rng.uniform(-bound, bound);
  Matrix output(vocab.size(), dim);

  const NegativeSampler sampler(counts);
  const double start_lr = config.learning_rate > 0
                              ? config.learning_rate
                              : (config.mode == Word2VecMode::kCbow ? 0.05 : 0.025);
  const double schedule = static_cast<double>(config.epochs * total_tokens + 1);
  std::size_t processed = 0;

  std::vector<double> hidden(dim), grad_hidden(dim);
  // One positive/negative update against output row `target`; returns loss.
  auto update = [&](std::span<const double> h, std::size_t target, double label, double lr) {
    auto out_row = output.row(target);
    const double f = kernels::dot(h, out_row);
    const double g = (label - sigmoid(f)) * lr;
    kernels::axpy(g, out_row, grad_hidden);
    kernels::axpy(g, h, out_row);
    return label > 0 ? softplus_neg(f) : softplus_neg(-f);
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t terms = 0;
    for (const auto& sent : sentences) {
      const std::size_t n = sent.size();
      for (std::size_t pos = 0; pos < n; ++pos, ++processed) {
        const double lr = start_lr * std::max(1e-4, 1.0 - static_cast<double>(processed) / schedule);
        const std::size_t reach = config.window - rng.below(config.window);
        const std::size_t lo = pos >= reach ? pos - reach : 0;
        const std::size_t hi = std::min(n - 1, pos + reach);
        const std::size_t center = sent[pos];

        if (config.mode == Word2VecMode::kCbow) {
          std::fill(hidden.begin(), hidden.end(), 0.0);
          std::size_t context = 0;
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == pos) continue;
            kernels::axpy(1.0, input.row(sent[c]), hidden);
            ++context;
          }
          if (context == 0) continue;
          for (double& v : hidden) v /= static_cast<double>(context);
          std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);
          loss += update(hidden, center, 1.0, lr);
          ++terms;
          for (std::size_t k = 0; k < config.negatives; ++k) {
            const std::size_t neg = sampler.draw(rng);
            if (neg == center) continue;
            loss += update(hidden, neg, 0.0, lr);
            ++terms;
          }
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c != pos) kernels::axpy(1.0, grad_hidden, input.row(sent[c]));
          }
        } else {
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == pos) continue;
            auto in_row = input.row(sent[c]);
            std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);
            loss += update(in_row, center, 1.0, lr);
            ++terms;
            for (std::size_t k = 0; k < config.negatives; ++k) {
              const std::size_t neg = sampler.draw(rng);
              if (neg == center) continue;
              loss += update(in_row, neg, 0.0, lr);
              ++terms;
            }
            kernels::axpy(1.0, grad_hidden, in_row);
          }
        }
      }
    }
    result.epoch_loss.push_back(terms == 0 ? 0.0 : loss / static_cast<double>(terms));
  }
  return result;
}

}  // namespace ehrsum
