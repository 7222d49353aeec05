#include "ehrsum/nn.hpp"

#include <algorithm>
#include <cmath>

#include "ehrsum/error.hpp"
#include "ehrsum/kernels.hpp"

namespace ehrsum {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void glorot_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : values) v = rng.uniform(-bound, bound);
}

// ---- Dense ------------------------------------------------------------------

Dense::Dense(const std::string& name, std::size_t input, std::size_t output)
    : weight(name + ".W", output, input), bias(name + ".b", output, 1) {}

void Dense::init(Rng& rng) {
  glorot_uniform(weight.value.flat(), input_size(), output_size(), rng);
  bias.value.fill(0.0);
}

void Dense::forward(std::span<const double> x, std::span<double> y) const {
  if (x.size() != input_size() || y.size() != output_size()) {
    throw ValidationError("dense layer " + weight.name + ": expected " + std::to_string(input_size()) + " -> " +
                          std::to_string(output_size()) + ", got " + std::to_string(x.size()) + " -> " +
                          std::to_string(y.size()));
  }
  std::copy(bias.value.storage().begin(), bias.value.storage().end(), y.begin());
  kernels::gemv(weight.value.flat(), output_size(), input_size(), x, y);
}

void Dense::backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  kernels::ger(weight.grad.flat(), output_size(), input_size(), dy, x);
  kernels::axpy(1.0, dy, bias.grad.flat());
  if (!dx.empty()) kernels::gemv_t(weight.value.flat(), output_size(), input_size(), dy, dx);
}

// ---- LSTM -------------------------------------------------------------------

Lstm::Lstm(const std::string& name, std::size_t input, std::size_t hidden)
    : weight(name + ".W", 4 * hidden, input + hidden),
      bias(name + ".b", 4 * hidden, 1),
      input_(input),
      hidden_(hidden) {}

void Lstm::init(Rng& rng) {
  const std::size_t cols = input_ + hidden_;
  for (std::size_t gate = 0; gate < 4; ++gate) {
    glorot_uniform(weight.value.flat().subspan(gate * hidden_ * cols, hidden_ * cols), cols, hidden_, rng);
  }
  bias.value.fill(0.0);
  for (std::size_t k = 0; k < hidden_; ++k) bias.value(hidden_ + k, 0) = 1.0;
}

LstmCache Lstm::forward(const Matrix& inputs) const {
  const std::size_t steps = inputs.rows();
  const std::size_t h = hidden_;
  const std::size_t cols = input_ + h;
  if (steps > 0 && inputs.cols() != input_) {
    throw ValidationError("LSTM " + weight.name + ": input width " + std::to_string(inputs.cols()) +
                          " != " + std::to_string(input_));
  }
  LstmCache cache;
  cache.xh = Matrix(steps, cols);
  cache.gates = Matrix(steps, 4 * h);
  cache.cell = Matrix(steps, h);
  cache.tanh_cell = Matrix(steps, h);
  cache.hidden = Matrix(steps, h);

  for (std::size_t t = 0; t < steps; ++t) {
    auto xh = cache.xh.row(t);
    std::copy_n(inputs.row(t).begin(), input_, xh.begin());
    if (t > 0) std::copy_n(cache.hidden.row(t - 1).begin(), h, xh.begin() + static_cast<std::ptrdiff_t>(input_));

    auto z = cache.gates.row(t);
    std::copy(bias.value.storage().begin(), bias.value.storage().end(), z.begin());
    kernels::gemv(weight.value.flat(), 4 * h, cols, xh, z);

    auto c = cache.cell.row(t);
    auto tc = cache.tanh_cell.row(t);
    auto hid = cache.hidden.row(t);
    for (std::size_t k = 0; k < h; ++k) {
      const double i = sigmoid(z[k]);
      const double f = sigmoid(z[h + k]);
      const double o = sigmoid(z[2 * h + k]);
      const double g = std::tanh(z[3 * h + k]);
      z[k] = i;
      z[h + k] = f;
      z[2 * h + k] = o;
      z[3 * h + k] = g;
      const double c_prev = t > 0 ? cache.cell(t - 1, k) : 0.0;
      c[k] = f * c_prev + i * g;
      tc[k] = std::tanh(c[k]);
      hid[k] = o * tc[k];
    }
  }
  return cache;
}

Matrix Lstm::backward(const LstmCache& cache, const Matrix& d_hidden) {
  const std::size_t steps = cache.steps();
  const std::size_t h = hidden_;
  const std::size_t cols = input_ + h;
  Matrix d_inputs(steps, input_);
  std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), dz(4 * h), dxh(cols);

  for (std::size_t t = steps; t-- > 0;) {
    const auto gates = cache.gates.row(t);
    const auto tc = cache.tanh_cell.row(t);
    for (std::size_t k = 0; k < h; ++k) {
      const double i = gates[k], f = gates[h + k], o = gates[2 * h + k], g = gates[3 * h + k];
      const double dh = d_hidden(t, k) + dh_next[k];
      const double dc = dc_next[k] + dh * o * (1.0 - tc[k] * tc[k]);
      const double c_prev = t > 0 ? cache.cell(t - 1, k) : 0.0;
      dz[k] = dc * g * i * (1.0 - i);
      dz[h + k] = dc * c_prev * f * (1.0 - f);
      dz[2 * h + k] = dh * tc[k] * o * (1.0 - o);
      dz[3 * h + k] = dc * i * (1.0 - g * g);
      dc_next[k] = dc * f;
    }
    kernels::ger(weight.grad.flat(), 4 * h, cols, dz, cache.xh.row(t));
    kernels::axpy(1.0, dz, bias.grad.flat());
    std::fill(dxh.begin(), dxh.end(), 0.0);
    kernels::gemv_t(weight.value.flat(), 4 * h, cols, dz, dxh);
    std::copy_n(dxh.begin(), input_, d_inputs.row(t).begin());
    std::copy(dxh.begin() + static_cast<std::ptrdiff_t>(input_), dxh.end(), dh_next.begin());
  }
  return d_inputs;
}

// ---- BiLSTM -----------------------------------------------------------------

BiLstm::BiLstm(const std::string& name, std::size_t input, std::size_t hidden)
    : fwd(name + ".fwd", input, hidden), bwd(name + ".bwd", input, hidden) {}

void BiLstm::init(Rng& rng) {
  fwd.init(rng);
  bwd.init(rng);
}

namespace {

Matrix reversed(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    std::copy(m.row(t).begin(), m.row(t).end(), out.row(m.rows() - 1 - t).begin());
  }
  return out;
}

}  // namespace

BiLstmCache BiLstm::forward(const Matrix& inputs) const {
  BiLstmCache cache;
  cache.forward = fwd.forward(inputs);
  cache.backward = bwd.forward(reversed(inputs));
  const std::size_t steps = inputs.rows();
  const std::size_t h = fwd.hidden_size();
  cache.output = Matrix(steps, 2 * h);
  for (std::size_t j = 0; j < steps; ++j) {
    auto out = cache.output.row(j);
    std::copy_n(cache.forward.hidden.row(j).begin(), h, out.begin());
    std::copy_n(cache.backward.hidden.row(steps - 1 - j).begin(), h, out.begin() + static_cast<std::ptrdiff_t>(h));
  }
  return cache;
}

Matrix BiLstm::backward(const BiLstmCache& cache, const Matrix& d_output) {
  const std::size_t steps = cache.output.rows();
  const std::size_t h = fwd.hidden_size();
  Matrix d_fwd(steps, h), d_bwd(steps, h);
  for (std::size_t j = 0; j < steps; ++j) {
    auto d = d_output.row(j);
    std::copy_n(d.begin(), h, d_fwd.row(j).begin());
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(h), h, d_bwd.row(steps - 1 - j).begin());
  }
  Matrix dx = fwd.backward(cache.forward, d_fwd);
  const Matrix dx_rev = bwd.backward(cache.backward, d_bwd);
  for (std::size_t j = 0; j < steps; ++j) {
    kernels::axpy(1.0, dx_rev.row(steps - 1 - j), dx.row(j));
  }
  return dx;
}

// ---- dropout ----------------------------------------------------------------

std::vector<double> dropout_mask(std::size_t n, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  std::vector<double> mask(n, 1.0);
  if (mode == Mode::kEval || rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

std::vector<double> dropout(std::span<const double> x, double rate, Mode mode, Rng& rng) {
  const auto mask = dropout_mask(x.size(), rate, mode, rng);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
  return out;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(AdamConfig config, std::vector<Param*> params)
    : config_(config), params_(std::move(params)), lr_(config.learning_rate) {
  for (Param* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::set_epoch(std::size_t epoch) {
  lr_ = config_.learning_rate * std::pow(config_.decay, static_cast<double>(epoch));
}

void Adam::step() {
  for (const Param* p : params_) {
    for (double g : p->grad.storage()) {
      if (!std::isfinite(g)) throw RuntimeFailure("non-finite gradient in parameter " + p->name);
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value.storage();
    const auto& grad = params_[k]->grad.storage();
    auto& m = m_[k].storage();
    auto& v = v_[k].storage();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

double global_grad_norm(const std::vector<Param*>& params) {
  double sq = 0.0;
  for (const Param* p : params) sq += kernels::dot(p->grad.flat(), p->grad.flat());
  return std::sqrt(sq);
}

double clip_global_norm(const std::vector<Param*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (Param* p : params) {
      for (double& g : p->grad.storage()) g *= scale;
    }
  }
  return norm;
}

}  // namespace ehrsum
