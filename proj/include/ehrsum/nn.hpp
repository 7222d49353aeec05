#pragma once

// Small differentiable building blocks with hand-written backward passes:
// dense layer, LSTM, bidirectional LSTM, inverted dropout and Adam.
//
// Backward functions accumulate into Param::grad; callers zero gradients
// between optimizer steps.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ehrsum/matrix.hpp"
#include "ehrsum/random.hpp"

namespace ehrsum {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.fill(0.0); }
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// y = W x + b
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t input, std::size_t output);

  std::size_t input_size() const { return weight.value.cols(); }
  std::size_t output_size() const { return weight.value.rows(); }

  void init(Rng& rng);
  // Throws ValidationError on a shape mismatch.
  void forward(std::span<const double> x, std::span<double> y) const;
  // Accumulates dW, db; adds W^T dy into dx when dx is non-empty.
  void backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

  std::vector<Param*> params() { return {&weight, &bias}; }

  Param weight;  // output x input
  Param bias;    // output x 1
};

struct LstmCache {
  Matrix xh;         // steps x (input + hidden): [x_t ; h_{t-1}]
  Matrix gates;      // steps x 4h, post-activation, blocks i f o g
  Matrix cell;       // steps x h
  Matrix tanh_cell;  // steps x h
  Matrix hidden;     // steps x h
  std::size_t steps() const { return hidden.rows(); }
};

// Standard LSTM without peepholes; h_0 = c_0 = 0.
//   z = W [x_t; h_{t-1}] + b,  i,f,o = sigmoid(z_i,f,o),  g = tanh(z_g)
//   c_t = f*c_{t-1} + i*g,  h_t = o*tanh(c_t)
class Lstm {
 public:
  Lstm() = default;
  Lstm(const std::string& name, std::size_t input, std::size_t hidden);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }

  // Glorot per gate block, zero biases except forget gate = 1.
  void init(Rng& rng);
  LstmCache forward(const Matrix& inputs) const;
  // d_hidden: steps x h gradient wrt each output. Returns steps x input.
  Matrix backward(const LstmCache& cache, const Matrix& d_hidden);

  std::vector<Param*> params() { return {&weight, &bias}; }

  Param weight;  // 4h x (input + hidden)
  Param bias;    // 4h x 1

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
};

struct BiLstmCache {
  LstmCache forward;
  LstmCache backward;  // over the reversed sequence
  Matrix output;       // steps x 2h: [fwd_j ; bwd_j]
};

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(const std::string& name, std::size_t input, std::size_t hidden);

  std::size_t input_size() const { return fwd.input_size(); }
  std::size_t output_size() const { return 2 * fwd.hidden_size(); }

  void init(Rng& rng);
  BiLstmCache forward(const Matrix& inputs) const;
  Matrix backward(const BiLstmCache& cache, const Matrix& d_output);

  std::vector<Param*> params() { return {&fwd.weight, &fwd.bias, &bwd.weight, &bwd.bias}; }

  Lstm fwd;
  Lstm bwd;
};

enum class Mode { kTrain, kEval };

// Inverted dropout scale factors: 0 with probability rate, else 1/(1-rate).
// All ones in eval mode or when rate is 0. Throws ValidationError unless
// 0 <= rate < 1.
std::vector<double> dropout_mask(std::size_t n, double rate, Mode mode, Rng& rng);
std::vector<double> dropout(std::span<const double> x, double rate, Mode mode, Rng& rng);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay = 0.9;  // learning rate multiplier per epoch
};

class Adam {
 public:
  Adam(AdamConfig config, std::vector<Param*> params);

  // Effective rate becomes learning_rate * decay^epoch.
  void set_epoch(std::size_t epoch);
  double effective_learning_rate() const { return lr_; }
  std::size_t steps() const { return steps_; }

  // Bias-corrected update from Param::grad. Throws RuntimeFailure naming the
  // parameter when a gradient is not finite; no parameter is modified then.
  void step();

  const Matrix& first_moment(std::size_t i) const { return m_[i]; }
  const Matrix& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig config_;
  std::vector<Param*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t steps_ = 0;
  double lr_;
};

double global_grad_norm(const std::vector<Param*>& params);
// Rescales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_global_norm(const std::vector<Param*>& params, double max_norm);

double sigmoid(double x);

}  // namespace ehrsum
