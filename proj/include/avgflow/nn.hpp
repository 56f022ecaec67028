#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "avgflow/types.hpp"

namespace avgflow {

/// Adam on a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  void step(Vector& params, const Vector& grad);

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Vector m_;
  Vector v_;
};

/// Fully connected net, tanh on hidden layers, linear output. Batches are
/// column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  /// sizes = {input, hidden..., output}.
  explicit Mlp(std::vector<int> sizes);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Eigen::Index parameter_count() const { return params_.size(); }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  /// Glorot-uniform hidden weights, zero output layer and biases.
  void initialize(std::uint64_t seed);

  Matrix forward(const Matrix& x) const;
  /// Mean over columns of ‖f(x) - y‖²; writes dLoss/dparams when grad != nullptr.
  double loss(const Matrix& x, const Matrix& y, Vector* grad = nullptr) const;

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  // start of each layer's W; b follows
  Vector params_;
};

/// LSTM cell (gates i, f, g, o) with a linear readout.
class Lstm {
 public:
  Lstm() = default;
  Lstm(int input_size, int hidden_size, int output_size);

  int input_size() const { return input_; }
  int hidden_size() const { return hidden_; }
  int output_size() const { return output_; }
  Eigen::Index parameter_count() const { return params_.size(); }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  /// Uniform(±1/√h) weights, forget-gate bias 1.
  void initialize(std::uint64_t seed);

  /// inputs[t] is input x batch; returns outputs[t], output x batch. The
  /// state starts at zero.
  std::vector<Matrix> forward(const std::vector<Matrix>& inputs) const;
  /// Mean over (t, column) of ‖y_t - target_t‖², with full backpropagation
  /// through time.
  double loss(const std::vector<Matrix>& inputs, const std::vector<Matrix>& targets,
              Vector* grad = nullptr) const;

  struct State {
    Vector h;
    Vector c;
  };
  State zero_state() const { return {Vector::Zero(hidden_), Vector::Zero(hidden_)}; }
  /// One step for a single sequence; updates `state` and returns the output.
  Vector step(State& state, const Vector& input) const;

 private:
  int input_ = 0;
  int hidden_ = 0;
  int output_ = 0;
  Vector params_;
};

/// Largest relative error |a - n| / max(|a|, |n|, floor) between analytic
/// gradient entries and central differences of `loss` at the probed indices.
double gradient_check(const std::function<double(const Vector&)>& loss, const Vector& params,
                      const Vector& analytic, const std::vector<Eigen::Index>& probes,
                      double step = 1e-5, double floor = 1e-6);

}  // namespace avgflow
