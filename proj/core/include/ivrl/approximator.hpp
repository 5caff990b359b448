#pragma once

// Small fully connected networks with hand-written reverse-mode gradients,
// an adaptive-moment optimizer, and a finite-difference gradient checker.
//
// Parameters are stored flat: for each layer, the row-major weight matrix
// (output_width x input_width) followed by the bias vector.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ivrl/rng.hpp"

namespace ivrl {

enum class Activation : std::uint8_t { Rectifier, Identity, AbsoluteValue };

struct LayerSpec {
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  Activation activation = Activation::Identity;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Row-major dense matrix; one sample per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class ParameterVector {
 public:
  ParameterVector() = default;
  // Zero-filled parameters for `layers`. Throws ConfigError on an empty or
  // inconsistent layer list.
  explicit ParameterVector(std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front().input_width; }
  std::size_t output_width() const { return layers_.empty() ? 0 : layers_.back().output_width; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + layers_[layer].input_width * layers_[layer].output_width;
  }

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

std::size_t parameter_count(std::span<const LayerSpec> layers);

// Builds the layer list for a perceptron with the given hidden widths, all
// hidden layers rectified and the output layer using `output_activation`.
std::vector<LayerSpec> mlp_layers(std::size_t input_width, std::span<const std::size_t> hidden,
                                  std::size_t output_width,
                                  Activation output_activation = Activation::Identity);

// Weights uniform in +-sqrt(6 / (in + out)), biases zero.
ParameterVector init_params(std::vector<LayerSpec> layers, RngStream& rng);

std::vector<double> forward(const ParameterVector& params, std::span<const double> input);
Matrix forward(const ParameterVector& params, const Matrix& inputs);

// Per-layer pre-activations and outputs kept for a later backward pass.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  const Matrix& output() const { return post.back(); }
};

ForwardTrace forward_trace(const ParameterVector& params, Matrix inputs);

// Gradient of sum_rows <upstream_row, output_row>. Parameter gradients are
// added into `param_grad` (length params.size()); returns the input gradient.
Matrix backward(const ParameterVector& params, const ForwardTrace& trace, const Matrix& upstream,
                std::span<double> param_grad);

struct ForwardBackwardResult {
  std::vector<double> output;
  std::vector<double> parameter_gradient;
  std::vector<double> input_gradient;
};

// Single-sample forward + reverse pass. Throws NumericError if any
// intermediate value or gradient is non-finite.
ForwardBackwardResult forward_backward(const ParameterVector& params, std::span<const double> input,
                                       std::span<const double> upstream_gradient);

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;  // <= 0 disables clipping
};

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

OptimizerState make_optimizer_state(std::size_t parameter_count, const AdamConfig& config = {});

// Clips the gradient to `clip_norm` (global L2), then applies one
// bias-corrected adaptive-moment update in place. Throws NumericError on a
// non-finite gradient.
void optimizer_step(std::span<double> params, std::span<const double> gradient, OptimizerState& state);

inline ParameterVector copy_to_target(const ParameterVector& params) { return params; }

// Central finite differences of a scalar function of the parameters.
std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                               std::span<const double> at, double h = 1e-5);

// |a - b| / max(1e-8, |a| + |b|).
double relative_error(double a, double b);

}  // namespace ivrl
