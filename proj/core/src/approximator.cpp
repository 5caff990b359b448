#include "ivrl/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ivrl/errors.hpp"

namespace ivrl {

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Rectifier: return x > 0.0 ? x : 0.0;
    case Activation::Identity: return x;
    case Activation::AbsoluteValue: return std::abs(x);
  }
  return x;
}

// Subgradient 0 at the kink for both Rectifier and AbsoluteValue.
double derivative(Activation a, double pre) {
  switch (a) {
    case Activation::Rectifier: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
    case Activation::AbsoluteValue: return pre > 0.0 ? 1.0 : (pre < 0.0 ? -1.0 : 0.0);
  }
  return 1.0;
}

void affine(const ParameterVector& params, std::size_t layer, const Matrix& in, Matrix& pre) {
  const LayerSpec& spec = params.layers()[layer];
  const double* w = params.values().data() + params.weight_offset(layer);
  const double* b = params.values().data() + params.bias_offset(layer);
  const std::size_t n_in = spec.input_width;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const double* x = in.row(r).data();
    double* out = pre.row(r).data();
    for (std::size_t o = 0; o < spec.output_width; ++o) {
      const double* wo = w + o * n_in;
      double acc = b[o];
      for (std::size_t i = 0; i < n_in; ++i) acc += wo[i] * x[i];
      out[o] = acc;
    }
  }
}

void check_input(const ParameterVector& params, std::size_t width) {
  if (params.layers().empty()) throw InvalidInput("network has no layers");
  if (width != params.input_width())
    throw InvalidInput("input width " + std::to_string(width) + " does not match network input width " +
                       std::to_string(params.input_width()));
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

ParameterVector::ParameterVector(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerSpec& s = layers_[l];
    if (s.input_width == 0 || s.output_width == 0)
      throw ConfigError("layer " + std::to_string(l) + " has zero width");
    if (l > 0 && layers_[l - 1].output_width != s.input_width)
      throw ConfigError("layer " + std::to_string(l) + " input width does not match previous output width");
    offsets_.push_back(offset);
    offset += s.input_width * s.output_width + s.output_width;
  }
  values_.assign(offset, 0.0);
}

std::size_t parameter_count(std::span<const LayerSpec> layers) {
  std::size_t n = 0;
  for (const auto& s : layers) n += s.input_width * s.output_width + s.output_width;
  return n;
}

std::vector<LayerSpec> mlp_layers(std::size_t input_width, std::span<const std::size_t> hidden,
                                  std::size_t output_width, Activation output_activation) {
  std::vector<LayerSpec> layers;
  std::size_t in = input_width;
  for (std::size_t h : hidden) {
    layers.push_back({in, h, Activation::Rectifier});
    in = h;
  }
  layers.push_back({in, output_width, output_activation});
  return layers;
}

ParameterVector init_params(std::vector<LayerSpec> layers, RngStream& rng) {
  ParameterVector p(std::move(layers));
  auto values = p.values();
  for (std::size_t l = 0; l < p.layers().size(); ++l) {
    const LayerSpec& s = p.layers()[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(s.input_width + s.output_width));
    const std::size_t w0 = p.weight_offset(l);
    for (std::size_t k = 0; k < s.input_width * s.output_width; ++k) values[w0 + k] = rng.uniform(-bound, bound);
  }
  return p;
}

Matrix forward(const ParameterVector& params, const Matrix& inputs) {
  check_input(params, inputs.cols());
  Matrix current = inputs;
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    const LayerSpec& s = params.layers()[l];
    Matrix next(current.rows(), s.output_width);
    affine(params, l, current, next);
    for (double& v : next.data()) v = activate(s.activation, v);
    current = std::move(next);
  }
  return current;
}

std::vector<double> forward(const ParameterVector& params, std::span<const double> input) {
  Matrix in(1, input.size());
  std::copy(input.begin(), input.end(), in.row(0).begin());
  const Matrix out = forward(params, in);
  return {out.data().begin(), out.data().end()};
}

ForwardTrace forward_trace(const ParameterVector& params, Matrix inputs) {
  check_input(params, inputs.cols());
  ForwardTrace t;
  t.input = std::move(inputs);
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    const LayerSpec& s = params.layers()[l];
    const Matrix& in = l == 0 ? t.input : t.post.back();
    Matrix pre(in.rows(), s.output_width);
    affine(params, l, in, pre);
    Matrix post = pre;
    for (double& v : post.data()) v = activate(s.activation, v);
    t.pre.push_back(std::move(pre));
    t.post.push_back(std::move(post));
  }
  return t;
}

Matrix backward(const ParameterVector& params, const ForwardTrace& trace, const Matrix& upstream,
                std::span<double> param_grad) {
  if (param_grad.size() != params.size()) throw InvalidInput("backward: gradient buffer has the wrong length");
  const std::size_t n_layers = params.layers().size();
  if (trace.post.size() != n_layers || upstream.rows() != trace.output().rows() ||
      upstream.cols() != trace.output().cols())
    throw InvalidInput("backward: upstream gradient shape does not match the forward trace");

  Matrix delta = upstream;
  for (std::size_t l = n_layers; l-- > 0;) {
    const LayerSpec& s = params.layers()[l];
    const Matrix& pre = trace.pre[l];
    const Matrix& in = l == 0 ? trace.input : trace.post[l - 1];
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto d = delta.row(r);
      auto p = pre.row(r);
      for (std::size_t o = 0; o < s.output_width; ++o) d[o] *= derivative(s.activation, p[o]);
    }
    double* gw = param_grad.data() + params.weight_offset(l);
    double* gb = param_grad.data() + params.bias_offset(l);
    const double* w = params.values().data() + params.weight_offset(l);
    Matrix next_delta(delta.rows(), s.input_width);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const double* d = delta.row(r).data();
      const double* x = in.row(r).data();
      double* nd = next_delta.row(r).data();
      for (std::size_t o = 0; o < s.output_width; ++o) {
        const double g = d[o];
        if (g == 0.0) continue;
        gb[o] += g;
        double* gwo = gw + o * s.input_width;
        const double* wo = w + o * s.input_width;
        for (std::size_t i = 0; i < s.input_width; ++i) {
          gwo[i] += g * x[i];
          nd[i] += g * wo[i];
        }
      }
    }
    delta = std::move(next_delta);
  }
  return delta;
}

ForwardBackwardResult forward_backward(const ParameterVector& params, std::span<const double> input,
                                       std::span<const double> upstream_gradient) {
  check_input(params, input.size());
  if (upstream_gradient.size() != params.output_width())
    throw InvalidInput("forward_backward: upstream gradient width does not match network output");
  Matrix in(1, input.size());
  std::copy(input.begin(), input.end(), in.row(0).begin());
  const ForwardTrace trace = forward_trace(params, std::move(in));
  for (const auto& m : trace.post)
    if (!all_finite(m.data())) throw NumericError("forward_backward: non-finite activation");
  Matrix up(1, upstream_gradient.size());
  std::copy(upstream_gradient.begin(), upstream_gradient.end(), up.row(0).begin());
  ForwardBackwardResult result;
  result.parameter_gradient.assign(params.size(), 0.0);
  const Matrix gin = backward(params, trace, up, result.parameter_gradient);
  result.output.assign(trace.output().data().begin(), trace.output().data().end());
  result.input_gradient.assign(gin.data().begin(), gin.data().end());
  if (!all_finite(result.parameter_gradient) || !all_finite(result.input_gradient))
    throw NumericError("forward_backward: non-finite gradient");
  return result;
}

OptimizerState make_optimizer_state(std::size_t n, const AdamConfig& config) {
  OptimizerState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.learning_rate = config.learning_rate;
  s.beta1 = config.beta1;
  s.beta2 = config.beta2;
  s.epsilon = config.epsilon;
  s.clip_norm = config.clip_norm;
  return s;
}

void optimizer_step(std::span<double> params, std::span<const double> gradient, OptimizerState& state) {
  const std::size_t n = params.size();
  if (gradient.size() != n || state.first_moment.size() != n || state.second_moment.size() != n)
    throw InvalidInput("optimizer_step: parameter, gradient and moment lengths differ");
  double norm_sq = 0.0;
  for (double g : gradient) {
    if (!std::isfinite(g)) throw NumericError("optimizer_step: non-finite gradient");
    norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  const double scale = (state.clip_norm > 0.0 && norm > state.clip_norm) ? state.clip_norm / norm : 1.0;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gradient[i] * scale;
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                               std::span<const double> at, double h) {
  std::vector<double> x(at.begin(), at.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

}  // namespace ivrl
