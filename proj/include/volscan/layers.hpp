#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "volscan/ops.hpp"
#include "volscan/rng.hpp"
#include "volscan/tensor.hpp"

// Layer objects own their parameters, output activation, and backward scratch.
// Inputs are held by pointer for the duration of a forward/backward pair;
// gradients accumulate into ParamTensor::grad until zero_grad().

namespace volscan {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.9;

// Uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)), one RNG stream per
// tensor so draw order never depends on traversal order.
template <typename T>
void init_uniform_fan_in(TensorT<T>& t, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(double(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(-bound, bound));
}

template <typename T>
struct Conv2dLayer {
  ParamTensorT<T> w, b;
  TensorT<T> out, d_in;
  const TensorT<T>* in = nullptr;
  std::vector<T> col;

  Conv2dLayer(const std::string& name, std::size_t c_in, std::size_t c_out)
      : w(name + ".w", {c_out, c_in, 3, 3}), b(name + ".b", {c_out}) {}

  void init(std::uint64_t seed) { init_uniform_fan_in(w.value, w.value.dim(1) * 9, seed); }

  TensorT<T>& forward(const TensorT<T>& x) {
    in = &x;
    conv2d_forward(x, w.value, b.value, out, col);
    return out;
  }

  TensorT<T>& backward(const TensorT<T>& d_out, bool need_dx = true) {
    conv2d_backward(*in, w.value, d_out, need_dx ? &d_in : nullptr, w.grad, b.grad, col);
    return d_in;
  }

  void collect(std::vector<ParamTensorT<T>*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

template <typename T>
struct Conv3dLayer {
  ParamTensorT<T> w, b;
  TensorT<T> out, d_in;
  const TensorT<T>* in = nullptr;
  std::vector<T> col;

  Conv3dLayer(const std::string& name, std::size_t c_in, std::size_t c_out)
      : w(name + ".w", {c_out, c_in, 3, 3, 3}), b(name + ".b", {c_out}) {}

  void init(std::uint64_t seed) { init_uniform_fan_in(w.value, w.value.dim(1) * 27, seed); }

  TensorT<T>& forward(const TensorT<T>& x) {
    in = &x;
    conv3d_forward(x, w.value, b.value, out, col);
    return out;
  }

  TensorT<T>& backward(const TensorT<T>& d_out, bool need_dx = true) {
    conv3d_backward(*in, w.value, d_out, need_dx ? &d_in : nullptr, w.grad, b.grad, col);
    return d_in;
  }

  void collect(std::vector<ParamTensorT<T>*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

template <typename T>
struct BatchNormLayer {
  ParamTensorT<T> gamma, beta;
  TensorT<T> running_mean, running_var, batches;  // batches: scalar update count
  std::size_t channel_axis;
  std::string name;
  TensorT<T> out, d_in;
  BnCache<T> cache;

  BatchNormLayer(const std::string& n, std::size_t channels, std::size_t axis)
      : gamma(n + ".gamma", {channels}),
        beta(n + ".beta", {channels}),
        running_mean({channels}),
        running_var({channels}),
        batches({1}),
        channel_axis(axis),
        name(n) {
    gamma.value.fill(T(1));
  }

  TensorT<T>& forward(const TensorT<T>& x, Mode mode) {
    batchnorm_forward(x, gamma.value, beta.value, channel_axis, mode, running_mean, running_var,
                      batches, kBnEps, kBnMomentum, out, mode == Mode::Train ? &cache : nullptr);
    return out;
  }

  TensorT<T>& backward(const TensorT<T>& d_out) {
    batchnorm_backward(cache, gamma.value, d_out, gamma.grad, beta.grad, d_in);
    return d_in;
  }

  void collect(std::vector<ParamTensorT<T>*>& ps) {
    ps.push_back(&gamma);
    ps.push_back(&beta);
  }
};

template <typename T>
struct ReluLayer {
  TensorT<T> out, d_in;

  TensorT<T>& forward(const TensorT<T>& x) {
    relu_forward(x, out);
    return out;
  }
  TensorT<T>& backward(const TensorT<T>& d_out) {
    relu_backward(out, d_out, d_in);
    return d_in;
  }
};

template <typename T>
struct MaxPool2dLayer {
  TensorT<T> out, d_in;
  std::vector<std::uint32_t> argmax;
  Shape in_shape;

  TensorT<T>& forward(const TensorT<T>& x) {
    in_shape = x.shape();
    maxpool2d_forward(x, out, argmax);
    return out;
  }
  TensorT<T>& backward(const TensorT<T>& d_out) {
    maxpool2d_backward(d_out, argmax, in_shape, d_in);
    return d_in;
  }
};

template <typename T>
struct MaxPool3dLayer {
  std::size_t pd;  // depth window, 1 or 2
  TensorT<T> out, d_in;
  std::vector<std::uint32_t> argmax;
  Shape in_shape;

  explicit MaxPool3dLayer(std::size_t depth_window) : pd(depth_window) {}

  TensorT<T>& forward(const TensorT<T>& x) {
    in_shape = x.shape();
    maxpool3d_forward(x, pd, out, argmax);
    return out;
  }
  TensorT<T>& backward(const TensorT<T>& d_out) {
    maxpool3d_backward(d_out, argmax, in_shape, d_in);
    return d_in;
  }
};

template <typename T>
struct DenseLayer {
  ParamTensorT<T> w, b;
  TensorT<T> out, d_in;
  const TensorT<T>* in = nullptr;

  DenseLayer(const std::string& name, std::size_t features)
      : w(name + ".w", {1, features}), b(name + ".b", {1}) {}

  void init(std::uint64_t seed) { init_uniform_fan_in(w.value, w.value.dim(1), seed); }

  TensorT<T>& forward(const TensorT<T>& x) {
    in = &x;
    dense_forward(x, w.value, b.value, out);
    return out;
  }
  TensorT<T>& backward(const TensorT<T>& d_out, bool need_dx = true) {
    dense_backward(*in, w.value, d_out, need_dx ? &d_in : nullptr, w.grad, b.grad);
    return d_in;
  }

  void collect(std::vector<ParamTensorT<T>*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

}  // namespace volscan
