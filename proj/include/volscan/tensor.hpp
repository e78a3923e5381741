#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "volscan/common.hpp"

namespace volscan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major tensor (last axis fastest). float for training, double for
// the gradient-check twin of every op.
template <typename T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape shape) : shape_(std::move(shape)), data_(numel_of(shape_), T(0)) {}
  TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel_of(shape_) != data_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  // Metadata-only reshape; element order is unchanged.
  void reshape(Shape s) {
    if (numel_of(s) != data_.size())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    shape_ = std::move(s);
  }

  TensorT reshaped(Shape s) const {
    TensorT t = *this;
    t.reshape(std::move(s));
    return t;
  }

  // Allocates only when the target size differs.
  void resize(const Shape& s) {
    if (shape_ != s) {
      shape_ = s;
      data_.assign(numel_of(s), T(0));
    }
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

// Named weight with a same-shape gradient buffer.
template <typename T>
struct ParamTensorT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  ParamTensorT() = default;
  ParamTensorT(std::string n, Shape shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}

  std::size_t size() const { return value.size(); }
};

using ParamTensorF = ParamTensorT<float>;
using ParamTensorD = ParamTensorT<double>;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace volscan
