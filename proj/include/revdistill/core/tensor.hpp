#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "revdistill/core/errors.hpp"

namespace revdistill {

// Dense row-major tensor. Rank is dynamic; CNN code uses NCHW order.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(numel_of(shape_)), T(0));
  }

  Tensor(std::vector<int64_t> shape, T fill_value) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(numel_of(shape_)), fill_value);
  }

  static Tensor from(std::vector<int64_t> shape, std::vector<T> values) {
    Tensor t;
    RD_CHECK(numel_of(shape) == static_cast<int64_t>(values.size()));
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  bool empty() const { return data_.empty(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // NCHW accessors.
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  T& at(int64_t a, int64_t b, int64_t c) {
    return data_[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
  }
  const T& at(int64_t a, int64_t b, int64_t c) const {
    return data_[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
  }
  T& at(int64_t a, int64_t b) { return data_[static_cast<size_t>(a * shape_[1] + b)]; }
  const T& at(int64_t a, int64_t b) const {
    return data_[static_cast<size_t>(a * shape_[1] + b)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  Tensor reshaped(std::vector<int64_t> new_shape) const {
    RD_CHECK(numel_of(new_shape) == numel());
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    for (int64_t i = 0; i < numel(); ++i) t[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return t;
  }

  static int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      RD_CHECK(d >= 0);
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

template <typename T>
inline void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  RD_CHECK(dst.numel() == src.numel());
  T* d = dst.data();
  const T* s = src.data();
  for (int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

template <typename T>
inline void scale_inplace(Tensor<T>& t, T alpha) {
  T* d = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) d[i] *= alpha;
}

template <typename T>
inline T sum(const Tensor<T>& t) {
  // Kahan accumulation keeps large-map sums stable in single precision.
  T acc(0), comp(0);
  const T* d = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) {
    T y = d[i] - comp;
    T v = acc + y;
    comp = (v - acc) - y;
    acc = v;
  }
  return acc;
}

template <typename T>
inline T max_value(const Tensor<T>& t) {
  RD_CHECK(t.numel() > 0);
  const T* d = t.data();
  T m = d[0];
  for (int64_t i = 1; i < t.numel(); ++i) m = d[i] > m ? d[i] : m;
  return m;
}

template <typename T>
inline bool all_finite(const Tensor<T>& t) {
  const T* d = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(d[i]))) return false;
  }
  return true;
}

}  // namespace revdistill
