// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "splitfed/error.hpp"

namespace splitfed {

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major N-d array. Activations are NxCxHxW, conv kernels OxIxKxK.
template <class Real>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), Real(0));
  }

  TensorT(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_size(shape_)) {
      fail(ErrorKind::ShapeMismatch,
           "tensor data length " + std::to_string(data_.size()) +
               " does not match shape " + shape_str(shape_));
    }
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

  static TensorT full(Shape shape, Real value) {
    TensorT t(std::move(shape));
    for (Real& v : t.data_) v = value;
    return t;
  }

  static TensorT scalar(Real value) { return TensorT({1}, {value}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::vector<Real>& vec() { return data_; }
  const std::vector<Real>& vec() const { return data_; }

  Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  Real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 4-d accessor for NCHW / OIKK tensors.
  Real& at4(int a, int b, int c, int d) {
    return data_[idx4(a, b, c, d)];
  }
  Real at4(int a, int b, int c, int d) const {
    return data_[idx4(a, b, c, d)];
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (Real v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void fill(Real value) {
    for (Real& v : data_) v = value;
  }

  template <class Other>
  TensorT<Other> cast() const {
    std::vector<Other> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = static_cast<Other>(data_[i]);
    }
    return TensorT<Other>(shape_, std::move(out));
  }

 private:
  void validate_shape() const {
    // Zero extents are allowed so degenerate slices (e.g. a zero-channel
    // concat operand) stay representable; negative extents are not.
    for (int d : shape_) {
      if (d < 0) {
        fail(ErrorKind::ShapeMismatch,
             "tensor extents must be non-negative, got " + shape_str(shape_));
      }
    }
  }

  std::size_t idx4(int a, int b, int c, int d) const {
    return static_cast<std::size_t>(
        ((static_cast<std::int64_t>(a) * shape_[1] + b) * shape_[2] + c) *
            shape_[3] +
        d);
  }

  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = TensorT<float>;

template <class Real>
void require_same_shape(const TensorT<Real>& a, const TensorT<Real>& b,
                        const std::string& context) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::ShapeMismatch, context + ": shape " + shape_str(a.shape()) +
                                       " vs " + shape_str(b.shape()));
  }
}

}  // namespace splitfed
