// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "splitfed/rng.hpp"
#include "splitfed/tensor.hpp"

namespace splitfed::testing {

template <class Real>
TensorT<Real> random_tensor(const Shape& shape, Rng& rng, Real lo = Real(-2),
                            Real hi = Real(2)) {
  TensorT<Real> t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = lo + static_cast<Real>(rng.next_double()) * (hi - lo);
  }
  return t;
}

inline double rel_err(double a, double b) {
  const double denom = std::max(std::fabs(a), std::fabs(b));
  if (denom == 0.0) return 0.0;
  return std::fabs(a - b) / denom;
}

// Central finite difference of a scalar function of one tensor entry.
template <class Real>
double central_diff(const std::function<double(const TensorT<Real>&)>& f,
                    TensorT<Real> x, std::int64_t index, double h) {
  const Real orig = x[index];
  x[index] = orig + static_cast<Real>(h);
  const double fp = f(x);
  x[index] = orig - static_cast<Real>(h);
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

}  // namespace splitfed::testing
