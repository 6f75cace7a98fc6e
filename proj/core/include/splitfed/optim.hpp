// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "splitfed/rng.hpp"
#include "splitfed/tensor.hpp"

namespace splitfed {

// Adam with bias correction over an ordered set of parameter tensors.
template <class Real>
struct AdamStateT {
  std::vector<TensorT<Real>> m;
  std::vector<TensorT<Real>> v;
  std::int64_t step_count = 0;
  Real lr = Real(1e-4);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);

  static AdamStateT zeros_like(const std::vector<TensorT<Real>*>& params,
                               Real lr);
};

template <class Real>
void adam_step(const std::vector<TensorT<Real>*>& params,
               const std::vector<const TensorT<Real>*>& grads,
               AdamStateT<Real>& state);

// He-normal initialization: std = sqrt(2 / fan_in) with fan_in the number of
// inputs per output unit (I*K*K for OxIxKxK kernels).
template <class Real>
TensorT<Real> he_init(const Shape& shape, Rng& rng);

using AdamState = AdamStateT<float>;

}  // namespace splitfed
