// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/optim.hpp"

#include <cmath>

#include "splitfed/error.hpp"

namespace splitfed {

template <class Real>
AdamStateT<Real> AdamStateT<Real>::zeros_like(
    const std::vector<TensorT<Real>*>& params, Real lr) {
  AdamStateT state;
  state.lr = lr;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const TensorT<Real>* p : params) {
    state.m.push_back(TensorT<Real>::zeros(p->shape()));
    state.v.push_back(TensorT<Real>::zeros(p->shape()));
  }
  return state;
}

template <class Real>
void adam_step(const std::vector<TensorT<Real>*>& params,
               const std::vector<const TensorT<Real>*>& grads,
               AdamStateT<Real>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    fail(ErrorKind::ShapeMismatch,
         "adam_step: got " + std::to_string(params.size()) + " params, " +
             std::to_string(grads.size()) + " grads, " +
             std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], *grads[i], "adam_step param/grad");
    require_same_shape(*params[i], state.m[i], "adam_step param/moment");
  }
  state.step_count += 1;
  const Real b1 = state.beta1, b2 = state.beta2;
  const Real corr1 =
      Real(1) - static_cast<Real>(std::pow(static_cast<double>(b1),
                                           static_cast<double>(state.step_count)));
  const Real corr2 =
      Real(1) - static_cast<Real>(std::pow(static_cast<double>(b2),
                                           static_cast<double>(state.step_count)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Real* p = params[i]->data();
    const Real* g = grads[i]->data();
    Real* m = state.m[i].data();
    Real* v = state.v[i].data();
    const std::int64_t n = params[i]->size();
    for (std::int64_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (Real(1) - b1) * g[j];
      v[j] = b2 * v[j] + (Real(1) - b2) * g[j] * g[j];
      const Real mhat = m[j] / corr1;
      const Real vhat = v[j] / corr2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

template <class Real>
TensorT<Real> he_init(const Shape& shape, Rng& rng) {
  TensorT<Real> t(shape);
  const std::int64_t fan_in = shape.empty() ? 1 : t.size() / shape[0];
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<Real>(rng.next_gaussian() * std_dev);
  }
  return t;
}

template struct AdamStateT<float>;
template struct AdamStateT<double>;
template void adam_step<float>(const std::vector<TensorT<float>*>&,
                               const std::vector<const TensorT<float>*>&,
                               AdamStateT<float>&);
template void adam_step<double>(const std::vector<TensorT<double>*>&,
                                const std::vector<const TensorT<double>*>&,
                                AdamStateT<double>&);
template TensorT<float> he_init<float>(const Shape&, Rng&);
template TensorT<double> he_init<double>(const Shape&, Rng&);

}  // namespace splitfed
