// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "splitfed/error.hpp"
#include "splitfed/optim.hpp"
#include "test_helpers.hpp"

using namespace splitfed;
using splitfed::testing::random_tensor;

TEST_CASE("adam: zero gradient leaves params unchanged and bumps the step") {
  Tensor p({3}, {1.0f, -2.0f, 0.5f});
  Tensor g = Tensor::zeros({3});
  AdamState st = AdamState::zeros_like({&p}, 1e-3f);
  adam_step<float>({&p}, {&g}, st);
  CHECK(st.step_count == 1);
  CHECK(p[0] == 1.0f);
  CHECK(p[1] == -2.0f);
  CHECK(p[2] == 0.5f);
}

TEST_CASE("adam first step matches the closed-form bias-corrected update") {
  Tensor p({1}, {2.0f});
  Tensor g({1}, {0.5f});
  AdamState st = AdamState::zeros_like({&p}, 1e-4f);
  adam_step<float>({&p}, {&g}, st);
  // First step: m_hat = g, v_hat = g^2, delta = -lr * g / (|g| + eps).
  const double expected = 2.0 - 1e-4 * 0.5 / (std::sqrt(0.25) + 1e-8);
  CHECK(p[0] == doctest::Approx(expected).epsilon(1e-6));
  CHECK(std::fabs(p[0] - 2.0f + 1e-4f) < 1e-8);
}

TEST_CASE("adam keeps the update direction under repeated identical grads") {
  Tensor p({1}, {0.0f});
  Tensor g({1}, {-0.3f});
  AdamState st = AdamState::zeros_like({&p}, 1e-2f);
  float prev = p[0];
  for (int i = 0; i < 5; ++i) {
    adam_step<float>({&p}, {&g}, st);
    CHECK(p[0] > prev);  // negative gradient, so the param rises every step
    prev = p[0];
  }
  CHECK(st.step_count == 5);
}

TEST_CASE("adam rejects mismatched shapes") {
  Tensor p({2}, {0.0f, 0.0f});
  Tensor g({3}, {0.0f, 0.0f, 0.0f});
  AdamState st = AdamState::zeros_like({&p}, 1e-3f);
  CHECK_THROWS_AS((adam_step<float>({&p}, {&g}, st)), Error);
}

TEST_CASE("he_init is deterministic per stream and has the right spread") {
  Rng a(123), b(123), c(124);
  const Tensor ta = he_init<float>({4, 3, 3, 3}, a);
  const Tensor tb = he_init<float>({4, 3, 3, 3}, b);
  const Tensor tc = he_init<float>({4, 3, 3, 3}, c);
  CHECK(ta.vec() == tb.vec());
  CHECK(ta.vec() != tc.vec());

  // 1e5 draws with fan_in 100: sample std within 5% of sqrt(2/100).
  Rng rng(7);
  const Tensor big = he_init<float>({1000, 100}, rng);
  double sum = 0, sum2 = 0;
  for (std::int64_t i = 0; i < big.size(); ++i) {
    sum += big[i];
    sum2 += static_cast<double>(big[i]) * big[i];
  }
  const double n = static_cast<double>(big.size());
  const double var = sum2 / n - (sum / n) * (sum / n);
  const double target = std::sqrt(2.0 / 100.0);
  CHECK(std::sqrt(var) == doctest::Approx(target).epsilon(0.05));
}
