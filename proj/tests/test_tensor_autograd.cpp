// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "splitfed/autograd.hpp"
#include "splitfed/error.hpp"
#include "test_helpers.hpp"

using namespace splitfed;
using splitfed::testing::central_diff;
using splitfed::testing::random_tensor;
using splitfed::testing::rel_err;

namespace {

// Brute-force convolution oracle: direct summation over the input grid,
// independent of the tape implementation.
Tensor conv_oracle(const Tensor& in, const Tensor& k, const Tensor& b) {
  const int n = in.dim(0), ci = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int co = k.dim(0), ks = k.dim(2), pad = ks / 2;
  Tensor out({n, co, h, w});
  for (int ni = 0; ni < n; ++ni)
    for (int o = 0; o < co; ++o)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = b[o];
          for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < ks; ++ky)
              for (int kx = 0; kx < ks; ++kx) {
                const int sy = y + ky - pad, sx = x + kx - pad;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += static_cast<double>(in.at4(ni, c, sy, sx)) *
                       static_cast<double>(k.at4(o, c, ky, kx));
              }
          out.at4(ni, o, y, x) = static_cast<float>(acc);
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor k({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  Tensor b({1}, {0});
  Tape t;
  auto out = t.conv2d(t.input(x), t.input(k), t.input(b));
  for (int i = 0; i < 4; ++i) CHECK(t.value(out)[i] == x[i]);
}

TEST_CASE("conv2d of zero input is the bias") {
  Tensor x = Tensor::zeros({2, 3, 4, 4});
  Rng rng(3);
  Tensor k = random_tensor<float>({5, 3, 3, 3}, rng);
  Tensor b({5}, {0.5f, -1.0f, 2.0f, 0.0f, 3.25f});
  Tape t;
  auto out = t.conv2d(t.input(x), t.input(k), t.input(b));
  const Tensor& v = t.value(out);
  for (int o = 0; o < 5; ++o)
    for (int y = 0; y < 4; ++y)
      for (int x2 = 0; x2 < 4; ++x2) {
        CHECK(v.at4(0, o, y, x2) == b[o]);
        CHECK(v.at4(1, o, y, x2) == b[o]);
      }
}

TEST_CASE("conv2d all-ones kernel matches the direct-summation oracle") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor b({1}, {0});
  const Tensor expect = conv_oracle(x, k, b);
  // Each output position sums every in-range entry of the 2x2 grid.
  for (int i = 0; i < 4; ++i) CHECK(expect[i] == doctest::Approx(10.0));
  Tape t;
  auto out = t.conv2d(t.input(x), t.input(k), t.input(b));
  for (int i = 0; i < 4; ++i) CHECK(t.value(out)[i] == expect[i]);
}

TEST_CASE("conv2d matches the oracle on random shapes incl 1x1 kernels") {
  Rng rng(17);
  for (int ks : {1, 3}) {
    Tensor x = random_tensor<float>({2, 3, 5, 6}, rng);
    Tensor k = random_tensor<float>({4, 3, ks, ks}, rng);
    Tensor b = random_tensor<float>({4}, rng);
    const Tensor expect = conv_oracle(x, k, b);
    Tape t;
    auto out = t.conv2d(t.input(x), t.input(k), t.input(b));
    for (std::int64_t i = 0; i < expect.size(); ++i) {
      CHECK(rel_err(t.value(out)[i], expect[i]) < 1e-5);
    }
  }
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
  Tape t;
  auto x = t.input(Tensor::zeros({1, 2, 4, 4}));
  auto k = t.input(Tensor::zeros({3, 5, 3, 3}));
  auto b = t.input(Tensor::zeros({3}));
  try {
    t.conv2d(x, k, b);
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
    CHECK(std::string(e.what()).find("[1x2x4x4]") != std::string::npos);
    CHECK(std::string(e.what()).find("[3x5x3x3]") != std::string::npos);
  }
}

TEST_CASE("relu clamps and gates the gradient") {
  Tape t;
  auto x = t.input(Tensor({1, 1, 1, 3}, {-1, 0, 2}));
  auto y = t.relu(x);
  CHECK(t.value(y)[0] == 0);
  CHECK(t.value(y)[1] == 0);
  CHECK(t.value(y)[2] == 2);

  Tape t2;
  auto xn = t2.input(Tensor({1, 1, 2, 2}, {-1, -2, -0.5f, -3}));
  auto s = t2.sum(t2.relu(xn));
  t2.backward(s);
  for (int i = 0; i < 4; ++i) {
    CHECK(t2.value(s)[0] == 0);
    CHECK(t2.grad(xn)[i] == 0);
  }
}

TEST_CASE("relu gradient at positive input matches finite differences") {
  Tape t;
  auto x = t.input(Tensor({1, 1, 1, 1}, {3.0f}));
  auto s = t.sum(t.relu(x));
  t.backward(s);
  const double analytic = t.grad(x)[0];
  const double fd = central_diff<float>(
      [](const Tensor& v) {
        Tape tt;
        auto xi = tt.input(v, false);
        return static_cast<double>(tt.value(tt.sum(tt.relu(xi)))[0]);
      },
      t.value(x), 0, 1e-3);
  CHECK(analytic == doctest::Approx(1.0));
  CHECK(std::fabs(analytic - fd) < 1e-4);
}

TEST_CASE("maxpool2 basics, tie-break, and errors") {
  Tape t;
  auto x = t.input(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto y = t.maxpool2(x);
  CHECK(t.value(y).shape() == Shape{1, 1, 1, 1});
  CHECK(t.value(y)[0] == 4);

  // Constant tensor pools to the same constant.
  Tape tc;
  auto xc = tc.input(Tensor::full({2, 3, 4, 4}, 0.75f));
  auto yc = tc.maxpool2(xc);
  for (std::int64_t i = 0; i < tc.value(yc).size(); ++i) {
    CHECK(tc.value(yc)[i] == 0.75f);
  }

  // Tie: gradient routes to the first position in row-major scan.
  Tape tt;
  auto xt = tt.input(Tensor({1, 1, 2, 2}, {5, 5, 5, 5}));
  auto yt = tt.maxpool2(xt);
  tt.backward_seeded({{yt, Tensor({1, 1, 1, 1}, {1.0f})}});
  CHECK(tt.grad(xt)[0] == 1.0f);
  CHECK(tt.grad(xt)[1] == 0.0f);
  CHECK(tt.grad(xt)[2] == 0.0f);
  CHECK(tt.grad(xt)[3] == 0.0f);

  Tape te;
  auto xo = te.input(Tensor::zeros({1, 1, 3, 4}));
  CHECK_THROWS_AS(te.maxpool2(xo), Error);
}

TEST_CASE("upsample2 replicates and its backward sums replicas") {
  Tape t;
  auto x = t.input(Tensor({1, 1, 1, 1}, {1.0f}));
  auto y = t.upsample2(x);
  CHECK(t.value(y).shape() == Shape{1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(t.value(y)[i] == 1.0f);
  t.backward_seeded({{y, Tensor::full({1, 1, 2, 2}, 1.0f)}});
  CHECK(t.grad(x)[0] == 4.0f);
}

TEST_CASE("maxpool2 of upsample2 is the identity") {
  Rng rng(5);
  Tensor x = random_tensor<float>({2, 3, 4, 5}, rng);
  Tape t;
  auto xi = t.input(x);
  auto y = t.maxpool2(t.upsample2(xi));
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(t.value(y)[i] == x[i]);
}

TEST_CASE("concat_channels stacks a first and splits gradients back") {
  Rng rng(6);
  Tensor a = random_tensor<float>({1, 2, 4, 4}, rng);
  Tensor b = random_tensor<float>({1, 3, 4, 4}, rng);
  Tape t;
  auto ai = t.input(a), bi = t.input(b);
  auto y = t.concat_channels(ai, bi);
  CHECK(t.value(y).shape() == Shape{1, 5, 4, 4});
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(t.value(y)[i] == a[i]);

  Tensor up = random_tensor<float>({1, 5, 4, 4}, rng);
  t.backward_seeded({{y, up}});
  // Backward slices are bit-identical to the corresponding upstream slices.
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(t.grad(ai)[i] == up[i]);
  for (std::int64_t i = 0; i < b.size(); ++i) {
    CHECK(t.grad(bi)[i] == up[a.size() + i]);
  }
}

TEST_CASE("concat_channels with a zero-channel tensor is the identity") {
  Rng rng(7);
  Tensor a = random_tensor<float>({1, 3, 2, 2}, rng);
  Tape t;
  auto y = t.concat_channels(t.input(a), t.input(Tensor::zeros({1, 0, 2, 2})));
  CHECK(t.value(y).shape() == Shape{1, 3, 2, 2});
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(t.value(y)[i] == a[i]);
}

TEST_CASE("concat_channels rejects spatial mismatch") {
  Tape t;
  auto a = t.input(Tensor::zeros({1, 2, 4, 4}));
  auto b = t.input(Tensor::zeros({1, 2, 5, 4}));
  CHECK_THROWS_AS(t.concat_channels(a, b), Error);
}

TEST_CASE("softmax_channels: uniform, shift invariance, closed form") {
  Tape t;
  auto u = t.softmax_channels(t.input(Tensor::full({1, 4, 2, 2}, 1.25f)));
  for (std::int64_t i = 0; i < t.value(u).size(); ++i) {
    CHECK(t.value(u)[i] == doctest::Approx(0.25).epsilon(1e-6));
  }

  Rng rng(8);
  Tensor logits = random_tensor<float>({1, 3, 2, 2}, rng);
  Tensor shifted = logits;
  for (std::size_t p = 0; p < 4; ++p) {
    for (int c = 0; c < 3; ++c) shifted[c * 4 + static_cast<std::int64_t>(p)] += 7.5f;
  }
  Tape t1, t2;
  auto s1 = t1.softmax_channels(t1.input(logits));
  auto s2 = t2.softmax_channels(t2.input(shifted));
  for (std::int64_t i = 0; i < logits.size(); ++i) {
    CHECK(t1.value(s1)[i] == t2.value(s2)[i]);
  }

  // Two classes with logits (0, ln 3) -> probabilities (0.25, 0.75).
  Tape t3;
  auto s3 = t3.softmax_channels(
      t3.input(Tensor({1, 2, 1, 1}, {0.0f, std::log(3.0f)})));
  CHECK(t3.value(s3)[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(t3.value(s3)[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax_channels pixels sum to one") {
  Rng rng(9);
  Tape t;
  auto s = t.softmax_channels(t.input(random_tensor<float>({2, 5, 3, 3}, rng)));
  const Tensor& v = t.value(s);
  const int plane = 9;
  for (int n = 0; n < 2; ++n)
    for (int p = 0; p < plane; ++p) {
      float sum = 0;
      for (int c = 0; c < 5; ++c) sum += v[(n * 5 + c) * plane + p];
      CHECK(std::fabs(sum - 1.0f) < 1e-6f);
    }
}

TEST_CASE("soft_dice_loss endpoints and hand-evaluated value") {
  // Perfect overlap.
  Tensor onehot({1, 2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
  Tape t;
  auto l = t.soft_dice_loss(t.input(onehot), onehot, 1e-6f);
  CHECK(t.value(l)[0] <= 1e-6f);
  CHECK(t.value(l)[0] >= 0.0f);

  // Disjoint one-hot predictions.
  Tensor flipped({1, 2, 2, 2}, {0, 1, 1, 0, 1, 0, 0, 1});
  Tape t2;
  auto l2 = t2.soft_dice_loss(t2.input(flipped), onehot, 1e-6f);
  CHECK(t2.value(l2)[0] >= 1.0f - 1e-6f);
  CHECK(t2.value(l2)[0] <= 1.0f + 1e-6f);

  // One pixel, two classes, probs (0.5, 0.5), target (1, 0):
  // dice terms 2/3 and 0, loss 1 - (2/3)/2 = 2/3.
  Tape t3;
  auto l3 = t3.soft_dice_loss(
      t3.input(Tensor({1, 2, 1, 1}, {0.5f, 0.5f})),
      Tensor({1, 2, 1, 1}, {1.0f, 0.0f}), 1e-9f);
  CHECK(t3.value(l3)[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("soft_dice_loss validates shapes and one-hot targets") {
  Tape t;
  auto p = t.input(Tensor::zeros({1, 2, 2, 2}));
  CHECK_THROWS_AS(t.soft_dice_loss(p, Tensor::zeros({1, 3, 2, 2}), 1e-6f),
                  Error);
  CHECK_THROWS_AS(t.soft_dice_loss(p, Tensor::full({1, 2, 2, 2}, 0.5f), 1e-6f),
                  Error);
}

TEST_CASE("backward of sum is all-ones; non-scalar loss rejected") {
  Rng rng(10);
  Tensor x = random_tensor<float>({2, 2, 3, 3}, rng);
  Tape t;
  auto xi = t.input(x);
  auto s = t.sum(xi);
  t.backward(s);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(t.grad(xi)[i] == 1.0f);

  Tape t2;
  auto y = t2.input(Tensor::zeros({1, 1, 2, 2}));
  CHECK_THROWS_AS(t2.backward(y), Error);
}

// Finite-difference oracle over every primitive, float tape, inputs in
// [-2, 2], h = 1e-3, relative error < 1e-3.
TEST_CASE("primitive gradients match central finite differences") {
  Rng rng(11);
  const double h = 1e-3, tol = 1e-3;

  auto check_input_grads = [&](const Tensor& x,
                               const std::function<ValueId(Tape&, ValueId)>& op) {
    Tape t;
    auto xi = t.input(x);
    auto s = t.sum(op(t, xi));
    t.backward(s);
    auto f = [&](const Tensor& v) {
      Tape tt;
      auto vi = tt.input(v, false);
      return static_cast<double>(tt.value(tt.sum(op(tt, vi)))[0]);
    };
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const double fd = central_diff<float>(f, x, i, h);
      const double an = t.grad(xi)[i];
      if (std::fabs(fd) < 1e-4 && std::fabs(an) < 1e-4) continue;
      CHECK(rel_err(fd, an) < tol);
    }
  };

  SUBCASE("relu away from the kink") {
    Tensor x = random_tensor<float>({1, 2, 3, 3}, rng);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      if (std::fabs(x[i]) < 5e-3f) x[i] = 0.1f;
    }
    check_input_grads(x, [](Tape& t, ValueId v) { return t.relu(v); });
  }
  SUBCASE("upsample2") {
    check_input_grads(random_tensor<float>({1, 2, 2, 3}, rng),
                      [](Tape& t, ValueId v) { return t.upsample2(v); });
  }
  SUBCASE("maxpool2 with clear maxima") {
    Tensor x = random_tensor<float>({1, 2, 4, 4}, rng);
    // Push window entries apart so the argmax is stable under +-h.
    for (std::int64_t i = 0; i < x.size(); ++i) {
      x[i] += 0.01f * static_cast<float>(i % 7);
    }
    check_input_grads(x, [](Tape& t, ValueId v) { return t.maxpool2(v); });
  }
  SUBCASE("softmax_channels") {
    check_input_grads(random_tensor<float>({1, 3, 2, 2}, rng),
                      [](Tape& t, ValueId v) { return t.softmax_channels(v); });
  }
  SUBCASE("soft_dice_loss in probs") {
    Tensor target({1, 2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
    Tensor probs = random_tensor<float>({1, 2, 2, 2}, rng, 0.05f, 2.0f);
    check_input_grads(probs, [target](Tape& t, ValueId v) {
      return t.soft_dice_loss(v, target, 1e-6f);
    });
  }
  SUBCASE("conv2d w.r.t. input, kernel, and bias") {
    Tensor x = random_tensor<float>({1, 2, 4, 4}, rng);
    Tensor k = random_tensor<float>({3, 2, 3, 3}, rng, -0.5f, 0.5f);
    Tensor b = random_tensor<float>({3}, rng);

    Tape t;
    auto xi = t.input(x), ki = t.input(k), bi = t.input(b);
    auto s = t.sum(t.conv2d(xi, ki, bi));
    t.backward(s);

    auto f_of = [&](int which) {
      return [&, which](const Tensor& v) {
        Tape tt;
        auto a = tt.input(which == 0 ? v : x, false);
        auto kk = tt.input(which == 1 ? v : k, false);
        auto bb = tt.input(which == 2 ? v : b, false);
        return static_cast<double>(tt.value(tt.sum(tt.conv2d(a, kk, bb)))[0]);
      };
    };
    const Tensor* tensors[3] = {&x, &k, &b};
    const ValueId ids[3] = {xi, ki, bi};
    for (int which = 0; which < 3; ++which) {
      Tape t2;
      for (std::int64_t i = 0; i < tensors[which]->size(); ++i) {
        const double fd = central_diff<float>(f_of(which), *tensors[which], i, h);
        const double an = t.grad(ids[which])[i];
        if (std::fabs(fd) < 1e-4 && std::fabs(an) < 1e-4) continue;
        CHECK(rel_err(fd, an) < tol);
      }
    }
  }
}

TEST_CASE("forward and backward stay finite on random inputs") {
  Rng rng(12);
  Tensor x = random_tensor<float>({2, 3, 4, 4}, rng);
  Tensor k = random_tensor<float>({4, 3, 3, 3}, rng);
  Tensor b = random_tensor<float>({4}, rng);
  Tape t;
  auto xi = t.input(x), ki = t.input(k), bi = t.input(b);
  auto y = t.softmax_channels(t.relu(t.conv2d(xi, ki, bi)));
  Tensor target = Tensor::zeros({2, 4, 4, 4});
  for (int n = 0; n < 2; ++n)
    for (int p = 0; p < 16; ++p) target[(n * 4 + (p % 4)) * 16 + p] = 1.0f;
  auto l = t.soft_dice_loss(y, target, 1e-6f);
  t.backward(l);
  CHECK(t.value(l).all_finite());
  CHECK(t.grad(ki).all_finite());
  CHECK(t.grad(bi).all_finite());
  CHECK(t.grad(xi).all_finite());
}

TEST_CASE("identical seeds give bit-identical forward results") {
  auto build = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor<float>({1, 2, 4, 4}, rng);
    Tensor k = random_tensor<float>({2, 2, 3, 3}, rng);
    Tensor b = random_tensor<float>({2}, rng);
    Tape t;
    auto y = t.softmax_channels(t.conv2d(t.input(x), t.input(k), t.input(b)));
    return t.value(y);
  };
  const Tensor a = build(42), b = build(42), c = build(43);
  CHECK(a.vec() == b.vec());
  CHECK(a.vec() != c.vec());
}
