// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace splitfed {

namespace {

template <class Real>
void check_4d(const TensorT<Real>& t, const char* what) {
  if (t.rank() != 4) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + " must be 4-d, got " +
                                       shape_str(t.shape()));
  }
}

// Fixed-order dot product over row segments. The per-lane partial sums keep
// the summation order independent of the vector width the compiler picks,
// and the independent accumulators let the loop vectorize.
template <class Real>
struct LaneDot {
  static constexpr int kLanes = 16;
  Real lanes[kLanes] = {};
  Real tail = 0;

  void accumulate(const Real* __restrict a, const Real* __restrict b, int n) {
    int i = 0;
    for (; i + kLanes <= n; i += kLanes) {
      for (int l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
    }
    for (; i < n; ++i) tail += a[i] * b[i];
  }

  Real total() const {
    Real s = 0;
    for (int l = 0; l < kLanes; ++l) s += lanes[l];
    return s + tail;
  }
};

// Three shifted dot products sharing one pass over a padded row, for the
// 3x3 kernel-gradient: tap kx correlates row[x + kx] with the output grad.
template <class Real>
struct LaneDot3 {
  static constexpr int kLanes = 16;
  Real l0[kLanes] = {}, l1[kLanes] = {}, l2[kLanes] = {};
  Real t0 = 0, t1 = 0, t2 = 0;

  void accumulate(const Real* __restrict p, const Real* __restrict g, int n) {
    int i = 0;
    for (; i + kLanes <= n; i += kLanes) {
      for (int l = 0; l < kLanes; ++l) {
        const Real gv = g[i + l];
        l0[l] += p[i + l] * gv;
        l1[l] += p[i + l + 1] * gv;
        l2[l] += p[i + l + 2] * gv;
      }
    }
    for (; i < n; ++i) {
      const Real gv = g[i];
      t0 += p[i] * gv;
      t1 += p[i + 1] * gv;
      t2 += p[i + 2] * gv;
    }
  }

  Real total(int tap) const {
    const Real* lanes = tap == 0 ? l0 : tap == 1 ? l1 : l2;
    Real s = 0;
    for (int l = 0; l < kLanes; ++l) s += lanes[l];
    return s + (tap == 0 ? t0 : tap == 1 ? t1 : t2);
  }
};

// Forward fast path for 3x3 kernels: one pass per (channel, ky) row with the
// three taps in registers.
template <class Real>
void conv3x3_accumulate(const Real* __restrict pp, const Real* __restrict kp,
                        Real* __restrict op, int h, int w, int pw) {
  for (int ky = 0; ky < 3; ++ky) {
    const Real k0 = kp[ky * 3], k1 = kp[ky * 3 + 1], k2 = kp[ky * 3 + 2];
    for (int y = 0; y < h; ++y) {
      const Real* __restrict row = pp + (y + ky) * pw;
      Real* __restrict orow = op + static_cast<std::size_t>(y) * w;
      for (int xx = 0; xx < w; ++xx) {
        orow[xx] += k0 * row[xx] + k1 * row[xx + 1] + k2 * row[xx + 2];
      }
    }
  }
}

// Generic tap-by-tap accumulation (odd kernels other than 3x3).
template <class Real>
void conv_accumulate(const Real* __restrict pp, const Real* __restrict kp,
                     Real* __restrict op, int h, int w, int pw, int ks) {
  for (int ky = 0; ky < ks; ++ky) {
    for (int kx = 0; kx < ks; ++kx) {
      const Real kv = kp[ky * ks + kx];
      for (int y = 0; y < h; ++y) {
        const Real* __restrict row = pp + (y + ky) * pw + kx;
        Real* __restrict orow = op + static_cast<std::size_t>(y) * w;
        for (int xx = 0; xx < w; ++xx) orow[xx] += kv * row[xx];
      }
    }
  }
}

// Input-gradient fast path for 3x3 kernels, written as a gather over the
// padded-grad row so the inner loop has no overlapping writes:
//   prow[u] += k0*g[u] + k1*g[u-1] + k2*g[u-2]   (taps outside [0,w) drop)
template <class Real>
void conv3x3_input_grad(const Real* __restrict gp, const Real* __restrict kp,
                        Real* __restrict pg, int h, int w, int pw) {
  for (int ky = 0; ky < 3; ++ky) {
    const Real k0 = kp[ky * 3], k1 = kp[ky * 3 + 1], k2 = kp[ky * 3 + 2];
    for (int y = 0; y < h; ++y) {
      Real* __restrict prow = pg + (y + ky) * pw;
      const Real* __restrict grow = gp + static_cast<std::size_t>(y) * w;
      prow[0] += k0 * grow[0];
      prow[1] += k0 * grow[1] + k1 * grow[0];
      for (int u = 2; u < w; ++u) {
        prow[u] += k0 * grow[u] + k1 * grow[u - 1] + k2 * grow[u - 2];
      }
      prow[w] += k1 * grow[w - 1] + k2 * grow[w - 2];
      prow[w + 1] += k2 * grow[w - 1];
    }
  }
}

template <class Real>
void conv_input_grad(const Real* __restrict gp, const Real* __restrict kp,
                     Real* __restrict pg, int h, int w, int pw, int ks) {
  for (int ky = 0; ky < ks; ++ky) {
    for (int kx = 0; kx < ks; ++kx) {
      const Real kv = kp[ky * ks + kx];
      for (int y = 0; y < h; ++y) {
        Real* __restrict prow = pg + (y + ky) * pw + kx;
        const Real* __restrict grow = gp + static_cast<std::size_t>(y) * w;
        for (int xx = 0; xx < w; ++xx) prow[xx] += kv * grow[xx];
      }
    }
  }
}

// Copies one NCHW sample into a zero-padded C x (H+2p) x (W+2p) buffer.
template <class Real>
void pad_sample(const Real* src, int channels, int height, int width, int pad,
                Real* dst) {
  const int ph = height + 2 * pad;
  const int pw = width + 2 * pad;
  std::fill(dst, dst + static_cast<std::size_t>(channels) * ph * pw, Real(0));
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      std::memcpy(dst + (static_cast<std::size_t>(c) * ph + y + pad) * pw + pad,
                  src + (static_cast<std::size_t>(c) * height + y) * width,
                  sizeof(Real) * static_cast<std::size_t>(width));
    }
  }
}

}  // namespace

template <class Real>
ValueId TapeT<Real>::push(Tensor value, bool needs_grad,
                          std::function<void(TapeT&)> fn) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backprop = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<ValueId>(nodes_.size() - 1);
}

template <class Real>
typename TapeT<Real>::Tensor& TapeT<Real>::grad_buf(ValueId id) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.grad.rank() == 0) {
    node.grad = Tensor::zeros(node.value.shape());
  }
  return node.grad;
}

template <class Real>
const typename TapeT<Real>::Tensor& TapeT<Real>::grad(ValueId id) {
  return grad_buf(id);
}

template <class Real>
ValueId TapeT<Real>::input(Tensor value, bool needs_grad) {
  return push(std::move(value), needs_grad, nullptr);
}

template <class Real>
ValueId TapeT<Real>::conv2d(ValueId x, ValueId kernel, ValueId bias) {
  const Tensor& in = value(x);
  const Tensor& k = value(kernel);
  const Tensor& b = value(bias);
  check_4d(in, "conv2d input");
  check_4d(k, "conv2d kernel");
  if (k.dim(2) != k.dim(3) || k.dim(2) % 2 == 0) {
    fail(ErrorKind::ShapeMismatch,
         "conv2d kernel must be odd square, got " + shape_str(k.shape()));
  }
  if (in.dim(1) != k.dim(1)) {
    fail(ErrorKind::ShapeMismatch,
         "conv2d channel mismatch: input " + shape_str(in.shape()) +
             " vs kernel " + shape_str(k.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != k.dim(0)) {
    fail(ErrorKind::ShapeMismatch,
         "conv2d bias " + shape_str(b.shape()) + " vs kernel " +
             shape_str(k.shape()));
  }

  const int n = in.dim(0), ci = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int co = k.dim(0), ks = k.dim(2), pad = ks / 2;
  const int ph = h + 2 * pad, pw = w + 2 * pad;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  Tensor out({n, co, h, w});
  std::vector<Real> padded(static_cast<std::size_t>(ci) * ph * pw);
  for (int ni = 0; ni < n; ++ni) {
    pad_sample(in.data() + static_cast<std::size_t>(ni) * ci * plane, ci, h, w,
               pad, padded.data());
    for (int o = 0; o < co; ++o) {
      Real* op = out.data() + (static_cast<std::size_t>(ni) * co + o) * plane;
      std::fill(op, op + plane, b[o]);
      const Real* kbase =
          k.data() + static_cast<std::size_t>(o) * ci * ks * ks;
      for (int c = 0; c < ci; ++c) {
        const Real* pp = padded.data() + static_cast<std::size_t>(c) * ph * pw;
        const Real* kp = kbase + static_cast<std::size_t>(c) * ks * ks;
        if (ks == 3) {
          conv3x3_accumulate(pp, kp, op, h, w, pw);
        } else {
          conv_accumulate(pp, kp, op, h, w, pw, ks);
        }
      }
    }
  }

  const bool needs = needs_grad(x) || needs_grad(kernel) || needs_grad(bias);
  const ValueId out_id = push(std::move(out), needs, nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop = [x, kernel, bias, out_id,
                                                       n, ci, h, w, co, ks,
                                                       pad, ph, pw,
                                                       plane](TapeT& t) {
    const Tensor& gout = t.nodes_[static_cast<std::size_t>(out_id)].grad;
    const Tensor& in_v = t.value(x);
    const Tensor& k_v = t.value(kernel);

    if (t.needs_grad(bias)) {
      Tensor& gb = t.grad_buf(bias);
      for (int ni = 0; ni < n; ++ni) {
        for (int o = 0; o < co; ++o) {
          const Real* gp =
              gout.data() + (static_cast<std::size_t>(ni) * co + o) * plane;
          Real acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
          gb[o] += acc;
        }
      }
    }

    std::vector<Real> pbuf(static_cast<std::size_t>(ci) * ph * pw);
    if (t.needs_grad(kernel)) {
      Tensor& gk = t.grad_buf(kernel);
      for (int ni = 0; ni < n; ++ni) {
        pad_sample(in_v.data() + static_cast<std::size_t>(ni) * ci * plane, ci,
                   h, w, pad, pbuf.data());
        for (int o = 0; o < co; ++o) {
          const Real* gp =
              gout.data() + (static_cast<std::size_t>(ni) * co + o) * plane;
          Real* gkbase = gk.data() + static_cast<std::size_t>(o) * ci * ks * ks;
          for (int c = 0; c < ci; ++c) {
            const Real* pp = pbuf.data() + static_cast<std::size_t>(c) * ph * pw;
            Real* gkp = gkbase + static_cast<std::size_t>(c) * ks * ks;
            if (ks == 3) {
              for (int ky = 0; ky < 3; ++ky) {
                LaneDot3<Real> acc;
                for (int y = 0; y < h; ++y) {
                  acc.accumulate(pp + (y + ky) * pw,
                                 gp + static_cast<std::size_t>(y) * w, w);
                }
                gkp[ky * 3] += acc.total(0);
                gkp[ky * 3 + 1] += acc.total(1);
                gkp[ky * 3 + 2] += acc.total(2);
              }
            } else {
              for (int ky = 0; ky < ks; ++ky) {
                for (int kx = 0; kx < ks; ++kx) {
                  LaneDot<Real> acc;
                  for (int y = 0; y < h; ++y) {
                    acc.accumulate(pp + (y + ky) * pw + kx,
                                   gp + static_cast<std::size_t>(y) * w, w);
                  }
                  gkp[ky * ks + kx] += acc.total();
                }
              }
            }
          }
        }
      }
    }

    if (t.needs_grad(x)) {
      Tensor& gin = t.grad_buf(x);
      std::vector<Real> pgrad(static_cast<std::size_t>(ci) * ph * pw);
      for (int ni = 0; ni < n; ++ni) {
        std::fill(pgrad.begin(), pgrad.end(), Real(0));
        for (int o = 0; o < co; ++o) {
          const Real* gp =
              gout.data() + (static_cast<std::size_t>(ni) * co + o) * plane;
          const Real* kbase =
              k_v.data() + static_cast<std::size_t>(o) * ci * ks * ks;
          for (int c = 0; c < ci; ++c) {
            Real* pg = pgrad.data() + static_cast<std::size_t>(c) * ph * pw;
            const Real* kp = kbase + static_cast<std::size_t>(c) * ks * ks;
            if (ks == 3 && w >= 3) {
              conv3x3_input_grad(gp, kp, pg, h, w, pw);
            } else {
              conv_input_grad(gp, kp, pg, h, w, pw, ks);
            }
          }
        }
        Real* gi = gin.data() + static_cast<std::size_t>(ni) * ci * plane;
        for (int c = 0; c < ci; ++c) {
          const Real* pg = pgrad.data() + static_cast<std::size_t>(c) * ph * pw;
          for (int y = 0; y < h; ++y) {
            Real* drow = gi + (static_cast<std::size_t>(c) * h + y) * w;
            const Real* srow = pg + (y + pad) * pw + pad;
            for (int xx = 0; xx < w; ++xx) drow[xx] += srow[xx];
          }
        }
      }
    }
  };
  return out_id;
}

template <class Real>
ValueId TapeT<Real>::relu(ValueId x) {
  const Tensor& in = value(x);
  Tensor out(in.shape());
  const Real* src = in.data();
  Real* dst = out.data();
  for (std::int64_t i = 0; i < in.size(); ++i) {
    dst[i] = src[i] > Real(0) ? src[i] : Real(0);
  }
  const ValueId out_id = push(std::move(out), needs_grad(x), nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop = [x, out_id](TapeT& t) {
    if (!t.needs_grad(x)) return;
    const Tensor& gout = t.nodes_[static_cast<std::size_t>(out_id)].grad;
    const Tensor& in_v = t.value(x);
    Tensor& gin = t.grad_buf(x);
    const Real* g = gout.data();
    const Real* v = in_v.data();
    Real* d = gin.data();
    for (std::int64_t i = 0; i < gout.size(); ++i) {
      if (v[i] > Real(0)) d[i] += g[i];
    }
  };
  return out_id;
}

template <class Real>
ValueId TapeT<Real>::maxpool2(ValueId x) {
  const Tensor& in = value(x);
  check_4d(in, "maxpool2 input");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    fail(ErrorKind::ShapeMismatch,
         "maxpool2 requires even H and W, got " + shape_str(in.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(out.size()));
  std::size_t oi = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const Real* ip =
          in.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          // Row-major scan of the 2x2 window; strict > keeps the first max.
          std::int32_t best = (2 * y) * w + 2 * xx;
          Real bv = ip[best];
          const std::int32_t cand[3] = {(2 * y) * w + 2 * xx + 1,
                                        (2 * y + 1) * w + 2 * xx,
                                        (2 * y + 1) * w + 2 * xx + 1};
          for (std::int32_t idx : cand) {
            if (ip[idx] > bv) {
              bv = ip[idx];
              best = idx;
            }
          }
          out.data()[oi] = bv;
          argmax[oi] = best;
          ++oi;
        }
      }
    }
  }
  const ValueId out_id = push(std::move(out), needs_grad(x), nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop =
      [x, out_id, argmax = std::move(argmax), n, c, h, w, oh, ow](TapeT& t) {
        if (!t.needs_grad(x)) return;
        const Tensor& gout = t.nodes_[static_cast<std::size_t>(out_id)].grad;
        Tensor& gin = t.grad_buf(x);
        std::size_t oi = 0;
        for (int ni = 0; ni < n; ++ni) {
          for (int ci = 0; ci < c; ++ci) {
            Real* gp =
                gin.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
            for (int i = 0; i < oh * ow; ++i, ++oi) {
              gp[argmax[oi]] += gout.data()[oi];
            }
          }
        }
      };
  return out_id;
}

template <class Real>
ValueId TapeT<Real>::upsample2(ValueId x) {
  const Tensor& in = value(x);
  check_4d(in, "upsample2 input");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (int p = 0; p < n * c; ++p) {
    const Real* ip = in.data() + static_cast<std::size_t>(p) * h * w;
    Real* op = out.data() + static_cast<std::size_t>(p) * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const Real v = ip[y * w + xx];
        const std::size_t base = (2 * static_cast<std::size_t>(y)) * 2 * w + 2 * xx;
        op[base] = v;
        op[base + 1] = v;
        op[base + 2 * w] = v;
        op[base + 2 * w + 1] = v;
      }
    }
  }
  const ValueId out_id = push(std::move(out), needs_grad(x), nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop = [x, out_id, n, c, h,
                                                       w](TapeT& t) {
    if (!t.needs_grad(x)) return;
    const Tensor& gout = t.nodes_[static_cast<std::size_t>(out_id)].grad;
    Tensor& gin = t.grad_buf(x);
    for (int p = 0; p < n * c; ++p) {
      const Real* gp = gout.data() + static_cast<std::size_t>(p) * 4 * h * w;
      Real* dp = gin.data() + static_cast<std::size_t>(p) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          const std::size_t base =
              (2 * static_cast<std::size_t>(y)) * 2 * w + 2 * xx;
          dp[y * w + xx] +=
              ((gp[base] + gp[base + 1]) + gp[base + 2 * w]) +
              gp[base + 2 * w + 1];
        }
      }
    }
  };
  return out_id;
}

template <class Real>
ValueId TapeT<Real>::concat_channels(ValueId a, ValueId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  check_4d(av, "concat_channels a");
  check_4d(bv, "concat_channels b");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
      av.dim(3) != bv.dim(3)) {
    fail(ErrorKind::ShapeMismatch, "concat_channels spatial mismatch: " +
                                       shape_str(av.shape()) + " vs " +
                                       shape_str(bv.shape()));
  }
  const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  const int h = av.dim(2), w = av.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int ni = 0; ni < n; ++ni) {
    Real* op = out.data() + static_cast<std::size_t>(ni) * (ca + cb) * plane;
    std::memcpy(op, av.data() + static_cast<std::size_t>(ni) * ca * plane,
                sizeof(Real) * ca * plane);
    std::memcpy(op + static_cast<std::size_t>(ca) * plane,
                bv.data() + static_cast<std::size_t>(ni) * cb * plane,
                sizeof(Real) * cb * plane);
  }
  const bool needs = needs_grad(a) || needs_grad(b);
  const ValueId out_id = push(std::move(out), needs, nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop = [a, b, out_id, n, ca, cb,
                                                       plane](TapeT& t) {
    const Tensor& gout = t.nodes_[static_cast<std::size_t>(out_id)].grad;
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buf(a);
      for (int ni = 0; ni < n; ++ni) {
        const Real* gp =
            gout.data() + static_cast<std::size_t>(ni) * (ca + cb) * plane;
        Real* dp = ga.data() + static_cast<std::size_t>(ni) * ca * plane;
        for (std::size_t i = 0; i < ca * plane; ++i) dp[i] += gp[i];
      }
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buf(b);
      for (int ni = 0; ni < n; ++ni) {
        const Real* gp = gout.data() +
                         static_cast<std::size_t>(ni) * (ca + cb) * plane +
                         static_cast<std::size_t>(ca) * plane;
        Real* dp = gb.data() + static_cast<std::size_t>(ni) * cb * plane;
        for (std::size_t i = 0; i < cb * plane; ++i) dp[i] += gp[i];
      }
    }
  };
  return out_id;
}

template <class Real>
ValueId TapeT<Real>::softmax_channels(ValueId x) {
  const Tensor& in = value(x);
  check_4d(in, "softmax_channels input");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out(in.shape());
  for (int ni = 0; ni < n; ++ni) {
    const Real* ip = in.data() + static_cast<std::size_t>(ni) * c * plane;
    Real* op = out.data() + static_cast<std::size_t>(ni) * c * plane;
    for (std::size_t px = 0; px < plane; ++px) {
      Real m = ip[px];
      for (int ci = 1; ci < c; ++ci) m = std::max(m, ip[ci * plane + px]);
      Real s = 0;
      for (int ci = 0; ci < c; ++ci) {
        const Real e = std::exp(ip[ci * plane + px] - m);
        op[ci * plane + px] = e;
        s += e;
      }
      const Real inv = Real(1) / s;
      for (int ci = 0; ci < c; ++ci) op[ci * plane + px] *= inv;
    }
  }
  const ValueId out_id = push(std::move(out), needs_grad(x), nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop = [x, out_id, n, c,
                                                       plane](TapeT& t) {
    if (!t.needs_grad(x)) return;
    const Tensor& gout = t.nodes_[static_cast<std::size_t>(out_id)].grad;
    const Tensor& sv = t.nodes_[static_cast<std::size_t>(out_id)].value;
    Tensor& gin = t.grad_buf(x);
    for (int ni = 0; ni < n; ++ni) {
      const std::size_t base = static_cast<std::size_t>(ni) * c * plane;
      const Real* g = gout.data() + base;
      const Real* s = sv.data() + base;
      Real* d = gin.data() + base;
      for (std::size_t px = 0; px < plane; ++px) {
        Real dot = 0;
        for (int ci = 0; ci < c; ++ci) {
          dot += g[ci * plane + px] * s[ci * plane + px];
        }
        for (int ci = 0; ci < c; ++ci) {
          d[ci * plane + px] +=
              s[ci * plane + px] * (g[ci * plane + px] - dot);
        }
      }
    }
  };
  return out_id;
}

template <class Real>
ValueId TapeT<Real>::soft_dice_loss(ValueId probs, const Tensor& target_onehot,
                                    Real eps) {
  const Tensor& p = value(probs);
  check_4d(p, "soft_dice_loss probs");
  require_same_shape(p, target_onehot, "soft_dice_loss");
  if (!(eps > Real(0))) {
    fail(ErrorKind::InvalidArgument, "soft_dice_loss eps must be > 0");
  }
  const int n = p.dim(0), c = p.dim(1), h = p.dim(2), w = p.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  // One-hot validation: entries in {0,1} and each pixel's channels sum to 1.
  std::vector<Real> pixel_sum(static_cast<std::size_t>(n) * plane, Real(0));
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const Real* gp =
          target_onehot.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      Real* ps = pixel_sum.data() + static_cast<std::size_t>(ni) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (gp[i] != Real(0) && gp[i] != Real(1)) {
          fail(ErrorKind::InvalidArgument,
               "soft_dice_loss target must be one-hot (found value " +
                   std::to_string(static_cast<double>(gp[i])) + ")");
        }
        ps[i] += gp[i];
      }
    }
  }
  for (Real s : pixel_sum) {
    if (s != Real(1)) {
      fail(ErrorKind::InvalidArgument,
           "soft_dice_loss target must be one-hot per pixel");
    }
  }

  std::vector<double> inter(static_cast<std::size_t>(c), 0.0);
  std::vector<double> denom(static_cast<std::size_t>(c), 0.0);
  for (int ci = 0; ci < c; ++ci) {
    double a = 0, ps = 0, gs = 0;
    for (int ni = 0; ni < n; ++ni) {
      const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
      const Real* pp = p.data() + off;
      const Real* gp = target_onehot.data() + off;
      for (std::size_t i = 0; i < plane; ++i) {
        a += static_cast<double>(pp[i]) * static_cast<double>(gp[i]);
        ps += static_cast<double>(pp[i]);
        gs += static_cast<double>(gp[i]);
      }
    }
    inter[static_cast<std::size_t>(ci)] = a;
    denom[static_cast<std::size_t>(ci)] = ps + gs + static_cast<double>(eps);
  }
  double dice = 0;
  for (int ci = 0; ci < c; ++ci) {
    dice += (2.0 * inter[static_cast<std::size_t>(ci)] +
             static_cast<double>(eps)) /
            denom[static_cast<std::size_t>(ci)];
  }
  const Real loss = static_cast<Real>(1.0 - dice / c);

  const ValueId out_id =
      push(Tensor::scalar(loss), needs_grad(probs), nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop =
      [probs, out_id, target = target_onehot, inter = std::move(inter),
       denom = std::move(denom), eps, n, c, plane](TapeT& t) {
        if (!t.needs_grad(probs)) return;
        const Real up = t.nodes_[static_cast<std::size_t>(out_id)].grad[0];
        Tensor& gin = t.grad_buf(probs);
        for (int ci = 0; ci < c; ++ci) {
          const double d = denom[static_cast<std::size_t>(ci)];
          const double num =
              2.0 * inter[static_cast<std::size_t>(ci)] + static_cast<double>(eps);
          // dL/dp = num/(C*d^2) - (2/(C*d)) * g, scaled by upstream.
          const double coef_bg = num / (c * d * d);
          const double coef_fg = coef_bg - 2.0 / (c * d);
          for (int ni = 0; ni < n; ++ni) {
            const std::size_t off =
                (static_cast<std::size_t>(ni) * c + ci) * plane;
            const Real* gp = target.data() + off;
            Real* dp = gin.data() + off;
            for (std::size_t i = 0; i < plane; ++i) {
              const double coef = gp[i] != Real(0) ? coef_fg : coef_bg;
              dp[i] += static_cast<Real>(static_cast<double>(up) * coef);
            }
          }
        }
      };
  return out_id;
}

template <class Real>
ValueId TapeT<Real>::sum(ValueId x) {
  const Tensor& in = value(x);
  Real acc = 0;
  for (std::int64_t i = 0; i < in.size(); ++i) acc += in[i];
  const ValueId out_id = push(Tensor::scalar(acc), needs_grad(x), nullptr);
  nodes_[static_cast<std::size_t>(out_id)].backprop = [x, out_id](TapeT& t) {
    if (!t.needs_grad(x)) return;
    const Real up = t.nodes_[static_cast<std::size_t>(out_id)].grad[0];
    Tensor& gin = t.grad_buf(x);
    for (std::int64_t i = 0; i < gin.size(); ++i) gin[i] += up;
  };
  return out_id;
}

template <class Real>
void TapeT<Real>::backward(ValueId loss) {
  if (value(loss).size() != 1) {
    fail(ErrorKind::InvalidArgument,
         "backward requires a scalar loss, got shape " +
             shape_str(value(loss).shape()));
  }
  backward_seeded({Seed{loss, Tensor::scalar(Real(1))}});
}

template <class Real>
void TapeT<Real>::backward_seeded(const std::vector<Seed>& seeds) {
  backward_range(0, nodes_.size(), seeds);
}

template <class Real>
void TapeT<Real>::backward_range(std::size_t lo, std::size_t hi,
                                 const std::vector<Seed>& seeds) {
  if (hi > nodes_.size() || lo > hi) {
    fail(ErrorKind::InvalidArgument, "backward_range out of bounds");
  }
  for (const Seed& seed : seeds) {
    Tensor& g = grad_buf(seed.id);
    require_same_shape(g, seed.grad, "backward seed");
    Real* dst = g.data();
    const Real* src = seed.grad.data();
    for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }
  for (std::size_t i = hi; i > lo; --i) {
    Node& node = nodes_[i - 1];
    if (!node.backprop || !node.needs_grad) continue;
    if (node.grad.rank() == 0) continue;  // no upstream reached this node
    node.backprop(*this);
  }
}

template class TapeT<float>;
template class TapeT<double>;

}  // namespace splitfed
