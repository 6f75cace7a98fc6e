// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/unet.hpp"

#include "splitfed/error.hpp"

namespace splitfed {

void UNetSpec::validate() const {
  if (levels != 2) {
    fail(ErrorKind::InvalidArgument,
         "UNetSpec: only levels = 2 is supported, got " +
             std::to_string(levels));
  }
  if (base_channels < 1) {
    fail(ErrorKind::InvalidArgument, "UNetSpec: base_channels must be >= 1");
  }
  if (num_classes < 2) {
    fail(ErrorKind::InvalidArgument, "UNetSpec: num_classes must be >= 2");
  }
}

SplitDepth parse_split_depth(const std::string& s) {
  if (s == "shallow") return SplitDepth::Shallow;
  if (s == "deep") return SplitDepth::Deep;
  fail(ErrorKind::InvalidArgument,
       "unknown split depth '" + s + "' (expected shallow or deep)");
}

std::string to_string(SplitDepth depth) {
  return depth == SplitDepth::Shallow ? "shallow" : "deep";
}

namespace {

template <class Real>
ConvLayerT<Real> make_layer(int out_ch, int in_ch, int k, Rng& rng) {
  ConvLayerT<Real> layer;
  layer.kernel = he_init<Real>({out_ch, in_ch, k, k}, rng);
  layer.bias = TensorT<Real>::zeros({out_ch});
  return layer;
}

// Canonical order partition points: shallow cuts at [2, 12), deep at [4, 9).
constexpr int kShallowFrontEnd = 2, kShallowServerEnd = 12;
constexpr int kDeepFrontEnd = 4, kDeepServerEnd = 9;
constexpr int kLayerCount = 13;

void role_range(SplitDepth depth, Role role, int* lo, int* hi) {
  const int fe = depth == SplitDepth::Shallow ? kShallowFrontEnd : kDeepFrontEnd;
  const int se =
      depth == SplitDepth::Shallow ? kShallowServerEnd : kDeepServerEnd;
  switch (role) {
    case Role::Front:
      *lo = 0;
      *hi = fe;
      return;
    case Role::Server:
      *lo = fe;
      *hi = se;
      return;
    case Role::Back:
      *lo = se;
      *hi = kLayerCount;
      return;
  }
  *lo = *hi = 0;
}

}  // namespace

template <class Real>
UNetParamsT<Real> UNetParamsT<Real>::he_initialized(const UNetSpec& spec,
                                                    Rng& rng) {
  spec.validate();
  const int c = spec.base_channels;
  UNetParamsT p;
  p.enc1a = make_layer<Real>(c, 1, 3, rng);
  p.enc1b = make_layer<Real>(c, c, 3, rng);
  p.enc2a = make_layer<Real>(2 * c, c, 3, rng);
  p.enc2b = make_layer<Real>(2 * c, 2 * c, 3, rng);
  p.bot_a = make_layer<Real>(4 * c, 2 * c, 3, rng);
  p.bot_b = make_layer<Real>(4 * c, 4 * c, 3, rng);
  p.up2 = make_layer<Real>(2 * c, 4 * c, 3, rng);
  p.dec2a = make_layer<Real>(2 * c, 4 * c, 3, rng);
  p.dec2b = make_layer<Real>(2 * c, 2 * c, 3, rng);
  p.up1 = make_layer<Real>(c, 2 * c, 3, rng);
  p.dec1a = make_layer<Real>(c, 2 * c, 3, rng);
  p.dec1b = make_layer<Real>(c, c, 3, rng);
  p.head = make_layer<Real>(spec.num_classes, c, 1, rng);
  return p;
}

template <class Real>
std::vector<ConvLayerT<Real>*> UNetParamsT<Real>::layers() {
  return {&enc1a, &enc1b, &enc2a, &enc2b, &bot_a, &bot_b, &up2,
          &dec2a, &dec2b, &up1,   &dec1a, &dec1b, &head};
}

template <class Real>
std::vector<const ConvLayerT<Real>*> UNetParamsT<Real>::layers() const {
  return {&enc1a, &enc1b, &enc2a, &enc2b, &bot_a, &bot_b, &up2,
          &dec2a, &dec2b, &up1,   &dec1a, &dec1b, &head};
}

template <class Real>
std::vector<TensorT<Real>*> UNetParamsT<Real>::tensors() {
  std::vector<TensorT<Real>*> out;
  for (ConvLayerT<Real>* layer : layers()) {
    out.push_back(&layer->kernel);
    out.push_back(&layer->bias);
  }
  return out;
}

template <class Real>
std::vector<ConvLayerT<Real>*> segment_layers(UNetParamsT<Real>& params,
                                              SplitDepth depth, Role role) {
  int lo = 0, hi = 0;
  role_range(depth, role, &lo, &hi);
  auto all = params.layers();
  return std::vector<ConvLayerT<Real>*>(all.begin() + lo, all.begin() + hi);
}

template <class Real>
std::vector<const ConvLayerT<Real>*> segment_layers(
    const UNetParamsT<Real>& params, SplitDepth depth, Role role) {
  int lo = 0, hi = 0;
  role_range(depth, role, &lo, &hi);
  auto all = params.layers();
  return std::vector<const ConvLayerT<Real>*>(all.begin() + lo,
                                              all.begin() + hi);
}

template <class Real>
std::vector<Real> flatten_params(
    const std::vector<const ConvLayerT<Real>*>& layers) {
  std::vector<Real> flat;
  flat.reserve(static_cast<std::size_t>(param_count(layers)));
  for (const ConvLayerT<Real>* layer : layers) {
    flat.insert(flat.end(), layer->kernel.vec().begin(),
                layer->kernel.vec().end());
    flat.insert(flat.end(), layer->bias.vec().begin(), layer->bias.vec().end());
  }
  return flat;
}

template <class Real>
void unflatten_params(const std::vector<Real>& flat,
                      const std::vector<ConvLayerT<Real>*>& layers) {
  std::size_t pos = 0;
  for (ConvLayerT<Real>* layer : layers) {
    for (TensorT<Real>* t : {&layer->kernel, &layer->bias}) {
      if (pos + static_cast<std::size_t>(t->size()) > flat.size()) {
        fail(ErrorKind::ShapeMismatch,
             "unflatten_params: flat vector too short (" +
                 std::to_string(flat.size()) + " values)");
      }
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                flat.begin() + static_cast<std::ptrdiff_t>(
                                   pos + static_cast<std::size_t>(t->size())),
                t->data());
      pos += static_cast<std::size_t>(t->size());
    }
  }
  if (pos != flat.size()) {
    fail(ErrorKind::ShapeMismatch,
         "unflatten_params: flat vector has " + std::to_string(flat.size()) +
             " values, segment expects " + std::to_string(pos));
  }
}

template <class Real>
std::int64_t param_count(const std::vector<const ConvLayerT<Real>*>& layers) {
  std::int64_t n = 0;
  for (const ConvLayerT<Real>* layer : layers) {
    n += layer->kernel.size() + layer->bias.size();
  }
  return n;
}

template <class Real>
std::vector<BoundLayer> bind_layers(
    TapeT<Real>& tape, const std::vector<const ConvLayerT<Real>*>& layers,
    bool needs_grad) {
  std::vector<BoundLayer> bound;
  bound.reserve(layers.size());
  for (const ConvLayerT<Real>* layer : layers) {
    BoundLayer b;
    b.kernel = tape.input(layer->kernel, needs_grad);
    b.bias = tape.input(layer->bias, needs_grad);
    bound.push_back(b);
  }
  return bound;
}

namespace {

template <class Real>
ValueId conv_relu(TapeT<Real>& t, const BoundLayer& l, ValueId x) {
  return t.relu(t.conv2d(x, l.kernel, l.bias));
}

template <class Real>
ValueId conv_block(TapeT<Real>& t, const BoundLayer& a, const BoundLayer& b,
                   ValueId x) {
  return conv_relu(t, b, conv_relu(t, a, x));
}

void expect_layers(const std::vector<BoundLayer>& layers, std::size_t n,
                   const char* segment) {
  if (layers.size() != n) {
    fail(ErrorKind::InvalidArgument,
         std::string(segment) + " segment expects " + std::to_string(n) +
             " layers, got " + std::to_string(layers.size()));
  }
}

}  // namespace

template <class Real>
SegmentIO build_front(TapeT<Real>& t, const std::vector<BoundLayer>& layers,
                      SplitDepth depth, ValueId x) {
  SegmentIO out;
  if (depth == SplitDepth::Shallow) {
    expect_layers(layers, 2, "shallow front");
    const ValueId e1 = conv_block(t, layers[0], layers[1], x);
    out.main = e1;
    out.skips = {e1};
  } else {
    expect_layers(layers, 4, "deep front");
    const ValueId e1 = conv_block(t, layers[0], layers[1], x);
    const ValueId e2 = conv_block(t, layers[2], layers[3], t.maxpool2(e1));
    out.main = e2;
    out.skips = {e2};
    out.locals = {e1};
  }
  return out;
}

template <class Real>
SegmentIO build_server(TapeT<Real>& t, const std::vector<BoundLayer>& layers,
                       SplitDepth depth, const SegmentIO& in) {
  if (in.skips.size() != 1) {
    fail(ErrorKind::InvalidArgument,
         "server segment expects exactly one skip input");
  }
  SegmentIO out;
  if (depth == SplitDepth::Shallow) {
    expect_layers(layers, 10, "shallow server");
    const ValueId e2 = conv_block(t, layers[0], layers[1], t.maxpool2(in.main));
    const ValueId b = conv_block(t, layers[2], layers[3], t.maxpool2(e2));
    const ValueId u2 = conv_relu(t, layers[4], t.upsample2(b));
    const ValueId d2 =
        conv_block(t, layers[5], layers[6], t.concat_channels(e2, u2));
    const ValueId u1 = conv_relu(t, layers[7], t.upsample2(d2));
    const ValueId d1 = conv_block(t, layers[8], layers[9],
                                  t.concat_channels(in.skips[0], u1));
    out.main = d1;
  } else {
    expect_layers(layers, 5, "deep server");
    const ValueId b = conv_block(t, layers[0], layers[1], t.maxpool2(in.main));
    const ValueId u2 = conv_relu(t, layers[2], t.upsample2(b));
    const ValueId d2 = conv_block(t, layers[3], layers[4],
                                  t.concat_channels(in.skips[0], u2));
    out.main = d2;
  }
  return out;
}

template <class Real>
ValueId build_back(TapeT<Real>& t, const std::vector<BoundLayer>& layers,
                   SplitDepth depth, const SegmentIO& in) {
  if (depth == SplitDepth::Shallow) {
    expect_layers(layers, 1, "shallow back");
    return t.softmax_channels(
        t.conv2d(in.main, layers[0].kernel, layers[0].bias));
  }
  expect_layers(layers, 4, "deep back");
  if (in.locals.size() != 1) {
    fail(ErrorKind::InvalidArgument,
         "deep back segment expects the client-local E1 skip");
  }
  const ValueId u1 = conv_relu(t, layers[0], t.upsample2(in.main));
  const ValueId d1 =
      conv_block(t, layers[1], layers[2], t.concat_channels(in.locals[0], u1));
  return t.softmax_channels(
      t.conv2d(d1, layers[3].kernel, layers[3].bias));
}

template <class Real>
ValueId build_monolith(TapeT<Real>& t, const std::vector<BoundLayer>& all,
                       ValueId x) {
  expect_layers(all, kLayerCount, "monolith");
  const std::vector<BoundLayer> front(all.begin(),
                                      all.begin() + kShallowFrontEnd);
  const std::vector<BoundLayer> server(all.begin() + kShallowFrontEnd,
                                       all.begin() + kShallowServerEnd);
  const std::vector<BoundLayer> back(all.begin() + kShallowServerEnd,
                                     all.end());
  const SegmentIO fe = build_front(t, front, SplitDepth::Shallow, x);
  SegmentIO sv = build_server(t, server, SplitDepth::Shallow, fe);
  sv.locals = fe.locals;
  return build_back(t, back, SplitDepth::Shallow, sv);
}

SplitSpec SplitSpec::make(SplitDepth depth) {
  SplitSpec spec;
  spec.depth = depth;
  if (depth == SplitDepth::Shallow) {
    spec.cut_a = {"e1", {"e1_skip"}};
    spec.cut_b = {"d1", {}};
  } else {
    spec.cut_a = {"e2", {"e2_skip"}};
    spec.cut_b = {"d2", {}};
  }
  return spec;
}

#define SPLITFED_INSTANTIATE(Real)                                           \
  template struct UNetParamsT<Real>;                                         \
  template std::vector<ConvLayerT<Real>*> segment_layers(                    \
      UNetParamsT<Real>&, SplitDepth, Role);                                 \
  template std::vector<const ConvLayerT<Real>*> segment_layers(              \
      const UNetParamsT<Real>&, SplitDepth, Role);                           \
  template std::vector<Real> flatten_params(                                 \
      const std::vector<const ConvLayerT<Real>*>&);                          \
  template void unflatten_params(const std::vector<Real>&,                   \
                                 const std::vector<ConvLayerT<Real>*>&);     \
  template std::int64_t param_count(                                         \
      const std::vector<const ConvLayerT<Real>*>&);                          \
  template std::vector<BoundLayer> bind_layers(                              \
      TapeT<Real>&, const std::vector<const ConvLayerT<Real>*>&, bool);      \
  template SegmentIO build_front(TapeT<Real>&,                               \
                                 const std::vector<BoundLayer>&, SplitDepth, \
                                 ValueId);                                   \
  template SegmentIO build_server(TapeT<Real>&,                              \
                                  const std::vector<BoundLayer>&,            \
                                  SplitDepth, const SegmentIO&);             \
  template ValueId build_back(TapeT<Real>&, const std::vector<BoundLayer>&,  \
                              SplitDepth, const SegmentIO&);                 \
  template ValueId build_monolith(TapeT<Real>&,                              \
                                  const std::vector<BoundLayer>&, ValueId);

SPLITFED_INSTANTIATE(float)
SPLITFED_INSTANTIATE(double)
#undef SPLITFED_INSTANTIATE

}  // namespace splitfed
