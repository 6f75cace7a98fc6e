// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitfed/autograd.hpp"
#include "splitfed/optim.hpp"
#include "splitfed/rng.hpp"
#include "splitfed/tensor.hpp"

namespace splitfed {

// Two-level encoder/decoder U-Net over grayscale inputs:
//   E1 -> pool -> E2 -> pool -> B -> up -> D2(+E2 skip) -> up -> D1(+E1 skip)
//   -> 1x1 head -> channel softmax
// Each named block is two 3x3 convs with ReLU; upsampling is nearest-
// neighbour followed by a 3x3 conv.
struct UNetSpec {
  int levels = 2;
  int base_channels = 8;
  int num_classes = 5;

  void validate() const;
};

// Where the model is cut into client front-end / server / client back-end.
//
// Shallow: front = E1; server = pool..D1; back = head. The E1 skip must
// cross cut A to reach D1 on the server.
// Deep: front = E1..E2; server = pool..D2; back = up..D1+head. The E1 skip
// stays on the client and never touches the channel.
enum class SplitDepth { Shallow, Deep };

SplitDepth parse_split_depth(const std::string& s);
std::string to_string(SplitDepth depth);

enum class Role { Front, Server, Back };

template <class Real>
struct ConvLayerT {
  TensorT<Real> kernel;  // OxIxKxK
  TensorT<Real> bias;    // O
};

template <class Real>
struct UNetParamsT {
  ConvLayerT<Real> enc1a, enc1b;
  ConvLayerT<Real> enc2a, enc2b;
  ConvLayerT<Real> bot_a, bot_b;
  ConvLayerT<Real> up2;
  ConvLayerT<Real> dec2a, dec2b;
  ConvLayerT<Real> up1;
  ConvLayerT<Real> dec1a, dec1b;
  ConvLayerT<Real> head;

  static UNetParamsT he_initialized(const UNetSpec& spec, Rng& rng);

  // Canonical layer order; role partitions below are contiguous slices.
  std::vector<ConvLayerT<Real>*> layers();
  std::vector<const ConvLayerT<Real>*> layers() const;

  std::vector<TensorT<Real>*> tensors();  // kernel,bias per layer
};

// The layers owned by one segment, in canonical order.
template <class Real>
std::vector<ConvLayerT<Real>*> segment_layers(UNetParamsT<Real>& params,
                                              SplitDepth depth, Role role);
template <class Real>
std::vector<const ConvLayerT<Real>*> segment_layers(
    const UNetParamsT<Real>& params, SplitDepth depth, Role role);

// Flat-vector view used by parameter aggregation. Flatten/unflatten is a
// bijection; order is kernel then bias per layer, layers in segment order.
template <class Real>
std::vector<Real> flatten_params(
    const std::vector<const ConvLayerT<Real>*>& layers);
template <class Real>
void unflatten_params(const std::vector<Real>& flat,
                      const std::vector<ConvLayerT<Real>*>& layers);
template <class Real>
std::int64_t param_count(const std::vector<const ConvLayerT<Real>*>& layers);

// Parameters registered as tape inputs for one forward/backward pass.
struct BoundLayer {
  ValueId kernel = -1;
  ValueId bias = -1;
};

template <class Real>
std::vector<BoundLayer> bind_layers(
    TapeT<Real>& tape, const std::vector<const ConvLayerT<Real>*>& layers,
    bool needs_grad = true);

// Tensors flowing between segments, as node ids on the builder's tape.
// `skips` are skip tensors that cross the cut alongside `main`; `locals`
// are client-local skips handed from front to back without transmission.
struct SegmentIO {
  ValueId main = -1;
  std::vector<ValueId> skips;
  std::vector<ValueId> locals;
};

template <class Real>
SegmentIO build_front(TapeT<Real>& tape, const std::vector<BoundLayer>& layers,
                      SplitDepth depth, ValueId x);
template <class Real>
SegmentIO build_server(TapeT<Real>& tape,
                       const std::vector<BoundLayer>& layers, SplitDepth depth,
                       const SegmentIO& in);
template <class Real>
ValueId build_back(TapeT<Real>& tape, const std::vector<BoundLayer>& layers,
                   SplitDepth depth, const SegmentIO& in);

// The unpartitioned network: front/server/back composed on one tape. Both
// split depths compose to the identical op sequence.
template <class Real>
ValueId build_monolith(TapeT<Real>& tape, const std::vector<BoundLayer>& all,
                       ValueId x);

// Names of the tensors crossing each cut, used for channel instrumentation.
struct CutDescription {
  std::string main_label;
  std::vector<std::string> skip_labels;
};

struct SplitSpec {
  SplitDepth depth = SplitDepth::Shallow;
  CutDescription cut_a;  // client -> server
  CutDescription cut_b;  // server -> client

  static SplitSpec make(SplitDepth depth);
};

using UNetParams = UNetParamsT<float>;
using ConvLayer = ConvLayerT<float>;

}  // namespace splitfed
