// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "splitfed/tensor.hpp"

namespace splitfed {

using ValueId = int;

// Reverse-mode tape over dense tensors. Records the primitives a small U-Net
// needs; nodes are appended in execution order, so reverse iteration is a
// valid topological backward order.
//
// backward_range() exists so a model cut into segments on one tape can run
// its backward in phases: gradients accumulated into not-yet-visited nodes
// stay parked until a later phase traverses them. Seeding the same node
// several times accumulates in the order given.
template <class Real>
class TapeT {
 public:
  using Tensor = TensorT<Real>;

  struct Seed {
    ValueId id;
    Tensor grad;
  };

  ValueId input(Tensor value, bool needs_grad = true);

  // 2-d convolution, odd square kernel (OxIxKxK), stride 1, zero padding K/2.
  ValueId conv2d(ValueId x, ValueId kernel, ValueId bias);
  ValueId relu(ValueId x);
  // 2x2 non-overlapping max; ties resolve to the first index in row-major
  // scan order. H and W must be even.
  ValueId maxpool2(ValueId x);
  // Nearest-neighbour 2x upsampling.
  ValueId upsample2(ValueId x);
  // Channel concatenation, a's channels first.
  ValueId concat_channels(ValueId a, ValueId b);
  // Per-pixel softmax over the channel dimension (max-subtracted).
  ValueId softmax_channels(ValueId x);
  // 1 - mean per-class soft dice coefficient; sums run over N, H, W.
  // target_onehot must be one-hot along channels.
  ValueId soft_dice_loss(ValueId probs, const Tensor& target_onehot, Real eps);
  // Scalar sum of all elements.
  ValueId sum(ValueId x);

  const Tensor& value(ValueId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Gradient buffer (zeros if nothing has been accumulated yet).
  const Tensor& grad(ValueId id);
  bool needs_grad(ValueId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Full reverse pass from a scalar loss (seed gradient 1).
  void backward(ValueId loss);
  void backward_seeded(const std::vector<Seed>& seeds);
  // Reverse pass over nodes in [lo, hi) only.
  void backward_range(std::size_t lo, std::size_t hi,
                      const std::vector<Seed>& seeds);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool needs_grad = false;
    std::function<void(TapeT&)> backprop;
  };

  Tensor& grad_buf(ValueId id);
  bool has_grad(ValueId id) const {
    return nodes_[static_cast<std::size_t>(id)].grad.rank() != 0;
  }
  ValueId push(Tensor value, bool needs_grad, std::function<void(TapeT&)> fn);

  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

}  // namespace splitfed
