// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "splitfed/tensor.hpp"

namespace splitfed {

enum class Direction { Forward, Backward };

// Packet-erasure channel over feature/gradient tensors: one packet is one
// spatial row of one channel of one sample, lost packets are zero-filled.
// (master_seed, client_id, round, direction, counter) fully determines the
// mask, so results do not depend on scheduling.
struct ChannelConfig {
  double p_loss = 0.0;
  bool enabled = true;
  std::uint64_t master_seed = 0;
  int client_id = 0;
  int round = 0;
};

struct LossMask {
  int n = 0, c = 0, h = 0;  // matches the tensor's leading extents
  std::vector<std::uint8_t> erased;

  std::int64_t total() const {
    return static_cast<std::int64_t>(n) * c * h;
  }
  std::int64_t lost() const;
};

struct ErasureStats {
  std::int64_t packets_sent = 0;
  std::int64_t packets_lost = 0;
  double observed_rate = 0.0;
};

ErasureStats erasure_stats(const std::vector<LossMask>& masks);

std::pair<Tensor, LossMask> transmit(const Tensor& x, const ChannelConfig& cfg,
                                     Direction direction,
                                     std::uint64_t counter);

// One tensor riding a cut. A skip flagged alias_of_main is the same physical
// transmission as the main tensor (sent once, consumed twice): it shares the
// main's loss mask and does not consume a counter.
struct PayloadTensor {
  Tensor value;
  std::string label;
  bool alias_of_main = false;
};

struct CutPayload {
  Tensor main;
  std::string main_label = "main";
  std::vector<PayloadTensor> skips;
  Direction direction = Direction::Forward;
};

struct ChannelStats {
  std::int64_t packets_sent = 0;
  std::int64_t packets_lost = 0;
  std::int64_t payload_transmissions = 0;
  std::int64_t tensor_transmissions = 0;  // physical (aliases excluded)
  std::map<std::string, std::int64_t> label_deliveries;

  void merge(const ChannelStats& other);
};

// Applies the channel to every tensor in the payload with independent draws
// per physical tensor. The counter is advanced once per physical
// transmission and must not be reused within a round.
CutPayload transmit_payload(const CutPayload& payload,
                            const ChannelConfig& cfg, std::uint64_t& counter,
                            ChannelStats& stats,
                            std::vector<LossMask>* masks_out = nullptr);

}  // namespace splitfed
