// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/channel.hpp"

#include <cstring>

#include "splitfed/error.hpp"
#include "splitfed/rng.hpp"

namespace splitfed {

std::int64_t LossMask::lost() const {
  std::int64_t count = 0;
  for (std::uint8_t e : erased) count += e;
  return count;
}

ErasureStats erasure_stats(const std::vector<LossMask>& masks) {
  ErasureStats stats;
  for (const LossMask& mask : masks) {
    stats.packets_sent += mask.total();
    stats.packets_lost += mask.lost();
  }
  stats.observed_rate =
      stats.packets_sent == 0
          ? 0.0
          : static_cast<double>(stats.packets_lost) /
                static_cast<double>(stats.packets_sent);
  return stats;
}

std::pair<Tensor, LossMask> transmit(const Tensor& x, const ChannelConfig& cfg,
                                     Direction direction,
                                     std::uint64_t counter) {
  if (!(cfg.p_loss >= 0.0 && cfg.p_loss <= 1.0)) {
    fail(ErrorKind::InvalidArgument,
         "channel p_loss must be in [0,1], got " + std::to_string(cfg.p_loss));
  }
  if (x.rank() != 4) {
    fail(ErrorKind::ShapeMismatch,
         "transmit expects a 4-d tensor, got " + shape_str(x.shape()));
  }
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  LossMask mask;
  mask.n = n;
  mask.c = c;
  mask.h = h;
  mask.erased.assign(static_cast<std::size_t>(mask.total()), 0);

  Tensor out = x;
  if (!cfg.enabled || cfg.p_loss == 0.0) {
    return {std::move(out), std::move(mask)};
  }

  std::uint64_t seed = cfg.master_seed;
  seed = Rng::fold(seed, static_cast<std::uint64_t>(cfg.client_id));
  seed = Rng::fold(seed, static_cast<std::uint64_t>(cfg.round));
  seed = Rng::fold(seed, direction == Direction::Forward ? 0u : 1u);
  seed = Rng::fold(seed, counter);
  Rng rng(seed);

  std::size_t row = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < h; ++y, ++row) {
        if (rng.next_double() < cfg.p_loss) {
          mask.erased[row] = 1;
          float* dst = out.data() +
                       ((static_cast<std::size_t>(ni) * c + ci) * h + y) * w;
          std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(w));
        }
      }
    }
  }
  return {std::move(out), std::move(mask)};
}

void ChannelStats::merge(const ChannelStats& other) {
  packets_sent += other.packets_sent;
  packets_lost += other.packets_lost;
  payload_transmissions += other.payload_transmissions;
  tensor_transmissions += other.tensor_transmissions;
  for (const auto& [label, count] : other.label_deliveries) {
    label_deliveries[label] += count;
  }
}

CutPayload transmit_payload(const CutPayload& payload,
                            const ChannelConfig& cfg, std::uint64_t& counter,
                            ChannelStats& stats,
                            std::vector<LossMask>* masks_out) {
  CutPayload out;
  out.main_label = payload.main_label;
  out.direction = payload.direction;
  stats.payload_transmissions += 1;

  auto send = [&](const Tensor& t) {
    auto [received, mask] = transmit(t, cfg, payload.direction, counter);
    counter += 1;
    stats.tensor_transmissions += 1;
    if (cfg.enabled) {
      stats.packets_sent += mask.total();
      stats.packets_lost += mask.lost();
    }
    if (masks_out) masks_out->push_back(mask);
    return std::move(received);
  };

  out.main = send(payload.main);
  stats.label_deliveries[payload.main_label] += 1;

  for (const PayloadTensor& skip : payload.skips) {
    PayloadTensor received;
    received.label = skip.label;
    received.alias_of_main = skip.alias_of_main;
    if (skip.alias_of_main) {
      // Same physical transmission as main: one erasure hits both consumers.
      received.value = out.main;
    } else {
      received.value = send(skip.value);
    }
    stats.label_deliveries[skip.label] += 1;
    out.skips.push_back(std::move(received));
  }
  return out;
}

}  // namespace splitfed
