// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitfed/metrics.hpp"
#include "splitfed/rng.hpp"

namespace splitfed {

// Class indices: 0 background, 1 ZP ring, 2 TE ring, 3 ICM blob, 4 BL fluid.
inline constexpr int kNumClasses = 5;

struct Sample {
  int h = 0, w = 0;
  std::vector<float> image;  // grayscale in [0,1]
  ClassMask mask;
};

struct Dataset {
  std::vector<Sample> samples;
};

// Synthetic embryo-like sample: concentric jittered ellipses -- an outer ZP
// ring, a TE ring inside it, a BL interior and an ICM blob inside the BL --
// with per-class intensity bands and additive Gaussian noise. Every mask
// contains all five classes by construction. Deterministic per (seed, index).
Sample generate_sample(int size, std::uint64_t seed, int index);
Dataset generate_dataset(int n, int size, std::uint64_t seed);

// Training augmentation: independent 50% horizontal and vertical flips, then
// resize to target_size (bilinear image, nearest-neighbour mask).
Sample augment(const Sample& sample, Rng& rng, int target_size);

Sample flip_horizontal(const Sample& sample);
Sample flip_vertical(const Sample& sample);
Sample resize_sample(const Sample& sample, int target_size);

// Binary PGM (P5). Images are quantized to maxval 255; masks use maxval 4
// with raw class indices, so they round-trip losslessly.
struct Pgm {
  int w = 0, h = 0, maxval = 255;
  std::vector<std::uint8_t> data;
};

void write_pgm(const std::string& path, const Pgm& pgm);
Pgm read_pgm(const std::string& path);

// Layout: <dir>/images/NNNN.pgm, <dir>/masks/NNNN.pgm, <dir>/manifest.txt
// (one sample id per line).
void write_dataset(const Dataset& dataset, const std::string& dir);
Dataset read_dataset(const std::string& dir);

}  // namespace splitfed
