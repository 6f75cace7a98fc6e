// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace splitfed {

// Per-pixel class indices for one image.
struct ClassMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> values;
};

// Jaccard index per class. A class absent from both masks has an empty
// union; it is reported undefined and excluded from means.
struct JaccardPerClass {
  std::vector<double> ji;
  std::vector<std::uint8_t> defined;
};

JaccardPerClass jaccard_per_class(const ClassMask& pred, const ClassMask& gt,
                                  int num_classes);

// Mean over defined foreground classes (1..C-1) of one image; nullopt when
// no foreground class is defined.
std::optional<double> foreground_mean(const JaccardPerClass& per_class);

// Mean JI: per-image foreground mean, averaged over images that have at
// least one defined foreground class.
double mean_ji(const std::vector<JaccardPerClass>& per_image);

}  // namespace splitfed
