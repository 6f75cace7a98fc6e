// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/metrics.hpp"

#include <string>

#include "splitfed/error.hpp"

namespace splitfed {

JaccardPerClass jaccard_per_class(const ClassMask& pred, const ClassMask& gt,
                                  int num_classes) {
  if (pred.h != gt.h || pred.w != gt.w) {
    fail(ErrorKind::ShapeMismatch,
         "jaccard_per_class: pred " + std::to_string(pred.h) + "x" +
             std::to_string(pred.w) + " vs gt " + std::to_string(gt.h) + "x" +
             std::to_string(gt.w));
  }
  std::vector<std::int64_t> inter(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> uni(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const int p = pred.values[i];
    const int g = gt.values[i];
    if (p >= num_classes || g >= num_classes) {
      fail(ErrorKind::InvalidArgument,
           "jaccard_per_class: class index " + std::to_string(p >= num_classes ? p : g) +
               " >= num_classes " + std::to_string(num_classes));
    }
    if (p == g) {
      inter[static_cast<std::size_t>(p)] += 1;
      uni[static_cast<std::size_t>(p)] += 1;
    } else {
      uni[static_cast<std::size_t>(p)] += 1;
      uni[static_cast<std::size_t>(g)] += 1;
    }
  }
  JaccardPerClass out;
  out.ji.assign(static_cast<std::size_t>(num_classes), 0.0);
  out.defined.assign(static_cast<std::size_t>(num_classes), 0);
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    if (uni[ci] > 0) {
      out.defined[ci] = 1;
      out.ji[ci] = static_cast<double>(inter[ci]) / static_cast<double>(uni[ci]);
    }
  }
  return out;
}

std::optional<double> foreground_mean(const JaccardPerClass& per_class) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t c = 1; c < per_class.ji.size(); ++c) {
    if (per_class.defined[c]) {
      sum += per_class.ji[c];
      count += 1;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

double mean_ji(const std::vector<JaccardPerClass>& per_image) {
  double sum = 0.0;
  int count = 0;
  for (const JaccardPerClass& image : per_image) {
    if (auto m = foreground_mean(image)) {
      sum += *m;
      count += 1;
    }
  }
  if (count == 0) {
    fail(ErrorKind::InvalidArgument,
         "mean_ji: no defined foreground class in any image");
  }
  return sum / count;
}

}  // namespace splitfed
