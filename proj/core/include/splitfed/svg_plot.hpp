// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "splitfed/csv.hpp"

namespace splitfed {

// Two-panel SVG (shallow left, deep right): mean final MJI on y over [0,1],
// P_L on x, one polyline per N_c. Input is the experiment CSV; only summary
// rows (global_epoch = -1) are used. Hand-written SVG, no dependencies.
std::string render_mji_svg(const CsvTable& table);

}  // namespace splitfed
