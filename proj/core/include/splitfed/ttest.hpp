// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

namespace splitfed {

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction;
// absolute error well below 1e-10 over the arguments used here.
double regularized_incomplete_beta(double x, double a, double b);

// CDF of Student's t with (possibly fractional) df degrees of freedom.
double student_t_cdf(double t, double df);

enum class Tails { One, Two };

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  Tails tails = Tails::Two;
  bool h1_first_greater = true;  // one-tailed H1: mean(a) > mean(b)

  bool significant(double alpha = 0.05) const { return p < alpha; }
};

// Welch's unequal-variance unpaired t-test with Welch-Satterthwaite df.
TTestResult welch_t_test(const std::vector<double>& a,
                         const std::vector<double>& b, Tails tails,
                         bool h1_first_greater = true);

// Paired-sample variant (equal lengths); offered as an alternative mode,
// not the default.
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b, Tails tails,
                          bool h1_first_greater = true);

// One comparison row per unordered pair of groups per cell. Group pairs are
// taken in lexicographic order, so directionality is (earlier, later).
struct ComparisonRow {
  std::string cell;
  std::string group_a;
  std::string group_b;
  TTestResult test;
};

using RunGrid =
    std::map<std::string, std::map<std::string, std::vector<double>>>;

std::vector<ComparisonRow> pairwise_compare(const RunGrid& grid, Tails tails,
                                            bool h1_first_greater,
                                            bool paired = false);

}  // namespace splitfed
