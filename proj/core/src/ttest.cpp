// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/ttest.hpp"

#include <cmath>

#include "splitfed/error.hpp"

namespace splitfed {

namespace {

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the incomplete beta, modified Lentz algorithm.
double beta_continued_fraction(double x, double a, double b) {
  constexpr double kTiny = 1e-300;
  constexpr double kTol = 1e-15;
  constexpr int kMaxTerms = 200000;

  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double result = d;
  for (int m = 1; m < kMaxTerms; ++m) {
    const double m2 = 2.0 * m;
    double numer = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + numer * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + numer / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    result *= d * c;
    numer = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + numer * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + numer / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    result *= delta;
    if (std::fabs(delta - 1.0) < kTol) break;
  }
  return result;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

void check_sizes(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    fail(ErrorKind::InvalidArgument,
         "t-test needs >= 2 samples per group, got " +
             std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  for (double x : a) {
    if (!std::isfinite(x)) fail(ErrorKind::Numeric, "t-test sample not finite");
  }
  for (double x : b) {
    if (!std::isfinite(x)) fail(ErrorKind::Numeric, "t-test sample not finite");
  }
}

double p_value(double t, double df, Tails tails, bool h1_first_greater) {
  if (tails == Tails::Two) {
    return 2.0 * (1.0 - student_t_cdf(std::fabs(t), df));
  }
  return h1_first_greater ? 1.0 - student_t_cdf(t, df) : student_t_cdf(t, df);
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "regularized_incomplete_beta arguments");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front =
      std::exp(a * std::log(x) + b * std::log(1.0 - x) - log_beta(a, b));
  // Continued fraction converges fastest below the mean; mirror otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - std::exp(b * std::log(1.0 - x) + a * std::log(x) -
                        log_beta(b, a)) *
                   beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) {
    fail(ErrorKind::InvalidArgument,
         "student_t_cdf: df must be > 0, got " + std::to_string(df));
  }
  const double x = df / (t * t + df);
  const double tail = 0.5 * regularized_incomplete_beta(x, 0.5 * df, 0.5);
  return t >= 0.0 ? 1.0 - tail : tail;
}

TTestResult welch_t_test(const std::vector<double>& a,
                         const std::vector<double>& b, Tails tails,
                         bool h1_first_greater) {
  check_sizes(a, b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma), vb = sample_variance(b, mb);
  const double sea = va / na, seb = vb / nb;
  const double se2 = sea + seb;
  if (se2 <= 0.0) {
    fail(ErrorKind::Numeric, "welch_t_test: degenerate (zero) variance");
  }
  TTestResult r;
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
  r.tails = tails;
  r.h1_first_greater = h1_first_greater;
  r.p = p_value(r.t, r.df, tails, h1_first_greater);
  return r;
}

TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b, Tails tails,
                          bool h1_first_greater) {
  check_sizes(a, b);
  if (a.size() != b.size()) {
    fail(ErrorKind::InvalidArgument,
         "paired_t_test: groups must have equal size, got " +
             std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double md = mean_of(d);
  const double vd = sample_variance(d, md);
  if (vd <= 0.0) {
    fail(ErrorKind::Numeric, "paired_t_test: degenerate (zero) variance");
  }
  TTestResult r;
  r.t = md / std::sqrt(vd / n);
  r.df = n - 1.0;
  r.tails = tails;
  r.h1_first_greater = h1_first_greater;
  r.p = p_value(r.t, r.df, tails, h1_first_greater);
  return r;
}

std::vector<ComparisonRow> pairwise_compare(const RunGrid& grid, Tails tails,
                                            bool h1_first_greater,
                                            bool paired) {
  std::vector<ComparisonRow> rows;
  for (const auto& [cell, groups] : grid) {
    for (const auto& [name, samples] : groups) {
      if (samples.size() < 2) {
        fail(ErrorKind::InvalidArgument,
             "cell '" + cell + "' group '" + name + "' has " +
                 std::to_string(samples.size()) + " runs; need >= 2");
      }
    }
    for (auto ia = groups.begin(); ia != groups.end(); ++ia) {
      for (auto ib = std::next(ia); ib != groups.end(); ++ib) {
        ComparisonRow row;
        row.cell = cell;
        row.group_a = ia->first;
        row.group_b = ib->first;
        row.test = paired ? paired_t_test(ia->second, ib->second, tails,
                                          h1_first_greater)
                          : welch_t_test(ia->second, ib->second, tails,
                                         h1_first_greater);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace splitfed
