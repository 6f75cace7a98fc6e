// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "splitfed/error.hpp"

namespace splitfed {

AggregatorKind parse_aggregator_kind(const std::string& s) {
  if (s == "naive") return AggregatorKind::Naive;
  if (s == "fedavg") return AggregatorKind::FedAvg;
  if (s == "auto_fedavg") return AggregatorKind::AutoFedAvg;
  if (s == "fed_ncl_v2") return AggregatorKind::FedNclV2;
  if (s == "fed_ncl_v4") return AggregatorKind::FedNclV4;
  fail(ErrorKind::InvalidArgument,
       "unknown aggregator '" + s +
           "' (expected naive, fedavg, auto_fedavg, fed_ncl_v2, fed_ncl_v4)");
}

std::string to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::Naive:
      return "naive";
    case AggregatorKind::FedAvg:
      return "fedavg";
    case AggregatorKind::AutoFedAvg:
      return "auto_fedavg";
    case AggregatorKind::FedNclV2:
      return "fed_ncl_v2";
    case AggregatorKind::FedNclV4:
      return "fed_ncl_v4";
  }
  return "?";
}

void AggregatorSpec::validate() const {
  if (beta < 0 || lambda < 0 || eta < 0) {
    fail(ErrorKind::InvalidArgument,
         "aggregator beta/lambda/eta must be >= 0");
  }
  if (iterations < 0) {
    fail(ErrorKind::InvalidArgument, "aggregator iterations must be >= 0");
  }
}

namespace {

void validate_reports(const std::vector<ClientReport>& reports) {
  if (reports.empty()) {
    fail(ErrorKind::InvalidArgument, "aggregate: empty report list");
  }
  const std::size_t len = reports[0].params.size();
  for (const ClientReport& r : reports) {
    if (r.params.size() != len) {
      fail(ErrorKind::ShapeMismatch,
           "aggregate: client " + std::to_string(r.client_id) + " has " +
               std::to_string(r.params.size()) + " params, expected " +
               std::to_string(len));
    }
    if (r.n_samples < 1) {
      fail(ErrorKind::InvalidArgument,
           "aggregate: client " + std::to_string(r.client_id) +
               " has n_samples < 1");
    }
    if (!std::isfinite(r.train_loss) || !std::isfinite(r.val_loss)) {
      fail(ErrorKind::Numeric, "aggregate: client " +
                                   std::to_string(r.client_id) +
                                   " has non-finite loss");
    }
  }
}

std::vector<double> normalized(std::vector<double> raw) {
  double sum = 0.0;
  for (double w : raw) sum += w;
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    fail(ErrorKind::Numeric, "aggregate: degenerate weight normalization");
  }
  for (double& w : raw) w /= sum;
  return raw;
}

std::vector<double> softmax(const std::vector<double>& gamma) {
  const double m = *std::max_element(gamma.begin(), gamma.end());
  std::vector<double> w(gamma.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    w[i] = std::exp(gamma[i] - m);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Indices of `reports` in ascending client_id order, for a summation order
// independent of report permutation.
std::vector<std::size_t> id_order(const std::vector<ClientReport>& reports) {
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return reports[a].client_id < reports[b].client_id;
  });
  return order;
}

std::vector<float> combine(const std::vector<ClientReport>& reports,
                           const std::vector<double>& weights,
                           const std::vector<std::size_t>& order) {
  const std::size_t len = reports[0].params.size();
  std::vector<double> acc(len, 0.0);
  for (std::size_t k : order) {
    const double w = weights[k];
    const float* p = reports[k].params.data();
    for (std::size_t i = 0; i < len; ++i) {
      acc[i] += w * static_cast<double>(p[i]);
    }
  }
  std::vector<float> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

std::vector<double> fedavg_weights(const std::vector<ClientReport>& reports) {
  std::vector<double> raw(reports.size());
  for (std::size_t k = 0; k < reports.size(); ++k) {
    raw[k] = static_cast<double>(reports[k].n_samples);
  }
  return normalized(std::move(raw));
}

std::vector<double> auto_fedavg_weights(
    const std::vector<ClientReport>& reports, const AggregatorSpec& spec,
    const WeightEvalFn& eval) {
  const std::size_t k = reports.size();
  const std::vector<double> init = fedavg_weights(reports);
  std::vector<double> gamma(k);
  for (std::size_t i = 0; i < k; ++i) gamma[i] = std::log(init[i]);
  if (spec.iterations > 0 && !eval) {
    fail(ErrorKind::InvalidArgument,
         "auto_fedavg requires an evaluation context");
  }
  constexpr double kFdStep = 1e-2;
  for (int it = 0; it < spec.iterations; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> plus = gamma, minus = gamma;
      plus[i] += kFdStep;
      minus[i] -= kFdStep;
      const double lp = eval(softmax(plus));
      const double lm = eval(softmax(minus));
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        fail(ErrorKind::Numeric, "auto_fedavg: non-finite validation loss");
      }
      const double g = (lp - lm) / (2.0 * kFdStep);
      gamma[i] -= spec.eta * g;
    }
  }
  return softmax(gamma);
}

std::vector<double> ncl_weights(const std::vector<ClientReport>& reports,
                                const AggregatorSpec& spec, bool divergence) {
  std::vector<double> raw(reports.size());
  std::vector<double> dist(reports.size(), 0.0);
  if (divergence) {
    const std::size_t len = reports[0].params.size();
    std::vector<double> mean(len, 0.0);
    for (const ClientReport& r : reports) {
      for (std::size_t i = 0; i < len; ++i) {
        mean[i] += static_cast<double>(r.params[i]);
      }
    }
    for (double& m : mean) m /= static_cast<double>(reports.size());
    for (std::size_t r = 0; r < reports.size(); ++r) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double d = static_cast<double>(reports[r].params[i]) - mean[i];
        d2 += d * d;
      }
      dist[r] = len == 0 ? 0.0 : std::sqrt(d2) / static_cast<double>(len);
    }
  }
  for (std::size_t r = 0; r < reports.size(); ++r) {
    raw[r] = static_cast<double>(reports[r].n_samples) *
             std::exp(-spec.beta * reports[r].train_loss -
                      (divergence ? spec.lambda * dist[r] : 0.0));
  }
  return normalized(std::move(raw));
}

}  // namespace

AggregateResult aggregate(const std::vector<ClientReport>& reports,
                          const AggregatorSpec& spec,
                          const WeightEvalFn& eval) {
  spec.validate();
  validate_reports(reports);

  std::vector<double> weights;
  switch (spec.kind) {
    case AggregatorKind::Naive:
      weights.assign(reports.size(), 1.0 / static_cast<double>(reports.size()));
      break;
    case AggregatorKind::FedAvg:
      weights = fedavg_weights(reports);
      break;
    case AggregatorKind::AutoFedAvg:
      weights = auto_fedavg_weights(reports, spec, eval);
      break;
    case AggregatorKind::FedNclV2:
      weights = ncl_weights(reports, spec, /*divergence=*/false);
      break;
    case AggregatorKind::FedNclV4:
      weights = ncl_weights(reports, spec, /*divergence=*/true);
      break;
  }

  AggregateResult result;
  result.weights = weights;
  result.global = combine(reports, weights, id_order(reports));
  return result;
}

std::vector<float> weighted_combine(
    const std::vector<const std::vector<float>*>& vectors,
    const std::vector<double>& weights) {
  if (vectors.empty() || vectors.size() != weights.size()) {
    fail(ErrorKind::InvalidArgument,
         "weighted_combine: vector/weight count mismatch");
  }
  const std::size_t len = vectors[0]->size();
  std::vector<double> acc(len, 0.0);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (vectors[k]->size() != len) {
      fail(ErrorKind::ShapeMismatch, "weighted_combine: length mismatch");
    }
    const float* p = vectors[k]->data();
    for (std::size_t i = 0; i < len; ++i) {
      acc[i] += weights[k] * static_cast<double>(p[i]);
    }
  }
  std::vector<float> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

std::string WeightsReport::to_csv_rows(const std::string& prefix) const {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < weights.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", weights[i]);
    out += prefix + "," + aggregator + "," + std::to_string(client_ids[i]) +
           "," + buf + "\n";
  }
  return out;
}

WeightsReport weights_report(const std::vector<ClientReport>& reports,
                             const std::vector<double>& weights,
                             const AggregatorSpec& spec) {
  WeightsReport report;
  report.aggregator = to_string(spec.kind);
  for (const ClientReport& r : reports) report.client_ids.push_back(r.client_id);
  report.weights = weights;
  return report;
}

}  // namespace splitfed
