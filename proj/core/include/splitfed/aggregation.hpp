// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace splitfed {

struct ClientReport {
  int client_id = 0;
  std::vector<float> params;  // flat client vector: front-end then back-end
  std::int64_t n_samples = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

enum class AggregatorKind { Naive, FedAvg, AutoFedAvg, FedNclV2, FedNclV4 };

AggregatorKind parse_aggregator_kind(const std::string& s);
std::string to_string(AggregatorKind kind);

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::FedAvg;
  double beta = 1.0;    // loss sensitivity (fed-NCL)
  double lambda = 0.1;  // divergence weight (fed-NCL v4)
  double eta = 0.1;     // auto-FedAvg descent step
  int iterations = 3;   // auto-FedAvg refinement rounds

  void validate() const;
};

// auto-FedAvg evaluation callback: validation loss of the model aggregated
// with the candidate weights.
using WeightEvalFn = std::function<double(const std::vector<double>& weights)>;

struct AggregateResult {
  std::vector<float> global;
  std::vector<double> weights;  // aligned with the input report order
};

// global = sum_k w_k * params_k with w_k >= 0 and sum w = 1. Summation runs
// in ascending client_id order regardless of report order.
//
// naive:       w_k = 1/K
// fedavg:      w_k = n_k / sum n
// auto_fedavg: w = softmax(gamma), gamma init log(n_k / sum n), refined by
//              `iterations` sweeps of coordinate-wise finite-difference
//              descent (step eta) on eval(w)
// fed_ncl_v2:  w_k proportional to n_k * exp(-beta * train_loss_k)
// fed_ncl_v4:  v2 with an extra exp(-lambda * d_k) divergence factor,
//              d_k = ||params_k - mean(params)||_2 / vector length
AggregateResult aggregate(const std::vector<ClientReport>& reports,
                          const AggregatorSpec& spec,
                          const WeightEvalFn& eval = nullptr);

// Weighted combination with externally supplied weights (used to aggregate
// the per-client server-side copies with the client weights).
std::vector<float> weighted_combine(
    const std::vector<const std::vector<float>*>& vectors,
    const std::vector<double>& weights);

// Serializable record of one round's weights.
struct WeightsReport {
  std::string aggregator;
  std::vector<int> client_ids;
  std::vector<double> weights;

  std::string to_csv_rows(const std::string& prefix) const;
};

WeightsReport weights_report(const std::vector<ClientReport>& reports,
                             const std::vector<double>& weights,
                             const AggregatorSpec& spec);

}  // namespace splitfed
