// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitfed/aggregation.hpp"
#include "splitfed/channel.hpp"
#include "splitfed/dataset.hpp"
#include "splitfed/unet.hpp"

namespace splitfed {

struct ExperimentConfig {
  UNetSpec unet;
  int input_size = 64;
  SplitDepth split = SplitDepth::Shallow;
  AggregatorSpec aggregator;
  double p_loss = 0.0;
  int n_lossy_clients = 0;
  int num_clients = 5;
  std::vector<double> proportions = {0.30, 0.25, 0.20, 0.15, 0.10};
  int local_epochs = 12;
  int global_epochs = 15;
  int batch_size = 4;
  double lr = 1e-4;
  int runs = 10;
  std::uint64_t master_seed = 1234;
  std::string data_dir;
  int n_test = 70;  // trailing samples of the dataset held out for MJI
  std::string out_dir = "out";
  bool parallel_clients = true;
  int run_jobs = 1;  // runs executed concurrently (each run stays serial)

  void validate() const;
};

struct RunRecord {
  int run_id = 0;
  std::uint64_t run_seed = 0;
  std::vector<double> epoch_mji;  // aggregated global model, per global epoch
  double final_mji = 0.0;
  ChannelStats channel;                           // merged over clients/rounds
  std::vector<std::vector<double>> round_weights;  // per round, client order
};

struct ClientShare {
  std::vector<int> train;
  std::vector<int> val;
};

// Disjoint cover of pool indices [0, n_pool) by the given proportions
// (floor counts, remainder to client 0), then an 85/15 train/val split
// inside each share. Shuffling is seeded.
std::vector<ClientShare> partition_data(int n_pool,
                                        const std::vector<double>& proportions,
                                        double train_fraction,
                                        std::uint64_t seed);

// One forward/backward through front -> channel -> server -> channel -> back
// with the gradient payloads crossing the cuts in reverse. Gradients are
// returned in canonical layer order (kernel, bias per layer).
struct SplitStepOutput {
  float loss = 0.0f;
  std::vector<Tensor> grads;
};

SplitStepOutput split_forward_backward(const UNetParams& params,
                                       SplitDepth depth, const Tensor& x,
                                       const Tensor& target_onehot,
                                       const ChannelConfig& channel,
                                       std::uint64_t& counter,
                                       ChannelStats& stats);

// Same pass through the unpartitioned network (no channel anywhere).
SplitStepOutput monolith_forward_backward(const UNetParams& params,
                                          const Tensor& x,
                                          const Tensor& target_onehot);

Tensor monolith_probs(const UNetParams& params, const Tensor& x);

// Batch assembly helpers shared by training, evaluation and tests.
Tensor batch_images(const std::vector<const Sample*>& samples);
Tensor batch_onehot(const std::vector<const Sample*>& samples,
                    int num_classes);
ClassMask argmax_mask(const Tensor& probs, int sample_index);

// Channel-free mean JI of the model over the given samples.
double evaluate_mji(const UNetParams& params, const UNetSpec& spec,
                    const std::vector<const Sample*>& samples, int batch_size);

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      const Dataset& dataset);
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

// Experiment CSV schema (one row per global epoch plus a summary row with
// global_epoch = -1 per run).
extern const char kExperimentCsvHeader[];
extern const char kWeightsCsvHeader[];

void append_experiment_rows(const ExperimentConfig& cfg,
                            const std::vector<RunRecord>& records,
                            std::string* csv);
void append_weights_rows(const ExperimentConfig& cfg,
                         const std::vector<RunRecord>& records,
                         std::string* csv);

}  // namespace splitfed
