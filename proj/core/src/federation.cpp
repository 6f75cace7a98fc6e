// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>
#include <utility>

#include "splitfed/csv.hpp"
#include "splitfed/error.hpp"
#include "splitfed/optim.hpp"

namespace splitfed {

namespace {

// Stream tags: every random decision draws from a stream keyed by
// (run_seed, tag, client, round, epoch) as applicable, so results do not
// depend on thread scheduling.
constexpr std::uint64_t kTagPartition = 1;
constexpr std::uint64_t kTagLossy = 2;
constexpr std::uint64_t kTagInit = 3;
constexpr std::uint64_t kTagShuffle = 4;
constexpr std::uint64_t kTagAugment = 5;

constexpr double kTrainFraction = 0.85;
constexpr float kDiceEps = 1e-6f;

std::uint64_t stream(std::uint64_t seed, std::uint64_t tag) {
  return Rng::fold(seed, tag);
}
std::uint64_t stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                     std::uint64_t b, std::uint64_t c) {
  return Rng::fold(Rng::fold(Rng::fold(Rng::fold(seed, tag), a), b), c);
}

}  // namespace

void ExperimentConfig::validate() const {
  unet.validate();
  if (input_size < 8 || input_size % 4 != 0) {
    fail(ErrorKind::InvalidArgument,
         "input_size must be a multiple of 4 and >= 8 (two pooling stages), "
         "got " + std::to_string(input_size));
  }
  if (num_clients < 1) {
    fail(ErrorKind::InvalidArgument, "num_clients must be >= 1");
  }
  if (static_cast<int>(proportions.size()) != num_clients) {
    fail(ErrorKind::InvalidArgument,
         "got " + std::to_string(proportions.size()) + " proportions for " +
             std::to_string(num_clients) + " clients");
  }
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p > 0.0)) {
      fail(ErrorKind::InvalidArgument, "proportions must be positive");
    }
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidArgument,
         "proportions sum to " + std::to_string(sum) + ", expected 1");
  }
  if (!(p_loss >= 0.0 && p_loss <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "p_loss must be in [0,1]");
  }
  if (n_lossy_clients < 0 || n_lossy_clients > num_clients) {
    fail(ErrorKind::InvalidArgument,
         "n_lossy_clients must be in [0, num_clients]");
  }
  if (local_epochs < 1 || global_epochs < 1 || batch_size < 1 || runs < 1) {
    fail(ErrorKind::InvalidArgument,
         "local_epochs, global_epochs, batch_size and runs must be >= 1");
  }
  if (!(lr > 0.0)) {
    fail(ErrorKind::InvalidArgument, "lr must be > 0");
  }
  if (n_test < 1) {
    fail(ErrorKind::InvalidArgument, "n_test must be >= 1");
  }
  if (run_jobs < 1) {
    fail(ErrorKind::InvalidArgument, "run_jobs must be >= 1");
  }
  aggregator.validate();
}

std::vector<ClientShare> partition_data(int n_pool,
                                        const std::vector<double>& proportions,
                                        double train_fraction,
                                        std::uint64_t seed) {
  if (n_pool < 1) {
    fail(ErrorKind::InvalidArgument, "partition_data: empty pool");
  }
  double sum = 0.0;
  for (double p : proportions) sum += p;
  if (std::fabs(sum - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidArgument,
         "partition_data: proportions sum to " + std::to_string(sum));
  }

  std::vector<int> indices(static_cast<std::size_t>(n_pool));
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(seed);
  shuffle(indices, rng);

  // Floor counts; the remainder goes to client 0.
  std::vector<int> counts(proportions.size());
  int assigned = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    counts[k] = static_cast<int>(proportions[k] * n_pool);
    assigned += counts[k];
  }
  counts[0] += n_pool - assigned;

  std::vector<ClientShare> shares(proportions.size());
  int pos = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    if (counts[k] < 2) {
      fail(ErrorKind::InvalidArgument,
           "partition_data: client " + std::to_string(k) + " would get " +
               std::to_string(counts[k]) +
               " samples; need >= 2 for a train/val split");
    }
    std::vector<int> share(indices.begin() + pos,
                           indices.begin() + pos + counts[k]);
    pos += counts[k];
    int train_n = static_cast<int>(std::lround(train_fraction * counts[k]));
    train_n = std::clamp(train_n, 1, counts[k] - 1);
    shares[k].train.assign(share.begin(), share.begin() + train_n);
    shares[k].val.assign(share.begin() + train_n, share.end());
  }
  return shares;
}

Tensor batch_images(const std::vector<const Sample*>& samples) {
  if (samples.empty()) {
    fail(ErrorKind::InvalidArgument, "batch_images: empty batch");
  }
  const int h = samples[0]->h, w = samples[0]->w;
  Tensor x({static_cast<int>(samples.size()), 1, h, w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->h != h || samples[i]->w != w) {
      fail(ErrorKind::ShapeMismatch, "batch_images: mixed sample sizes");
    }
    std::copy(samples[i]->image.begin(), samples[i]->image.end(),
              x.data() + i * static_cast<std::size_t>(h) * w);
  }
  return x;
}

Tensor batch_onehot(const std::vector<const Sample*>& samples,
                    int num_classes) {
  if (samples.empty()) {
    fail(ErrorKind::InvalidArgument, "batch_onehot: empty batch");
  }
  const int h = samples[0]->h, w = samples[0]->w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor t({static_cast<int>(samples.size()), num_classes, h, w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    for (std::size_t p = 0; p < plane; ++p) {
      const int cls = s.mask.values[p];
      if (cls >= num_classes) {
        fail(ErrorKind::InvalidArgument,
             "batch_onehot: class " + std::to_string(cls) +
                 " >= num_classes " + std::to_string(num_classes));
      }
      t.data()[(i * num_classes + cls) * plane + p] = 1.0f;
    }
  }
  return t;
}

ClassMask argmax_mask(const Tensor& probs, int sample_index) {
  const int c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  ClassMask mask;
  mask.h = h;
  mask.w = w;
  mask.values.resize(plane);
  const float* base =
      probs.data() + static_cast<std::size_t>(sample_index) * c * plane;
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    float bv = base[p];
    for (int ci = 1; ci < c; ++ci) {
      const float v = base[ci * plane + p];
      if (v > bv) {
        bv = v;
        best = ci;
      }
    }
    mask.values[p] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

SplitStepOutput split_forward_backward(const UNetParams& params,
                                       SplitDepth depth, const Tensor& x,
                                       const Tensor& target_onehot,
                                       const ChannelConfig& channel,
                                       std::uint64_t& counter,
                                       ChannelStats& stats) {
  const SplitSpec split_spec = SplitSpec::make(depth);
  const auto fe_layers = segment_layers(params, depth, Role::Front);
  const auto sv_layers = segment_layers(params, depth, Role::Server);
  const auto be_layers = segment_layers(params, depth, Role::Back);

  Tape client_tape;
  Tape server_tape;

  // Client front-end forward.
  const ValueId x_id = client_tape.input(x, /*needs_grad=*/false);
  const auto fe_bound = bind_layers(client_tape, fe_layers);
  const SegmentIO fe_io = build_front(client_tape, fe_bound, depth, x_id);
  const std::size_t fe_end = client_tape.size();

  // Cut A forward: main plus the skip copy, which rides the same physical
  // transmission (alias) and is consumed separately by the server.
  CutPayload fwd_a;
  fwd_a.direction = Direction::Forward;
  fwd_a.main = client_tape.value(fe_io.main);
  fwd_a.main_label = split_spec.cut_a.main_label;
  fwd_a.skips.push_back(
      PayloadTensor{Tensor{}, split_spec.cut_a.skip_labels[0], true});
  const CutPayload rx_a =
      transmit_payload(fwd_a, channel, counter, stats);

  // Server forward on its own tape; main and skip register as distinct
  // inputs so their gradients return as separate payload entries.
  const auto sv_bound = bind_layers(server_tape, sv_layers);
  SegmentIO sv_in;
  sv_in.main = server_tape.input(rx_a.main);
  sv_in.skips = {server_tape.input(rx_a.skips[0].value)};
  const SegmentIO sv_io = build_server(server_tape, sv_bound, depth, sv_in);

  // Cut B forward.
  CutPayload fwd_b;
  fwd_b.direction = Direction::Forward;
  fwd_b.main = server_tape.value(sv_io.main);
  fwd_b.main_label = split_spec.cut_b.main_label;
  const CutPayload rx_b = transmit_payload(fwd_b, channel, counter, stats);

  // Client back-end forward (same tape as the front-end; the deep split's
  // E1 skip flows internally without touching the channel).
  const auto be_bound = bind_layers(client_tape, be_layers);
  SegmentIO be_in;
  be_in.main = client_tape.input(rx_b.main);
  be_in.locals = fe_io.locals;
  const ValueId probs = build_back(client_tape, be_bound, depth, be_in);
  const ValueId loss_id =
      client_tape.soft_dice_loss(probs, target_onehot, kDiceEps);

  // Backward phase 1: back-end only. Contributions into front-end nodes
  // (the deep split's E1 skip) stay parked until phase 2.
  client_tape.backward_range(fe_end, client_tape.size(),
                             {{loss_id, Tensor::scalar(1.0f)}});

  // Cut B backward.
  CutPayload bwd_b;
  bwd_b.direction = Direction::Backward;
  bwd_b.main = client_tape.grad(be_in.main);
  bwd_b.main_label = split_spec.cut_b.main_label;
  const CutPayload rx_gb = transmit_payload(bwd_b, channel, counter, stats);

  // Server backward.
  server_tape.backward_seeded({{sv_io.main, rx_gb.main}});

  // Cut A backward: the pool-path gradient (main) plus the skip-path
  // gradient, transmitted with independent draws.
  CutPayload bwd_a;
  bwd_a.direction = Direction::Backward;
  bwd_a.main = server_tape.grad(sv_in.main);
  bwd_a.main_label = split_spec.cut_a.main_label;
  bwd_a.skips.push_back(PayloadTensor{server_tape.grad(sv_in.skips[0]),
                                      split_spec.cut_a.skip_labels[0], false});
  const CutPayload rx_ga = transmit_payload(bwd_a, channel, counter, stats);

  // Backward phase 2: seed the front-end output with skip then main, which
  // reproduces the monolithic reverse-order accumulation.
  client_tape.backward_range(
      0, fe_end,
      {{fe_io.main, rx_ga.skips[0].value}, {fe_io.main, rx_ga.main}});

  SplitStepOutput out;
  out.loss = client_tape.value(loss_id)[0];
  out.grads.reserve(2 * (fe_bound.size() + sv_bound.size() + be_bound.size()));
  for (const BoundLayer& l : fe_bound) {
    out.grads.push_back(client_tape.grad(l.kernel));
    out.grads.push_back(client_tape.grad(l.bias));
  }
  for (const BoundLayer& l : sv_bound) {
    out.grads.push_back(server_tape.grad(l.kernel));
    out.grads.push_back(server_tape.grad(l.bias));
  }
  for (const BoundLayer& l : be_bound) {
    out.grads.push_back(client_tape.grad(l.kernel));
    out.grads.push_back(client_tape.grad(l.bias));
  }
  return out;
}

SplitStepOutput monolith_forward_backward(const UNetParams& params,
                                          const Tensor& x,
                                          const Tensor& target_onehot) {
  Tape tape;
  const ValueId x_id = tape.input(x, /*needs_grad=*/false);
  const auto bound = bind_layers(tape, params.layers());
  const ValueId probs = build_monolith(tape, bound, x_id);
  const ValueId loss_id = tape.soft_dice_loss(probs, target_onehot, kDiceEps);
  tape.backward(loss_id);

  SplitStepOutput out;
  out.loss = tape.value(loss_id)[0];
  for (const BoundLayer& l : bound) {
    out.grads.push_back(tape.grad(l.kernel));
    out.grads.push_back(tape.grad(l.bias));
  }
  return out;
}

Tensor monolith_probs(const UNetParams& params, const Tensor& x) {
  Tape tape;
  const ValueId x_id = tape.input(x, /*needs_grad=*/false);
  const auto bound = bind_layers(tape, params.layers(), /*needs_grad=*/false);
  const ValueId probs = build_monolith(tape, bound, x_id);
  return tape.value(probs);
}

double evaluate_mji(const UNetParams& params, const UNetSpec& spec,
                    const std::vector<const Sample*>& samples,
                    int batch_size) {
  if (samples.empty()) {
    fail(ErrorKind::InvalidArgument, "evaluate_mji: empty evaluation set");
  }
  std::vector<JaccardPerClass> per_image;
  per_image.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<const Sample*> batch(samples.begin() + start,
                                           samples.begin() + end);
    const Tensor probs = monolith_probs(params, batch_images(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const ClassMask pred = argmax_mask(probs, static_cast<int>(i));
      per_image.push_back(
          jaccard_per_class(pred, batch[i]->mask, spec.num_classes));
    }
  }
  return mean_ji(per_image);
}

namespace {

struct ClientState {
  int client_id = 0;
  UNetParams params;  // front/back slices = client model, middle = server copy
  AdamState adam;
  ClientShare share;
  bool lossy = false;

  double round_loss_sum = 0.0;
  int round_batches = 0;
  double val_loss = 0.0;
  std::uint64_t counter = 0;
  ChannelStats stats;
};

double mean_dice_loss(const UNetParams& params,
                      const std::vector<const Sample*>& samples,
                      int batch_size, int num_classes) {
  if (samples.empty()) {
    fail(ErrorKind::InvalidArgument, "mean_dice_loss: empty sample set");
  }
  double weighted = 0.0;
  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<const Sample*> batch(samples.begin() + start,
                                           samples.begin() + end);
    Tape tape;
    const ValueId x_id = tape.input(batch_images(batch), false);
    const auto bound = bind_layers(tape, params.layers(), false);
    const ValueId probs = build_monolith(tape, bound, x_id);
    const ValueId loss =
        tape.soft_dice_loss(probs, batch_onehot(batch, num_classes), kDiceEps);
    weighted += static_cast<double>(tape.value(loss)[0]) *
                static_cast<double>(batch.size());
  }
  return weighted / static_cast<double>(samples.size());
}

void run_local_round(ClientState& client, const ExperimentConfig& cfg,
                     const std::vector<Sample>& pool, std::uint64_t run_seed,
                     int round) {
  client.round_loss_sum = 0.0;
  client.round_batches = 0;
  client.counter = 0;  // streams are keyed by round; counters restart at 0

  ChannelConfig channel;
  channel.p_loss = cfg.p_loss;
  channel.enabled = client.lossy;
  channel.master_seed = run_seed;
  channel.client_id = client.client_id;
  channel.round = round;

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::vector<int> order = client.share.train;
    Rng shuffle_rng(stream(run_seed, kTagShuffle,
                           static_cast<std::uint64_t>(client.client_id),
                           static_cast<std::uint64_t>(round),
                           static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);
    Rng aug_rng(stream(run_seed, kTagAugment,
                       static_cast<std::uint64_t>(client.client_id),
                       static_cast<std::uint64_t>(round),
                       static_cast<std::uint64_t>(epoch)));

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Sample> augmented;
      augmented.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        augmented.push_back(
            augment(pool[static_cast<std::size_t>(order[i])], aug_rng,
                    cfg.input_size));
      }
      std::vector<const Sample*> batch;
      batch.reserve(augmented.size());
      for (const Sample& s : augmented) batch.push_back(&s);

      const Tensor x = batch_images(batch);
      const Tensor onehot = batch_onehot(batch, cfg.unet.num_classes);
      const SplitStepOutput step =
          split_forward_backward(client.params, cfg.split, x, onehot, channel,
                                 client.counter, client.stats);
      if (!std::isfinite(step.loss)) {
        fail(ErrorKind::Numeric,
             "non-finite training loss (client " +
                 std::to_string(client.client_id) + ", round " +
                 std::to_string(round) + ", local epoch " +
                 std::to_string(epoch) + ", batch " +
                 std::to_string(start / cfg.batch_size) + ")");
      }
      std::vector<const Tensor*> grad_ptrs;
      grad_ptrs.reserve(step.grads.size());
      for (const Tensor& g : step.grads) grad_ptrs.push_back(&g);
      adam_step(client.params.tensors(), grad_ptrs, client.adam);

      client.round_loss_sum += step.loss;
      client.round_batches += 1;
    }
  }

  // Channel-free validation loss on this client's own composed model.
  std::vector<Sample> val_resized;
  val_resized.reserve(client.share.val.size());
  for (int idx : client.share.val) {
    val_resized.push_back(
        resize_sample(pool[static_cast<std::size_t>(idx)], cfg.input_size));
  }
  std::vector<const Sample*> val_ptrs;
  for (const Sample& s : val_resized) val_ptrs.push_back(&s);
  client.val_loss = mean_dice_loss(client.params, val_ptrs, cfg.batch_size,
                                   cfg.unet.num_classes);
}

RunRecord run_one(const ExperimentConfig& cfg, const std::vector<Sample>& pool,
                  const std::vector<Sample>& test, int run_id) {
  const std::uint64_t run_seed = Rng::fold(cfg.master_seed,
                                           static_cast<std::uint64_t>(run_id));
  RunRecord record;
  record.run_id = run_id;
  record.run_seed = run_seed;

  const auto shares =
      partition_data(static_cast<int>(pool.size()), cfg.proportions,
                     kTrainFraction, stream(run_seed, kTagPartition));

  // Lossy subset: seeded shuffle of client ids, first n_lossy are lossy.
  std::vector<int> ids(static_cast<std::size_t>(cfg.num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  Rng lossy_rng(stream(run_seed, kTagLossy));
  shuffle(ids, lossy_rng);
  std::vector<bool> lossy(static_cast<std::size_t>(cfg.num_clients), false);
  for (int i = 0; i < cfg.n_lossy_clients; ++i) {
    lossy[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = true;
  }

  Rng init_rng(stream(run_seed, kTagInit));
  const UNetParams init = UNetParams::he_initialized(cfg.unet, init_rng);

  std::vector<ClientState> clients(static_cast<std::size_t>(cfg.num_clients));
  for (int k = 0; k < cfg.num_clients; ++k) {
    ClientState& c = clients[static_cast<std::size_t>(k)];
    c.client_id = k;
    c.params = init;
    c.adam = AdamState::zeros_like(c.params.tensors(),
                                   static_cast<float>(cfg.lr));
    c.share = shares[static_cast<std::size_t>(k)];
    c.lossy = lossy[static_cast<std::size_t>(k)];
  }

  std::vector<const Sample*> test_ptrs;
  std::vector<Sample> test_resized;
  test_resized.reserve(test.size());
  for (const Sample& s : test) {
    test_resized.push_back(resize_sample(s, cfg.input_size));
  }
  for (const Sample& s : test_resized) test_ptrs.push_back(&s);

  // Pooled validation set, used by the auto-FedAvg context.
  std::vector<Sample> val_resized;
  for (const ClientState& c : clients) {
    for (int idx : c.share.val) {
      val_resized.push_back(
          resize_sample(pool[static_cast<std::size_t>(idx)], cfg.input_size));
    }
  }
  std::vector<const Sample*> val_ptrs;
  for (const Sample& s : val_resized) val_ptrs.push_back(&s);

  for (int round = 0; round < cfg.global_epochs; ++round) {
    if (cfg.parallel_clients && cfg.num_clients > 1) {
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> errors(clients.size());
      for (std::size_t k = 0; k < clients.size(); ++k) {
        workers.emplace_back([&, k] {
          try {
            run_local_round(clients[k], cfg, pool, run_seed, round);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
      for (std::thread& t : workers) t.join();
      for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (ClientState& c : clients) {
        run_local_round(c, cfg, pool, run_seed, round);
      }
    }

    // Aggregation barrier: reports in ascending client_id order.
    std::vector<ClientReport> reports;
    std::vector<std::vector<float>> server_flats;
    reports.reserve(clients.size());
    for (ClientState& c : clients) {
      auto fe = segment_layers(std::as_const(c.params), cfg.split, Role::Front);
      auto be = segment_layers(std::as_const(c.params), cfg.split, Role::Back);
      std::vector<const ConvLayer*> client_layers = fe;
      client_layers.insert(client_layers.end(), be.begin(), be.end());

      ClientReport r;
      r.client_id = c.client_id;
      r.params = flatten_params(client_layers);
      r.n_samples = static_cast<std::int64_t>(c.share.train.size());
      r.train_loss = c.round_batches > 0
                         ? c.round_loss_sum / c.round_batches
                         : 0.0;
      r.val_loss = c.val_loss;
      reports.push_back(std::move(r));

      auto sv = segment_layers(std::as_const(c.params), cfg.split, Role::Server);
      server_flats.push_back(flatten_params(sv));
    }

    WeightEvalFn context;
    if (cfg.aggregator.kind == AggregatorKind::AutoFedAvg) {
      context = [&](const std::vector<double>& w) -> double {
        std::vector<const std::vector<float>*> client_vecs, server_vecs;
        for (const ClientReport& r : reports) client_vecs.push_back(&r.params);
        for (const auto& s : server_flats) server_vecs.push_back(&s);
        const std::vector<float> cand_client = weighted_combine(client_vecs, w);
        const std::vector<float> cand_server = weighted_combine(server_vecs, w);
        UNetParams candidate = clients[0].params;
        auto fe = segment_layers(candidate, cfg.split, Role::Front);
        auto be = segment_layers(candidate, cfg.split, Role::Back);
        std::vector<ConvLayer*> client_layers = fe;
        client_layers.insert(client_layers.end(), be.begin(), be.end());
        unflatten_params(cand_client, client_layers);
        unflatten_params(cand_server,
                         segment_layers(candidate, cfg.split, Role::Server));
        return mean_dice_loss(candidate, val_ptrs, cfg.batch_size,
                              cfg.unet.num_classes);
      };
    }

    const AggregateResult agg = aggregate(reports, cfg.aggregator, context);

    std::vector<const std::vector<float>*> server_vecs;
    for (const auto& s : server_flats) server_vecs.push_back(&s);
    const std::vector<float> global_server =
        weighted_combine(server_vecs, agg.weights);

    // Broadcast: every client and every server copy resets to the globals.
    for (ClientState& c : clients) {
      auto fe = segment_layers(c.params, cfg.split, Role::Front);
      auto be = segment_layers(c.params, cfg.split, Role::Back);
      std::vector<ConvLayer*> client_layers = fe;
      client_layers.insert(client_layers.end(), be.begin(), be.end());
      unflatten_params(agg.global, client_layers);
      unflatten_params(global_server,
                       segment_layers(c.params, cfg.split, Role::Server));
    }
    record.round_weights.push_back(agg.weights);

    // The aggregated global model is clients[0].params after broadcast.
    record.epoch_mji.push_back(evaluate_mji(clients[0].params, cfg.unet,
                                            test_ptrs, cfg.batch_size));
  }

  for (const ClientState& c : clients) record.channel.merge(c.stats);
  record.final_mji = record.epoch_mji.back();
  return record;
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      const Dataset& dataset) {
  cfg.validate();
  const int n = static_cast<int>(dataset.samples.size());
  if (cfg.n_test >= n) {
    fail(ErrorKind::InvalidArgument,
         "dataset has " + std::to_string(n) + " samples; n_test " +
             std::to_string(cfg.n_test) + " leaves no training pool");
  }
  const std::vector<Sample> pool(dataset.samples.begin(),
                                 dataset.samples.end() - cfg.n_test);
  const std::vector<Sample> test(dataset.samples.end() - cfg.n_test,
                                 dataset.samples.end());
  std::vector<RunRecord> records(static_cast<std::size_t>(cfg.runs));
  if (cfg.run_jobs <= 1 || cfg.runs <= 1) {
    for (int run = 0; run < cfg.runs; ++run) {
      records[static_cast<std::size_t>(run)] = run_one(cfg, pool, test, run);
    }
    return records;
  }

  // Runs are independent; records are stored by run index so output does
  // not depend on completion order.
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(
      static_cast<std::size_t>(cfg.run_jobs));
  std::vector<std::thread> workers;
  const int n_workers = std::min(cfg.run_jobs, cfg.runs);
  for (int worker = 0; worker < n_workers; ++worker) {
    workers.emplace_back([&, worker] {
      try {
        for (;;) {
          const int run = next.fetch_add(1);
          if (run >= cfg.runs) return;
          records[static_cast<std::size_t>(run)] =
              run_one(cfg, pool, test, run);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(worker)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : workers) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, read_dataset(cfg.data_dir));
}

const char kExperimentCsvHeader[] =
    "run_id,split,aggregator,p_loss,n_lossy_clients,global_epoch,mji,seed";
const char kWeightsCsvHeader[] =
    "run_id,split,aggregator,p_loss,n_lossy_clients,global_epoch,client_id,"
    "weight";

void append_experiment_rows(const ExperimentConfig& cfg,
                            const std::vector<RunRecord>& records,
                            std::string* csv) {
  const std::string cell = to_string(cfg.split) + "," +
                           to_string(cfg.aggregator.kind) + "," +
                           fmt_g(cfg.p_loss) + "," +
                           std::to_string(cfg.n_lossy_clients);
  for (const RunRecord& r : records) {
    for (std::size_t e = 0; e < r.epoch_mji.size(); ++e) {
      *csv += std::to_string(r.run_id) + "," + cell + "," + std::to_string(e) +
              "," + fmt_f6(r.epoch_mji[e]) + "," + std::to_string(r.run_seed) +
              "\n";
    }
    *csv += std::to_string(r.run_id) + "," + cell + ",-1," +
            fmt_f6(r.final_mji) + "," + std::to_string(r.run_seed) + "\n";
  }
}

void append_weights_rows(const ExperimentConfig& cfg,
                         const std::vector<RunRecord>& records,
                         std::string* csv) {
  const std::string cell = to_string(cfg.split) + "," +
                           to_string(cfg.aggregator.kind) + "," +
                           fmt_g(cfg.p_loss) + "," +
                           std::to_string(cfg.n_lossy_clients);
  char buf[64];
  for (const RunRecord& r : records) {
    for (std::size_t e = 0; e < r.round_weights.size(); ++e) {
      for (std::size_t k = 0; k < r.round_weights[e].size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.round_weights[e][k]);
        *csv += std::to_string(r.run_id) + "," + cell + "," +
                std::to_string(e) + "," + std::to_string(k) + "," + buf + "\n";
      }
    }
  }
}

}  // namespace splitfed
