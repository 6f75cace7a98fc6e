// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
//
// splitfed command-line front-end:
//   gen-data  write a synthetic PGM dataset
//   train     run one experiment cell from a config file
//   sweep     run a grid of cells, resumable, optionally in parallel
//   stats     pairwise t-tests over an experiment CSV
//   plot      two-panel MJI vs P_L SVG from an experiment CSV

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "splitfed/config.hpp"
#include "splitfed/csv.hpp"
#include "splitfed/dataset.hpp"
#include "splitfed/error.hpp"
#include "splitfed/federation.hpp"
#include "splitfed/svg_plot.hpp"
#include "splitfed/ttest.hpp"

namespace {

using namespace splitfed;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int runtime_fail(const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  return kExitRuntime;
}

int usage_fail(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return kExitUsage;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string out;
  int n = 0;
  int size = 64;
  std::uint64_t seed = 1234;
};

int cmd_gen_data(const GenDataArgs& args) {
  try {
    const Dataset ds = generate_dataset(args.n, args.size, args.seed);
    write_dataset(ds, args.out);
    std::cout << "wrote " << ds.samples.size() << " samples to " << args.out
              << "\n";
    return 0;
  } catch (const std::exception& e) {
    return runtime_fail(e);
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::int64_t seed = -1;  // <0: use the config's seed
  int jobs = 1;
};

int cmd_train(const TrainArgs& args) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(args.config);
    if (args.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(args.seed);
    cfg.run_jobs = args.jobs;
    if (cfg.run_jobs > 1) cfg.parallel_clients = false;
    cfg.validate();
  } catch (const std::exception& e) {
    return usage_fail(e.what());
  }
  try {
    const Dataset dataset = read_dataset(cfg.data_dir);
    const std::vector<RunRecord> records = run_experiment(cfg, dataset);

    std::string results{kExperimentCsvHeader};
    results += "\n";
    append_experiment_rows(cfg, records, &results);
    std::string weights{kWeightsCsvHeader};
    weights += "\n";
    append_weights_rows(cfg, records, &weights);

    namespace fs = std::filesystem;
    const std::string results_path = (fs::path(cfg.out_dir) / "results.csv").string();
    const std::string weights_path = (fs::path(cfg.out_dir) / "weights.csv").string();
    write_text_file(results_path, results);
    write_text_file(weights_path, weights);

    double mean_final = 0.0;
    for (const RunRecord& r : records) mean_final += r.final_mji;
    mean_final /= static_cast<double>(records.size());
    std::cout << "cell split=" << to_string(cfg.split)
              << " aggregator=" << to_string(cfg.aggregator.kind)
              << " p_loss=" << fmt_g(cfg.p_loss)
              << " n_lossy=" << cfg.n_lossy_clients << ": mean final MJI "
              << fmt_f6(mean_final) << " over " << records.size() << " runs\n";
    std::cout << "wrote " << results_path << " and " << weights_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    return runtime_fail(e);
  }
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::string config;
  std::string grid;
  int jobs = 1;
  std::int64_t seed = -1;
};

struct Cell {
  SplitDepth split;
  AggregatorKind aggregator;
  double p_loss;
  int n_lossy;

  std::string key() const {
    return to_string(split) + "," + to_string(aggregator) + "," +
           fmt_g(p_loss) + "," + std::to_string(n_lossy);
  }
  bool operator<(const Cell& o) const {
    return std::tuple(to_string(split), to_string(aggregator), p_loss,
                      n_lossy) < std::tuple(to_string(o.split),
                                            to_string(o.aggregator), o.p_loss,
                                            o.n_lossy);
  }
};

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Grid syntax: "p_loss=0.1,0.3;n_lossy=0..5;split=shallow,deep;
// aggregator=fedavg,naive". Omitted dimensions come from the config.
std::vector<Cell> parse_grid(const std::string& grid,
                             const ExperimentConfig& base) {
  std::vector<double> p_losses = {base.p_loss};
  std::vector<int> n_lossies = {base.n_lossy_clients};
  std::vector<SplitDepth> splits = {base.split};
  std::vector<AggregatorKind> aggs = {base.aggregator.kind};

  for (const std::string& dim : split_list(grid, ';')) {
    const std::size_t eq = dim.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::InvalidArgument,
           "grid dimension '" + dim + "' is not name=values");
    }
    const std::string name = dim.substr(0, eq);
    const std::string values = dim.substr(eq + 1);
    if (name == "p_loss") {
      p_losses.clear();
      for (const std::string& v : split_list(values, ',')) {
        p_losses.push_back(std::stod(v));
      }
    } else if (name == "n_lossy") {
      n_lossies.clear();
      const std::size_t dots = values.find("..");
      if (dots != std::string::npos) {
        const int lo = std::stoi(values.substr(0, dots));
        const int hi = std::stoi(values.substr(dots + 2));
        for (int v = lo; v <= hi; ++v) n_lossies.push_back(v);
      } else {
        for (const std::string& v : split_list(values, ',')) {
          n_lossies.push_back(std::stoi(v));
        }
      }
    } else if (name == "split") {
      splits.clear();
      for (const std::string& v : split_list(values, ',')) {
        splits.push_back(parse_split_depth(v));
      }
    } else if (name == "aggregator") {
      aggs.clear();
      for (const std::string& v : split_list(values, ',')) {
        aggs.push_back(parse_aggregator_kind(v));
      }
    } else {
      fail(ErrorKind::InvalidArgument, "unknown grid dimension '" + name + "'");
    }
    if (p_losses.empty() || n_lossies.empty() || splits.empty() ||
        aggs.empty()) {
      fail(ErrorKind::InvalidArgument, "grid dimension '" + name + "' is empty");
    }
  }

  std::vector<Cell> cells;
  for (SplitDepth s : splits) {
    for (AggregatorKind a : aggs) {
      for (double p : p_losses) {
        for (int nc : n_lossies) {
          cells.push_back(Cell{s, a, p, nc});
        }
      }
    }
  }
  std::sort(cells.begin(), cells.end());
  return cells;
}

int cmd_sweep(const SweepArgs& args) {
  ExperimentConfig base;
  std::vector<Cell> cells;
  try {
    base = load_experiment_config(args.config);
    if (args.seed >= 0) {
      base.master_seed = static_cast<std::uint64_t>(args.seed);
    }
    cells = parse_grid(args.grid, base);
    if (args.jobs < 1) {
      fail(ErrorKind::InvalidArgument, "--jobs must be >= 1");
    }
  } catch (const std::exception& e) {
    return usage_fail(e.what());
  }

  try {
    namespace fs = std::filesystem;
    const std::string results_path =
        (fs::path(base.out_dir) / "results.csv").string();
    const std::string weights_path =
        (fs::path(base.out_dir) / "weights.csv").string();

    // Resume: cells whose summary-row count matches `runs` keep their rows.
    std::map<std::string, std::string> done_results, done_weights;
    if (file_exists(results_path)) {
      const CsvTable old = read_csv_file(results_path);
      std::map<std::string, int> summary_count;
      std::map<std::string, std::string> rows;
      const int cs = old.column("split"), ca = old.column("aggregator");
      const int cp = old.column("p_loss"), cn = old.column("n_lossy_clients");
      const int ce = old.column("global_epoch");
      if (cs < 0 || ca < 0 || cp < 0 || cn < 0 || ce < 0) {
        fail(ErrorKind::Parse, results_path + ": unexpected CSV schema");
      }
      for (const auto& row : old.rows) {
        const std::string key = row[cs] + "," + row[ca] + "," + row[cp] + "," +
                                row[cn];
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
          if (i) line += ",";
          line += row[i];
        }
        rows[key] += line + "\n";
        if (row[ce] == "-1") summary_count[key] += 1;
      }
      for (const auto& [key, count] : summary_count) {
        if (count == base.runs) done_results[key] = rows[key];
      }
      if (file_exists(weights_path)) {
        const CsvTable oldw = read_csv_file(weights_path);
        const int ws = oldw.column("split"), wa = oldw.column("aggregator");
        const int wp = oldw.column("p_loss"), wn = oldw.column("n_lossy_clients");
        if (ws >= 0 && wa >= 0 && wp >= 0 && wn >= 0) {
          for (const auto& row : oldw.rows) {
            const std::string key =
                row[ws] + "," + row[wa] + "," + row[wp] + "," + row[wn];
            if (!done_results.count(key)) continue;
            std::string line;
            for (std::size_t i = 0; i < row.size(); ++i) {
              if (i) line += ",";
              line += row[i];
            }
            done_weights[key] += line + "\n";
          }
        }
      }
    }

    std::vector<Cell> pending;
    for (const Cell& cell : cells) {
      if (!done_results.count(cell.key())) pending.push_back(cell);
    }
    std::cout << cells.size() << " cells (" << pending.size() << " to run, "
              << cells.size() - pending.size() << " resumed)\n";

    const Dataset dataset = read_dataset(base.data_dir);

    std::map<std::string, std::string> new_results, new_weights;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(pending.size());
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= pending.size()) return;
        try {
          const Cell& cell = pending[i];
          ExperimentConfig cfg = base;
          cfg.split = cell.split;
          cfg.aggregator.kind = cell.aggregator;
          cfg.p_loss = cell.p_loss;
          cfg.n_lossy_clients = cell.n_lossy;
          const auto records = run_experiment(cfg, dataset);
          std::string rows, wrows;
          append_experiment_rows(cfg, records, &rows);
          append_weights_rows(cfg, records, &wrows);
          std::lock_guard<std::mutex> lock(mu);
          new_results[cell.key()] = std::move(rows);
          new_weights[cell.key()] = std::move(wrows);
          std::cout << "cell " << cell.key() << " done\n";
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> threads;
    const int n_threads = std::min<int>(args.jobs,
                                        static_cast<int>(pending.size()));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    if (threads.empty()) worker();  // no pending cells still validates output
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    // Canonical output order: cells sorted by key, rows per cell in run/epoch
    // order, so bytes are independent of scheduling.
    std::string results{kExperimentCsvHeader};
    results += "\n";
    std::string weights{kWeightsCsvHeader};
    weights += "\n";
    for (const Cell& cell : cells) {
      const std::string key = cell.key();
      results += done_results.count(key) ? done_results[key] : new_results[key];
      weights += done_weights.count(key) ? done_weights[key] : new_weights[key];
    }
    write_text_file(results_path, results);
    write_text_file(weights_path, weights);
    std::cout << "wrote " << results_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    return runtime_fail(e);
  }
}

// ---------------------------------------------------------------------------
// stats

struct StatsArgs {
  std::string csv;
  std::string test;   // deep-vs-shallow | agg-pairs
  std::string tails = "one";
  std::string out;
  bool paired = false;
  std::int64_t seed = -1;  // accepted for interface symmetry; unused
};

int cmd_stats(const StatsArgs& args) {
  Tails tails;
  if (args.tails == "one") {
    tails = Tails::One;
  } else if (args.tails == "two") {
    tails = Tails::Two;
  } else {
    return usage_fail("--tails must be 'one' or 'two'");
  }
  if (args.test != "deep-vs-shallow" && args.test != "agg-pairs") {
    return usage_fail("--test must be 'deep-vs-shallow' or 'agg-pairs'");
  }

  try {
    const CsvTable table = read_csv_file(args.csv);
    const int cs = table.column("split"), ca = table.column("aggregator");
    const int cp = table.column("p_loss"), cn = table.column("n_lossy_clients");
    const int ce = table.column("global_epoch"), cm = table.column("mji");
    if (cs < 0 || ca < 0 || cp < 0 || cn < 0 || ce < 0 || cm < 0) {
      fail(ErrorKind::Parse, args.csv + ": missing required columns");
    }

    RunGrid grid;
    for (const auto& row : table.rows) {
      if (row[ce] != "-1") continue;  // one sample per run: the final MJI
      const double mji = std::stod(row[cm]);
      if (args.test == "deep-vs-shallow") {
        const std::string cell = "aggregator=" + row[ca] + ";p_loss=" +
                                 row[cp] + ";n_lossy=" + row[cn];
        grid[cell][row[cs]].push_back(mji);
      } else {
        const std::string cell = "split=" + row[cs] + ";p_loss=" + row[cp] +
                                 ";n_lossy=" + row[cn];
        grid[cell][row[ca]].push_back(mji);
      }
    }
    if (grid.empty()) {
      fail(ErrorKind::InvalidArgument,
           args.csv + ": no summary rows (global_epoch = -1)");
    }
    if (args.test == "deep-vs-shallow") {
      for (const auto& [cell, groups] : grid) {
        if (groups.size() != 2) {
          fail(ErrorKind::InvalidArgument,
               "cell '" + cell + "' needs both splits, has " +
                   std::to_string(groups.size()));
        }
      }
    }

    // One-tailed direction: H1 "first group > second", groups in lexical
    // order -- for deep-vs-shallow that is H1: J_deep > J_shallow.
    const auto rows = pairwise_compare(grid, tails, /*h1_first_greater=*/true,
                                       args.paired);

    std::string out_csv = "cell,group_a,group_b,t,df,p,tails,significant\n";
    int significant = 0;
    char buf[160];
    for (const ComparisonRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.9g", r.test.t, r.test.df,
                    r.test.p);
      out_csv += r.cell + "," + r.group_a + "," + r.group_b + "," + buf + "," +
                 (tails == Tails::One ? "one" : "two") + "," +
                 (r.test.significant() ? "1" : "0") + "\n";
      if (r.test.significant()) ++significant;
    }
    const std::string out_path =
        args.out.empty() ? args.csv + "." + args.test + ".stats.csv"
                         : args.out;
    write_text_file(out_path, out_csv);
    std::cout << rows.size() << " comparisons, " << significant
              << " significant at p < 0.05 (" << args.tails << "-tailed"
              << (args.paired ? ", paired" : "") << ")\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    return runtime_fail(e);
  }
}

// ---------------------------------------------------------------------------
// plot

struct PlotArgs {
  std::string csv;
  std::string out;
  std::int64_t seed = -1;  // unused
};

int cmd_plot(const PlotArgs& args) {
  try {
    const CsvTable table = read_csv_file(args.csv);
    const std::string svg = render_mji_svg(table);
    write_text_file(args.out, svg);
    std::cout << "wrote " << args.out << "\n";
    return 0;
  } catch (const std::exception& e) {
    return runtime_fail(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SplitFed packet-loss simulator"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--n", gen_args.n, "Number of samples")->required();
  gen->add_option("--size", gen_args.size, "Image size (even)");
  gen->add_option("--seed", gen_args.seed, "Generator seed");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Run one experiment cell");
  train->add_option("--config", train_args.config, "Config file")->required();
  train->add_option("--seed", train_args.seed, "Override the config seed");
  train->add_option("--jobs", train_args.jobs, "Concurrent runs");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run a grid of experiment cells");
  sweep->add_option("--config", sweep_args.config, "Config file")->required();
  sweep->add_option("--grid", sweep_args.grid,
                    "e.g. p_loss=0.1,0.5;n_lossy=0..5;split=shallow,deep");
  sweep->add_option("--jobs", sweep_args.jobs, "Concurrent cells");
  sweep->add_option("--seed", sweep_args.seed, "Override the config seed");

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "Pairwise t-tests over a CSV");
  stats->add_option("--csv", stats_args.csv, "Experiment CSV")->required();
  stats->add_option("--test", stats_args.test, "deep-vs-shallow | agg-pairs")
      ->required();
  stats->add_option("--tails", stats_args.tails, "one | two");
  stats->add_option("--out", stats_args.out, "Output CSV path");
  stats->add_flag("--paired", stats_args.paired,
                  "Paired t-test instead of Welch");
  stats->add_option("--seed", stats_args.seed, "Unused; uniform interface");

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "Render MJI vs P_L SVG");
  plot->add_option("--csv", plot_args.csv, "Experiment CSV")->required();
  plot->add_option("--out", plot_args.out, "Output SVG path")->required();
  plot->add_option("--seed", plot_args.seed, "Unused; uniform interface");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help / --version
    }
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  if (gen->parsed()) return cmd_gen_data(gen_args);
  if (train->parsed()) return cmd_train(train_args);
  if (sweep->parsed()) return cmd_sweep(sweep_args);
  if (stats->parsed()) return cmd_stats(stats_args);
  if (plot->parsed()) return cmd_plot(plot_args);
  return kExitUsage;
}
