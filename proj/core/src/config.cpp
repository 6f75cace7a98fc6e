// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

#include "splitfed/csv.hpp"
#include "splitfed/error.hpp"

namespace splitfed {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

[[noreturn]] void config_fail(int line, const std::string& message) {
  fail(ErrorKind::Config, "config line " + std::to_string(line) + ": " + message);
}

class Reader {
 public:
  explicit Reader(const ConfigFile& file) : file_(file) {}

  const ConfigFile::Entry& require(const std::string& section,
                                   const std::string& key) {
    auto sec = file_.sections.find(section);
    if (sec == file_.sections.end()) {
      fail(ErrorKind::Config, "config: missing [" + section + "] section");
    }
    auto it = sec->second.find(key);
    if (it == sec->second.end()) {
      fail(ErrorKind::Config,
           "config: missing required key '" + key + "' in [" + section + "]");
    }
    mark_used(section, key);
    return it->second;
  }

  const ConfigFile::Entry* optional(const std::string& section,
                                    const std::string& key) {
    auto sec = file_.sections.find(section);
    if (sec == file_.sections.end()) return nullptr;
    auto it = sec->second.find(key);
    if (it == sec->second.end()) return nullptr;
    mark_used(section, key);
    return &it->second;
  }

  std::string str(const std::string& section, const std::string& key) {
    return require(section, key).value;
  }

  long integer(const std::string& section, const std::string& key) {
    const auto& e = require(section, key);
    return to_int(e, key);
  }

  double number(const std::string& section, const std::string& key) {
    const auto& e = require(section, key);
    return to_double(e, key);
  }

  double number_or(const std::string& section, const std::string& key,
                   double fallback) {
    const auto* e = optional(section, key);
    return e ? to_double(*e, key) : fallback;
  }

  long integer_or(const std::string& section, const std::string& key,
                  long fallback) {
    const auto* e = optional(section, key);
    return e ? to_int(*e, key) : fallback;
  }

  // Every key present in the file must have been consumed.
  void reject_unknown() const {
    for (const auto& [section, entries] : file_.sections) {
      for (const auto& [key, entry] : entries) {
        if (!used_.count(section + "." + key)) {
          config_fail(entry.line,
                      "unknown key '" + key + "' in [" + section + "]");
        }
      }
    }
  }

 private:
  void mark_used(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
  }

  static long to_int(const ConfigFile::Entry& e, const std::string& key) {
    char* end = nullptr;
    const long v = std::strtol(e.value.c_str(), &end, 10);
    if (end == e.value.c_str() || *end != '\0') {
      config_fail(e.line, "key '" + key + "': expected integer, got '" +
                              e.value + "'");
    }
    return v;
  }

  static double to_double(const ConfigFile::Entry& e, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(e.value.c_str(), &end);
    if (end == e.value.c_str() || *end != '\0') {
      config_fail(e.line,
                  "key '" + key + "': expected number, got '" + e.value + "'");
    }
    return v;
  }

  const ConfigFile& file_;
  std::set<std::string> used_;
};

std::vector<double> parse_proportions(const ConfigFile::Entry& e) {
  std::vector<double> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') {
      config_fail(e.line, "proportions: expected number, got '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) config_fail(e.line, "proportions: empty list");
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile file;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') config_fail(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) config_fail(line_no, "empty section name");
      file.sections[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      config_fail(line_no, "expected 'key = value', got '" + line + "'");
    }
    if (section.empty()) {
      config_fail(line_no, "key outside of any [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) config_fail(line_no, "empty key");
    auto [it, inserted] =
        file.sections[section].emplace(key, Entry{value, line_no});
    if (!inserted) {
      config_fail(line_no, "duplicate key '" + key + "' in [" + section + "]");
    }
  }
  return file;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  return parse(read_text_file(path));
}

ExperimentConfig experiment_config_from(const ConfigFile& file) {
  Reader r(file);
  ExperimentConfig cfg;

  cfg.unet.levels = static_cast<int>(r.integer("model", "levels"));
  cfg.unet.base_channels = static_cast<int>(r.integer("model", "base_channels"));
  cfg.unet.num_classes = static_cast<int>(r.integer("model", "num_classes"));
  cfg.input_size = static_cast<int>(r.integer("model", "input_size"));

  cfg.split = parse_split_depth(r.str("split", "depth"));

  cfg.aggregator.kind = parse_aggregator_kind(r.str("aggregator", "kind"));
  cfg.aggregator.beta = r.number_or("aggregator", "beta", 1.0);
  cfg.aggregator.lambda = r.number_or("aggregator", "lambda", 0.1);
  cfg.aggregator.eta = r.number_or("aggregator", "eta", 0.1);
  cfg.aggregator.iterations =
      static_cast<int>(r.integer_or("aggregator", "iterations", 3));

  cfg.p_loss = r.number("channel", "p_loss");
  cfg.n_lossy_clients = static_cast<int>(r.integer("channel", "n_lossy"));

  cfg.num_clients = static_cast<int>(r.integer("training", "clients"));
  cfg.proportions = parse_proportions(r.require("training", "proportions"));
  cfg.local_epochs = static_cast<int>(r.integer("training", "local_epochs"));
  cfg.global_epochs = static_cast<int>(r.integer("training", "global_epochs"));
  cfg.batch_size = static_cast<int>(r.integer("training", "batch_size"));
  cfg.lr = r.number("training", "lr");
  cfg.runs = static_cast<int>(r.integer("training", "runs"));
  cfg.master_seed =
      static_cast<std::uint64_t>(r.integer("training", "seed"));

  cfg.data_dir = r.str("data", "dir");
  cfg.n_test = static_cast<int>(r.integer("data", "n_test"));

  cfg.out_dir = r.str("output", "dir");

  r.reject_unknown();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from(ConfigFile::parse_file(path));
}

}  // namespace splitfed
