// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "splitfed/federation.hpp"

namespace splitfed {

// Plain-text key/value configuration with [section] headers, '#' comments.
// Unknown sections or keys are rejected; validation errors name the key and
// line. Required sections: [model] [split] [aggregator] [channel] [training]
// [data] [output].
struct ConfigFile {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections;

  static ConfigFile parse(const std::string& text);
  static ConfigFile parse_file(const std::string& path);
};

ExperimentConfig experiment_config_from(const ConfigFile& file);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace splitfed
