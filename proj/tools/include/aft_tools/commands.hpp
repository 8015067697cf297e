// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aft/trainer.hpp"

namespace aft::tools {

/// Contents of a training/sweep config file. Relative paths are resolved
/// against the config file's directory.
struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::string method = "aft";
  std::string run_id;  // defaults to the method name
  std::string dataset;  // label used in reports; defaults to the manifest's directory name
  std::optional<double> beta;
  std::vector<double> beta_grid;
  std::optional<std::filesystem::path> init_checkpoint;
  TrainConfig train;

  // sweep only
  std::string sweep_id = "sweep";
  std::vector<std::size_t> d_noise{0, 64};
  std::vector<std::string> methods{"stl", "kd", "aft"};
  std::vector<std::uint64_t> seeds{0};

  nlohmann::json source;  // the parsed file, archived next to outputs
};

/// Throws ConfigError on unknown keys, missing required keys or bad values.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Keys accepted in a config file.
const std::vector<std::string>& config_keys();

/// Runs the command line `args` (without the program name). Returns the exit
/// code: 0 on success, 1 on runtime failures, 2 on usage or config errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aft::tools
