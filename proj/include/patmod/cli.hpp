#pragma once

#include <exception>
#include <string>
#include <utility>
#include <vector>

#include "patmod/data.hpp"
#include "patmod/model.hpp"
#include "patmod/training.hpp"

namespace patmod::cli {

/// Everything a command needs, stored as one flat key=value file.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  data::DatasetConfig dataset;
  std::string data_dir = "data";
  std::string out_dir = "runs/default";
};

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);
/// ConfigError for unknown keys or malformed values.
void set_entry(RunConfig& config, const std::string& key, const std::string& value);
/// `key = value` lines; `#` starts a comment. Unknown or repeated keys are errors.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);
std::string format_run_config(const RunConfig& config);
/// Cross-section checks (image sizes, class lists) on top of each section's own.
void validate(const RunConfig& config);

enum ExitCode : int { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };
int exit_code_for(const std::exception& e);

/// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace patmod::cli
