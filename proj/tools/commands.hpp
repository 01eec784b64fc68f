#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lmk/config.hpp"

namespace lmk::cli {

/// Options shared by every subcommand after parsing.
struct Options {
  std::string command;
  std::vector<std::string> argv;  // full command line, for the run manifest
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> k_landmarks;
  std::string layer = "layer1";
  std::size_t n = 0;
  bool n_given = false;
  std::string features;    // train: Step-1 checkpoint
  std::string checkpoint;  // acc-curve, eval
  std::string two_step;    // ablate
  std::string end_to_end;  // ablate
  std::string data_dir;    // optional exported dataset to load instead of the config source
  std::string metric = "pck";
  std::string manifest;    // replay
  std::size_t entry = 0;   // replay: 1-based manifest line, 0 = last
};

/// Config file (or desk defaults) with command-line overrides applied.
ExperimentConfig resolve_config(const Options& opt);

int cmd_synth(const Options& opt, const ExperimentConfig& cfg);
int cmd_pretrain(const Options& opt, const ExperimentConfig& cfg);
int cmd_train(const Options& opt, const ExperimentConfig& cfg);
int cmd_e2e(const Options& opt, const ExperimentConfig& cfg);
int cmd_acc_curve(const Options& opt, const ExperimentConfig& cfg);
int cmd_eval(const Options& opt, const ExperimentConfig& cfg);
int cmd_ablate(const Options& opt, const ExperimentConfig& cfg);

/// Usage problems that CLI11 cannot express (e.g. a flag required by one command).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lmk::cli
