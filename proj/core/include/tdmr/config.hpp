#pragma once

// Experiment configuration: a small TOML-style format (sections of key/value
// pairs; strings, numbers, booleans and flat arrays) mapped onto the channel,
// equalizer and training settings. Unknown sections or keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "tdmr/equalizer.hpp"
#include "tdmr/sector_io.hpp"
#include "tdmr/training.hpp"

namespace tdmr {

struct ConfigValue {
  std::variant<std::string, double, bool, std::vector<double>> value;

  double number() const;
  std::string str() const;
  bool boolean() const;
  std::vector<double> array() const;
};

using ConfigSection = std::map<std::string, ConfigValue>;
using ConfigTable = std::map<std::string, ConfigSection>;

// Parses the TOML-style subset; throws std::runtime_error with a line number
// on malformed input.
ConfigTable parse_config_text(const std::string& text);

struct ExperimentConfig {
  // [channel]
  GenConfig channel;
  // [equalizer]
  MlpSpec spec{{22, 1}, Activation::Tanh};
  TargetMode target_mode = TargetMode::adaptive_monic(5);
  // [training]
  TrainConfig training;
  // [output]
  std::filesystem::path out_dir = "out";
  std::string name = "run";

  static ExperimentConfig defaults();
  static ExperimentConfig from_table(const ConfigTable& table);
  static ExperimentConfig from_file(const std::filesystem::path& file);

  std::uint64_t digest() const;  // of the canonical rendering
  std::string render() const;
};

}  // namespace tdmr
