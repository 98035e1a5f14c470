#pragma once

// Experiment configuration: one JSON document shared by every CLI command.
// Unknown keys are errors at every level. Relative paths resolve against
// the directory of the config file; the resolved snapshot stores them
// absolute so a rerun from the snapshot reads the same files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccfg/guidance.hpp"
#include "ccfg/sampler.hpp"
#include "ccfg/selection.hpp"
#include "ccfg/synthetic.hpp"
#include "ccfg/train.hpp"

namespace ccfg {

struct DataConfig {
  std::filesystem::path train;  // manifest paths
  std::filesystem::path eval;
  int train_count = 2000;       // used by `generate`
  int eval_count = 500;
  SyntheticConfig synthetic;
};

struct ModelConfig {
  std::filesystem::path checkpoint;
  int width1 = 12;
  int width2 = 24;
  int width3 = 48;
  int embed_dim = 32;
};

struct GuidanceConfig {
  Scheme scheme = Scheme::ccfg;
  double cfg_weight = 1.5;
  /// SubsetWeights file written by `select`; used by the ccfg scheme.
  std::filesystem::path weights;
};

struct EvaluateConfig {
  std::vector<Scheme> schemes{Scheme::direct, Scheme::cfg, Scheme::ccfg};
  int max_timestamps = 0;  // 0 = all
  int batch_size = 25;
  std::filesystem::path predictions;  // input of export-maps
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string inputs = "basic";  // conditioning set name
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  SelectionConfig selection;
  GuidanceConfig guidance;
  EvaluateConfig evaluate;
  std::filesystem::path out = "out";

  void validate() const;
};

/// Sub-config seeds default to the global seed unless set explicitly.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ExperimentConfig& config);
void write_snapshot(const ExperimentConfig& config, const std::filesystem::path& path);

}  // namespace ccfg
