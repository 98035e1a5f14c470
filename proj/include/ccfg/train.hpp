#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ccfg/losses.hpp"
#include "ccfg/pipeline.hpp"
#include "ccfg/unet.hpp"

namespace ccfg {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 2e-3;
  int warmup_steps = 50;
  /// Each dropout group is zeroed independently with this probability.
  double dropout_probability = 0.1;
  LossWeights loss;
  double grad_clip = 1.0;  // global-norm clipping; 0 disables
  int crop_size = 0;       // 0 trains on full grids
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossRecord {
  int step = 0;
  int epoch = 0;
  double learning_rate = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<LossRecord> curve;
  /// Rows that saw at least one dropped group.
  std::uint64_t dropped_views = 0;
  std::uint64_t rows_seen = 0;
};

/// Learning rate at `step` (0-based): linear warmup, then cosine decay to 0.
double scheduled_learning_rate(const TrainConfig& config, int step, int total_steps);

/// Adam with the cosine schedule on total_loss. Deterministic given the
/// config seed. Throws NumericError when the loss stops being finite.
TrainResult train(UNet& model, const PreparedSet& data, const TrainConfig& config,
                  const std::function<void(const LossRecord&)>& on_step = {});

/// Mean L1 of one-shot x0 predictions with full conditioning at fixed
/// timesteps and noise (derived from `seed`).
double validation_l1(const UNet& model, const PreparedSet& data, std::uint64_t seed, int limit = 0);

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

}  // namespace ccfg
