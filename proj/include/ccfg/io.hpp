#pragma once

// Prediction files and map exports.

#include <filesystem>
#include <string>

#include "ccfg/grid.hpp"
#include "ccfg/metrics.hpp"

namespace ccfg {

struct PredictionMeta {
  std::string scheme;
  int steps = 0;
  double nfe_per_step = 0.0;
};

/// `<stem>.json` header plus `<stem>.bin`: predictions then truths as
/// little-endian float64, row-major [timestamps, ensemble, H, W] and
/// [timestamps, 1, H, W].
void write_predictions(const std::filesystem::path& header, const PredictionSet& set, const PredictionMeta& meta);
PredictionSet read_predictions(const std::filesystem::path& header, PredictionMeta* meta = nullptr);

/// 8-bit binary PGM (P5), linearly mapping [lo, hi] to [0, 255] with clamping.
void write_pgm(const std::filesystem::path& path, const FieldGrid& grid, double lo, double hi);
/// Comma-separated rows of raw values.
void write_grid_csv(const std::filesystem::path& path, const FieldGrid& grid);

}  // namespace ccfg
