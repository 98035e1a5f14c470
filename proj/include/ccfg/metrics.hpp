#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccfg/grid.hpp"
#include "ccfg/tensor.hpp"

namespace ccfg {

/// Wind-speed predictions in physical units: predictions is
/// [timestamps, ensemble, H, W] and truths is [timestamps, 1, H, W].
struct PredictionSet {
  Tensor predictions;
  Tensor truths;
  std::vector<std::string> timestamp_ids;
  /// Denoiser row evaluations consumed to produce `predictions`.
  std::uint64_t nfe = 0;

  int timestamps() const { return predictions.n; }
  int ensemble() const { return predictions.c; }
  void validate() const;
};

/// Per-pixel mean over timestamps; ensemble members are averaged first.
FieldGrid mean_map(const Tensor& stack);

double mm_rmse(const FieldGrid& pred_mean_map, const FieldGrid& true_mean_map);
/// sqrt(mean over pixels of mean over timestamps of squared error) using the
/// ensemble-mean prediction per timestamp.
double t_rmse(const PredictionSet& set);

/// Energy form: mean|x_i - y| - (1/(2n^2)) sum_ij |x_i - x_j|. The ensemble
/// does not have to be sorted.
double crps(std::span<const double> ensemble, double observation);
/// CRPS averaged over timestamps and pixels.
double crps_timestamps(const PredictionSet& set);
/// One mean map per ensemble member, CRPS per pixel against the true mean map.
double crps_mean_map(const PredictionSet& set);

namespace serial {
double t_rmse(const PredictionSet& set);
double crps_timestamps(const PredictionSet& set);
}  // namespace serial

/// Keys cubic convolution (a = -0.5), align-corners, clamped edges.
FieldGrid upsample_bicubic(const FieldGrid& grid, int factor);

struct BicubicPrediction {
  FieldGrid speed;      // m/s
  FieldGrid direction;  // degrees, interpolated through (sin, cos)
};
/// Bicubic upsampling of the pair's low-res speed and direction.
BicubicPrediction bicubic_baseline(const SamplePair& pair);

/// One line of a metric report.
struct MetricRow {
  std::string model;
  std::string domain;
  std::string metric;
  double nfe = 0.0;  // per step per sample
  int ensemble = 1;
  double value = 0.0;
};

void write_metric_report(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metric_report(const std::filesystem::path& path);

}  // namespace ccfg
