#pragma once

// Glue between datasets, the network and the samplers.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccfg/dataset.hpp"
#include "ccfg/denoiser_api.hpp"
#include "ccfg/guidance.hpp"
#include "ccfg/losses.hpp"
#include "ccfg/metrics.hpp"
#include "ccfg/sampler.hpp"
#include "ccfg/unet.hpp"

namespace ccfg {

/// A dataset assembled into model tensors once, with every group present.
struct PreparedSet {
  Tensor conditioning;             // [N, C, H, W]
  Tensor targets;                  // [N, 3, H, W]
  std::vector<int> channel_group;  // group index per conditioning channel
  std::vector<std::string> groups; // dropout groups; bit i of a GroupMask is groups[i]
  std::vector<std::string> inputs; // conditioning variables in assembly order
  std::vector<std::string> timestamp_ids;
  FlowScaling scaling;             // speed statistics
  int scale_factor = 8;

  int size() const { return targets.n; }
};

PreparedSet prepare(const Dataset& dataset, const std::vector<std::string>& inputs);

/// Rows `indices` of a batch tensor.
Tensor gather_rows(const Tensor& t, std::span<const int> indices);

/// Zeroes the channels of groups absent from `present`.
void mask_groups(Tensor& conditioning, std::span<const int> channel_group, GroupMask present);

UNetArchitecture architecture_for(const PreparedSet& data, int width1 = 12, int width2 = 24,
                                  int width3 = 48, int embed_dim = 32);

/// The network bound to one batch of conditioning rows.
class ModelDenoiser final : public Denoiser {
 public:
  ModelDenoiser(const UNet& model, Tensor conditioning, std::vector<int> channel_group, int group_count);

  int group_count() const override { return group_count_; }
  int rows() const override { return conditioning_.n; }
  Tensor predict_x0(const Tensor& x_t, int t, GroupMask present) const override;
  bool supports_input_vjp() const override { return true; }
  Tensor x0_input_vjp(const Tensor& x_t, int t, GroupMask present, const Tensor& cotangent) const override;

 private:
  Tensor input_for(const Tensor& x_t, GroupMask present) const;

  const UNet& model_;
  Tensor conditioning_;
  std::vector<int> channel_group_;
  int group_count_;
};

/// Samples every item of `data` (or the first `limit` items when positive)
/// in batches. Predictions are wind speed in m/s; nfe counts denoiser rows.
PredictionSet predict(const UNet& model, const PreparedSet& data, const Guidance& guidance,
                      const SamplerConfig& config, int batch_size = 25, int limit = 0);

/// Converts standardized speed channels [n, 3, H, W] to m/s [n, 1, H, W].
Tensor speed_channels(const Tensor& targets, const FlowScaling& scaling);

}  // namespace ccfg
