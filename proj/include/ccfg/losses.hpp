#pragma once

// Training losses on batches of predicted and true target grids. Each
// returns its value and, when `grad` is non-null, writes the gradient with
// respect to the prediction. Batch losses other than L1 are averaged over
// batch rows.

#include <array>

#include "ccfg/tensor.hpp"

namespace ccfg {

/// Mean absolute error over all rows, channels and cells.
double l1_loss(const Tensor& pred, const Tensor& truth, Tensor* grad = nullptr);

/// One level of the orthonormal 2-D Haar transform. For each 2x2 block
/// [a b; c d]: ll = (a+b+c+d)/2, hl = (a-b+c-d)/2, lh = (a+b-c-d)/2,
/// hh = (a-b-c+d)/2.
struct HaarLevel {
  Tensor ll, lh, hl, hh;
};
HaarLevel haar_analysis(const Tensor& x);
Tensor haar_synthesis(const HaarLevel& level);

/// Two-level decomposition: levels[0] is the first (finest) level; the
/// coarse approximation is levels[1].ll.
std::array<HaarLevel, 2> haar_analysis2(const Tensor& x);
Tensor haar_synthesis2(const std::array<HaarLevel, 2>& levels);

/// Sum of squared detail-coefficient differences over both Haar levels;
/// the low-low band is discarded.
double dwt_loss(const Tensor& pred, const Tensor& truth, Tensor* grad = nullptr);

/// Discrete derivatives with central differences inside and one-sided
/// differences at the edges; x runs along columns, y along rows.
Tensor gradient_x(const Tensor& f);
Tensor gradient_y(const Tensor& f);
/// du/dx + dv/dy of a two-channel flow [n, 2, h, w] -> [n, 1, h, w].
Tensor divergence(const Tensor& uv);

/// Squared L2 distance between the divergences of two flows.
double divergence_loss(const Tensor& pred_uv, const Tensor& true_uv, Tensor* grad = nullptr);

/// 3x3 Sobel responses with replicate padding, every channel.
Tensor sobel_x(const Tensor& f);
Tensor sobel_y(const Tensor& f);

/// L1 distance between Sobel responses of prediction and truth, both directions.
double sobel_loss(const Tensor& pred, const Tensor& truth, Tensor* grad = nullptr);

/// Target channel layout is [standardized speed, sin(direction), cos(direction)].
/// Flow components in physical units use the meteorological convention
/// u = -speed sin(theta), v = -speed cos(theta).
struct FlowScaling {
  double speed_mean = 0.0;
  double speed_std = 1.0;
};
Tensor targets_to_flow(const Tensor& targets, const FlowScaling& scaling);
/// Pulls a gradient with respect to the flow back onto the target channels.
Tensor flow_vjp(const Tensor& targets, const FlowScaling& scaling, const Tensor& d_flow);

struct LossWeights {
  double dwt = 1e-3;
  double divergence = 1e-3;
  double sobel = 1e-3;
};

struct LossBreakdown {
  double total = 0.0;
  double l1 = 0.0;
  double dwt = 0.0;
  double divergence = 0.0;
  double sobel = 0.0;
};

/// L1 + w.dwt * DWT + w.divergence * DIV(flow) + w.sobel * SOBEL.
LossBreakdown total_loss(const Tensor& pred, const Tensor& truth, const LossWeights& weights,
                         const FlowScaling& scaling, Tensor* grad = nullptr);

}  // namespace ccfg
