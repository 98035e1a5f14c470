#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccfg/random.hpp"
#include "ccfg/tensor.hpp"

namespace ccfg {

/// Variance-preserving DDPM schedule. Steps are indexed 1..T; index 0 is the
/// clean-data convention alpha_bar(0) = 1, sigma(0) = 0.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

  int steps() const { return steps_; }
  double beta_start() const { return beta_[1]; }
  double beta_end() const { return beta_[steps_]; }
  double beta(int t) const { return beta_.at(t); }
  double alpha(int t) const { return 1.0 - beta_.at(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(t); }
  double sigma(int t) const { return sigma_.at(t); }

 private:
  int steps_ = 0;
  std::vector<double> beta_;       // beta_[0] unused (0)
  std::vector<double> alpha_bar_;  // cumulative product, alpha_bar_[0] = 1
  std::vector<double> sigma_;      // sqrt(1 - alpha_bar)
};

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

Tensor x0_to_eps(const Tensor& x_t, const Tensor& x0_pred, int t, const NoiseSchedule& sched);
Tensor eps_to_x0(const Tensor& x_t, const Tensor& eps, int t, const NoiseSchedule& sched);
/// score = -eps / sigma_t
Tensor eps_to_score(const Tensor& eps, int t, const NoiseSchedule& sched);
Tensor score_to_eps(const Tensor& score, int t, const NoiseSchedule& sched);

/// `count` descending timesteps T, T - T/count, ..., T/count (rounded); the
/// sampler's final step goes from the last of them to the clean end t = 0.
std::vector<int> inference_timesteps(int total_steps, int count);

/// Independent Gaussian stream per batch row, so results do not depend on
/// how rows are grouped into batches.
class NoiseSource {
 public:
  explicit NoiseSource(std::vector<std::uint64_t> row_seeds);
  int rows() const { return static_cast<int>(engines_.size()); }
  /// Fills each row of `out` from its own stream.
  void fill(Tensor& out);

 private:
  std::vector<Engine> engines_;
};

/// Coefficients of one ancestral step t -> s written as
/// x_s = a * x_t + b * eps + noise_std * z.
struct AncestralCoefficients {
  double a = 0.0;
  double b = 0.0;
  double noise_std = 0.0;
};
/// eta scales the injected noise: 1 is ancestral DDPM, 0 is deterministic DDIM.
AncestralCoefficients ddpm_coefficients(int t, int s, const NoiseSchedule& sched, double eta = 1.0);

/// Ancestral DDPM update from step t to the earlier step s (s = 0 is clean
/// data). With `noise == nullptr` the update is the deterministic zero-noise
/// (DDIM, eta = 0) variant. No noise is injected when s = 0.
Tensor ddpm_step(const Tensor& x_t, const Tensor& guided_eps, int t, int s,
                 const NoiseSchedule& sched, NoiseSource* noise);

/// Data prediction recorded at one earlier evaluation of a multistep solver.
struct DpmppEntry {
  int t = 0;
  Tensor x0;
};

/// DPM-Solver++ multistep update (data-prediction form) from history.front().t
/// to step s. `history` is most-recent-first; `order` in {1,2,3} and
/// history.size() >= order. The final transition to s = 0 is first order.
Tensor dpmpp_step(const Tensor& x_t, std::span<const DpmppEntry> history, int s, int order,
                  const NoiseSchedule& sched);

}  // namespace ccfg
