#pragma once

// Linear-Gaussian conditional model with closed-form scores at every noise
// level; the exact oracle for samplers and guidance.

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccfg/denoiser_api.hpp"
#include "ccfg/diffusion.hpp"
#include "ccfg/guidance.hpp"
#include "ccfg/sampler.hpp"

namespace ccfg {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// One conditioning group: observation y = H x + noise, noise ~ N(0, R).
struct ObservationGroup {
  std::string name;
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;
  Eigen::VectorXd y;
};

class GaussianConditionalModel {
 public:
  GaussianConditionalModel(Eigen::VectorXd prior_mean, Eigen::MatrixXd prior_cov,
                           std::vector<ObservationGroup> groups);

  int dimension() const { return static_cast<int>(prior_mean_.size()); }
  int group_count() const { return static_cast<int>(groups_.size()); }
  const std::vector<ObservationGroup>& groups() const { return groups_; }
  std::vector<std::string> group_names() const;

  /// p(x | groups in `subset`); subset 0 is the prior.
  Gaussian conditional(GroupMask subset) const;
  /// The conditional pushed through the forward process to step t (t = 0 is
  /// the clean conditional).
  Gaussian smoothed(GroupMask subset, int t, const NoiseSchedule& sched) const;

  double log_density(const Eigen::VectorXd& x, GroupMask subset, int t, const NoiseSchedule& sched) const;
  /// -Sigma_t^{-1} (x - mu_t)
  Eigen::VectorXd exact_score(const Eigen::VectorXd& x, GroupMask subset, int t,
                              const NoiseSchedule& sched) const;

  /// Gradient of log[p_t(x|C) prod_i p_t(K_i|x)^{w_i}], completed in closed
  /// form as -A x + b without going through eps-space combinations.
  Eigen::VectorXd tilted_score(const Eigen::VectorXd& x, std::span<const GroupMask> subsets,
                               std::span<const double> weights, int t, const NoiseSchedule& sched) const;

  /// Endpoint density p(x|C) prod_i p(K_i|x)^{w_i}; NumericError when the
  /// combined precision is not positive definite.
  Gaussian tilted_distribution(std::span<const GroupMask> subsets, std::span<const double> weights) const;
  Gaussian tilted_distribution(const SubsetWeights& weights) const;

 private:
  void precision_terms(GroupMask subset, int t, const NoiseSchedule& sched, Eigen::MatrixXd& prec,
                       Eigen::VectorXd& shift) const;

  Eigen::VectorXd prior_mean_;
  Eigen::MatrixXd prior_cov_;
  std::vector<ObservationGroup> groups_;
};

/// d = 2, standard normal prior, three scalar observations with distinct gains.
GaussianConditionalModel default_testbed();

/// JSON: {"prior_mean": [...], "prior_cov": [[...]], "groups": [{"name",
/// "H": [[...]], "R": [[...]], "y": [...]}]}. Unknown keys are errors.
GaussianConditionalModel load_testbed(const std::filesystem::path& path);
GaussianConditionalModel parse_testbed(const std::string& json_text);

/// Exact denoiser for the model. Batches are [n, d, 1, 1].
class GaussianOracleDenoiser final : public Denoiser {
 public:
  GaussianOracleDenoiser(const GaussianConditionalModel& model, const NoiseSchedule& sched)
      : model_(model), sched_(sched) {}

  int group_count() const override { return model_.group_count(); }
  Tensor predict_x0(const Tensor& x_t, int t, GroupMask present) const override;
  bool supports_input_vjp() const override { return true; }
  Tensor x0_input_vjp(const Tensor& x_t, int t, GroupMask present, const Tensor& cotangent) const override;

 private:
  const GaussianConditionalModel& model_;
  const NoiseSchedule& sched_;
};

Tensor to_tensor(const Eigen::MatrixXd& rows);       // [n, d] -> [n, d, 1, 1]
Eigen::MatrixXd to_matrix(const Tensor& batch);      // inverse

/// Exact law of a deterministic sampler's output when x_T ~ N(0, I) and the
/// denoiser is affine in x_t (true for the oracle): the sampler is then an
/// affine map, recovered from d + 1 probe runs.
Gaussian affine_pushforward(const Denoiser& denoiser, int dimension, const Guidance& guidance,
                            const SamplerConfig& config, const NoiseSchedule& sched);

struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd mean_se;  // standard error of each mean entry
  Eigen::MatrixXd cov_se;   // standard error of each covariance entry
};
/// Sample moments and their standard errors from rows of `samples`.
MomentSummary sample_moments(const Eigen::MatrixXd& samples);

}  // namespace ccfg
