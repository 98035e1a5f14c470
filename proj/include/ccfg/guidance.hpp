#pragma once

// Classifier-free guidance (CFG) and composite classifier-free guidance
// (CCFG): combining noise predictions from differently conditioned views of
// one denoiser.

#include <span>
#include <string>
#include <vector>

#include "ccfg/denoiser_api.hpp"
#include "ccfg/diffusion.hpp"

namespace ccfg {

/// Candidate conditioning subsets, each missing at most `max_omitted` of the
/// `universe` groups. Subsets are bitmasks over universe indices.
struct SubsetFamily {
  std::vector<std::string> universe;
  std::vector<GroupMask> subsets;
  int max_omitted = 0;

  int group_count() const { return static_cast<int>(universe.size()); }
  int size() const { return static_cast<int>(subsets.size()); }
  void validate() const;
  std::string describe(GroupMask subset) const;
};

/// All subsets omitting at most p of k groups, ordered by omission count and
/// then lexicographically by the omitted indices. The empty subset is never
/// included, so p = k behaves like p = k - 1.
SubsetFamily enumerate_subsets(int k, int p);
SubsetFamily enumerate_subsets(std::vector<std::string> universe, int p);

/// Weights on the W-simplex, one per subset of the family.
struct SubsetWeights {
  SubsetFamily family;
  std::vector<double> weights;
  double total = 1.5;

  void validate() const;
  static SubsetWeights uniform(SubsetFamily family, double total);
};

/// Structured text block: group names, subset bitmasks, weights and W.
std::string serialize_weights(const SubsetWeights& weights);
SubsetWeights parse_weights(const std::string& text);

/// eps_cond + w (eps_cond - eps_uncond)
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

/// eps_full + sum_i w_i (eps_subset_i - eps_uncond)
Tensor ccfg_combine(const Tensor& eps_full, std::span<const Tensor> eps_subsets,
                    const Tensor& eps_uncond, std::span<const double> weights);

enum class Scheme { direct, cfg, ccfg };
std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

/// Inference scheme: no guidance, CFG with one weight, or CCFG with subset weights.
struct Guidance {
  Scheme scheme = Scheme::direct;
  std::vector<GroupMask> subsets;
  std::vector<double> weights;

  static Guidance direct();
  static Guidance cfg(double w, int group_count);
  static Guidance ccfg(const SubsetWeights& weights);

  /// Distinct conditioning views evaluated per step (the NFE per step).
  int views_per_step(int group_count) const;
};

struct GuidedEvaluation {
  Tensor guided_eps;
  /// Distinct views in evaluation order: full first, then subsets, then empty.
  std::vector<GroupMask> views;
  std::vector<Tensor> view_eps;
  /// guided_eps == sum_v coefficient[v] * view_eps[v]
  std::vector<double> view_coefficients;
};

/// One guided noise prediction. Identical conditioning views are evaluated
/// once, so CFG costs 2 denoiser calls and CCFG with m distinct proper
/// subsets costs m + 2.
GuidedEvaluation evaluate_guidance(const Denoiser& denoiser, const Tensor& x_t, int t,
                                   const Guidance& guidance, const NoiseSchedule& sched);

/// CCFG guided eps; rejects empty weight sets.
Tensor evaluate_guided_eps(const Denoiser& denoiser, const Tensor& x_t, int t,
                           const SubsetWeights& weights, const NoiseSchedule& sched);

}  // namespace ccfg
