#pragma once

// Simplex-constrained subset-weight selection with periodic greedy pruning.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ccfg/denoiser_api.hpp"
#include "ccfg/diffusion.hpp"
#include "ccfg/guidance.hpp"

namespace ccfg {

enum class GradientMode { finite_difference, analytic };
std::string to_string(GradientMode m);
GradientMode parse_gradient_mode(const std::string& s);

struct SelectionConfig {
  int max_omitted = 1;   // p
  int budget = 2;        // m
  int iterations = 30;   // N
  double total = 1.5;    // W
  double alpha = 0.0;    // L1 decay
  double beta = 0.0;     // L2 decay
  double step_size = 0.5;
  int batch = 16;
  int inner_steps = 5;   // DDPM steps of the inner sampler
  GradientMode gradient_mode = GradientMode::finite_difference;
  double fd_step = 1e-3;
  std::uint64_t seed = 0;

  void validate(int subset_count) const;
};

/// Euclidean projection onto {w >= 0, sum w = total} (sort and threshold).
std::vector<double> project_simplex(std::span<const double> v, double total);

/// One mini-batch for the selection loss: a denoiser bound to the batch's
/// conditioning (or unbound) and the matching clean targets.
struct SelectionBatch {
  std::shared_ptr<const Denoiser> denoiser;
  Tensor targets;
};
using BatchProvider = std::function<SelectionBatch(int iteration)>;

/// Runs the inner DDPM sampler with CCFG weights under the fixed noise
/// stream `noise_seed`, returning mean |x0 - target| + alpha |w|_1 +
/// beta |w|_2. When `grad` is non-null it receives dL/dw, by central
/// differences or by reverse-mode through the sampler per `config`.
double selection_loss(const Denoiser& denoiser, const Tensor& targets, std::span<const GroupMask> subsets,
                      std::span<const double> weights, const SelectionConfig& config,
                      const NoiseSchedule& sched, std::uint64_t noise_seed, std::vector<double>* grad = nullptr);

/// Drops the subset with the smallest weight (lowest index on ties) and
/// projects the rest back onto the simplex. Returns false, leaving the
/// weights untouched, when the family is already at `budget`.
bool prune_least_impactful(SubsetWeights& weights, int budget);

struct PruneEvent {
  int iteration = 0;
  GroupMask subset = 0;
  std::string members;
  double weight = 0.0;
};

struct SelectionTraceRow {
  int iteration = 0;
  double loss = 0.0;
  /// One entry per subset of the full family; pruned subsets read 0.
  std::vector<double> weights;
  std::vector<bool> active;
  bool pruned = false;
  PruneEvent prune;
};

struct SelectionTrace {
  SubsetFamily family;
  std::vector<SelectionTraceRow> rows;
  std::vector<PruneEvent> prunes;

  void write_csv(const std::filesystem::path& path) const;
};

struct SelectionResult {
  SubsetWeights weights;
  SelectionTrace trace;
};

/// Iteration at which pruning happens: ceil(N / (n_p - m + 1)).
int prune_interval(int iterations, int subset_count, int budget);

/// Initializes w = W / n_p, then per iteration: gradient step, prune when
/// the iteration is a multiple of the prune interval, project.
SelectionResult run_selection(const std::vector<std::string>& groups, const BatchProvider& batches,
                              const SelectionConfig& config, const NoiseSchedule& sched);

}  // namespace ccfg
