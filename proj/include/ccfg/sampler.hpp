#pragma once

#include <cstdint>
#include <string>

#include "ccfg/denoiser_api.hpp"
#include "ccfg/diffusion.hpp"
#include "ccfg/guidance.hpp"

namespace ccfg {

enum class SamplerMethod { ddpm, ddim, dpmpp };
std::string to_string(SamplerMethod m);
SamplerMethod parse_sampler_method(const std::string& s);

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::dpmpp;
  int steps = 10;
  int order = 3;  // DPM++ only
  std::uint64_t seed = 0;
  int ensemble_count = 1;

  void validate(const NoiseSchedule& sched) const;
};

/// Runs the reverse process from a given x_T. `noise` feeds the ancestral
/// DDPM steps and is ignored by the deterministic methods. Each step calls
/// the guidance module once for the whole batch.
Tensor reverse_process(const Denoiser& denoiser, Tensor x_T, const Guidance& guidance,
                       const SamplerConfig& config, const NoiseSchedule& sched,
                       NoiseSource* noise);

/// Draws `ensemble_count` samples for each of `rows` conditioning items.
/// The result has ensemble_count * rows rows, member-major (member e owns
/// rows [e * rows, (e + 1) * rows)). Row r of member e draws all of its noise
/// from the stream (seed, e, first_item + r), so a sample does not depend on
/// how items are batched.
Tensor sample(const Denoiser& denoiser, int rows, int channels, int height, int width,
              const Guidance& guidance, const SamplerConfig& config,
              const NoiseSchedule& sched, std::uint64_t first_item = 0);

}  // namespace ccfg
