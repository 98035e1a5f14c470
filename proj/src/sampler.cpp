#include "ccfg/sampler.hpp"

#include <deque>
#include <memory>

namespace ccfg {

std::string to_string(SamplerMethod m) {
  switch (m) {
    case SamplerMethod::ddpm: return "ddpm";
    case SamplerMethod::ddim: return "ddim";
    case SamplerMethod::dpmpp: return "dpmpp";
  }
  return "?";
}

SamplerMethod parse_sampler_method(const std::string& s) {
  if (s == "ddpm") return SamplerMethod::ddpm;
  if (s == "ddim") return SamplerMethod::ddim;
  if (s == "dpmpp" || s == "dpmpp-multistep") return SamplerMethod::dpmpp;
  throw ValidationError("unknown sampler method '" + s + "' (expected ddpm, ddim or dpmpp)");
}

void SamplerConfig::validate(const NoiseSchedule& sched) const {
  if (steps < 1 || steps > sched.steps()) {
    throw ValidationError("sampler steps must lie in [1, " + std::to_string(sched.steps()) + "]");
  }
  if (method == SamplerMethod::dpmpp) {
    if (order < 1 || order > 3) throw ValidationError("DPM++ order must be 1, 2 or 3");
    if (steps < order) throw ValidationError("DPM++ needs steps >= order");
  }
  if (ensemble_count < 1) throw ValidationError("ensemble_count must be at least 1");
}

Tensor reverse_process(const Denoiser& denoiser, Tensor x, const Guidance& guidance,
                       const SamplerConfig& config, const NoiseSchedule& sched,
                       NoiseSource* noise) {
  config.validate(sched);
  const std::vector<int> ts = inference_timesteps(sched.steps(), config.steps);
  std::deque<DpmppEntry> history;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int s = i + 1 < ts.size() ? ts[i + 1] : 0;
    Tensor eps = evaluate_guidance(denoiser, x, t, guidance, sched).guided_eps;
    switch (config.method) {
      case SamplerMethod::ddpm:
        x = ddpm_step(x, eps, t, s, sched, noise);
        break;
      case SamplerMethod::ddim:
        x = ddpm_step(x, eps, t, s, sched, nullptr);
        break;
      case SamplerMethod::dpmpp: {
        history.push_front(DpmppEntry{t, eps_to_x0(x, eps, t, sched)});
        if (history.size() > 3) history.pop_back();
        // warm-up: order grows with the available history
        const int order = std::min<int>(config.order, static_cast<int>(history.size()));
        std::vector<DpmppEntry> h(history.begin(), history.end());
        x = dpmpp_step(x, h, s, order, sched);
        break;
      }
    }
  }
  return x;
}

Tensor sample(const Denoiser& denoiser, int rows, int channels, int height, int width,
              const Guidance& guidance, const SamplerConfig& config,
              const NoiseSchedule& sched, std::uint64_t first_item) {
  config.validate(sched);
  if (rows < 1) throw ValidationError("sample: rows must be positive");
  const int members = config.ensemble_count;
  if (denoiser.rows() != 0 && denoiser.rows() != rows) {
    throw DimensionError("sample: denoiser is bound to " + std::to_string(denoiser.rows()) +
                         " rows, asked for " + std::to_string(rows));
  }
  std::vector<std::uint64_t> seeds;
  seeds.reserve(static_cast<std::size_t>(rows) * members);
  for (int e = 0; e < members; ++e) {
    for (int r = 0; r < rows; ++r) {
      seeds.push_back(stream_seed({config.seed, static_cast<std::uint64_t>(e), first_item + r}));
    }
  }
  NoiseSource noise(std::move(seeds));
  Tensor x(rows * members, channels, height, width);
  noise.fill(x);

  std::unique_ptr<ReplicatedDenoiser> replicated;
  const Denoiser* model = &denoiser;
  if (members > 1 && denoiser.rows() != 0) {
    replicated = std::make_unique<ReplicatedDenoiser>(denoiser, members);
    model = replicated.get();
  }
  return reverse_process(*model, std::move(x), guidance, config, sched, &noise);
}

}  // namespace ccfg
