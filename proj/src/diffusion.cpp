#include "ccfg/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace ccfg {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw ValidationError("noise schedule needs at least 2 steps");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ValidationError("noise schedule requires 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps_ = steps;
  s.beta_.assign(steps + 1, 0.0);
  s.alpha_bar_.assign(steps + 1, 1.0);
  s.sigma_.assign(steps + 1, 0.0);
  for (int t = 1; t <= steps; ++t) {
    s.beta_[t] = beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t]);
    s.sigma_[t] = std::sqrt(1.0 - s.alpha_bar_[t]);
  }
  return s;
}

namespace {

void require_step(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(sched.steps()) + "]");
  }
}

double log_snr_half(int t, const NoiseSchedule& sched) {
  return std::log(std::sqrt(sched.alpha_bar(t)) / sched.sigma(t));
}

}  // namespace

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "forward_diffuse");
  require_step(t, sched);
  return lincomb(std::sqrt(sched.alpha_bar(t)), x0, sched.sigma(t), eps);
}

Tensor x0_to_eps(const Tensor& x_t, const Tensor& x0_pred, int t, const NoiseSchedule& sched) {
  require_same_shape(x_t, x0_pred, "x0_to_eps");
  if (t == 0) throw NumericError("x0_to_eps: sigma is zero at t = 0");
  require_step(t, sched);
  const double s = sched.sigma(t);
  return lincomb(1.0 / s, x_t, -std::sqrt(sched.alpha_bar(t)) / s, x0_pred);
}

Tensor eps_to_x0(const Tensor& x_t, const Tensor& eps, int t, const NoiseSchedule& sched) {
  require_same_shape(x_t, eps, "eps_to_x0");
  require_step(t, sched);
  const double ra = std::sqrt(sched.alpha_bar(t));
  return lincomb(1.0 / ra, x_t, -sched.sigma(t) / ra, eps);
}

Tensor eps_to_score(const Tensor& eps, int t, const NoiseSchedule& sched) {
  if (t == 0) throw NumericError("eps_to_score: sigma is zero at t = 0");
  require_step(t, sched);
  Tensor out = eps;
  scale(out, -1.0 / sched.sigma(t));
  return out;
}

Tensor score_to_eps(const Tensor& score, int t, const NoiseSchedule& sched) {
  require_step(t, sched);
  Tensor out = score;
  scale(out, -sched.sigma(t));
  return out;
}

std::vector<int> inference_timesteps(int total_steps, int count) {
  if (count < 1 || count > total_steps) {
    throw ValidationError("inference step count must lie in [1, " + std::to_string(total_steps) + "]");
  }
  // count + 1 equally spaced boundaries T, ..., 0; the model is evaluated at
  // all but the last. Putting an evaluation at t = 1 instead wastes it and
  // leaves one oversized log-SNR step that higher-order solvers amplify.
  std::vector<int> ts(count);
  for (int i = 0; i < count; ++i) {
    ts[i] = static_cast<int>(std::lround(static_cast<double>(total_steps) * (count - i) / count));
  }
  return ts;
}

NoiseSource::NoiseSource(std::vector<std::uint64_t> row_seeds) {
  engines_.reserve(row_seeds.size());
  for (auto s : row_seeds) engines_.emplace_back(s);
}

void NoiseSource::fill(Tensor& out) {
  if (out.n != rows()) throw DimensionError("NoiseSource: row count mismatch");
  for (int r = 0; r < out.n; ++r) {
    double* p = out.sample(r);
    for (std::size_t i = 0; i < out.sample_size(); ++i) p[i] = standard_normal(engines_[r]);
  }
}

AncestralCoefficients ddpm_coefficients(int t, int s, const NoiseSchedule& sched, double eta) {
  require_step(t, sched);
  if (s < 0 || s >= t) throw ValidationError("ddpm step must move to an earlier timestep");
  const double ab_t = sched.alpha_bar(t);
  const double ab_s = sched.alpha_bar(s);
  if (eta < 0.0) throw ValidationError("eta must be nonnegative");
  // eta = 1 is the posterior q(x_s | x_t, x0) variance, eta = 0 is DDIM
  const double var = s == 0 ? 0.0 : eta * eta * (1.0 - ab_s) / (1.0 - ab_t) * (1.0 - ab_t / ab_s);
  const double c_eps = std::sqrt(std::max(1.0 - ab_s - var, 0.0));
  AncestralCoefficients k;
  k.a = std::sqrt(ab_s / ab_t);
  k.b = c_eps - k.a * sched.sigma(t);
  k.noise_std = std::sqrt(var);
  return k;
}

Tensor ddpm_step(const Tensor& x_t, const Tensor& guided_eps, int t, int s,
                 const NoiseSchedule& sched, NoiseSource* noise) {
  require_same_shape(x_t, guided_eps, "ddpm_step");
  if (s == 0) {
    // Final step: return the denoised estimate with no noise.
    return eps_to_x0(x_t, guided_eps, t, sched);
  }
  const AncestralCoefficients k = ddpm_coefficients(t, s, sched, noise != nullptr ? 1.0 : 0.0);
  Tensor out = lincomb(k.a, x_t, k.b, guided_eps);
  if (noise != nullptr && k.noise_std > 0.0) {
    Tensor z = Tensor::like(x_t);
    noise->fill(z);
    axpy(k.noise_std, z, out);
  }
  return out;
}

Tensor dpmpp_step(const Tensor& x_t, std::span<const DpmppEntry> history, int s, int order,
                  const NoiseSchedule& sched) {
  if (order < 1 || order > 3) throw ValidationError("DPM++ order must be 1, 2 or 3");
  if (history.size() < static_cast<std::size_t>(order)) {
    throw ValidationError("DPM++ history shorter than the requested order");
  }
  const DpmppEntry& cur = history[0];
  require_same_shape(x_t, cur.x0, "dpmpp_step");
  if (s == 0) return cur.x0;
  if (s >= cur.t) throw ValidationError("DPM++ step must move to an earlier timestep");

  const double alpha_s = std::sqrt(sched.alpha_bar(s));
  const double ratio = sched.sigma(s) / sched.sigma(cur.t);
  const double lam_s = log_snr_half(s, sched);
  const double lam0 = log_snr_half(cur.t, sched);
  const double h = lam_s - lam0;
  const double phi1 = std::expm1(-h);

  Tensor out = lincomb(ratio, x_t, -alpha_s * phi1, cur.x0);
  if (order == 1) return out;

  const DpmppEntry& prev1 = history[1];
  const double lam1 = log_snr_half(prev1.t, sched);
  const double r0 = (lam0 - lam1) / h;
  if (order == 2) {
    // D1 = (m0 - m1) / r0
    const double c = -0.5 * alpha_s * phi1 / r0;
    axpy(c, cur.x0, out);
    axpy(-c, prev1.x0, out);
    return out;
  }

  const DpmppEntry& prev2 = history[2];
  const double lam2 = log_snr_half(prev2.t, sched);
  const double r1 = (lam1 - lam2) / h;
  const double phi2 = phi1 / h + 1.0;
  const double phi3 = phi2 / h - 0.5;
  // D1_0 = (m0 - m1)/r0, D1_1 = (m1 - m2)/r1
  // D1 = D1_0 + r0/(r0+r1) (D1_0 - D1_1), D2 = (D1_0 - D1_1)/(r0+r1)
  // out += alpha_s * phi2 * D1 - alpha_s * phi3 * D2
  const double k1 = alpha_s * phi2;
  const double k2 = alpha_s * phi3;
  const double w_d10 = k1 * (1.0 + r0 / (r0 + r1)) - k2 / (r0 + r1);
  const double w_d11 = -k1 * r0 / (r0 + r1) + k2 / (r0 + r1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d10 = (cur.x0.data[i] - prev1.x0.data[i]) / r0;
    const double d11 = (prev1.x0.data[i] - prev2.x0.data[i]) / r1;
    out.data[i] += w_d10 * d10 + w_d11 * d11;
  }
  return out;
}

}  // namespace ccfg
