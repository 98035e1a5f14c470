#pragma once

#include <cstdint>
#include <vector>

#include "ccfg/grid.hpp"

namespace ccfg {

/// Knobs for the synthetic paired-wind generator.
struct SyntheticConfig {
  int hr_size = 32;
  int scale_factor = 8;
  /// Amplitude (m/s) of the smooth additive bias on the low-res speed.
  double bias_amplitude = 1.0;
  /// Std of the white noise on low-res speed (m/s); direction noise is 10x in degrees.
  double noise_std = 0.3;
  /// Relative amplitude of unresolved small-scale speed fluctuations.
  double turbulence = 0.08;
};

/// Deterministic given (seed, config). Terrain is smoothed band-limited
/// noise; the high-res wind is a base flow sped up over ridges and deflected
/// along terrain contours; the low-res inputs are coarsened high-res fields
/// plus a low-frequency bias field and noise, so the two resolutions do not
/// agree exactly. All values are rounded to float32 precision.
SamplePair generate_synthetic_pair(std::uint64_t seed, const SyntheticConfig& config = {});

/// Generates `count` pairs with seeds derived from `seed` and replaces each
/// pair's stats with the domain-wide statistics of the whole set.
std::vector<SamplePair> generate_synthetic_set(std::uint64_t seed, int count,
                                               const SyntheticConfig& config = {});

/// The ten variables emitted by the generator, in manifest order.
std::vector<VariableSpec> synthetic_variable_specs();

}  // namespace ccfg
