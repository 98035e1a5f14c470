#include "ccfg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "ccfg/random.hpp"

namespace ccfg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

VariableSpec spec(const char* name, VariableKind kind, Resolution res, Encoding enc,
                  const char* units, const char* stats_key) {
  VariableSpec s;
  s.name = name;
  s.kind = kind;
  s.resolution = res;
  s.encoding = enc;
  s.dropout_group = kind == VariableKind::input ? name : "";
  s.units = units;
  s.stats_key = stats_key;
  return s;
}

// Sum of random plane waves with wavelengths in [lmin, lmax] cells; roughly unit variance.
FieldGrid random_waves(Engine& rng, int n, double lmin, double lmax, int modes) {
  FieldGrid g(n, n, 0.0);
  const double amp = std::sqrt(2.0 / modes);
  for (int m = 0; m < modes; ++m) {
    const double wavelength = uniform(rng, lmin, lmax);
    const double angle = uniform(rng, 0.0, kTwoPi);
    const double phase = uniform(rng, 0.0, kTwoPi);
    const double kx = kTwoPi / wavelength * std::cos(angle);
    const double ky = kTwoPi / wavelength * std::sin(angle);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) g(y, x) += amp * std::sin(kx * x + ky * y + phase);
    }
  }
  return g;
}

double mean_of(const FieldGrid& g) {
  double s = 0.0;
  for (double v : g.values) s += v;
  return s / static_cast<double>(g.size());
}

void round_to_float(FieldGrid& g) {
  for (double& v : g.values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

std::vector<VariableSpec> synthetic_variable_specs() {
  using K = VariableKind;
  using R = Resolution;
  using E = Encoding;
  return {
      spec(vars::hr_speed, K::target, R::high, E::scalar, "m/s", vars::speed_stats),
      spec(vars::hr_direction, K::target, R::high, E::direction_sincos, "degrees", ""),
      spec(vars::topography, K::input, R::static_field, E::scalar, "m", vars::topography),
      spec(vars::land_use, K::input, R::static_field, E::scalar, "category", vars::land_use),
      spec(vars::lr_speed, K::input, R::low, E::scalar, "m/s", vars::speed_stats),
      spec(vars::lr_direction, K::input, R::low, E::direction_sincos, "degrees", ""),
      spec(vars::surface_pressure, K::input, R::low, E::scalar, "hPa", vars::surface_pressure),
      spec(vars::temperature_2m, K::input, R::low, E::scalar, "degC", vars::temperature_2m),
      spec(vars::precipitation, K::input, R::low, E::scalar, "mm/h", vars::precipitation),
      spec(vars::boundary_layer_height, K::input, R::low, E::scalar, "m",
           vars::boundary_layer_height),
  };
}

SamplePair generate_synthetic_pair(std::uint64_t seed, const SyntheticConfig& config) {
  const int n = config.hr_size;
  const int s = config.scale_factor;
  if (s < 1 || n < s || n % s != 0) {
    throw DimensionError("generate_synthetic_pair: hr_size must be a positive multiple of scale_factor");
  }
  const int nl = n / s;
  Engine rng(stream_seed({seed, 0x73796e7468ULL}));

  // Terrain: a few hills plus a periodic ridge line.
  FieldGrid terrain(n, n, 0.0, "m");
  for (int b = 0; b < 5; ++b) {
    const double a = uniform(rng, 150.0, 700.0);
    const double r = uniform(rng, n / 10.0, n / 4.0);
    const double cx = uniform(rng, -n / 4.0, 1.25 * n);
    const double cy = uniform(rng, -n / 4.0, 1.25 * n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        terrain(y, x) += a * std::exp(-d2 / (2.0 * r * r));
      }
    }
  }
  {
    const double amp = uniform(rng, 0.0, 400.0);
    const double phi = uniform(rng, 0.0, kTwoPi);
    const double lambda = uniform(rng, n / 2.0, 1.5 * n);
    const double psi = uniform(rng, 0.0, kTwoPi);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double u = (x * std::cos(phi) + y * std::sin(phi)) / lambda;
        terrain(y, x) += amp * (0.5 + 0.5 * std::sin(kTwoPi * u + psi));
      }
    }
  }
  const double terrain_mean = mean_of(terrain);

  // Land use: banded categories 0..23, lower in rugged terrain.
  FieldGrid land_use(n, n, 0.0, "category");
  {
    const double l1 = uniform(rng, n / 2.0, 2.0 * n);
    const double l2 = uniform(rng, n / 2.0, 2.0 * n);
    const double a = uniform(rng, 0.0, kTwoPi);
    const double b = uniform(rng, 0.0, kTwoPi);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double c = 12.0 + 9.0 * std::sin(kTwoPi * x / l1 + a) * std::cos(kTwoPi * y / l2 + b) -
                         terrain(y, x) / 150.0;
        land_use(y, x) = std::clamp(std::floor(c), 0.0, 23.0);
      }
    }
  }

  // Synoptic state.
  const double base_speed = uniform(rng, 3.0, 13.0);
  const double base_dir = uniform(rng, 0.0, 360.0);
  const double gx = uniform(rng, -0.3, 0.3);
  const double gy = uniform(rng, -0.3, 0.3);
  const double blh0 = uniform(rng, 300.0, 2000.0);
  const double blh_phase = uniform(rng, 0.0, kTwoPi);
  const auto [dsin, dcos] = encode_direction(base_dir);
  const double dx_to = -dsin;  // unit vector the flow blows toward
  const double dy_to = -dcos;

  FieldGrid blh(n, n, 0.0, "m");
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      blh(y, x) = blh0 * (1.0 + 0.1 * std::sin(kTwoPi * (x + y) / (2.0 * n) + blh_phase));
    }
  }

  FieldGrid waves_speed = random_waves(rng, n, 2.5, 6.0, 8);
  FieldGrid waves_dir = random_waves(rng, n, 2.5, 6.0, 8);

  FieldGrid hr_speed(n, n, 0.0, "m/s");
  FieldGrid hr_dir(n, n, 0.0, "degrees");
  FieldGrid u_hr(n, n, 0.0), v_hr(n, n, 0.0);
  constexpr double kDeflection = 0.5;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double big = base_speed * (1.0 + gx * (x / double(n) - 0.5) + gy * (y / double(n) - 0.5));
      const double hn = (terrain(y, x) - terrain_mean) / 300.0;
      const double speedup = 0.5 * std::exp(-blh(y, x) / 1200.0);
      const double rough = land_use(y, x) / 23.0;
      const double factor = std::max(0.2, 1.0 + speedup * hn - 0.2 * rough);
      // terrain gradient, per 100 m per cell
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, n - 1);
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, n - 1);
      const double tx = (terrain(y, xp) - terrain(y, xm)) / ((xp - xm) * 100.0);
      const double ty = (terrain(yp, x) - terrain(ym, x)) / ((yp - ym) * 100.0);
      const double along = dx_to * tx + dy_to * ty;
      double u = big * factor * dx_to - kDeflection * big * along * tx;
      double v = big * factor * dy_to - kDeflection * big * along * ty;
      double speed = std::hypot(u, v) * (1.0 + config.turbulence * waves_speed(y, x));
      speed = std::max(speed, 0.05);
      double from = decode_direction(-u, -v);
      from += 60.0 * config.turbulence * waves_dir(y, x);
      from = decode_direction(encode_direction(from).first, encode_direction(from).second);
      hr_speed(y, x) = speed;
      hr_dir(y, x) = from;
    }
  }
  round_to_float(hr_speed);
  round_to_float(hr_dir);
  round_to_float(terrain);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto [sn, cs] = encode_direction(hr_dir(y, x));
      u_hr(y, x) = -hr_speed(y, x) * sn;
      v_hr(y, x) = -hr_speed(y, x) * cs;
    }
  }

  // Low-res inputs.
  FieldGrid lr_speed = coarsen(hr_speed, s);
  FieldGrid lr_dir(nl, nl, 0.0, "degrees");
  {
    const FieldGrid u_lr = coarsen(u_hr, s);
    const FieldGrid v_lr = coarsen(v_hr, s);
    const double phx = uniform(rng, 0.0, kTwoPi);
    const double phy = uniform(rng, 0.0, kTwoPi);
    for (int y = 0; y < nl; ++y) {
      for (int x = 0; x < nl; ++x) {
        const double bias = config.bias_amplitude *
                            (0.6 + 0.4 * std::sin(kTwoPi * x / nl + phx) * std::cos(kTwoPi * y / nl + phy));
        double noise = config.noise_std > 0.0 ? config.noise_std * standard_normal(rng) : 0.0;
        lr_speed(y, x) = std::max(lr_speed(y, x) + bias + noise, 0.0);
        double d = decode_direction(-u_lr(y, x), -v_lr(y, x));
        if (config.noise_std > 0.0) d += 10.0 * config.noise_std * standard_normal(rng);
        const auto [sn, cs] = encode_direction(d);
        lr_dir(y, x) = decode_direction(sn, cs);
      }
    }
  }
  const FieldGrid terrain_lr = coarsen(terrain, s);
  FieldGrid pressure(nl, nl, 0.0, "hPa");
  FieldGrid temperature(nl, nl, 0.0, "degC");
  FieldGrid precip(nl, nl, 0.0, "mm/h");
  FieldGrid blh_lr = coarsen(blh, s);
  {
    const double t0 = uniform(rng, -5.0, 25.0);
    const double p0 = uniform(rng, -0.5, 1.5);
    const FieldGrid rain = random_waves(rng, nl, 2.0, 6.0, 4);
    for (int y = 0; y < nl; ++y) {
      for (int x = 0; x < nl; ++x) {
        // geostrophic balance: pressure falls to the left of the flow
        const double across = (-dy_to * (x + 0.5) + dx_to * (y + 0.5)) / nl - 0.5;
        pressure(y, x) = 1013.0 - 0.12 * terrain_lr(y, x) + 0.15 * base_speed * across +
                         0.5 * standard_normal(rng);
        temperature(y, x) = t0 - 6.5 * terrain_lr(y, x) / 1000.0 + 0.3 * standard_normal(rng);
        precip(y, x) = std::max(0.0, p0 + 0.8 * rain(y, x));
        blh_lr(y, x) += 30.0 * standard_normal(rng);
      }
    }
  }
  for (FieldGrid* g : {&lr_speed, &lr_dir, &land_use, &pressure, &temperature, &precip, &blh_lr}) {
    round_to_float(*g);
  }

  const auto specs = synthetic_variable_specs();
  auto find_spec = [&](const char* name) {
    return *std::find_if(specs.begin(), specs.end(), [&](const VariableSpec& v) { return v.name == name; });
  };
  SamplePair pair;
  pair.scale_factor = s;
  pair.timestamp_id = "synthetic-" + std::to_string(seed);
  pair.targets.push_back({find_spec(vars::hr_speed), hr_speed});
  pair.targets.push_back({find_spec(vars::hr_direction), hr_dir});
  std::vector<VariableGrid> cond;
  cond.push_back({find_spec(vars::topography), terrain});
  cond.push_back({find_spec(vars::land_use), land_use});
  cond.push_back({find_spec(vars::lr_speed), lr_speed});
  cond.push_back({find_spec(vars::lr_direction), lr_dir});
  cond.push_back({find_spec(vars::surface_pressure), pressure});
  cond.push_back({find_spec(vars::temperature_2m), temperature});
  cond.push_back({find_spec(vars::precipitation), precip});
  cond.push_back({find_spec(vars::boundary_layer_height), blh_lr});
  for (auto& v : cond) v.grid.units = v.spec.units;
  for (auto& t : pair.targets) t.grid.units = t.spec.units;
  pair.conditioning = ConditioningSet(std::move(cond));
  pair.stats = compute_stats({pair});
  pair.validate();
  return pair;
}

std::vector<SamplePair> generate_synthetic_set(std::uint64_t seed, int count,
                                               const SyntheticConfig& config) {
  if (count < 1) throw ValidationError("generate_synthetic_set: count must be positive");
  std::vector<SamplePair> pairs;
  pairs.reserve(count);
  for (int i = 0; i < count; ++i) {
    SamplePair p = generate_synthetic_pair(stream_seed({seed, static_cast<std::uint64_t>(i)}), config);
    p.timestamp_id = "t" + std::to_string(i);
    pairs.push_back(std::move(p));
  }
  const StandardizationStats stats = compute_stats(pairs);
  for (auto& p : pairs) p.stats = stats;
  return pairs;
}

}  // namespace ccfg
