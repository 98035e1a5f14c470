#include "ccfg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ccfg/random.hpp"

namespace ccfg {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void require_positive_shape(int h, int w, const char* what) {
  if (h < 1 || w < 1) {
    throw DimensionError(std::string(what) + ": grid dimensions must be >= 1");
  }
}

FieldGrid crop_grid(const FieldGrid& g, int y0, int x0, int h, int w) {
  FieldGrid out(h, w, 0.0, g.units);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out(y, x) = g(y0 + y, x0 + x);
  }
  return out;
}

}  // namespace

FieldGrid::FieldGrid(int h, int w, double fill, std::string u)
    : height(h), width(w), units(std::move(u)) {
  require_positive_shape(h, w, "FieldGrid");
  values.assign(static_cast<std::size_t>(h) * w, fill);
}

FieldGrid::FieldGrid(int h, int w, std::vector<double> v, std::string u)
    : height(h), width(w), values(std::move(v)), units(std::move(u)) {
  validate();
}

void FieldGrid::validate() const {
  require_positive_shape(height, width, "FieldGrid");
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionError("FieldGrid: expected " + std::to_string(height * width) +
                         " values, got " + std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("FieldGrid: non-finite value");
  }
}

bool operator==(const FieldGrid& a, const FieldGrid& b) {
  return a.height == b.height && a.width == b.width && a.units == b.units && a.values == b.values;
}

std::string to_string(VariableKind v) { return v == VariableKind::target ? "target" : "input"; }

std::string to_string(Resolution v) {
  switch (v) {
    case Resolution::high: return "high";
    case Resolution::low: return "low";
    case Resolution::static_field: return "static";
  }
  return "?";
}

std::string to_string(Encoding v) {
  return v == Encoding::scalar ? "scalar" : "direction-sincos";
}

VariableKind parse_kind(const std::string& s) {
  if (s == "target") return VariableKind::target;
  if (s == "input") return VariableKind::input;
  throw FormatError("unknown variable kind '" + s + "'");
}

Resolution parse_resolution(const std::string& s) {
  if (s == "high") return Resolution::high;
  if (s == "low") return Resolution::low;
  if (s == "static") return Resolution::static_field;
  throw FormatError("unknown resolution '" + s + "'");
}

Encoding parse_encoding(const std::string& s) {
  if (s == "scalar") return Encoding::scalar;
  if (s == "direction-sincos") return Encoding::direction_sincos;
  throw FormatError("unknown encoding '" + s + "'");
}

const Moments& StandardizationStats::at(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) throw ValidationError("no standardization stats for '" + key + "'");
  return it->second;
}

// ---------------------------------------------------------------------------

ConditioningSet::ConditioningSet(std::vector<VariableGrid> variables)
    : variables_(std::move(variables)) {
  for (const auto& v : variables_) {
    if (std::find(groups_.begin(), groups_.end(), v.spec.dropout_group) == groups_.end()) {
      groups_.push_back(v.spec.dropout_group);
    }
  }
  presence_.assign(groups_.size(), true);
}

int ConditioningSet::group_index(const std::string& group) const {
  auto it = std::find(groups_.begin(), groups_.end(), group);
  return it == groups_.end() ? -1 : static_cast<int>(it - groups_.begin());
}

bool ConditioningSet::is_present(const std::string& group) const {
  int i = group_index(group);
  if (i < 0) throw ValidationError("unknown dropout group '" + group + "'");
  return presence_[i];
}

std::uint32_t ConditioningSet::presence_mask() const {
  std::uint32_t mask = 0;
  for (std::size_t i = 0; i < presence_.size(); ++i) {
    if (presence_[i]) mask |= (1u << i);
  }
  return mask;
}

int ConditioningSet::channel_count() const {
  int c = 0;
  for (const auto& v : variables_) c += v.spec.channel_count();
  return c;
}

const VariableGrid* ConditioningSet::find(const std::string& name) const {
  for (const auto& v : variables_) {
    if (v.spec.name == name) return &v;
  }
  return nullptr;
}

ConditioningSet ConditioningSet::with_presence(std::vector<bool> presence) const {
  if (presence.size() != groups_.size()) {
    throw ValidationError("presence vector does not match group count");
  }
  ConditioningSet out = *this;
  out.presence_ = std::move(presence);
  return out;
}

ConditioningSet ConditioningSet::restricted_to(const std::vector<std::string>& names) const {
  std::vector<VariableGrid> kept;
  for (const auto& v : variables_) {
    if (std::find(names.begin(), names.end(), v.spec.name) != names.end()) kept.push_back(v);
  }
  if (kept.size() != names.size()) {
    for (const auto& n : names) {
      if (!find(n)) throw ValidationError("conditioning has no variable '" + n + "'");
    }
  }
  return ConditioningSet(std::move(kept));
}

const VariableGrid& SamplePair::target(const std::string& name) const {
  for (const auto& t : targets) {
    if (t.spec.name == name) return t;
  }
  throw ValidationError("sample has no target '" + name + "'");
}

int SamplePair::hr_height() const {
  if (targets.empty()) throw ValidationError("sample has no targets");
  return targets.front().grid.height;
}

int SamplePair::hr_width() const {
  if (targets.empty()) throw ValidationError("sample has no targets");
  return targets.front().grid.width;
}

void SamplePair::validate() const {
  if (scale_factor < 1) throw ValidationError("scale factor must be positive");
  const int h = hr_height();
  const int w = hr_width();
  if (h % scale_factor != 0 || w % scale_factor != 0) {
    throw DimensionError("hr shape not divisible by scale factor");
  }
  for (const auto& t : targets) {
    t.grid.validate();
    if (t.grid.height != h || t.grid.width != w) throw DimensionError("targets differ in shape");
  }
  for (const auto& v : conditioning.variables()) {
    v.grid.validate();
    const bool low = v.spec.resolution == Resolution::low;
    const int eh = low ? h / scale_factor : h;
    const int ew = low ? w / scale_factor : w;
    if (v.grid.height != eh || v.grid.width != ew) {
      throw DimensionError("variable '" + v.spec.name + "' has shape " +
                           std::to_string(v.grid.height) + "x" + std::to_string(v.grid.width) +
                           ", expected " + std::to_string(eh) + "x" + std::to_string(ew));
    }
  }
}

// ---------------------------------------------------------------------------

FieldGrid coarsen(const FieldGrid& grid, int factor) {
  if (factor < 1) throw ValidationError("coarsen: factor must be positive");
  if (grid.height % factor != 0 || grid.width % factor != 0) {
    throw DimensionError("coarsen: " + std::to_string(grid.height) + "x" +
                         std::to_string(grid.width) + " not divisible by " +
                         std::to_string(factor));
  }
  const int oh = grid.height / factor;
  const int ow = grid.width / factor;
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  FieldGrid out(oh, ow, 0.0, grid.units);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) s += grid(y * factor + dy, x * factor + dx);
      }
      out(y, x) = s * inv;
    }
  }
  return out;
}

FieldGrid upsample_bilinear(const FieldGrid& grid, int factor) {
  if (factor < 1) throw ValidationError("upsample_bilinear: factor must be positive");
  grid.validate();
  if (factor == 1) return grid;
  const int oh = grid.height * factor;
  const int ow = grid.width * factor;
  // align corners: output index i sits at source coordinate i * (n_in - 1) / (n_out - 1)
  auto source = [](int i, int n_in, int n_out, int& i0, int& i1, double& frac) {
    if (n_in == 1) {
      i0 = i1 = 0;
      frac = 0.0;
      return;
    }
    const double pos = static_cast<double>(i) * (n_in - 1) / (n_out - 1);
    i0 = std::min(static_cast<int>(std::floor(pos)), n_in - 1);
    i1 = std::min(i0 + 1, n_in - 1);
    frac = pos - i0;
  };
  FieldGrid out(oh, ow, 0.0, grid.units);
  for (int y = 0; y < oh; ++y) {
    int y0, y1;
    double fy;
    source(y, grid.height, oh, y0, y1, fy);
    for (int x = 0; x < ow; ++x) {
      int x0, x1;
      double fx;
      source(x, grid.width, ow, x0, x1, fx);
      const double top = (1.0 - fx) * grid(y0, x0) + fx * grid(y0, x1);
      const double bottom = (1.0 - fx) * grid(y1, x0) + fx * grid(y1, x1);
      out(y, x) = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

std::pair<double, double> encode_direction(double theta_degrees) {
  if (!std::isfinite(theta_degrees)) throw ValidationError("encode_direction: non-finite angle");
  const double wrapped = std::fmod(theta_degrees, 360.0);
  const double r = wrapped * kDegToRad;
  return {std::sin(r), std::cos(r)};
}

double decode_direction(double sin_component, double cos_component) {
  double deg = std::atan2(sin_component, cos_component) / kDegToRad;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

FieldGrid standardize(const FieldGrid& grid, const Moments& stats) {
  if (!(stats.std > 0.0)) throw ValidationError("standardize: std must be positive");
  FieldGrid out = grid;
  for (double& v : out.values) v = (v - stats.mean) / stats.std;
  return out;
}

FieldGrid destandardize(const FieldGrid& grid, const Moments& stats) {
  if (!(stats.std > 0.0)) throw ValidationError("destandardize: std must be positive");
  FieldGrid out = grid;
  for (double& v : out.values) v = v * stats.std + stats.mean;
  return out;
}

ConditioningSet apply_dropout(const ConditioningSet& cond, const std::set<std::string>& dropped_groups) {
  std::vector<bool> presence = cond.presence();
  for (const auto& g : dropped_groups) {
    const int i = cond.group_index(g);
    if (i < 0) throw ValidationError("apply_dropout: unknown dropout group '" + g + "'");
    presence[i] = false;
  }
  return cond.with_presence(std::move(presence));
}

SamplePair sample_crop(const SamplePair& pair, int size, std::uint64_t rng_seed, bool centered) {
  pair.validate();
  const int h = pair.hr_height();
  const int w = pair.hr_width();
  const int s = pair.scale_factor;
  if (size < 1 || size > h || size > w) {
    throw DimensionError("sample_crop: crop size " + std::to_string(size) + " exceeds grid");
  }
  if (size % s != 0) {
    throw DimensionError("sample_crop: crop size not divisible by scale factor");
  }
  int oy = 0;
  int ox = 0;
  if (centered) {
    oy = (h - size) / 2 / s * s;
    ox = (w - size) / 2 / s * s;
  } else {
    Engine rng(stream_seed({rng_seed, 0x63726f70ULL}));
    oy = s * std::uniform_int_distribution<int>(0, (h - size) / s)(rng);
    ox = s * std::uniform_int_distribution<int>(0, (w - size) / s)(rng);
  }
  SamplePair out;
  out.stats = pair.stats;
  out.timestamp_id = pair.timestamp_id;
  out.scale_factor = s;
  for (const auto& t : pair.targets) {
    out.targets.push_back({t.spec, crop_grid(t.grid, oy, ox, size, size)});
  }
  std::vector<VariableGrid> cond;
  for (const auto& v : pair.conditioning.variables()) {
    if (v.spec.resolution == Resolution::low) {
      cond.push_back({v.spec, crop_grid(v.grid, oy / s, ox / s, size / s, size / s)});
    } else {
      cond.push_back({v.spec, crop_grid(v.grid, oy, ox, size, size)});
    }
  }
  out.conditioning = ConditioningSet(std::move(cond)).with_presence(pair.conditioning.presence());
  return out;
}

AssembledConditioning assemble_conditioning(const ConditioningSet& cond,
                                            const StandardizationStats& stats, int hr_height,
                                            int hr_width, int scale_factor) {
  AssembledConditioning out;
  out.channels = Tensor(1, cond.channel_count(), hr_height, hr_width);
  int ch = 0;
  for (const auto& v : cond.variables()) {
    const int group = cond.group_index(v.spec.dropout_group);
    const bool present = cond.presence()[group];
    for (int k = 0; k < v.spec.channel_count(); ++k) out.channel_group.push_back(group);
    if (!present) {
      ch += v.spec.channel_count();
      continue;
    }
    FieldGrid g = v.grid;
    if (v.spec.resolution == Resolution::low) {
      if (g.height * scale_factor != hr_height || g.width * scale_factor != hr_width) {
        throw DimensionError("low-res variable '" + v.spec.name + "' does not match hr shape");
      }
      g = upsample_bilinear(g, scale_factor);
    } else if (g.height != hr_height || g.width != hr_width) {
      throw DimensionError("variable '" + v.spec.name + "' does not match hr shape");
    }
    if (v.spec.encoding == Encoding::direction_sincos) {
      double* s = out.channels.channel(0, ch);
      double* c = out.channels.channel(0, ch + 1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto [sv, cv] = encode_direction(g.values[i]);
        s[i] = sv;
        c[i] = cv;
      }
      ch += 2;
    } else {
      if (!v.spec.stats_key.empty()) g = standardize(g, stats.at(v.spec.stats_key));
      std::copy(g.values.begin(), g.values.end(), out.channels.channel(0, ch));
      ch += 1;
    }
  }
  return out;
}

Tensor assemble_targets(const SamplePair& pair) {
  const auto& speed = pair.target(vars::hr_speed);
  const auto& dir = pair.target(vars::hr_direction);
  const int h = speed.grid.height;
  const int w = speed.grid.width;
  Tensor out(1, 3, h, w);
  const FieldGrid s = standardize(speed.grid, pair.stats.at(vars::speed_stats));
  std::copy(s.values.begin(), s.values.end(), out.channel(0, 0));
  for (std::size_t i = 0; i < dir.grid.size(); ++i) {
    const auto [sv, cv] = encode_direction(dir.grid.values[i]);
    out.channel(0, 1)[i] = sv;
    out.channel(0, 2)[i] = cv;
  }
  return out;
}

FieldGrid speed_from_channels(const Tensor& targets, int row, const StandardizationStats& stats) {
  const Moments& m = stats.at(vars::speed_stats);
  FieldGrid g(targets.h, targets.w, 0.0, "m/s");
  const double* p = targets.channel(row, 0);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = p[i] * m.std + m.mean;
  return g;
}

StandardizationStats compute_stats(const std::vector<SamplePair>& pairs) {
  if (pairs.empty()) throw ValidationError("compute_stats: no samples");
  std::map<std::string, std::pair<double, double>> sums;  // sum, sum of squares
  std::map<std::string, double> counts;
  for (const auto& p : pairs) {
    for (const auto& v : p.conditioning.variables()) {
      if (v.spec.stats_key.empty()) continue;
      // Target and low-res speeds share the low-res speed statistics.
      if (v.spec.stats_key == vars::speed_stats && v.spec.name != vars::lr_speed) continue;
      auto& acc = sums[v.spec.stats_key];
      for (double x : v.grid.values) {
        acc.first += x;
        acc.second += x * x;
      }
      counts[v.spec.stats_key] += static_cast<double>(v.grid.size());
    }
  }
  StandardizationStats stats;
  for (const auto& [key, acc] : sums) {
    const double n = counts[key];
    const double mean = acc.first / n;
    const double var = std::max(acc.second / n - mean * mean, 0.0);
    double sd = std::sqrt(var);
    if (!(sd > 1e-12)) sd = 1.0;
    stats.entries[key] = {mean, sd};
  }
  if (!stats.contains(vars::speed_stats)) {
    // No low-res speed among the inputs: fall back to the target speed.
    double s = 0.0, s2 = 0.0, n = 0.0;
    for (const auto& p : pairs) {
      for (double x : p.target(vars::hr_speed).grid.values) {
        s += x;
        s2 += x * x;
        n += 1.0;
      }
    }
    const double mean = s / n;
    double sd = std::sqrt(std::max(s2 / n - mean * mean, 0.0));
    if (!(sd > 1e-12)) sd = 1.0;
    stats.entries[vars::speed_stats] = {mean, sd};
  }
  return stats;
}

namespace vars {

const std::vector<std::string>& basic_inputs() {
  static const std::vector<std::string> v{topography, lr_speed, lr_direction};
  return v;
}

const std::vector<std::string>& all_inputs() {
  static const std::vector<std::string> v{topography,       lr_speed,       lr_direction,
                                          land_use,         surface_pressure, temperature_2m,
                                          precipitation,    boundary_layer_height};
  return v;
}

const std::vector<std::string>& named_set(const std::string& name) {
  if (name == "basic") return basic_inputs();
  if (name == "all") return all_inputs();
  throw ValidationError("unknown variable set '" + name + "' (expected basic or all)");
}

}  // namespace vars

}  // namespace ccfg
