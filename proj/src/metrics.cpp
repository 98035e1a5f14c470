#include "ccfg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ccfg {

void PredictionSet::validate() const {
  if (predictions.n < 1 || predictions.c < 1) throw ValidationError("prediction set is empty");
  if (truths.n != predictions.n || truths.c != 1 || truths.h != predictions.h || truths.w != predictions.w) {
    throw DimensionError("prediction set: truths " + truths.shape_string() + " do not match predictions " +
                         predictions.shape_string());
  }
}

FieldGrid mean_map(const Tensor& stack) {
  if (stack.n < 1 || stack.c < 1) throw ValidationError("mean_map: empty stack");
  FieldGrid out(stack.h, stack.w, 0.0, "m/s");
  const std::size_t p = stack.plane();
  for (int i = 0; i < stack.n; ++i) {
    std::vector<double> member_mean(p, 0.0);
    for (int e = 0; e < stack.c; ++e) {
      const double* src = stack.channel(i, e);
      for (std::size_t j = 0; j < p; ++j) member_mean[j] += src[j];
    }
    for (std::size_t j = 0; j < p; ++j) out.values[j] += member_mean[j] / stack.c;
  }
  for (double& v : out.values) v /= stack.n;
  return out;
}

double mm_rmse(const FieldGrid& a, const FieldGrid& b) {
  if (a.height != b.height || a.width != b.width) throw DimensionError("mm_rmse: shape mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a.values[j] - b.values[j]) * (a.values[j] - b.values[j]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

namespace {

// Squared error of the ensemble mean, summed over one timestamp.
double timestamp_sse(const PredictionSet& set, int i) {
  const std::size_t p = set.predictions.plane();
  const double* truth = set.truths.sample(i);
  double s = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    double m = 0.0;
    for (int e = 0; e < set.ensemble(); ++e) m += set.predictions.channel(i, e)[j];
    m /= set.ensemble();
    s += (m - truth[j]) * (m - truth[j]);
  }
  return s;
}

// `x` must be sorted ascending.
double crps_sorted(std::span<const double> x, double y) {
  const std::size_t n = x.size();
  double mae = 0.0;
  for (double v : x) mae += std::abs(v - y);
  mae /= static_cast<double>(n);
  if (n == 1) return mae;
  // sum_ij |x_i - x_j| = 2 sum_i (2i - n + 1) x_(i) for sorted x
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) spread += (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0) * x[i];
  spread *= 2.0;
  return mae - spread / (2.0 * static_cast<double>(n) * static_cast<double>(n));
}

double timestamp_crps_sum(const PredictionSet& set, int i) {
  const std::size_t p = set.predictions.plane();
  std::vector<double> ens(set.ensemble());
  double s = 0.0;
  const int n = set.ensemble();
  for (std::size_t j = 0; j < p; ++j) {
    for (int e = 0; e < n; ++e) ens[e] = set.predictions.channel(i, e)[j];
    const double y = set.truths.sample(i)[j];
    if (n > 32) {
      std::sort(ens.begin(), ens.end());
      s += crps_sorted(ens, y);
      continue;
    }
    // small ensembles: the pairwise sum over a < b beats sorting
    double mae = 0.0, spread = 0.0;
    for (int a = 0; a < n; ++a) {
      mae += std::abs(ens[a] - y);
      for (int b = a + 1; b < n; ++b) spread += std::abs(ens[a] - ens[b]);
    }
    s += mae / n - spread / (static_cast<double>(n) * n);
  }
  return s;
}

}  // namespace

double t_rmse(const PredictionSet& set) {
  set.validate();
  std::vector<double> per(set.timestamps());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < set.timestamps(); ++i) per[i] = timestamp_sse(set, i);
  double s = 0.0;
  for (double v : per) s += v;  // fixed reduction order
  return std::sqrt(s / (static_cast<double>(set.timestamps()) * set.predictions.plane()));
}

double crps(std::span<const double> ensemble, double y) {
  const std::size_t n = ensemble.size();
  if (n == 0) throw ValidationError("crps: empty ensemble");
  std::vector<double> x(ensemble.begin(), ensemble.end());
  std::sort(x.begin(), x.end());
  return crps_sorted(x, y);
}

double crps_timestamps(const PredictionSet& set) {
  set.validate();
  std::vector<double> per(set.timestamps());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < set.timestamps(); ++i) per[i] = timestamp_crps_sum(set, i);
  double s = 0.0;
  for (double v : per) s += v;
  return s / (static_cast<double>(set.timestamps()) * set.predictions.plane());
}

double crps_mean_map(const PredictionSet& set) {
  set.validate();
  const std::size_t p = set.predictions.plane();
  const FieldGrid truth = mean_map(set.truths);
  std::vector<std::vector<double>> member_maps(set.ensemble(), std::vector<double>(p, 0.0));
  for (int e = 0; e < set.ensemble(); ++e) {
    for (int i = 0; i < set.timestamps(); ++i) {
      const double* src = set.predictions.channel(i, e);
      for (std::size_t j = 0; j < p; ++j) member_maps[e][j] += src[j];
    }
    for (double& v : member_maps[e]) v /= set.timestamps();
  }
  std::vector<double> ens(set.ensemble());
  double s = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    for (int e = 0; e < set.ensemble(); ++e) ens[e] = member_maps[e][j];
    s += crps(ens, truth.values[j]);
  }
  return s / static_cast<double>(p);
}

namespace serial {

double t_rmse(const PredictionSet& set) {
  set.validate();
  double s = 0.0;
  for (int i = 0; i < set.timestamps(); ++i) {
    for (int y = 0; y < set.predictions.h; ++y) {
      for (int x = 0; x < set.predictions.w; ++x) {
        double m = 0.0;
        for (int e = 0; e < set.ensemble(); ++e) m += set.predictions.at(i, e, y, x);
        m /= set.ensemble();
        const double d = m - set.truths.at(i, 0, y, x);
        s += d * d;
      }
    }
  }
  return std::sqrt(s / (static_cast<double>(set.timestamps()) * set.predictions.plane()));
}

double crps_timestamps(const PredictionSet& set) {
  set.validate();
  double s = 0.0;
  for (int i = 0; i < set.timestamps(); ++i) {
    for (int y = 0; y < set.predictions.h; ++y) {
      for (int x = 0; x < set.predictions.w; ++x) {
        const double obs = set.truths.at(i, 0, y, x);
        double mae = 0.0, spread = 0.0;
        for (int a = 0; a < set.ensemble(); ++a) {
          mae += std::abs(set.predictions.at(i, a, y, x) - obs);
          for (int b = 0; b < set.ensemble(); ++b) {
            spread += std::abs(set.predictions.at(i, a, y, x) - set.predictions.at(i, b, y, x));
          }
        }
        const double n = set.ensemble();
        s += mae / n - spread / (2.0 * n * n);
      }
    }
  }
  return s / (static_cast<double>(set.timestamps()) * set.predictions.plane());
}

}  // namespace serial

namespace {

double keys_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// 1-D cubic resampling of `count` values to count * factor, align-corners.
std::vector<double> cubic_line(const std::vector<double>& v, int factor) {
  const int n = static_cast<int>(v.size());
  const int m = n * factor;
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    const double pos = (n == 1 || m == 1) ? 0.0 : static_cast<double>(i) * (n - 1) / (m - 1);
    const int base = static_cast<int>(std::floor(pos));
    const double frac = pos - base;
    double acc = 0.0;
    for (int k = -1; k <= 2; ++k) {
      const int idx = std::clamp(base + k, 0, n - 1);
      acc += keys_weight(frac - k) * v[idx];
    }
    out[i] = acc;
  }
  return out;
}

}  // namespace

FieldGrid upsample_bicubic(const FieldGrid& g, int factor) {
  if (factor < 1) throw ValidationError("upsample_bicubic: factor must be positive");
  g.validate();
  if (factor == 1) return g;
  // rows first, then columns (separable)
  FieldGrid tmp(g.height, g.width * factor, 0.0, g.units);
  for (int y = 0; y < g.height; ++y) {
    std::vector<double> row(g.values.begin() + static_cast<std::ptrdiff_t>(y) * g.width,
                            g.values.begin() + static_cast<std::ptrdiff_t>(y + 1) * g.width);
    const auto r = cubic_line(row, factor);
    std::copy(r.begin(), r.end(), tmp.values.begin() + static_cast<std::ptrdiff_t>(y) * tmp.width);
  }
  FieldGrid out(g.height * factor, g.width * factor, 0.0, g.units);
  for (int x = 0; x < tmp.width; ++x) {
    std::vector<double> col(g.height);
    for (int y = 0; y < g.height; ++y) col[y] = tmp(y, x);
    const auto c = cubic_line(col, factor);
    for (int y = 0; y < out.height; ++y) out(y, x) = c[y];
  }
  return out;
}

BicubicPrediction bicubic_baseline(const SamplePair& pair) {
  const VariableGrid* sp = pair.conditioning.find(vars::lr_speed);
  const VariableGrid* dir = pair.conditioning.find(vars::lr_direction);
  if (sp == nullptr || dir == nullptr) throw FormatError("bicubic baseline needs lr_speed and lr_direction");
  BicubicPrediction out;
  out.speed = upsample_bicubic(sp->grid, pair.scale_factor);
  FieldGrid s(dir->grid.height, dir->grid.width), c(dir->grid.height, dir->grid.width);
  for (std::size_t i = 0; i < dir->grid.size(); ++i) {
    const auto [sv, cv] = encode_direction(dir->grid.values[i]);
    s.values[i] = sv;
    c.values[i] = cv;
  }
  const FieldGrid su = upsample_bicubic(s, pair.scale_factor);
  const FieldGrid cu = upsample_bicubic(c, pair.scale_factor);
  out.direction = FieldGrid(su.height, su.width, 0.0, "degrees");
  for (std::size_t i = 0; i < su.size(); ++i) out.direction.values[i] = decode_direction(su.values[i], cu.values[i]);
  return out;
}

void write_metric_report(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write metric report " + path.string());
  f << "model,domain,metric,nfe_per_step,ensemble,value\n";
  f << std::setprecision(17);
  for (const MetricRow& r : rows) {
    f << r.model << ',' << r.domain << ',' << r.metric << ',' << r.nfe << ',' << r.ensemble << ',' << r.value << '\n';
  }
  if (!f) throw FormatError("short write to " + path.string());
}

std::vector<MetricRow> read_metric_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open metric report " + path.string());
  std::string line;
  std::getline(f, line);
  if (line != "model,domain,metric,nfe_per_step,ensemble,value") throw FormatError("metric report: bad header");
  std::vector<MetricRow> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError("metric report line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      rows.push_back({cells[0], cells[1], cells[2], std::stod(cells[3]), std::stoi(cells[4]), std::stod(cells[5])});
    } catch (const std::exception&) {
      throw FormatError("metric report line " + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

}  // namespace ccfg
