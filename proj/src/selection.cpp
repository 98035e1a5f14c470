#include "ccfg/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#include "ccfg/random.hpp"

namespace ccfg {

std::string to_string(GradientMode m) {
  return m == GradientMode::analytic ? "analytic" : "finite-difference";
}

GradientMode parse_gradient_mode(const std::string& s) {
  if (s == "analytic") return GradientMode::analytic;
  if (s == "finite-difference" || s == "finite_difference") return GradientMode::finite_difference;
  throw ValidationError("unknown gradient mode '" + s + "' (expected finite-difference or analytic)");
}

void SelectionConfig::validate(int subset_count) const {
  if (budget < 1 || budget > subset_count) {
    throw ValidationError("selection.budget m must lie in [1, " + std::to_string(subset_count) + "]");
  }
  if (iterations < subset_count - budget + 1) {
    throw ValidationError("selection.iterations N must be at least n_p - m + 1 = " +
                          std::to_string(subset_count - budget + 1));
  }
  if (!(total > 0.0)) throw ValidationError("selection.total W must be positive");
  if (!(step_size > 0.0)) throw ValidationError("selection.step_size must be positive");
  if (alpha < 0.0 || beta < 0.0) throw ValidationError("selection decay coefficients must be nonnegative");
  if (batch < 1) throw ValidationError("selection.batch must be positive");
  if (inner_steps < 1) throw ValidationError("selection.inner_steps must be positive");
  if (!(fd_step > 0.0)) throw ValidationError("selection.fd_step must be positive");
}

std::vector<double> project_simplex(std::span<const double> v, double total) {
  if (v.empty()) throw ValidationError("project_simplex: empty vector");
  if (!(total > 0.0)) throw ValidationError("project_simplex: W must be positive");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - total) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(v[i] - theta, 0.0);
  return w;
}

namespace {

Guidance raw_ccfg(std::span<const GroupMask> subsets, std::span<const double> weights) {
  Guidance g;
  g.scheme = Scheme::ccfg;
  g.subsets.assign(subsets.begin(), subsets.end());
  g.weights.assign(weights.begin(), weights.end());
  return g;
}

double decay(std::span<const double> w, const SelectionConfig& c) {
  double l1 = 0.0, l2 = 0.0;
  for (double v : w) {
    l1 += std::abs(v);
    l2 += v * v;
  }
  return c.alpha * l1 + c.beta * std::sqrt(l2);
}

struct InnerStep {
  int t = 0;
  int s = 0;
  Tensor x;
  GuidedEvaluation eval;
};

// Inner DDPM run; records every step when `record` is non-null.
Tensor inner_sample(const Denoiser& denoiser, const Tensor& targets, const Guidance& guidance,
                    const SelectionConfig& c, const NoiseSchedule& sched, std::uint64_t noise_seed,
                    std::vector<InnerStep>* record) {
  std::vector<std::uint64_t> seeds(targets.n);
  for (int r = 0; r < targets.n; ++r) seeds[r] = stream_seed({noise_seed, static_cast<std::uint64_t>(r)});
  NoiseSource noise(std::move(seeds));
  Tensor x = Tensor::like(targets);
  noise.fill(x);
  const std::vector<int> ts = inference_timesteps(sched.steps(), c.inner_steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int s = i + 1 < ts.size() ? ts[i + 1] : 0;
    GuidedEvaluation ev = evaluate_guidance(denoiser, x, t, guidance, sched);
    Tensor next = ddpm_step(x, ev.guided_eps, t, s, sched, &noise);
    if (record != nullptr) record->push_back({t, s, std::move(x), std::move(ev)});
    x = std::move(next);
  }
  return x;
}

double mae(const Tensor& a, const Tensor& b, Tensor* grad) {
  double s = 0.0;
  const double inv = 1.0 / static_cast<double>(a.size());
  if (grad != nullptr) *grad = Tensor::like(a);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += std::abs(d);
    if (grad != nullptr) grad->data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv;
  }
  return s * inv;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

double selection_loss(const Denoiser& denoiser, const Tensor& targets, std::span<const GroupMask> subsets,
                      std::span<const double> weights, const SelectionConfig& c, const NoiseSchedule& sched,
                      std::uint64_t noise_seed, std::vector<double>* grad) {
  if (targets.n < 1) throw ValidationError("selection_loss: empty batch");
  if (subsets.size() != weights.size() || subsets.empty()) {
    throw ValidationError("selection_loss: need matching, non-empty subsets and weights");
  }
  const Guidance guidance = raw_ccfg(subsets, weights);
  const bool analytic = grad != nullptr && c.gradient_mode == GradientMode::analytic;
  std::vector<InnerStep> steps;
  const Tensor x0 = inner_sample(denoiser, targets, guidance, c, sched, noise_seed, analytic ? &steps : nullptr);
  Tensor g;
  const double loss = mae(x0, targets, analytic ? &g : nullptr) + decay(weights, c);
  if (grad == nullptr) return loss;

  const std::size_t m = weights.size();
  grad->assign(m, 0.0);
  if (!analytic) {
    std::vector<double> probe(weights.begin(), weights.end());
    for (std::size_t i = 0; i < m; ++i) {
      probe[i] = weights[i] + c.fd_step;
      const double up = selection_loss(denoiser, targets, subsets, probe, c, sched, noise_seed);
      probe[i] = weights[i] - c.fd_step;
      const double down = selection_loss(denoiser, targets, subsets, probe, c, sched, noise_seed);
      probe[i] = weights[i];
      (*grad)[i] = (up - down) / (2.0 * c.fd_step);
    }
    return loss;
  }

  if (!denoiser.supports_input_vjp()) throw ValidationError("analytic selection gradient needs input VJPs");
  // Each step is x_s = A x_t + B eps(x_t; w) (+ fixed noise).
  for (std::size_t k = steps.size(); k-- > 0;) {
    const InnerStep& st = steps[k];
    double a = 0.0, b = 0.0;
    if (st.s == 0) {
      a = 1.0 / std::sqrt(sched.alpha_bar(st.t));
      b = -sched.sigma(st.t) / std::sqrt(sched.alpha_bar(st.t));
    } else {
      const AncestralCoefficients co = ddpm_coefficients(st.t, st.s, sched);
      a = co.a;
      b = co.b;
    }
    const GuidedEvaluation& ev = st.eval;
    const std::size_t uncond = ev.views.size() - 1;  // the empty view is evaluated last
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t v = static_cast<std::size_t>(
          std::find(ev.views.begin(), ev.views.end(), subsets[i]) - ev.views.begin());
      (*grad)[i] += b * (dot(g, ev.view_eps[v]) - dot(g, ev.view_eps[uncond]));
    }
    if (k == 0) break;
    // dL/dx_t = A g + B sum_v c_v (g - sqrt(ab) J_v^T g) / sigma, with sum_v c_v = 1
    const double sg = sched.sigma(st.t);
    const double ra = std::sqrt(sched.alpha_bar(st.t));
    Tensor next = lincomb(a, g, b / sg, g);
    for (std::size_t v = 0; v < ev.views.size(); ++v) {
      const double cv = ev.view_coefficients[v];
      if (cv == 0.0) continue;
      axpy(-b * cv * ra / sg, denoiser.x0_input_vjp(st.x, st.t, ev.views[v], g), next);
    }
    g = std::move(next);
  }
  // decay terms
  double l2 = 0.0;
  for (double w : weights) l2 += w * w;
  l2 = std::sqrt(l2);
  for (std::size_t i = 0; i < m; ++i) {
    (*grad)[i] += c.alpha * (weights[i] > 0.0 ? 1.0 : (weights[i] < 0.0 ? -1.0 : 0.0));
    if (l2 > 0.0) (*grad)[i] += c.beta * weights[i] / l2;
  }
  return loss;
}

bool prune_least_impactful(SubsetWeights& w, int budget) {
  if (w.family.size() <= budget) {
    std::clog << "warning: subset family already at budget " << budget << "; nothing pruned\n";
    return false;
  }
  const auto it = std::min_element(w.weights.begin(), w.weights.end());  // first minimum
  const auto idx = static_cast<std::size_t>(it - w.weights.begin());
  w.weights.erase(w.weights.begin() + static_cast<std::ptrdiff_t>(idx));
  w.family.subsets.erase(w.family.subsets.begin() + static_cast<std::ptrdiff_t>(idx));
  w.weights = project_simplex(w.weights, w.total);
  return true;
}

int prune_interval(int iterations, int subset_count, int budget) {
  const int slots = subset_count - budget + 1;
  return (iterations + slots - 1) / slots;
}

SelectionResult run_selection(const std::vector<std::string>& groups, const BatchProvider& batches,
                              const SelectionConfig& config, const NoiseSchedule& sched) {
  SelectionResult res;
  const SubsetFamily family = enumerate_subsets(groups, config.max_omitted);
  const int np = family.size();
  config.validate(np);
  res.trace.family = family;

  SubsetWeights current = SubsetWeights::uniform(family, config.total);
  std::vector<int> index(np);  // position in the full family of each active subset
  std::iota(index.begin(), index.end(), 0);
  const int interval = prune_interval(config.iterations, np, config.budget);

  auto snapshot = [&](SelectionTraceRow& row) {
    row.weights.assign(np, 0.0);
    row.active.assign(np, false);
    for (std::size_t j = 0; j < index.size(); ++j) {
      row.weights[index[j]] = current.weights[j];
      row.active[index[j]] = true;
    }
  };
  auto prune = [&](int iteration, SelectionTraceRow& row) {
    const auto it = std::min_element(current.weights.begin(), current.weights.end());
    const std::size_t j = static_cast<std::size_t>(it - current.weights.begin());
    PruneEvent ev{iteration, current.family.subsets[j], family.describe(current.family.subsets[j]), *it};
    prune_least_impactful(current, config.budget);
    index.erase(index.begin() + static_cast<std::ptrdiff_t>(j));
    res.trace.prunes.push_back(ev);
    row.pruned = true;
    row.prune = ev;
  };

  for (int it = 1; it <= config.iterations; ++it) {
    SelectionBatch batch = batches(it);
    if (!batch.denoiser) throw ValidationError("selection batch provider returned no denoiser");
    std::vector<double> grad;
    const std::uint64_t noise_seed = stream_seed({config.seed, 0x73656cULL, static_cast<std::uint64_t>(it)});
    SelectionTraceRow row;
    row.iteration = it;
    row.loss = selection_loss(*batch.denoiser, batch.targets, current.family.subsets, current.weights, config,
                              sched, noise_seed, &grad);
    for (std::size_t j = 0; j < current.weights.size(); ++j) current.weights[j] -= config.step_size * grad[j];
    if (it % interval == 0 && current.family.size() > config.budget) prune(it, row);
    current.weights = project_simplex(current.weights, current.total);
    snapshot(row);
    res.trace.rows.push_back(std::move(row));
  }
  // The modulus schedule can end before reaching the budget when N is not a
  // multiple of the interval; finish the remaining prunes after the last step.
  while (current.family.size() > config.budget) {
    SelectionTraceRow row;
    row.iteration = config.iterations;
    row.loss = res.trace.rows.empty() ? 0.0 : res.trace.rows.back().loss;
    prune(config.iterations, row);
    snapshot(row);
    res.trace.rows.push_back(std::move(row));
  }
  current.family.max_omitted = config.max_omitted;
  current.validate();
  res.weights = std::move(current);
  return res;
}

void SelectionTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write selection trace " + path.string());
  f << "iteration,loss";
  for (int i = 0; i < family.size(); ++i) f << ",w" << i;
  f << ",pruned_mask,pruned_members\n" << std::setprecision(17);
  for (const auto& r : rows) {
    f << r.iteration << ',' << r.loss;
    for (double w : r.weights) f << ',' << w;
    if (r.pruned) {
      f << ',' << r.prune.subset << ",\"" << r.prune.members << '"';
    } else {
      f << ",,";
    }
    f << '\n';
  }
}

}  // namespace ccfg
