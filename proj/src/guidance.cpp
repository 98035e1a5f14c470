#include "ccfg/guidance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <nlohmann/json.hpp>
#include <unordered_map>

namespace ccfg {

void SubsetFamily::validate() const {
  const int k = group_count();
  if (k < 1 || k > 31) throw ValidationError("subset family needs between 1 and 31 groups");
  if (max_omitted < 0 || max_omitted > k) throw ValidationError("max_omitted must lie in [0, k]");
  const GroupMask full = full_mask(k);
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    const GroupMask s = subsets[i];
    if (s == 0) throw ValidationError("subset family contains the empty subset");
    if ((s & ~full) != 0) throw ValidationError("subset mask refers to unknown groups");
    if (k - std::popcount(s) > max_omitted) {
      throw ValidationError("subset " + describe(s) + " omits more than max_omitted groups");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (subsets[j] == s) throw ValidationError("duplicate subset " + describe(s));
    }
  }
}

std::string SubsetFamily::describe(GroupMask subset) const {
  std::string out = "{";
  bool first = true;
  for (int i = 0; i < group_count(); ++i) {
    if ((subset >> i) & 1u) {
      if (!first) out += ",";
      out += universe[i];
      first = false;
    }
  }
  return out + "}";
}

SubsetFamily enumerate_subsets(std::vector<std::string> universe, int p) {
  const int k = static_cast<int>(universe.size());
  if (k < 1 || k > 31) throw ValidationError("enumerate_subsets: k must lie in [1, 31]");
  if (p < 0 || p > k) throw ValidationError("enumerate_subsets: p must lie in [0, k]");
  SubsetFamily fam;
  fam.universe = std::move(universe);
  fam.max_omitted = p;
  const GroupMask full = full_mask(k);
  for (int omit = 0; omit <= std::min(p, k - 1); ++omit) {
    // lexicographic combinations of omitted indices
    std::vector<int> idx(omit);
    for (int i = 0; i < omit; ++i) idx[i] = i;
    while (true) {
      GroupMask m = full;
      for (int i : idx) m &= ~(GroupMask{1} << i);
      fam.subsets.push_back(m);
      int pos = omit - 1;
      while (pos >= 0 && idx[pos] == k - omit + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int i = pos + 1; i < omit; ++i) idx[i] = idx[i - 1] + 1;
    }
  }
  return fam;
}

SubsetFamily enumerate_subsets(int k, int p) {
  if (k < 1 || k > 31) throw ValidationError("enumerate_subsets: k must lie in [1, 31]");
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) names.push_back("g" + std::to_string(i));
  return enumerate_subsets(std::move(names), p);
}

void SubsetWeights::validate() const {
  family.validate();
  if (family.size() < 1) throw ValidationError("subset weights need at least one subset");
  if (weights.size() != family.subsets.size()) {
    throw ValidationError("subset weights: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(family.subsets.size()) + " subsets");
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw ValidationError("total weight W must be positive");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("subset weights must be finite and nonnegative");
    sum += w;
  }
  if (std::abs(sum - total) > 1e-9 * std::max(1.0, total)) {
    throw ValidationError("subset weights sum to " + std::to_string(sum) + ", expected W = " +
                          std::to_string(total));
  }
}

SubsetWeights SubsetWeights::uniform(SubsetFamily family, double total) {
  SubsetWeights w;
  const std::size_t m = family.subsets.size();
  if (m == 0) throw ValidationError("cannot spread weight over an empty family");
  w.family = std::move(family);
  w.total = total;
  w.weights.assign(m, total / static_cast<double>(m));
  return w;
}

std::string serialize_weights(const SubsetWeights& weights) {
  weights.validate();
  nlohmann::ordered_json j;
  j["groups"] = weights.family.universe;
  j["max_omitted"] = weights.family.max_omitted;
  j["total"] = weights.total;
  nlohmann::ordered_json subsets = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < weights.weights.size(); ++i) {
    nlohmann::ordered_json e;
    e["mask"] = weights.family.subsets[i];
    e["members"] = weights.family.describe(weights.family.subsets[i]);
    e["weight"] = weights.weights[i];
    subsets.push_back(e);
  }
  j["subsets"] = subsets;
  return j.dump(2) + "\n";
}

SubsetWeights parse_weights(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("subset weights: ") + e.what());
  }
  SubsetWeights w;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      if (key != "groups" && key != "max_omitted" && key != "total" && key != "subsets") {
        throw ValidationError("subset weights: unknown key '" + key + "'");
      }
    }
    w.family.universe = j.at("groups").get<std::vector<std::string>>();
    w.family.max_omitted = j.at("max_omitted").get<int>();
    w.total = j.at("total").get<double>();
    for (const auto& e : j.at("subsets")) {
      for (auto it = e.begin(); it != e.end(); ++it) {
        if (it.key() != "mask" && it.key() != "members" && it.key() != "weight") {
          throw ValidationError("subset weights: unknown subset key '" + it.key() + "'");
        }
      }
      w.family.subsets.push_back(e.at("mask").get<GroupMask>());
      w.weights.push_back(e.at("weight").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("subset weights: ") + e.what());
  }
  w.validate();
  return w;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
  require_same_shape(eps_cond, eps_uncond, "cfg_combine");
  return lincomb(1.0 + w, eps_cond, -w, eps_uncond);
}

Tensor ccfg_combine(const Tensor& eps_full, std::span<const Tensor> eps_subsets,
                    const Tensor& eps_uncond, std::span<const double> weights) {
  if (eps_subsets.size() != weights.size()) {
    throw ValidationError("ccfg_combine: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(eps_subsets.size()) + " subset predictions");
  }
  require_same_shape(eps_full, eps_uncond, "ccfg_combine");
  Tensor out = eps_full;
  for (std::size_t i = 0; i < eps_subsets.size(); ++i) {
    require_same_shape(eps_full, eps_subsets[i], "ccfg_combine");
    const double w = weights[i];
    const double* s = eps_subsets[i].data.data();
    const double* u = eps_uncond.data.data();
    for (std::size_t j = 0; j < out.size(); ++j) out.data[j] += w * (s[j] - u[j]);
  }
  return out;
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::direct: return "direct";
    case Scheme::cfg: return "cfg";
    case Scheme::ccfg: return "ccfg";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  if (s == "direct") return Scheme::direct;
  if (s == "cfg") return Scheme::cfg;
  if (s == "ccfg") return Scheme::ccfg;
  throw ValidationError("unknown guidance scheme '" + s + "' (expected direct, cfg or ccfg)");
}

Guidance Guidance::direct() { return Guidance{}; }

Guidance Guidance::cfg(double w, int group_count) {
  if (!std::isfinite(w)) throw ValidationError("CFG weight must be finite");
  Guidance g;
  g.scheme = Scheme::cfg;
  g.subsets = {full_mask(group_count)};
  g.weights = {w};
  return g;
}

Guidance Guidance::ccfg(const SubsetWeights& weights) {
  weights.validate();
  Guidance g;
  g.scheme = Scheme::ccfg;
  g.subsets = weights.family.subsets;
  g.weights = weights.weights;
  return g;
}

namespace {

// Distinct masks in evaluation order: full, subsets in order, then empty.
std::vector<GroupMask> distinct_views(const Guidance& g, int group_count) {
  std::vector<GroupMask> views{full_mask(group_count)};
  if (g.scheme == Scheme::direct) return views;
  for (GroupMask s : g.subsets) {
    if (std::find(views.begin(), views.end(), s) == views.end()) views.push_back(s);
  }
  if (std::find(views.begin(), views.end(), GroupMask{0}) == views.end()) views.push_back(0);
  return views;
}

}  // namespace

int Guidance::views_per_step(int group_count) const {
  return static_cast<int>(distinct_views(*this, group_count).size());
}

GuidedEvaluation evaluate_guidance(const Denoiser& denoiser, const Tensor& x_t, int t,
                                   const Guidance& guidance, const NoiseSchedule& sched) {
  const int k = denoiser.group_count();
  if (guidance.subsets.size() != guidance.weights.size()) {
    throw ValidationError("guidance: subset and weight counts differ");
  }
  if (guidance.scheme != Scheme::direct && guidance.subsets.empty()) {
    throw ValidationError("guidance: at least one subset is required");
  }
  const GroupMask full = full_mask(k);
  for (GroupMask s : guidance.subsets) {
    if ((s & ~full) != 0) throw ValidationError("guidance: subset refers to groups the denoiser lacks");
  }

  GuidedEvaluation ev;
  ev.views = distinct_views(guidance, k);
  std::unordered_map<GroupMask, std::size_t> slot;
  for (std::size_t v = 0; v < ev.views.size(); ++v) {
    slot[ev.views[v]] = v;
    ev.view_eps.push_back(x0_to_eps(x_t, denoiser.predict_x0(x_t, t, ev.views[v]), t, sched));
  }

  ev.view_coefficients.assign(ev.views.size(), 0.0);
  ev.view_coefficients[0] = 1.0;
  if (guidance.scheme == Scheme::direct) {
    ev.guided_eps = ev.view_eps[0];
    return ev;
  }
  const Tensor& eps_full = ev.view_eps[0];
  const Tensor& eps_uncond = ev.view_eps[slot.at(0)];
  if (guidance.scheme == Scheme::cfg) {
    if (guidance.subsets.size() != 1 || guidance.subsets[0] != full) {
      throw ValidationError("CFG guidance uses exactly the full conditioning set");
    }
    ev.guided_eps = cfg_combine(eps_full, eps_uncond, guidance.weights[0]);
  } else {
    std::vector<Tensor> per_subset;
    per_subset.reserve(guidance.subsets.size());
    for (GroupMask s : guidance.subsets) per_subset.push_back(ev.view_eps[slot.at(s)]);
    ev.guided_eps = ccfg_combine(eps_full, per_subset, eps_uncond, guidance.weights);
  }
  for (std::size_t i = 0; i < guidance.subsets.size(); ++i) {
    ev.view_coefficients[slot.at(guidance.subsets[i])] += guidance.weights[i];
    ev.view_coefficients[slot.at(0)] -= guidance.weights[i];
  }
  return ev;
}

Tensor evaluate_guided_eps(const Denoiser& denoiser, const Tensor& x_t, int t,
                           const SubsetWeights& weights, const NoiseSchedule& sched) {
  if (weights.family.subsets.empty()) throw ValidationError("CCFG needs at least one subset (m >= 1)");
  if (weights.family.group_count() != denoiser.group_count()) {
    throw ValidationError("subset weights cover " + std::to_string(weights.family.group_count()) +
                          " groups but the denoiser has " + std::to_string(denoiser.group_count()));
  }
  return evaluate_guidance(denoiser, x_t, t, Guidance::ccfg(weights), sched).guided_eps;
}

}  // namespace ccfg
