#include "ccfg/testbed.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

namespace ccfg {

namespace {

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": matrix is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

bool is_symmetric(const Eigen::MatrixXd& m) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + m.cwiseAbs().maxCoeff());
}

}  // namespace

GaussianConditionalModel::GaussianConditionalModel(Eigen::VectorXd prior_mean, Eigen::MatrixXd prior_cov,
                                                   std::vector<ObservationGroup> groups)
    : prior_mean_(std::move(prior_mean)), prior_cov_(std::move(prior_cov)), groups_(std::move(groups)) {
  const int d = dimension();
  if (d < 1) throw ValidationError("testbed: dimension must be positive");
  if (prior_cov_.rows() != d || !is_symmetric(prior_cov_)) throw ValidationError("testbed: prior covariance must be symmetric d x d");
  spd_inverse(prior_cov_, "testbed prior covariance");
  if (groups_.empty() || groups_.size() > 31) throw ValidationError("testbed: need 1..31 groups");
  for (const auto& g : groups_) {
    const auto r = g.H.rows();
    if (g.H.cols() != d || g.R.rows() != r || g.y.size() != r || !is_symmetric(g.R)) {
      throw ValidationError("testbed: group '" + g.name + "' has inconsistent shapes");
    }
    spd_inverse(g.R, "testbed observation covariance");
  }
}

std::vector<std::string> GaussianConditionalModel::group_names() const {
  std::vector<std::string> names;
  for (const auto& g : groups_) names.push_back(g.name);
  return names;
}

Gaussian GaussianConditionalModel::conditional(GroupMask subset) const {
  if ((subset & ~full_mask(group_count())) != 0) throw ValidationError("testbed: unknown group in subset");
  Eigen::MatrixXd prec = spd_inverse(prior_cov_, "prior");
  Eigen::VectorXd shift = prec * prior_mean_;
  for (int i = 0; i < group_count(); ++i) {
    if (!((subset >> i) & 1u)) continue;
    const auto& g = groups_[i];
    const Eigen::MatrixXd rinv = spd_inverse(g.R, "observation covariance");
    prec += g.H.transpose() * rinv * g.H;
    shift += g.H.transpose() * rinv * g.y;
  }
  Gaussian out;
  out.cov = spd_inverse(prec, "conditional precision");
  out.mean = out.cov * shift;
  return out;
}

Gaussian GaussianConditionalModel::smoothed(GroupMask subset, int t, const NoiseSchedule& sched) const {
  Gaussian g = conditional(subset);
  if (t == 0) return g;
  const double ab = sched.alpha_bar(t);
  g.mean *= std::sqrt(ab);
  g.cov = ab * g.cov + (1.0 - ab) * Eigen::MatrixXd::Identity(dimension(), dimension());
  return g;
}

double GaussianConditionalModel::log_density(const Eigen::VectorXd& x, GroupMask subset, int t,
                                             const NoiseSchedule& sched) const {
  const Gaussian g = smoothed(subset, t, sched);
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw NumericError("testbed: singular covariance");
  const Eigen::VectorXd r = x - g.mean;
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (int i = 0; i < dimension(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * z.squaredNorm() - 0.5 * logdet - 0.5 * dimension() * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd GaussianConditionalModel::exact_score(const Eigen::VectorXd& x, GroupMask subset, int t,
                                                      const NoiseSchedule& sched) const {
  if (t < 1) throw NumericError("exact_score: t must be at least 1");
  const Gaussian g = smoothed(subset, t, sched);
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw NumericError("exact_score: singular covariance");
  return -llt.solve(x - g.mean);
}

void GaussianConditionalModel::precision_terms(GroupMask subset, int t, const NoiseSchedule& sched,
                                               Eigen::MatrixXd& prec, Eigen::VectorXd& shift) const {
  const Gaussian g = smoothed(subset, t, sched);
  prec = spd_inverse(g.cov, "smoothed covariance");
  shift = prec * g.mean;
}

Eigen::VectorXd GaussianConditionalModel::tilted_score(const Eigen::VectorXd& x, std::span<const GroupMask> subsets,
                                                       std::span<const double> weights, int t,
                                                       const NoiseSchedule& sched) const {
  if (subsets.size() != weights.size()) throw ValidationError("tilted_score: subset/weight count mismatch");
  Eigen::MatrixXd a, p0, pk;
  Eigen::VectorXd b, b0, bk;
  precision_terms(full_mask(group_count()), t, sched, a, b);
  precision_terms(0, t, sched, p0, b0);
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    precision_terms(subsets[i], t, sched, pk, bk);
    a += weights[i] * (pk - p0);
    b += weights[i] * (bk - b0);
  }
  return b - a * x;
}

Gaussian GaussianConditionalModel::tilted_distribution(std::span<const GroupMask> subsets,
                                                       std::span<const double> weights) const {
  if (subsets.size() != weights.size()) throw ValidationError("tilted_distribution: subset/weight count mismatch");
  Eigen::MatrixXd a, p0, pk;
  Eigen::VectorXd b, b0, bk;
  NoiseSchedule unused = NoiseSchedule::linear(2, 1e-4, 1e-4);
  precision_terms(full_mask(group_count()), 0, unused, a, b);
  precision_terms(0, 0, unused, p0, b0);
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    precision_terms(subsets[i], 0, unused, pk, bk);
    a += weights[i] * (pk - p0);
    b += weights[i] * (bk - b0);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericError("tilted_distribution: combined precision is not positive definite");
  }
  Gaussian out;
  out.cov = llt.solve(Eigen::MatrixXd::Identity(dimension(), dimension()));
  out.mean = out.cov * b;
  return out;
}

Gaussian GaussianConditionalModel::tilted_distribution(const SubsetWeights& weights) const {
  weights.validate();
  return tilted_distribution(weights.family.subsets, weights.weights);
}

GaussianConditionalModel default_testbed() {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(2, 2);
  auto group = [](std::string name, double h0, double h1, double r, double y) {
    ObservationGroup g;
    g.name = std::move(name);
    g.H = Eigen::MatrixXd(1, 2);
    g.H << h0, h1;
    g.R = Eigen::MatrixXd::Constant(1, 1, r);
    g.y = Eigen::VectorXd::Constant(1, y);
    return g;
  };
  const double k = 1.0 / std::sqrt(2.0);
  return GaussianConditionalModel(mu, cov,
                                  {group("obs_x", 1.0, 0.0, 0.5, 0.8), group("obs_y", 0.0, 1.0, 1.0, -0.5),
                                   group("obs_diag", k, k, 0.3, 0.6)});
}

namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ValidationError(std::string("testbed: ") + what + " must be a non-empty 2-D array");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw ValidationError(std::string("testbed: ragged ") + what);
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void only_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ValidationError(std::string("testbed: unknown key '") + it.key() + "' in " + where);
  }
}

}  // namespace

GaussianConditionalModel parse_testbed(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    only_keys(j, {"prior_mean", "prior_cov", "groups"}, "testbed");
    std::vector<ObservationGroup> groups;
    for (const auto& gj : j.at("groups")) {
      only_keys(gj, {"name", "H", "R", "y"}, "group");
      ObservationGroup g;
      g.name = gj.at("name").get<std::string>();
      g.H = matrix_from_json(gj.at("H"), "H");
      g.R = matrix_from_json(gj.at("R"), "R");
      g.y = vector_from_json(gj.at("y"));
      groups.push_back(std::move(g));
    }
    return GaussianConditionalModel(vector_from_json(j.at("prior_mean")), matrix_from_json(j.at("prior_cov"), "prior_cov"),
                                    std::move(groups));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("testbed config: ") + e.what());
  }
}

GaussianConditionalModel load_testbed(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open testbed config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_testbed(ss.str());
}

Tensor to_tensor(const Eigen::MatrixXd& rows) {
  Tensor t(static_cast<int>(rows.rows()), static_cast<int>(rows.cols()), 1, 1);
  for (int i = 0; i < t.n; ++i) {
    for (int k = 0; k < t.c; ++k) t.at(i, k, 0, 0) = rows(i, k);
  }
  return t;
}

Eigen::MatrixXd to_matrix(const Tensor& batch) {
  if (batch.h != 1 || batch.w != 1) throw DimensionError("testbed batches are [n, d, 1, 1], got " + batch.shape_string());
  Eigen::MatrixXd m(batch.n, batch.c);
  for (int i = 0; i < batch.n; ++i) {
    for (int k = 0; k < batch.c; ++k) m(i, k) = batch.at(i, k, 0, 0);
  }
  return m;
}

Tensor GaussianOracleDenoiser::predict_x0(const Tensor& x_t, int t, GroupMask present) const {
  if (x_t.c != model_.dimension()) throw DimensionError("oracle denoiser: dimension mismatch");
  const Gaussian g = model_.smoothed(present, t, sched_);
  const Eigen::MatrixXd prec = spd_inverse(g.cov, "smoothed covariance");
  const double ra = std::sqrt(sched_.alpha_bar(t));
  const double var = 1.0 - sched_.alpha_bar(t);
  // Tweedie: x0 = (x + sigma^2 score) / sqrt(alpha_bar)
  const Eigen::MatrixXd x = to_matrix(x_t);
  Eigen::MatrixXd score = -(x.rowwise() - g.mean.transpose()) * prec;
  return to_tensor((x + var * score) / ra);
}

Tensor GaussianOracleDenoiser::x0_input_vjp(const Tensor& x_t, int t, GroupMask present,
                                            const Tensor& cotangent) const {
  require_same_shape(x_t, cotangent, "oracle vjp");
  const Gaussian g = model_.smoothed(present, t, sched_);
  const Eigen::MatrixXd prec = spd_inverse(g.cov, "smoothed covariance");
  const double ra = std::sqrt(sched_.alpha_bar(t));
  const double var = 1.0 - sched_.alpha_bar(t);
  const int d = model_.dimension();
  const Eigen::MatrixXd jac = (Eigen::MatrixXd::Identity(d, d) - var * prec) / ra;  // symmetric
  return to_tensor(to_matrix(cotangent) * jac);
}

Gaussian affine_pushforward(const Denoiser& denoiser, int d, const Guidance& guidance,
                            const SamplerConfig& config, const NoiseSchedule& sched) {
  if (config.method == SamplerMethod::ddpm) throw ValidationError("affine_pushforward needs a deterministic sampler");
  Eigen::MatrixXd probes = Eigen::MatrixXd::Zero(d + 1, d);
  for (int j = 0; j < d; ++j) probes(j + 1, j) = 1.0;
  const Eigen::MatrixXd out = to_matrix(reverse_process(denoiser, to_tensor(probes), guidance, config, sched, nullptr));
  Eigen::MatrixXd m(d, d);
  for (int j = 0; j < d; ++j) m.col(j) = (out.row(j + 1) - out.row(0)).transpose();
  Gaussian g;
  g.mean = out.row(0).transpose();
  g.cov = m * m.transpose();
  return g;
}

MomentSummary sample_moments(const Eigen::MatrixXd& s) {
  const double n = static_cast<double>(s.rows());
  if (s.rows() < 2) throw ValidationError("sample_moments: need at least two samples");
  MomentSummary out;
  out.mean = s.colwise().mean().transpose();
  const Eigen::MatrixXd c = s.rowwise() - out.mean.transpose();
  out.cov = c.transpose() * c / (n - 1.0);
  out.mean_se = (out.cov.diagonal() / n).cwiseSqrt();
  const auto d = s.cols();
  out.cov_se.resize(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      // Var of the product of centred coordinates, estimated directly
      const Eigen::ArrayXd prod = c.col(a).array() * c.col(b).array();
      const double var = (prod - prod.mean()).square().sum() / (n - 1.0);
      out.cov_se(a, b) = std::sqrt(var / n);
    }
  }
  return out;
}

}  // namespace ccfg
