#include <doctest.h>

#include "ccfg/testbed.hpp"
#include "test_util.hpp"

using namespace ccfg;

TEST_SUITE("analytic_testbed") {

TEST_CASE("conditional of one scalar observation matches the Kalman update") {
  const auto m = default_testbed();
  // obs_x: H = [1, 0], R = 0.5, y = 0.8 with a standard normal prior
  const Gaussian g = m.conditional(0b001u);
  const double gain = 1.0 / (1.0 + 0.5);
  CHECK(g.mean(0) == doctest::Approx(gain * 0.8));
  CHECK(g.mean(1) == doctest::Approx(0.0));
  CHECK(g.cov(0, 0) == doctest::Approx(1.0 - gain));
  CHECK(g.cov(1, 1) == doctest::Approx(1.0));
  const Gaussian prior = m.conditional(0);
  CHECK(prior.cov.isApprox(Eigen::MatrixXd::Identity(2, 2)));
}

TEST_CASE("smoothed marginals follow the forward process") {
  const auto m = default_testbed();
  const auto s = NoiseSchedule::linear();
  const Gaussian c = m.conditional(0b111u);
  const Gaussian g = m.smoothed(0b111u, 600, s);
  CHECK(g.mean.isApprox(std::sqrt(s.alpha_bar(600)) * c.mean));
  const Eigen::MatrixXd cov =
      s.alpha_bar(600) * c.cov + s.sigma(600) * s.sigma(600) * Eigen::MatrixXd::Identity(2, 2);
  CHECK(g.cov.isApprox(cov));
}

TEST_CASE("exact score matches finite differences of the log density") {
  const auto m = default_testbed();
  const auto s = NoiseSchedule::linear();
  const Eigen::Vector2d x(0.3, -0.7);
  for (GroupMask mask : {0u, 1u, 6u, 7u}) {
    for (int t : {1, 50, 900}) {
      const Eigen::VectorXd sc = m.exact_score(x, mask, t, s);
      for (int i = 0; i < 2; ++i) {
        Eigen::VectorXd a = x, b = x;
        a(i) += 1e-5;
        b(i) -= 1e-5;
        const double fd = (m.log_density(a, mask, t, s) - m.log_density(b, mask, t, s)) / 2e-5;
        CHECK(sc(i) == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("oracle denoiser is Tweedie's formula and its VJP is exact") {
  const auto m = default_testbed();
  const auto s = NoiseSchedule::linear();
  GaussianOracleDenoiser oracle(m, s);
  const Tensor x = testutil::random_tensor(3, 2, 1, 1, 2);
  const int t = 300;
  const Tensor x0 = oracle.predict_x0(x, t, 0b101u);
  for (int r = 0; r < 3; ++r) {
    const Eigen::Vector2d xr(x.at(r, 0, 0, 0), x.at(r, 1, 0, 0));
    const Eigen::VectorXd sc = m.exact_score(xr, 0b101u, t, s);
    const Eigen::VectorXd tw = (xr + s.sigma(t) * s.sigma(t) * sc) / std::sqrt(s.alpha_bar(t));
    CHECK(x0.at(r, 0, 0, 0) == doctest::Approx(tw(0)));
    CHECK(x0.at(r, 1, 0, 0) == doctest::Approx(tw(1)));
  }
  const Tensor cot = testutil::random_tensor(3, 2, 1, 1, 3);
  const Tensor vjp = oracle.x0_input_vjp(x, t, 0b101u, cot);
  for (int i = 0; i < 2; ++i) {
    Tensor a = x, b = x;
    a.at(1, i, 0, 0) += 1e-6;
    b.at(1, i, 0, 0) -= 1e-6;
    const Tensor fa = oracle.predict_x0(a, t, 0b101u);
    const Tensor fb = oracle.predict_x0(b, t, 0b101u);
    double fd = 0.0;
    for (int j = 0; j < 2; ++j) fd += cot.at(1, j, 0, 0) * (fa.at(1, j, 0, 0) - fb.at(1, j, 0, 0)) / 2e-6;
    CHECK(vjp.at(1, i, 0, 0) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("tilted distribution reduces to the conditional without weights") {
  const auto m = default_testbed();
  const GroupMask subs[] = {0b011u};
  const double zero[] = {0.0};
  const Gaussian g = m.tilted_distribution(subs, zero);
  const Gaussian c = m.conditional(0b111u);
  CHECK(g.mean.isApprox(c.mean, 1e-12));
  CHECK(g.cov.isApprox(c.cov, 1e-12));
  // A huge weight on a subset with positive precision contribution stays PD;
  // negative effective precision must be reported.
  const double neg[] = {-20.0};
  CHECK_THROWS_AS(m.tilted_distribution(subs, neg), NumericError);
}

TEST_CASE("testbed JSON parsing is strict") {
  const auto m = parse_testbed(R"({"prior_mean":[0],"prior_cov":[[2]],
      "groups":[{"name":"a","H":[[1]],"R":[[1]],"y":[1]}]})");
  CHECK(m.dimension() == 1);
  CHECK(m.conditional(1).mean(0) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(parse_testbed(R"({"prior_mean":[0],"prior_cov":[[1]],"groups":[],"bogus":1})"),
                  ValidationError);
}

TEST_CASE("affine pushforward of a deterministic sampler matches its samples") {
  const auto m = default_testbed();
  const auto s = NoiseSchedule::linear();
  GaussianOracleDenoiser oracle(m, s);
  SamplerConfig cfg;
  cfg.steps = 25;
  cfg.seed = 4;
  const Guidance g = Guidance::cfg(1.5, 3);
  const Gaussian law = affine_pushforward(oracle, 2, g, cfg, s);
  const Tensor xs = sample(oracle, 4000, 2, 1, 1, g, cfg, s);
  const MomentSummary mo = sample_moments(to_matrix(xs));
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mo.mean(i) - law.mean(i)) < 4.0 * mo.mean_se(i));
    for (int j = 0; j < 2; ++j) CHECK(std::abs(mo.cov(i, j) - law.cov(i, j)) < 5.0 * mo.cov_se(i, j));
  }
  cfg.method = SamplerMethod::ddpm;
  CHECK_THROWS_AS(affine_pushforward(oracle, 2, g, cfg, s), ValidationError);
}

TEST_CASE("few-step DPM++ stays close to the exact conditional") {
  const auto m = default_testbed();
  const auto s = NoiseSchedule::linear();
  GaussianOracleDenoiser oracle(m, s);
  const Gaussian exact = m.conditional(0b111u);
  auto cov_error = [&](int steps, int order) {
    SamplerConfig cfg;
    cfg.steps = steps;
    cfg.order = order;
    const Gaussian law = affine_pushforward(oracle, 2, Guidance::direct(), cfg, s);
    return (law.cov - exact.cov).norm() / exact.cov.norm();
  };
  // the last step jumps from t = T/steps to the clean end, which shrinks the
  // spread at every order; higher orders must not make it worse
  const double first = cov_error(10, 1), third = cov_error(10, 3);
  CHECK(third <= first);
  CHECK(third < 0.35);
  CHECK(cov_error(200, 3) < 0.01);
}

}  // TEST_SUITE
