#include <doctest.h>

#include "ccfg/sampler.hpp"
#include "ccfg/testbed.hpp"
#include "test_util.hpp"

using namespace ccfg;

TEST_SUITE("diffusion_core") {

TEST_CASE("linear schedule endpoints") {
  const auto s = NoiseSchedule::linear();
  CHECK(s.steps() == 1000);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.sigma(0) == 0.0);
  // alpha_bar is the running product of 1 - beta
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) prod *= 1.0 - s.beta(t);
  CHECK(s.alpha_bar(1000) == doctest::Approx(prod).epsilon(1e-12));
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) + s.sigma(t) * s.sigma(t) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("eps, x0 and score conversions invert each other") {
  const auto s = NoiseSchedule::linear();
  const Tensor x0 = testutil::random_tensor(2, 3, 4, 4, 1);
  const Tensor eps = testutil::random_tensor(2, 3, 4, 4, 2);
  for (int t : {1, 250, 1000}) {
    const Tensor xt = forward_diffuse(x0, t, eps, s);
    CHECK(max_abs_diff(x0_to_eps(xt, x0, t, s), eps) < 1e-9);
    CHECK(max_abs_diff(eps_to_x0(xt, eps, t, s), x0) < 1e-9);
    CHECK(max_abs_diff(score_to_eps(eps_to_score(eps, t, s), t, s), eps) < 1e-12);
    const Tensor sc = eps_to_score(eps, t, s);
    CHECK(sc.data[0] == doctest::Approx(-eps.data[0] / s.sigma(t)));
  }
}

TEST_CASE("inference timesteps are uniform and descending") {
  const auto ts = inference_timesteps(1000, 10);
  REQUIRE(ts.size() == 10);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() == 100);
  for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i - 1] - ts[i] == 100);
  CHECK(inference_timesteps(1000, 1000).back() == 1);
  CHECK(inference_timesteps(1000, 1) == std::vector<int>{1000});
  const auto odd = inference_timesteps(1000, 3);
  CHECK(odd == std::vector<int>{1000, 667, 333});
  CHECK_THROWS(inference_timesteps(1000, 0));
  CHECK_THROWS(inference_timesteps(10, 11));
}

TEST_CASE("ddpm step with exact eps recovers x0 at s = 0") {
  const auto s = NoiseSchedule::linear();
  const Tensor x0 = testutil::random_tensor(1, 2, 2, 2, 3);
  const Tensor eps = testutil::random_tensor(1, 2, 2, 2, 4);
  const Tensor xt = forward_diffuse(x0, 400, eps, s);
  CHECK(max_abs_diff(ddpm_step(xt, eps, 400, 0, s, nullptr), x0) < 1e-9);
}

TEST_CASE("ancestral coefficients match the Gaussian posterior") {
  const auto s = NoiseSchedule::linear();
  const int t = 300, r = 200;
  const double ab_t = s.alpha_bar(t), ab_s = s.alpha_bar(r);
  const double a_ts = ab_t / ab_s;
  const double var = (1.0 - ab_s) / (1.0 - ab_t) * (1.0 - a_ts);
  const auto c = ddpm_coefficients(t, r, s);
  CHECK(c.noise_std * c.noise_std == doctest::Approx(var).epsilon(1e-12));
  // Posterior mean: (sqrt(ab_s) beta_ts x0 + sqrt(a_ts) (1-ab_s) x_t) / (1 - ab_t)
  const double beta_ts = 1.0 - a_ts;
  const double cx0 = std::sqrt(ab_s) * beta_ts / (1.0 - ab_t);
  const double cxt = std::sqrt(a_ts) * (1.0 - ab_s) / (1.0 - ab_t);
  // x0 = (x_t - sigma_t eps) / sqrt(ab_t)
  CHECK(c.a == doctest::Approx(cxt + cx0 / std::sqrt(ab_t)).epsilon(1e-12));
  CHECK(c.b == doctest::Approx(-cx0 * s.sigma(t) / std::sqrt(ab_t)).epsilon(1e-12));
  const auto d = ddpm_coefficients(t, r, s, 0.0);
  CHECK(d.noise_std == 0.0);
}

TEST_CASE("first-order DPM++ equals the deterministic DDIM step") {
  const auto s = NoiseSchedule::linear();
  const Tensor xt = testutil::random_tensor(2, 1, 3, 3, 5);
  const Tensor x0 = testutil::random_tensor(2, 1, 3, 3, 6);
  const DpmppEntry hist[] = {{500, x0}};
  const Tensor a = dpmpp_step(xt, hist, 300, 1, s);
  const Tensor b = ddpm_step(xt, x0_to_eps(xt, x0, 500, s), 500, 300, s, nullptr);
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("higher-order DPM++ is exact for a constant data prediction") {
  const auto s = NoiseSchedule::linear();
  const Tensor xt = testutil::random_tensor(1, 1, 2, 2, 7);
  const Tensor x0 = testutil::random_tensor(1, 1, 2, 2, 8);
  const DpmppEntry hist[] = {{500, x0}, {700, x0}, {900, x0}};
  const Tensor o1 = dpmpp_step(xt, std::span(hist, 1), 300, 1, s);
  CHECK(max_abs_diff(dpmpp_step(xt, std::span(hist, 2), 300, 2, s), o1) < 1e-12);
  CHECK(max_abs_diff(dpmpp_step(xt, hist, 300, 3, s), o1) < 1e-12);
  CHECK_THROWS(dpmpp_step(xt, std::span(hist, 1), 300, 2, s));
}

TEST_CASE("noise source rows do not depend on batching") {
  NoiseSource all({10, 11, 12});
  Tensor a(3, 2, 2, 2);
  all.fill(a);
  NoiseSource one({11});
  Tensor b(1, 2, 2, 2);
  one.fill(b);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.data[i] == a.sample(1)[i]);
}

TEST_CASE("samples are independent of batch composition") {
  const auto sched = NoiseSchedule::linear();
  const auto model = default_testbed();
  GaussianOracleDenoiser oracle(model, sched);
  SamplerConfig cfg;
  cfg.method = SamplerMethod::ddpm;
  cfg.steps = 20;
  cfg.seed = 5;
  cfg.ensemble_count = 2;
  const Guidance g = Guidance::cfg(1.5, 3);
  const Tensor whole = sample(oracle, 4, 2, 1, 1, g, cfg, sched, 0);
  const Tensor tail = sample(oracle, 2, 2, 1, 1, g, cfg, sched, 2);
  // member-major: member e, item r sits at row e * rows + r
  for (int e = 0; e < 2; ++e)
    for (int r = 0; r < 2; ++r)
      for (int d = 0; d < 2; ++d) CHECK(whole.at(e * 4 + 2 + r, d, 0, 0) == tail.at(e * 2 + r, d, 0, 0));
}

TEST_CASE("sampler config validation") {
  const auto sched = NoiseSchedule::linear();
  SamplerConfig c;
  c.validate(sched);
  c.steps = 2;
  CHECK_THROWS_AS(c.validate(sched), ValidationError);
  c.steps = 2000;
  CHECK_THROWS_AS(c.validate(sched), ValidationError);
  CHECK(parse_sampler_method("dpmpp-multistep") == SamplerMethod::dpmpp);
  CHECK_THROWS(parse_sampler_method("euler"));
}

}  // TEST_SUITE
