#include <doctest.h>

#include "ccfg/io.hpp"
#include "ccfg/metrics.hpp"
#include "ccfg/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ccfg;

namespace {

PredictionSet random_set(int t, int e, int h, int w, std::uint64_t seed) {
  PredictionSet p;
  p.predictions = testutil::random_tensor(t, e, h, w, seed, 2.0);
  p.truths = testutil::random_tensor(t, 1, h, w, seed + 1, 2.0);
  for (int i = 0; i < t; ++i) p.timestamp_ids.push_back("t" + std::to_string(i));
  return p;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("crps identities") {
  const double one[] = {3.0};
  CHECK(crps(one, 1.5) == 1.5);
  const double two[] = {0.0, 2.0};
  CHECK(crps(two, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  Engine rng(3);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> ens(1 + k % 7);
    for (double& v : ens) v = standard_normal(rng);
    const double y = standard_normal(rng);
    CHECK(crps(ens, y) == doctest::Approx(oracle::crps_quadrature(ens, y)).epsilon(1e-12));
  }
}

TEST_CASE("crps of a one-member ensemble equals the MAE") {
  const PredictionSet p = random_set(5, 1, 4, 4, 2);
  double mae = 0.0;
  for (std::size_t i = 0; i < p.truths.size(); ++i) mae += std::abs(p.predictions.data[i] - p.truths.data[i]);
  mae /= static_cast<double>(p.truths.size());
  CHECK(crps_timestamps(p) == doctest::Approx(mae).epsilon(1e-14));
}

TEST_CASE("rmse definitions") {
  PredictionSet p = random_set(3, 2, 2, 2, 5);
  double s = 0.0;
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 4; ++i) {
      const double m = 0.5 * (p.predictions.at(t, 0, i / 2, i % 2) + p.predictions.at(t, 1, i / 2, i % 2));
      s += (m - p.truths.at(t, 0, i / 2, i % 2)) * (m - p.truths.at(t, 0, i / 2, i % 2));
    }
  CHECK(t_rmse(p) == doctest::Approx(std::sqrt(s / 12.0)).epsilon(1e-14));
  const FieldGrid mp = mean_map(p.predictions), mt = mean_map(p.truths);
  CHECK(mm_rmse(mp, mt) <= t_rmse(p) + 1e-15);
}

TEST_CASE("parallel metric reductions match the serial reference") {
  const PredictionSet p = random_set(17, 6, 8, 8, 9);
  CHECK(t_rmse(p) == doctest::Approx(serial::t_rmse(p)).epsilon(1e-13));
  CHECK(crps_timestamps(p) == doctest::Approx(serial::crps_timestamps(p)).epsilon(1e-13));
  const PredictionSet large = random_set(3, 40, 4, 4, 10);
  CHECK(crps_timestamps(large) == doctest::Approx(serial::crps_timestamps(large)).epsilon(1e-13));
}

TEST_CASE("bicubic upsampling reproduces linear ramps and nodes") {
  FieldGrid g(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) g(y, x) = 2.0 * x - y + 1.0;
  const FieldGrid u = upsample_bicubic(g, 3);
  CHECK(u.height == 12);
  // align corners: output (Y, X) sits at input (Y (h-1)/(H-1), ...). Corners
  // are nodes, and away from the clamped border the cubic kernel reproduces
  // linear functions exactly.
  CHECK(u(0, 0) == g(0, 0));
  CHECK(u(11, 11) == doctest::Approx(g(3, 3)).epsilon(1e-14));
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      const double sx = x * 3.0 / 11.0, sy = y * 3.0 / 11.0;
      if (sx < 1.0 || sx > 2.0 || sy < 1.0 || sy > 2.0) continue;
      CHECK(u(y, x) == doctest::Approx(2.0 * sx - sy + 1.0).epsilon(1e-12));
    }
  const SamplePair p = generate_synthetic_pair(4);
  const BicubicPrediction b = bicubic_baseline(p);
  CHECK(b.speed.height == 32);
  for (double d : b.direction.values) {
    CHECK(d >= 0.0);
    CHECK(d < 360.0);
  }
}

TEST_CASE("metric report and prediction files round trip") {
  const auto dir = testutil::scratch_dir("metrics");
  const std::vector<MetricRow> rows{{"ccfg", "synthetic-32", "t_rmse", 4.0, 8, 1.25},
                                    {"bicubic", "synthetic-32", "crps", 0.0, 1, 0.5}};
  write_metric_report(dir / "m.csv", rows);
  const auto back = read_metric_report(dir / "m.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].model == "ccfg");
  CHECK(back[0].ensemble == 8);
  CHECK(back[1].value == 0.5);

  const PredictionSet p = random_set(3, 2, 4, 4, 12);
  write_predictions(dir / "pred.json", p, {"cfg", 10, 2.0});
  PredictionMeta meta;
  const PredictionSet q = read_predictions(dir / "pred.json", &meta);
  CHECK(q.predictions.data == p.predictions.data);
  CHECK(q.truths.data == p.truths.data);
  CHECK(meta.scheme == "cfg");
  CHECK(meta.nfe_per_step == 2.0);
}

}  // TEST_SUITE
