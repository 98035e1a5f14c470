#include <doctest.h>

#include <fstream>
#include <numeric>

#include "ccfg/selection.hpp"
#include "ccfg/testbed.hpp"
#include "fakes.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ccfg;

namespace {

BatchProvider rigged_batches(GroupMask favored, std::uint64_t seed) {
  return [=](int it) {
    SelectionBatch b;
    b.targets = testutil::random_tensor(3, 1, 2, 2, seed * 1000 + static_cast<std::uint64_t>(it));
    b.denoiser = std::make_shared<testutil::RiggedDenoiser>(3, favored, b.targets);
    return b;
  };
}

}  // namespace

TEST_SUITE("selection") {

TEST_CASE("simplex projection basics") {
  const std::vector<double> inside{0.5, 0.25, 0.75};
  CHECK(project_simplex(inside, 1.5) == inside);
  const auto sym = project_simplex(std::vector<double>{2.0, 2.0, 2.0}, 1.5);
  for (double v : sym) CHECK(v == 0.5);
  const auto p = project_simplex(std::vector<double>{3.0, -1.0, 0.2}, 1.5);
  CHECK(p[0] == doctest::Approx(1.5));
  CHECK(p[1] == 0.0);
  CHECK(p[2] == 0.0);
  const std::vector<double> v{0.9, -0.3, 1.7, 0.4};
  const auto q = project_simplex(v, 2.0);
  const auto o = oracle::simplex_projection(v, 2.0);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(q[i] == doctest::Approx(o[i]).epsilon(1e-12));
  CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(project_simplex(std::vector<double>{}, 1.0), ValidationError);
}

TEST_CASE("pruning drops the first minimum and keeps the simplex") {
  SubsetWeights w = SubsetWeights::uniform(enumerate_subsets(3, 1), 1.5);
  w.weights = {0.5, 0.25, 0.25, 0.5};
  CHECK(prune_least_impactful(w, 2));
  CHECK(w.family.subsets == std::vector<GroupMask>{0b111u, 0b101u, 0b011u});
  CHECK(std::accumulate(w.weights.begin(), w.weights.end(), 0.0) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(prune_least_impactful(w, 2));
  CHECK(w.family.size() == 2);
  CHECK_FALSE(prune_least_impactful(w, 2));
  CHECK(w.family.size() == 2);
}

TEST_CASE("prune schedule") {
  CHECK(prune_interval(30, 4, 2) == 10);
  CHECK(prune_interval(5, 4, 1) == 2);
  SelectionConfig c;
  c.budget = 5;
  CHECK_THROWS_AS(c.validate(4), ValidationError);
  c.budget = 1;
  c.iterations = 3;
  CHECK_THROWS_AS(c.validate(4), ValidationError);
}

TEST_CASE("selection runs the prune schedule and finishes at the budget") {
  const auto sched = NoiseSchedule::linear();
  SelectionConfig c;
  c.max_omitted = 1;
  c.budget = 2;
  c.iterations = 30;
  c.inner_steps = 3;
  c.gradient_mode = GradientMode::analytic;
  const auto r = run_selection({"a", "b", "c"}, rigged_batches(0b101u, 1), c, sched);
  REQUIRE(r.trace.prunes.size() == 2);
  CHECK(r.trace.prunes[0].iteration == 10);
  CHECK(r.trace.prunes[1].iteration == 20);
  CHECK(r.weights.family.size() == 2);
  CHECK(std::accumulate(r.weights.weights.begin(), r.weights.weights.end(), 0.0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(std::find(r.weights.family.subsets.begin(), r.weights.family.subsets.end(), 0b101u) !=
        r.weights.family.subsets.end());
  CHECK(r.trace.rows.size() == 30);

  // N not a multiple of the interval: the remaining prune happens at the end
  c.budget = 1;
  c.iterations = 5;
  const auto f = run_selection({"a", "b", "c"}, rigged_batches(0b011u, 2), c, sched);
  CHECK(f.trace.prunes.size() == 3);
  CHECK(f.weights.family.subsets == std::vector<GroupMask>{0b011u});
  CHECK(f.weights.weights[0] == doctest::Approx(1.5));
}

TEST_CASE("analytic and finite-difference weight gradients agree") {
  const auto sched = NoiseSchedule::linear();
  const auto model = default_testbed();
  GaussianOracleDenoiser oracle(model, sched);
  const Tensor targets = testutil::random_tensor(6, 2, 1, 1, 77, 0.7);
  const std::vector<GroupMask> subsets{0b111u, 0b011u, 0b101u};
  const std::vector<double> w{0.4, 0.7, 0.4};
  SelectionConfig c;
  c.inner_steps = 6;
  c.fd_step = 1e-5;
  std::vector<double> ga, gf;
  c.gradient_mode = GradientMode::analytic;
  const double la = selection_loss(oracle, targets, subsets, w, c, sched, 5, &ga);
  c.gradient_mode = GradientMode::finite_difference;
  const double lf = selection_loss(oracle, targets, subsets, w, c, sched, 5, &gf);
  CHECK(la == lf);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(testutil::rel_err(ga[i], gf[i]) < 1e-5);
}

TEST_CASE("selection trace CSV layout") {
  const auto sched = NoiseSchedule::linear();
  SelectionConfig c;
  c.budget = 3;
  c.iterations = 2;
  c.inner_steps = 2;
  const auto r = run_selection({"a", "b", "c"}, rigged_batches(0b110u, 3), c, sched);
  const auto dir = testutil::scratch_dir("trace");
  r.trace.write_csv(dir / "trace.csv");
  std::ifstream in(dir / "trace.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "iteration,loss,w0,w1,w2,w3,pruned_mask,pruned_members");
  CHECK(first.rfind("1,", 0) == 0);
}

}  // TEST_SUITE
