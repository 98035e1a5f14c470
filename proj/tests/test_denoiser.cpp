#include <doctest.h>

#include "ccfg/dataset.hpp"
#include "ccfg/kernels.hpp"
#include "ccfg/pipeline.hpp"
#include "ccfg/synthetic.hpp"
#include "ccfg/train.hpp"
#include "test_util.hpp"

using namespace ccfg;

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

UNet small_net(int cond, std::uint64_t seed) {
  UNetArchitecture a;
  a.cond_channels = cond;
  a.width1 = 4;
  a.width2 = 6;
  a.width3 = 8;
  a.embed_dim = 8;
  UNet net(a);
  net.initialize(seed);
  return net;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("parallel conv matches the serial reference") {
  const int cin = 5, cout = 7;
  const Tensor w = testutil::random_tensor(1, cout * cin * 9, 1, 1, 1);
  const Tensor b = testutil::random_tensor(1, cout, 1, 1, 2);
  const kernels::Conv3x3 conv{cin, cout, w.data.data(), b.data.data()};
  const Tensor x = testutil::random_tensor(6, cin, 9, 11, 3);
  Tensor y, ys;
  kernels::conv3x3_forward(conv, x, y);
  kernels::serial::conv3x3_forward(conv, x, ys);
  CHECK(max_abs_diff(y, ys) < 1e-12);

  const Tensor dy = testutil::random_tensor(6, cout, 9, 11, 4);
  Tensor dx, dxs;
  std::vector<double> dw(w.size()), dws(w.size()), db(cout), dbs(cout);
  kernels::conv3x3_backward(conv, x, dy, &dx, dw.data(), db.data());
  kernels::serial::conv3x3_backward(conv, x, dy, &dxs, dws.data(), dbs.data());
  CHECK(max_abs_diff(dx, dxs) < 1e-12);
  for (std::size_t i = 0; i < dw.size(); ++i) CHECK(dw[i] == doctest::Approx(dws[i]).epsilon(1e-12));
  for (int i = 0; i < cout; ++i) CHECK(db[i] == doctest::Approx(dbs[i]).epsilon(1e-12));

  // <conv(x), dy> is linear in x, so dx is its gradient
  const Tensor dir = testutil::random_tensor(6, cin, 9, 11, 5);
  Tensor yd;
  kernels::serial::conv3x3_forward({cin, cout, w.data.data(), nullptr}, dir, yd);
  CHECK(dot(dx, dir) == doctest::Approx(dot(yd, dy)).epsilon(1e-12));
}

TEST_CASE("pool and upsample are adjoint pairs") {
  const Tensor x = testutil::random_tensor(2, 3, 8, 6, 6);
  const Tensor d = testutil::random_tensor(2, 3, 4, 3, 7);
  Tensor px, ud;
  kernels::avgpool2_forward(x, px);
  kernels::avgpool2_backward(d, ud);
  CHECK(dot(px, d) == doctest::Approx(dot(x, ud)).epsilon(1e-12));
  Tensor uy, dd;
  kernels::upsample2_forward(d, uy);
  kernels::upsample2_backward(x, dd);
  CHECK(dot(uy, x) == doctest::Approx(dot(d, dd)).epsilon(1e-12));
}

TEST_CASE("timestep embedding") {
  const int t[] = {0, 17, 999};
  const Tensor e = timestep_embedding(t, 8);
  CHECK(e.c == 8);
  CHECK(e.at(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(e.at(0, 4, 0, 0) == doctest::Approx(1.0));
  for (int i = 0; i < 4; ++i) {
    const double s = e.at(1, i, 0, 0), c = e.at(1, i + 4, 0, 0);
    CHECK(s * s + c * c == doctest::Approx(1.0));
  }
}

TEST_CASE("network gradients match finite differences") {
  UNet net = small_net(2, 3);
  const Tensor in = testutil::random_tensor(2, 5, 8, 8, 8);
  const int t[] = {120, 780};
  const Tensor cot = testutil::random_tensor(2, 3, 8, 8, 9);
  UNet::Tape tape;
  net.forward(in, t, &tape);
  std::vector<double> grad(net.parameter_count(), 0.0);
  const Tensor din = net.backward(tape, cot, grad, true);

  auto objective = [&]() { return dot(net.forward(in, t), cot); };
  Engine rng(4);
  for (int k = 0; k < 12; ++k) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, net.parameter_count() - 1)(rng);
    double& p = net.parameters()[i];
    const double keep = p;
    p = keep + 1e-5;
    const double up = objective();
    p = keep - 1e-5;
    const double down = objective();
    p = keep;
    const double fd = (up - down) / 2e-5;
    CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
  const Tensor dir = testutil::random_tensor(2, 5, 8, 8, 10);
  Tensor a = in, b = in;
  axpy(1e-5, dir, a);
  axpy(-1e-5, dir, b);
  const double fd = (dot(net.forward(a, t), cot) - dot(net.forward(b, t), cot)) / 2e-5;
  CHECK(dot(din, dir) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("checkpoint round trip") {
  UNet net = small_net(4, 5);
  for (double& p : net.parameters()) p = static_cast<float>(p);
  const auto dir = testutil::scratch_dir("ckpt");
  save_checkpoint(net, dir / "model.json");
  const UNet back = load_checkpoint(dir / "model.json");
  CHECK(back.parameter_count() == net.parameter_count());
  CHECK(std::equal(net.parameters().begin(), net.parameters().end(), back.parameters().begin()));
  CHECK(back.architecture().width2 == 6);
  std::filesystem::resize_file(dir / "model.bin", 16);
  CHECK_THROWS_AS(load_checkpoint(dir / "model.json"), FormatError);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const Dataset d = Dataset::from_pairs(generate_synthetic_set(3, 24));
  const PreparedSet data = prepare(d, vars::basic_inputs());
  double before = 0.0, after = 0.0;
  auto run = [&]() {
    UNet net(architecture_for(data, 4, 6, 8, 8));
    net.initialize(1);
    before = validation_l1(net, data, 9);
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 6;
    c.warmup_steps = 2;
    c.seed = 2;
    const TrainResult r = train(net, data, c);
    after = validation_l1(net, data, 9);
    return std::make_pair(r, std::vector<double>(net.parameters().begin(), net.parameters().end()));
  };
  const auto [r1, p1] = run();
  const auto [r2, p2] = run();
  CHECK(p1 == p2);
  CHECK(r1.curve.size() == 16);
  CHECK(after < before);
  CHECK(r1.dropped_views > 0);
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.warmup_steps = 10;
  CHECK(scheduled_learning_rate(c, 0, 100) == doctest::Approx(0.1));
  CHECK(scheduled_learning_rate(c, 9, 100) == doctest::Approx(1.0));
  CHECK(scheduled_learning_rate(c, 99, 100) < 0.01);
}

TEST_CASE("model denoiser masks absent groups") {
  const Dataset d = Dataset::from_pairs(generate_synthetic_set(5, 2));
  const PreparedSet data = prepare(d, vars::basic_inputs());
  UNet net(architecture_for(data, 4, 6, 8, 8));
  net.initialize(3);
  ModelDenoiser den(net, data.conditioning, data.channel_group, 3);
  const Tensor x = testutil::random_tensor(2, 3, 32, 32, 1);
  Tensor zeroed = data.conditioning;
  mask_groups(zeroed, data.channel_group, 0b001u);
  ModelDenoiser manual(net, zeroed, data.channel_group, 3);
  CHECK(max_abs_diff(den.predict_x0(x, 50, 0b001u), manual.predict_x0(x, 50, 0b111u)) == 0.0);
  CHECK(max_abs_diff(den.predict_x0(x, 50, 0b001u), den.predict_x0(x, 50, 0b111u)) > 0.0);
}

}  // TEST_SUITE
