#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "ccfg/dataset.hpp"
#include "ccfg/pipeline.hpp"
#include "ccfg/synthetic.hpp"
#include "test_util.hpp"

using namespace ccfg;

TEST_SUITE("grid_data") {

TEST_CASE("synthetic pairs are deterministic and satisfy the pairing invariants") {
  const SamplePair a = generate_synthetic_pair(11);
  const SamplePair b = generate_synthetic_pair(11);
  const SamplePair c = generate_synthetic_pair(12);
  a.validate();
  CHECK(a.hr_height() == 32);
  CHECK(a.target(vars::hr_speed).grid == b.target(vars::hr_speed).grid);
  CHECK_FALSE(a.target(vars::hr_speed).grid == c.target(vars::hr_speed).grid);
  const auto* lr = a.conditioning.find(vars::lr_speed);
  REQUIRE(lr != nullptr);
  CHECK(lr->grid.height == 4);
  for (double v : a.target(vars::hr_speed).grid.values) {
    CHECK(v >= 0.0);
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
}

TEST_CASE("coarsen averages blocks and bilinear upsampling reproduces constants") {
  FieldGrid g(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) g(y, x) = y * 4 + x;
  const FieldGrid c = coarsen(g, 2);
  CHECK(c(0, 0) == doctest::Approx(2.5));
  CHECK(c(1, 1) == doctest::Approx(12.5));
  const FieldGrid up = upsample_bilinear(FieldGrid(2, 2, 3.25), 4);
  CHECK(up.height == 8);
  for (double v : up.values) CHECK(v == doctest::Approx(3.25).epsilon(1e-14));
  CHECK_THROWS_AS(coarsen(FieldGrid(5, 4), 2), DimensionError);
}

TEST_CASE("direction encoding round trips") {
  for (double deg : {0.0, 45.0, 90.0, 179.5, 270.0, 359.0}) {
    const auto [s, c] = encode_direction(deg);
    CHECK(decode_direction(s, c) == doctest::Approx(deg).epsilon(1e-12));
  }
  CHECK(decode_direction(0.0, 1.0) == 0.0);
}

TEST_CASE("standardization round trips") {
  FieldGrid g(3, 3);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = 0.7 * i - 1.0;
  const Moments m{2.0, 0.5};
  const FieldGrid back = destandardize(standardize(g, m), m);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(back.values[i] == doctest::Approx(g.values[i]));
  CHECK_THROWS(standardize(g, Moments{0.0, 0.0}));
}

TEST_CASE("dropped groups are zero in the assembled channels but kept in storage") {
  const SamplePair p = generate_synthetic_pair(3);
  const ConditioningSet basic = p.conditioning.restricted_to(vars::basic_inputs());
  const ConditioningSet dropped = apply_dropout(basic, {vars::lr_speed});
  CHECK_FALSE(dropped.is_present(vars::lr_speed));
  CHECK(dropped.find(vars::lr_speed)->grid == basic.find(vars::lr_speed)->grid);

  const auto full = assemble_conditioning(basic, p.stats, 32, 32, 8);
  const auto part = assemble_conditioning(dropped, p.stats, 32, 32, 8);
  REQUIRE(full.channels.c == 4);
  const int g = dropped.group_index(vars::lr_speed);
  for (int ch = 0; ch < full.channels.c; ++ch) {
    const double* a = full.channels.channel(0, ch);
    const double* b = part.channels.channel(0, ch);
    bool any_nonzero = false;
    for (std::size_t i = 0; i < full.channels.plane(); ++i) {
      if (part.channel_group[ch] == g) {
        CHECK(b[i] == 0.0);
      } else {
        CHECK(b[i] == a[i]);
      }
      any_nonzero = any_nonzero || a[i] != 0.0;
    }
    CHECK(any_nonzero);
  }
}

TEST_CASE("crops keep the low-res grid aligned") {
  const SamplePair p = generate_synthetic_pair(5);
  const SamplePair c = sample_crop(p, 16, 99, false);
  c.validate();
  CHECK(c.hr_height() == 16);
  CHECK(c.conditioning.find(vars::lr_speed)->grid.height == 2);
  CHECK_THROWS(sample_crop(p, 12, 1, false));
}

TEST_CASE("dataset round trip is bit exact") {
  const auto dir = testutil::scratch_dir("dataset_rt");
  const Dataset d = Dataset::from_pairs(generate_synthetic_set(21, 5));
  const auto manifest = write_dataset(d, dir);
  const Dataset r = read_dataset(manifest, {vars::hr_speed, vars::lr_speed});
  REQUIRE(r.pairs.size() == d.pairs.size());
  CHECK(r.stats == d.stats);
  CHECK(r.variables == d.variables);
  for (std::size_t i = 0; i < d.pairs.size(); ++i) {
    CHECK(r.pairs[i].timestamp_id == d.pairs[i].timestamp_id);
    for (std::size_t v = 0; v < d.pairs[i].targets.size(); ++v) {
      CHECK(r.pairs[i].targets[v].grid == d.pairs[i].targets[v].grid);
    }
    for (std::size_t v = 0; v < d.pairs[i].conditioning.variables().size(); ++v) {
      CHECK(r.pairs[i].conditioning.variables()[v].grid == d.pairs[i].conditioning.variables()[v].grid);
    }
  }
}

TEST_CASE("corrupt datasets are rejected with the failing record") {
  const auto dir = testutil::scratch_dir("dataset_bad");
  const auto manifest = write_dataset(Dataset::from_pairs(generate_synthetic_set(4, 3)), dir);
  CHECK_THROWS_AS(read_dataset(manifest, {"no_such_variable"}), FormatError);

  const auto payload = dir / "payload.bin";
  const auto size = std::filesystem::file_size(payload);
  std::filesystem::resize_file(payload, size - 10);
  try {
    read_dataset(manifest);
    FAIL("truncated payload accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("record 2") != std::string::npos);
  }

  write_dataset(Dataset::from_pairs(generate_synthetic_set(4, 3)), dir);
  {
    std::fstream f(payload, std::ios::in | std::ios::out | std::ios::binary);
    nlohmann::json m = nlohmann::json::parse(std::ifstream(manifest));
    f.seekp(m["records"][1]["offset"].get<std::size_t>());
    f.put('X');
  }
  CHECK_THROWS_AS(read_dataset(manifest), FormatError);
}

TEST_CASE("prepare assembles standardized targets and the group table") {
  const Dataset d = Dataset::from_pairs(generate_synthetic_set(8, 4));
  const PreparedSet p = prepare(d, vars::basic_inputs());
  CHECK(p.size() == 4);
  CHECK(p.targets.c == 3);
  CHECK(p.conditioning.c == 4);
  CHECK(p.groups.size() == 3);
  const Tensor speed = speed_channels(p.targets, p.scaling);
  const auto& truth = d.pairs[2].target(vars::hr_speed).grid;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(speed.sample(2)[i] == doctest::Approx(truth.values[i]).epsilon(1e-12));
  }
}

}  // TEST_SUITE
