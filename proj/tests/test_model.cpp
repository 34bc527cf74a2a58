/*
 * dynpet : dynamic cardiac PET frame conversion and motion correction
 *
 * Copyright 2026 dynpet contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dynpet/checkpoint.hpp"
#include "dynpet/grad_check.hpp"
#include "dynpet/model.hpp"
#include "dynpet/ops.hpp"
#include "dynpet/tensor.hpp"

using namespace dynpet;

namespace {

Tensor random_input(int c, int nx, int ny, int nz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(c) * nx * ny * nz);
  for (double& x : v) x = u(rng);
  return Tensor::from({c, nx, ny, nz}, v, /*requires_grad=*/false);
}

TemporalInput example_temporal(int nframes, int frame) {
  TemporalInput t;
  t.num_frames = nframes;
  t.frame_index = frame;
  for (int f = 0; f < nframes; ++f) {
    t.rvbp.push_back(100.0 * std::exp(-0.1 * f));
    t.lvbp.push_back(80.0 * std::exp(-0.05 * f));
  }
  return t;
}

}  // namespace

TEST_CASE("film is the identity at gamma 1, beta 0") {
  Tensor m = random_input(4, 4, 4, 2, 1);
  const Tensor gamma = Tensor::full({4}, 1.0, false);
  const Tensor beta = Tensor::zeros({4}, false);
  Tensor out = film(m, gamma, beta);
  CHECK(out.data() == m.data());  // exact, not approximate

  // Generic coefficients scale and shift per channel.
  const Tensor g2 = Tensor::from({4}, {2.0, 1.0, 0.5, -1.0}, false);
  const Tensor b2 = Tensor::from({4}, {0.1, 0.0, -0.2, 1.0}, false);
  Tensor mod = film(m, g2, b2);
  const std::size_t chan = 4 * 4 * 2;
  for (int c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < chan; ++i) {
      const double expect =
          g2.data()[c] * m.data()[c * chan + i] + b2.data()[c];
      CHECK(mod.data()[c * chan + i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("zero-initialized temporal head gives identity modulation") {
  std::mt19937_64 rng(7);
  TemporalEncoder enc(8, 16, rng);
  auto [gamma, beta] = enc.modulation(example_temporal(27, 3));
  REQUIRE(gamma.numel() == 16);
  REQUIRE(beta.numel() == 16);
  for (double v : gamma.data()) CHECK(v == 1.0);
  for (double v : beta.data()) CHECK(v == 0.0);
}

TEST_CASE("temporal encoder reacts to the frame index once trained") {
  std::mt19937_64 rng(8);
  TemporalEncoder enc(8, 6, rng);
  // Give the head nonzero weights so the modulation can depend on time.
  std::vector<NamedParam> params;
  enc.collect("t", &params);
  for (NamedParam& p : params) {
    if (p.name == "t.head.w") {
      Tensor w = p.tensor;
      std::mt19937_64 r2(9);
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      for (double& v : w.data()) v = u(r2);
    }
  }
  auto [g3, b3] = enc.modulation(example_temporal(27, 3));
  auto [g9, b9] = enc.modulation(example_temporal(27, 9));
  bool differs = false;
  for (int i = 0; i < 6; ++i) {
    if (g3.data()[i] != g9.data()[i]) differs = true;
    if (b3.data()[i] != b9.data()[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("temporal encoder input validation") {
  std::mt19937_64 rng(3);
  TemporalEncoder enc(4, 4, rng);

  TemporalInput bad = example_temporal(10, 3);
  bad.lvbp.pop_back();
  CHECK_THROWS_AS((void)enc.modulation(bad), std::invalid_argument);

  TemporalInput range = example_temporal(10, 10);
  CHECK_THROWS_AS((void)enc.modulation(range), std::invalid_argument);

  TemporalInput count = example_temporal(10, 2);
  count.num_frames = 12;
  CHECK_THROWS_AS((void)enc.modulation(count), std::invalid_argument);
}

TEST_CASE("generator shape contracts") {
  for (int levels : {2, 3, 4}) {
    ModelConfig cfg;
    cfg.levels = levels;
    cfg.base_channels = 4;
    cfg.lstm_hidden = 6;
    std::mt19937_64 rng(11);
    Generator g(cfg, rng);
    Tensor x = random_input(2, 16, 16, 16, 12);
    Tensor y = g.forward(x, example_temporal(27, 2));
    REQUIRE(y.rank() == 4);
    CHECK(y.dim(0) == 1);
    CHECK(y.dim(1) == 16);
    CHECK(y.dim(2) == 16);
    CHECK(y.dim(3) == 16);
    for (double v : y.data()) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }

  // Extents not divisible by 2^levels are rejected.
  ModelConfig cfg;
  cfg.levels = 4;
  cfg.base_channels = 4;
  std::mt19937_64 rng(13);
  Generator g(cfg, rng);
  CHECK_THROWS_AS(
      (void)g.forward(random_input(2, 24, 16, 16, 1), example_temporal(27, 2)),
      std::invalid_argument);
  CHECK_THROWS_AS(
      (void)g.forward(random_input(1, 16, 16, 16, 1), example_temporal(27, 2)),
      std::invalid_argument);
}

TEST_CASE("film toggle is inert at initialization") {
  // With a zero head the modulation is the identity, so enabling FiLM must
  // not change the freshly initialized forward pass at all.
  ModelConfig with;
  with.levels = 2;
  with.base_channels = 4;
  with.lstm_hidden = 4;
  with.use_film = true;
  ModelConfig without = with;
  without.use_film = false;

  std::mt19937_64 rng_a(21), rng_b(21);
  Generator ga(with, rng_a);
  Generator gb(without, rng_b);
  Tensor x = random_input(2, 8, 8, 8, 22);
  Tensor ya = ga.forward(x, example_temporal(27, 1));
  Tensor yb = gb.forward(x, example_temporal(27, 1));
  CHECK(ya.data() == yb.data());
}

TEST_CASE("vanilla configuration ignores anatomy and timing") {
  ModelConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.lstm_hidden = 4;
  cfg.use_film = false;
  cfg.use_mask = false;
  std::mt19937_64 rng(31);
  Generator g(cfg, rng);

  Tensor frame = random_input(1, 8, 8, 8, 32);
  Tensor mask_a = random_input(1, 8, 8, 8, 33);
  Tensor mask_b = random_input(1, 8, 8, 8, 34);
  Tensor xa = concat({frame, mask_a});
  Tensor xb = concat({frame, mask_b});

  Tensor ya = g.forward(xa, example_temporal(27, 2));
  Tensor yb = g.forward(xb, example_temporal(27, 9));
  CHECK(ya.data() == yb.data());
}

TEST_CASE("discriminator starts undecided") {
  std::mt19937_64 rng(41);
  Discriminator d(16, 16, 8, 4, rng);
  Tensor x = random_input(1, 16, 16, 8, 42);
  Tensor logit = d.forward(x);
  REQUIRE(logit.numel() == 1);
  CHECK(logit.data()[0] == 0.0);  // zero-initialized output layer

  // Extents must be divisible by 8 (three stride-2 halvings).
  CHECK_THROWS_AS((void)d.forward(random_input(1, 12, 16, 8, 43)),
                  std::invalid_argument);
}

TEST_CASE("discriminator gradient w.r.t. its input") {
  std::mt19937_64 rng(51);
  Discriminator d(8, 8, 8, 2, rng);
  // Give the zero-initialized output layer weights so gradients flow.
  for (NamedParam& p : d.named_parameters()) {
    if (p.name == "d.fc.w") {
      Tensor w = p.tensor;
      std::mt19937_64 r2(52);
      std::uniform_real_distribution<double> u(-0.1, 0.1);
      for (double& v : w.data()) v = u(r2);
    }
  }
  Tensor x = random_input(1, 8, 8, 8, 53);
  Tensor probe = Tensor::from(x.shape(), x.data(), /*requires_grad=*/true);
  const double err =
      grad_check([&](const Tensor& t) { return sigmoid(d.forward(t)); },
                 probe);
  CHECK(err < 1e-4);
}

TEST_CASE("generator checkpoint round trip") {
  ModelConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 4;
  cfg.lstm_hidden = 6;
  std::mt19937_64 rng(61);
  Generator g(cfg, rng);

  const std::string path = "model_roundtrip_test.tgw";
  save_generator(path, g);
  Generator loaded = Generator::from_checkpoint(load_checkpoint(path));
  std::remove(path.c_str());

  CHECK(loaded.config().levels == cfg.levels);
  CHECK(loaded.config().base_channels == cfg.base_channels);
  CHECK(loaded.config().lstm_hidden == cfg.lstm_hidden);
  CHECK(loaded.config().use_film == cfg.use_film);
  CHECK(loaded.config().use_mask == cfg.use_mask);

  // Same parameters bit for bit.
  std::vector<NamedParam> pa = g.named_parameters();
  std::vector<NamedParam> pb = loaded.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].tensor.data() == pb[i].tensor.data());
  }

  // And the same forward pass.
  Tensor x = random_input(2, 16, 16, 8, 62);
  Tensor ya = g.forward(x, example_temporal(27, 4));
  Tensor yb = loaded.forward(x, example_temporal(27, 4));
  CHECK(ya.data() == yb.data());
}

TEST_CASE("forward determinism") {
  ModelConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.lstm_hidden = 4;
  std::mt19937_64 rng(71);
  Generator g(cfg, rng);
  Tensor x = random_input(2, 8, 8, 8, 72);
  Tensor a = g.forward(x, example_temporal(27, 2));
  Tensor b = g.forward(x, example_temporal(27, 2));
  CHECK(a.data() == b.data());
}
