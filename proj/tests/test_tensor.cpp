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
#include <string>

#include "doctest.h"
#include "dynpet/adam.hpp"
#include "dynpet/checkpoint.hpp"
#include "dynpet/grad_check.hpp"
#include "dynpet/ops.hpp"
#include "dynpet/tensor.hpp"

using namespace dynpet;

namespace {

/// Random entries with |x| in [0.3, 1.3]: bounded away from the relu/clamp
/// kinks so finite differences stay valid.
Tensor rand_away(std::vector<int> shape, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(shape);
  std::uniform_real_distribution<double> mag(0.3, 1.3);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.data()) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return t;
}

Tensor rand_pos(std::vector<int> shape, std::mt19937_64& rng, double lo,
                double hi) {
  Tensor t = Tensor::zeros(shape);
  std::uniform_real_distribution<double> mag(lo, hi);
  for (double& v : t.data()) v = mag(rng);
  return t;
}

}  // namespace

TEST_CASE("op anchors") {
  std::mt19937_64 rng(1);

  // identity 1x1x1 convolution
  const Tensor x = rand_away({1, 3, 3, 3}, rng);
  const Tensor w1 = Tensor::from({1, 1, 1, 1, 1}, {1.0});
  const Tensor b0 = Tensor::zeros({1});
  const Tensor y = conv3d(x, w1, b0, 1, 0);
  REQUIRE(y.shape() == x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[i] == x.data()[i]);

  CHECK(tanh(Tensor::zeros({1})).scalar() == 0.0);
  CHECK(sigmoid(Tensor::zeros({1})).scalar() == 0.5);

  const Tensor a = Tensor::zeros({2, 4, 4, 4});
  const Tensor b = Tensor::zeros({3, 4, 4, 4});
  CHECK(concat({a, b}).shape() == std::vector<int>{5, 4, 4, 4});
}

TEST_CASE("backward anchors") {
  // loss = mean(x), grads all 0.25
  Tensor x = Tensor::from({4}, {1.0, 2.0, 3.0, 4.0}, true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(mean(x));
  }
  for (double g : x.grad()) CHECK(g == doctest::Approx(0.25).epsilon(1e-12));

  // loss = sum(x*x) at [1,2] -> grad [2,4]
  Tensor q = Tensor::from({2}, {1.0, 2.0}, true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(mul(q, q)));
  }
  CHECK(q.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(q.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));

  // repeated backward without reset accumulates
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor r = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor loss = sum(mul(r, r));
    tape.backward(loss);
    tape.backward(loss);
    CHECK(r.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r.grad()[1] == doctest::Approx(8.0).epsilon(1e-12));
  }

  // non-scalar loss rejected
  Tensor v = Tensor::from({2}, {1.0, 2.0}, true);
  Tape tape;
  Tape::Scope scope(tape);
  CHECK_THROWS_AS(tape.backward(mul(v, v)), std::invalid_argument);
}

TEST_CASE("gradient partition properties") {
  std::mt19937_64 rng(2);

  // concat backward splits the upstream gradient exactly
  Tensor a = rand_away({2, 3, 3, 3}, rng);
  Tensor b = rand_away({3, 3, 3, 3}, rng);
  a.set_track(true);
  b.set_track(true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(concat({a, b})));
  }
  for (double g : a.grad()) CHECK(g == 1.0);
  for (double g : b.grad()) CHECK(g == 1.0);

  // mean-reduction gradient entries sum to 1
  Tensor m = rand_away({4, 5}, rng);
  m.set_track(true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(mean(m));
  }
  double acc = 0.0;
  for (double g : m.grad()) acc += g;
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("grad_check: elementwise and reshaping primitives") {
  std::mt19937_64 rng(3);
  const double tol = 1e-4;

  const Tensor x = rand_away({2, 8, 8, 8}, rng);
  CHECK(grad_check([](const Tensor& t) { return mean(relu(t)); }, x) < tol);
  CHECK(grad_check([](const Tensor& t) { return mean(leaky_relu(t, 0.2)); },
                   x) < tol);
  CHECK(grad_check([](const Tensor& t) { return mean(tanh(t)); }, x) < tol);
  CHECK(grad_check([](const Tensor& t) { return mean(sigmoid(t)); }, x) < tol);
  CHECK(grad_check([](const Tensor& t) { return mean(mul(t, t)); }, x) < tol);
  CHECK(grad_check([](const Tensor& t) { return mean(scale(t, 2.5)); }, x) <
        tol);
  CHECK(grad_check([](const Tensor& t) { return mean(add_scalar(t, 1.5)); },
                   x) < tol);
  CHECK(grad_check([](const Tensor& t) { return sum(t); }, x) < tol);

  const Tensor pos = rand_pos({4, 4}, rng, 0.5, 2.0);
  CHECK(grad_check([](const Tensor& t) { return mean(log(t)); }, pos) < tol);
  CHECK(grad_check([](const Tensor& t) { return mean(clamp(t, 0.0, 10.0)); },
                   pos) < tol);

  const Tensor c = rand_away({2, 8, 8, 8}, rng);
  CHECK(grad_check([&](const Tensor& t) { return mean(add(t, c)); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return mean(sub(t, c)); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return mean(mul(t, c)); }, x) < tol);

  CHECK(grad_check(
            [](const Tensor& t) { return mean(reshape(t, {8, 64, 2})); }, x) <
        tol);
  CHECK(grad_check([](const Tensor& t) { return mean(slice0(t, 1, 2)); }, x) <
        tol);
  CHECK(grad_check([&](const Tensor& t) { return mean(concat({t, c})); }, x) <
        tol);

  const Tensor r2 = rand_away({5, 7}, rng);
  CHECK(grad_check([](const Tensor& t) { return mean(transpose2d(t)); }, r2) <
        tol);
  CHECK(grad_check([](const Tensor& t) { return mean(row_mean(t)); }, r2) <
        tol);
}

TEST_CASE("grad_check: convolution family") {
  std::mt19937_64 rng(4);
  const double tol = 1e-4;

  const Tensor x = rand_away({2, 8, 8, 8}, rng);
  const Tensor w = rand_away({3, 2, 3, 3, 3}, rng);
  const Tensor b = rand_away({3}, rng);

  for (int stride : {1, 2}) {
    CHECK(grad_check(
              [&](const Tensor& t) { return mean(conv3d(t, w, b, stride, 1)); },
              x) < tol);
    CHECK(grad_check(
              [&](const Tensor& t) { return mean(conv3d(x, t, b, stride, 1)); },
              w) < tol);
    CHECK(grad_check(
              [&](const Tensor& t) { return mean(conv3d(x, w, t, stride, 1)); },
              b) < tol);
  }

  const Tensor wt = rand_away({2, 3, 2, 2, 2}, rng);
  const Tensor x4 = rand_away({2, 4, 4, 4}, rng);
  for (int stride : {1, 2}) {
    CHECK(grad_check(
              [&](const Tensor& t) {
                return mean(conv_transpose3d(t, wt, b, stride));
              },
              x4) < tol);
    CHECK(grad_check(
              [&](const Tensor& t) {
                return mean(conv_transpose3d(x4, t, b, stride));
              },
              wt) < tol);
    CHECK(grad_check(
              [&](const Tensor& t) {
                return mean(conv_transpose3d(x4, wt, t, stride));
              },
              b) < tol);
  }
}

TEST_CASE("grad_check: conv1d, linear, film, lstm") {
  std::mt19937_64 rng(5);
  const double tol = 1e-4;

  const Tensor seq = rand_away({3, 9}, rng);
  const Tensor w1 = rand_away({4, 3, 3}, rng);
  const Tensor b1 = rand_away({4}, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return mean(conv1d(t, w1, b1, 1)); }, seq) <
        tol);
  CHECK(grad_check(
            [&](const Tensor& t) { return mean(conv1d(seq, t, b1, 1)); }, w1) <
        tol);
  CHECK(grad_check(
            [&](const Tensor& t) { return mean(conv1d(seq, w1, t, 1)); }, b1) <
        tol);

  const Tensor xv = rand_away({6}, rng);
  const Tensor wl = rand_away({4, 6}, rng);
  const Tensor bl = rand_away({4}, rng);
  CHECK(grad_check([&](const Tensor& t) { return mean(linear(t, wl, bl)); },
                   xv) < tol);
  CHECK(grad_check([&](const Tensor& t) { return mean(linear(xv, t, bl)); },
                   wl) < tol);
  CHECK(grad_check([&](const Tensor& t) { return mean(linear(xv, wl, t)); },
                   bl) < tol);

  const Tensor m = rand_away({3, 4, 4, 4}, rng);
  const Tensor gamma = rand_away({3}, rng);
  const Tensor beta = rand_away({3}, rng);
  CHECK(grad_check([&](const Tensor& t) { return mean(film(t, gamma, beta)); },
                   m) < tol);
  CHECK(grad_check([&](const Tensor& t) { return mean(film(m, t, beta)); },
                   gamma) < tol);
  CHECK(grad_check([&](const Tensor& t) { return mean(film(m, gamma, t)); },
                   beta) < tol);

  // LSTM cell step then mean, random 8-dim state
  const int h = 8, f = 3;
  LstmWeights lw;
  lw.wi = rand_away({h, f + h}, rng);
  lw.bi = rand_away({h}, rng);
  lw.wf = rand_away({h, f + h}, rng);
  lw.bf = rand_away({h}, rng);
  lw.wg = rand_away({h, f + h}, rng);
  lw.bg = rand_away({h}, rng);
  lw.wo = rand_away({h, f + h}, rng);
  lw.bo = rand_away({h}, rng);
  const Tensor xs = rand_away({f}, rng);
  const Tensor h0 = rand_away({h}, rng);
  const Tensor c0 = rand_away({h}, rng);
  auto through_cell = [&](const Tensor& t) {
    LstmState st{h0, c0};
    LstmState nxt = lstm_cell(t, st, lw);
    return mean(add(nxt.h, nxt.c));
  };
  CHECK(grad_check(through_cell, xs) < tol);
  CHECK(grad_check(
            [&](const Tensor& t) {
              LstmWeights lw2 = lw;
              lw2.wi = t;
              LstmState nxt = lstm_cell(xs, {h0, c0}, lw2);
              return mean(nxt.h);
            },
            lw.wi) < tol);
}

TEST_CASE("grad_check: composite graph, tight tolerance") {
  std::mt19937_64 rng(6);
  // strictly positive pre-activations keep relu smooth for the 1e-5 check
  const Tensor x = rand_pos({2, 6, 6, 6}, rng, 0.5, 1.0);
  const Tensor w = rand_pos({3, 2, 3, 3, 3}, rng, 0.1, 0.2);
  const Tensor b = rand_pos({3}, rng, 0.05, 0.1);
  CHECK(grad_check(
            [&](const Tensor& t) { return mean(relu(conv3d(t, w, b, 1, 1))); },
            x) < 1e-5);
}

TEST_CASE("shape errors name the primitive") {
  const Tensor x = Tensor::zeros({3, 4, 4, 4});
  const Tensor w = Tensor::zeros({2, 2, 3, 3, 3});
  const Tensor b = Tensor::zeros({2});
  bool threw = false;
  try {
    conv3d(x, w, b, 1, 1);
  } catch (const std::invalid_argument& e) {
    threw = true;
    CHECK(std::string(e.what()).find("conv3d") != std::string::npos);
  }
  CHECK(threw);
  CHECK_THROWS_AS(concat({Tensor::zeros({2, 4}), Tensor::zeros({2, 5})}),
                  std::invalid_argument);
  CHECK_THROWS_AS(linear(Tensor::zeros({3}), Tensor::zeros({2, 4}), b),
                  std::invalid_argument);
}

TEST_CASE("adam anchors") {
  // first step with bias correction: p' ~= p - lr * sign(g)
  {
    std::vector<Tensor> params{Tensor::from({1}, {1.0}, true)};
    params[0].grad()[0] = 0.5;
    AdamState st;
    st.lr = 0.1;
    adam_step(params, st);
    CHECK(st.t == 1);
    CHECK(params[0].data()[0] ==
          doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  }

  // zero gradient leaves the parameter unchanged but advances the step
  {
    std::vector<Tensor> params{Tensor::from({1}, {1.0}, true)};
    params[0].grad()[0] = 0.0;
    AdamState st;
    adam_step(params, st);
    CHECK(st.t == 1);
    CHECK(params[0].data()[0] == 1.0);
  }

  // 100 steps on f(p) = p^2 from p = 1 converges near zero
  {
    std::vector<Tensor> params{Tensor::from({1}, {1.0}, true)};
    AdamState st;
    st.lr = 0.1;
    for (int i = 0; i < 100; ++i) {
      Tape tape;
      Tape::Scope scope(tape);
      tape.backward(mul(params[0], params[0]));
      adam_step(params, st);
      params[0].zero_grad();
    }
    CHECK(std::abs(params[0].data()[0]) < 0.1);
  }
}

TEST_CASE("forward determinism is bitwise") {
  std::mt19937_64 rng(7);
  const Tensor x = rand_away({2, 8, 8, 8}, rng);
  const Tensor w = rand_away({3, 2, 3, 3, 3}, rng);
  const Tensor b = rand_away({3}, rng);
  const Tensor y1 = conv3d(x, w, b, 2, 1);
  const Tensor y2 = conv3d(x, w, b, 2, 1);
  for (std::int64_t i = 0; i < y1.numel(); ++i)
    CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  std::mt19937_64 rng(8);
  std::vector<NamedParam> params;
  params.push_back({"g.enc0.w", rand_away({4, 2, 3, 3, 3}, rng)});
  params.push_back({"g.enc0.b", rand_away({4}, rng)});
  params.push_back({"meta.model", Tensor::from({5}, {4, 16, 32, 1, 0})});
  // a value that does not round-trip through decimal text
  params[0].tensor.data()[0] = 0.1 + 0.2;

  const std::string path = "ckpt_roundtrip_test.tgw";
  save_checkpoint(path, params);
  const std::vector<NamedParam> back = load_checkpoint(path);
  std::remove(path.c_str());

  REQUIRE(back.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(back[i].name == params[i].name);
    REQUIRE(back[i].tensor.shape() == params[i].tensor.shape());
    for (std::int64_t j = 0; j < back[i].tensor.numel(); ++j)
      CHECK(back[i].tensor.data()[j] == params[i].tensor.data()[j]);
  }
}
