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

#include <benchmark/benchmark.h>

#include <random>

#include "dynpet/kinetics.hpp"
#include "dynpet/motion.hpp"
#include "dynpet/ops.hpp"
#include "dynpet/phantom.hpp"
#include "dynpet/tensor.hpp"

namespace {

using namespace dynpet;

void BM_Conv3dForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  const Tensor x = Tensor::randn({8, n, n, n}, rng, 1.0);
  const Tensor w = Tensor::randn({8, 8, 3, 3, 3}, rng, 0.1);
  const Tensor b = Tensor::zeros({8});
  for (auto _ : state) {
    Tensor y = conv3d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_Conv3dForward)->Arg(16)->Arg(32);

void BM_Conv3dTrainStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  const Tensor x = Tensor::randn({4, n, n, n}, rng, 1.0);
  const Tensor w = Tensor::randn({4, 4, 3, 3, 3}, rng, 0.1, true);
  const Tensor b = Tensor::zeros({4}, true);
  for (auto _ : state) {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = mean(conv3d(x, w, b, 1, 1));
    tape.backward(loss);
    w.grad().assign(w.grad().size(), 0.0);
    b.grad().assign(b.grad().size(), 0.0);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(BM_Conv3dTrainStep)->Arg(16)->Arg(32);

void BM_Warp(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  PhantomConfig cfg;
  cfg.nx = cfg.ny = cfg.nz = n;
  cfg.geom = default_geometry(n, n, n);
  const StudySample s = simulate_study(cfg, 11);
  const DisplacementField f = simulate_motion(n, n, n, 8.0, 2.0, 3);
  for (auto _ : state) {
    Volume out = warp(s.series.frames.back(), f);
    benchmark::DoNotOptimize(out.v.data());
  }
}
BENCHMARK(BM_Warp)->Arg(32)->Arg(64);

void BM_Fit1tcm(benchmark::State& state) {
  PhantomConfig cfg;
  cfg.nx = cfg.ny = 32;
  cfg.nz = 32;
  cfg.geom = default_geometry(32, 32, 32);
  const StudySample s = simulate_study(cfg, 5);
  for (auto _ : state) {
    KineticParams p = fit_1tcm(s.lv_tac, s.myo_tac, s.series.timing);
    benchmark::DoNotOptimize(p.k1);
  }
}
BENCHMARK(BM_Fit1tcm);

void BM_Register(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  PhantomConfig cfg;
  cfg.nx = cfg.ny = cfg.nz = n;
  cfg.geom = default_geometry(n, n, n);
  const StudySample s = simulate_study(cfg, 11);
  const Volume& fixed = s.series.frames.back();
  DisplacementField f = make_field(n, n, n, 8.0);
  for (std::size_t i = 0; i < f.d.size(); i += 3) f.d[i] = 2.0;
  const Volume moving = warp(fixed, f);
  RegisterOptions opt;
  opt.iters = 25;
  for (auto _ : state) {
    RegisterResult r = register_volumes(moving, fixed, opt);
    benchmark::DoNotOptimize(r.trace.back());
  }
}
BENCHMARK(BM_Register)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
