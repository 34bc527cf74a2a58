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

#include "dynpet/tensor.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "dynpet/common.hpp"

namespace dynpet {

namespace {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= e;
  }
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.p_ = std::make_shared<TensorImpl>();
  t.p_->shape = std::move(shape);
  t.p_->data.assign(shape_numel(t.p_->shape), 0.0);
  t.p_->requires_grad = requires_grad;
  t.p_->track = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.p_->data) v = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("tensor data length does not match shape " +
                                shape_str(shape));
  Tensor t;
  t.p_ = std::make_shared<TensorImpl>();
  t.p_->shape = std::move(shape);
  t.p_->data = std::move(data);
  t.p_->requires_grad = requires_grad;
  t.p_->track = requires_grad;
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng, double sigma,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : t.p_->data) v = dist(rng);
  return t;
}

std::vector<double>& Tensor::grad() const {
  if (p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0);
  return p_->grad;
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
  if (g.size() != p_->data.size())
    throw std::invalid_argument("gradient size mismatch");
  std::vector<double>& dst = grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

double Tensor::scalar() const {
  if (numel() != 1)
    throw std::invalid_argument("scalar() on tensor of shape " +
                                shape_str(p_->shape));
  return p_->data[0];
}

bool Tensor::has_nonfinite() const {
  for (double v : p_->data)
    if (!std::isfinite(v)) return true;
  return false;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

void Tape::record(const char* op, const Tensor& out,
                  std::function<void()> backward_fn) {
  nodes_.push_back(Node{op, out, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument(
        "backward: loss must be a scalar tensor, got shape " +
        (loss.defined() ? shape_str(loss.shape()) : std::string("<none>")));
  // Intermediate gradients are per-sweep scratch; only leaves accumulate
  // across repeated backward() calls.
  for (const Node& n : nodes_) {
    Tensor out = n.out;  // shared handle
    out.zero_grad();
  }
  loss.impl()->grad.assign(1, 0.0);
  loss.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

void shape_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// worker pool

namespace {

int env_worker_count() {
  if (const char* s = std::getenv("DYNPET_THREADS")) {
    int n = std::atoi(s);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

thread_local bool g_in_parallel_section = false;

}  // namespace

int worker_count() {
  static int n = env_worker_count();
  return n;
}

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  const int workers = worker_count();
  if (workers == 1 || n == 1 || g_in_parallel_section) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const int use = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::atomic<std::int64_t> next(begin);
  std::vector<std::thread> threads;
  threads.reserve(use);
  for (int t = 0; t < use; ++t) {
    threads.emplace_back([&] {
      g_in_parallel_section = true;
      for (;;) {
        std::int64_t i = next.fetch_add(1);
        if (i >= end) break;
        fn(i);
      }
      g_in_parallel_section = false;
    });
  }
  for (auto& th : threads) th.join();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dynpet
