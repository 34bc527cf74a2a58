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

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dynpet {

/// Dense double-precision N-d array. Row-major, last extent fastest.
/// Tensors are cheap shared handles: copying a Tensor aliases its storage,
/// which is what the gradient tape relies on.
struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool track = false;  // true when produced by (or feeding) a taped op
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);
  /// i.i.d. normal(0, sigma) entries from the given generator.
  static Tensor randn(std::vector<int> shape, std::mt19937_64& rng,
                      double sigma, bool requires_grad = false);

  bool defined() const { return p_ != nullptr; }
  const std::vector<int>& shape() const { return p_->shape; }
  std::int64_t numel() const {
    return static_cast<std::int64_t>(p_->data.size());
  }
  int dim(int axis) const { return p_->shape[axis]; }
  int rank() const { return static_cast<int>(p_->shape.size()); }

  std::vector<double>& data() { return p_->data; }
  const std::vector<double>& data() const { return p_->data; }

  bool requires_grad() const { return p_->requires_grad; }
  bool track() const { return p_->track; }
  void set_track(bool on) { p_->track = on; }

  /// Gradient buffer, allocated zero-filled on first access. Tensors are
  /// shared handles, so backward rules accumulate through const copies.
  std::vector<double>& grad() const;
  bool has_grad() const { return !p_->grad.empty(); }
  void zero_grad() { p_->grad.clear(); }
  void accumulate_grad(const std::vector<double>& g);

  /// Value of a single-element tensor.
  double scalar() const;

  /// True if any entry is NaN or Inf.
  bool has_nonfinite() const;

  TensorImpl* impl() const { return p_.get(); }

 private:
  std::shared_ptr<TensorImpl> p_;
};

/// Records the operations of one forward pass in execution order and
/// replays their backward rules in exact reverse order. Single-writer:
/// one tape belongs to one logical thread. Activation is scoped.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and sweeps the recorded ops in reverse.
  /// Gradients of recorded outputs are cleared first, so leaves accumulate
  /// across repeated calls while intermediates are recomputed per sweep.
  /// Throws std::invalid_argument if loss is not scalar.
  void backward(const Tensor& loss);

  void record(const char* op, const Tensor& out,
              std::function<void()> backward_fn);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  static Tape* active();

  /// Activates a tape for the current thread for the lifetime of the scope.
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  struct Node {
    const char* op;
    Tensor out;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

[[noreturn]] void shape_error(const std::string& op, const std::string& what);

std::string shape_str(const std::vector<int>& s);

}  // namespace dynpet
