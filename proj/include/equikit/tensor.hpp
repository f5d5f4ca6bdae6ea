// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensor with reverse-mode automatic differentiation.
// Tensors are cheap handles onto shared storage; values are immutable once an
// op has consumed them (grad accumulation is the only sanctioned mutation).

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace equikit {

class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor ones(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double value) { return from({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int dim(int axis) const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const;

  double* data();
  const double* data() const;

  // Element accessors for tests and small kernels. Row-major.
  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  /// Gradient buffer, allocated on first touch. Same shape as the tensor.
  double* grad();
  const double* grad() const;
  bool has_grad() const;
  void zero_grad();
  Tensor grad_tensor() const;  // copy of the gradient (zeros if untouched)

  /// Deep copy of values; gradient state is not copied.
  Tensor clone() const;

  bool same_shape(const Tensor& other) const;
  bool all_finite() const;

  // Identity of the underlying storage (used by the tape).
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  Impl& impl();
  const Impl& impl() const;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Throws std::runtime_error if the tensor holds NaN or Inf. Every forward op
/// funnels its output through this; non-finite values are never silent.
void ensure_finite(const Tensor& t, const char* op_name);

// ---------------------------------------------------------------------------
// Tape: a Wengert list. Ops record themselves in execution order (inputs are
// always recorded before the op that consumes them), and backward() replays
// the list in reverse, accumulating gradients by sum. A tape is confined to
// one logical thread; there is no concurrent-recording contract.
// ---------------------------------------------------------------------------

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  struct Op {
    const char* name;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;  // reads output.grad(), accumulates into inputs
  };

  /// The tape currently recording on this thread, or nullptr.
  static Tape* active();

  /// RAII guard that makes a tape the active recorder for its scope.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  void record(Op op);
  std::size_t size() const { return ops_.size(); }

  /// Reverse sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and invokes
  /// each recorded backward rule whose output has received gradient, so every
  /// reachable tracked tensor ends with d(loss)/d(tensor) accumulated exactly
  /// once per path.
  void backward(Tensor& loss);

 private:
  std::vector<Op> ops_;
};

/// True if recording is active and any input is tracked; ops use this to
/// decide whether to register a backward rule.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace equikit
