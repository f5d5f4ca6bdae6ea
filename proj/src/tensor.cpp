// SPDX-License-Identifier: Apache-2.0

#include "equikit/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace equikit {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) {
  const std::int64_t n = shape_numel(shape);
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values.assign(static_cast<std::size_t>(n), 0.0);
}

Tensor Tensor::ones(std::vector<int> shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& v : t.impl_->values) v = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  const std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  return t;
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return *impl_;
}

const std::vector<int>& Tensor::shape() const { return impl().shape; }

int Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::out_of_range("tensor axis out of range");
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl().values.size()); }

double* Tensor::data() { return impl().values.data(); }
const double* Tensor::data() const { return impl().values.data(); }

double& Tensor::at(std::initializer_list<int> idx) {
  const auto& s = shape();
  if (idx.size() != s.size()) throw std::invalid_argument("index rank mismatch");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= s[axis]) throw std::out_of_range("tensor index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl().values[static_cast<std::size_t>(flat)];
}

double Tensor::at(std::initializer_list<int> idx) const {
  return const_cast<Tensor*>(this)->at(idx);
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() requires a scalar tensor");
  return impl().values[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl().requires_grad = value;
  return *this;
}

double* Tensor::grad() {
  auto& im = impl();
  if (im.grad.empty()) im.grad.assign(im.values.size(), 0.0);
  return im.grad.data();
}

const double* Tensor::grad() const {
  return const_cast<Tensor*>(this)->grad();
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

void Tensor::zero_grad() {
  auto& im = impl();
  if (!im.grad.empty()) std::fill(im.grad.begin(), im.grad.end(), 0.0);
}

Tensor Tensor::grad_tensor() const {
  const auto& im = impl();
  Tensor g(im.shape);
  if (!im.grad.empty()) std::copy(im.grad.begin(), im.grad.end(), g.data());
  return g;
}

Tensor Tensor::clone() const {
  const auto& im = impl();
  return Tensor::from(im.shape, im.values);
}

bool Tensor::same_shape(const Tensor& other) const { return shape() == other.shape(); }

bool Tensor::all_finite() const {
  for (double v : impl().values)
    if (!std::isfinite(v)) return false;
  return true;
}

void ensure_finite(const Tensor& t, const char* op_name) {
  if (!t.all_finite())
    throw std::runtime_error(std::string(op_name) + " produced a non-finite value");
}

// --- Tape ------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

void Tape::record(Op op) {
  op.output.set_requires_grad(true);
  ops_.push_back(std::move(op));
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward() requires a scalar loss");
  loss.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not reachable from the loss
    it->backward();
  }
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace equikit
