#include "nnd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "nnd/error.hpp"

namespace nnd {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> values) {
  const auto n = shape_numel(shape);
  if (static_cast<std::size_t>(n) != values.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0F); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0F); }

Tensor Tensor::full(const Shape& shape, float value) {
  return Tensor(shape, std::vector<float>(static_cast<std::size_t>(shape_numel(shape)), value));
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, {value}); }

void Tensor::check_defined() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
}

const Shape& Tensor::shape() const {
  check_defined();
  return impl_->shape;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::int64_t Tensor::numel() const {
  check_defined();
  return static_cast<std::int64_t>(impl_->data.size());
}

std::span<const float> Tensor::values() const {
  check_defined();
  return impl_->data;
}

std::span<float> Tensor::mutable_values() {
  check_defined();
  if (impl_->grad_fn) throw UsageError("in-place write to a non-leaf tensor");
  return impl_->data;
}

float Tensor::item() const {
  check_defined();
  if (impl_->data.size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_string(impl_->shape));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const {
  check_defined();
  return impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool flag) {
  check_defined();
  if (impl_->grad_fn) throw UsageError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const {
  check_defined();
  return impl_->grad_fn == nullptr;
}

Tensor Tensor::grad() const {
  check_defined();
  return Tensor(impl_->grad);
}

void Tensor::set_grad(const Tensor& g) {
  check_defined();
  if (g.defined() && g.shape() != impl_->shape) {
    throw ShapeError("gradient shape " + shape_string(g.shape()) + " does not match tensor shape " +
                     shape_string(impl_->shape));
  }
  impl_->grad = g.impl();
}

void Tensor::clear_grad() {
  check_defined();
  impl_->grad.reset();
}

Tensor Tensor::detach() const {
  check_defined();
  // Shares nothing mutable with the graph: copy the buffer so later in-place
  // leaf updates cannot alias.
  return Tensor(impl_->shape, impl_->data);
}

Tensor Tensor::clone() const {
  Tensor out = detach();
  out.impl_->requires_grad = impl_->requires_grad && impl_->grad_fn == nullptr;
  return out;
}

namespace {
thread_local bool g_grad_mode = true;
std::atomic<std::uint64_t> g_sequence{0};
}  // namespace

bool grad_mode_enabled() noexcept { return g_grad_mode; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_mode) { g_grad_mode = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_mode = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<float> data, const char* op, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_mode) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->output = out.impl().get();
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

}  // namespace detail

}  // namespace nnd
