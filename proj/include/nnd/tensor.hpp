#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nnd {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

/// Which inputs of a node need a gradient in the current backward pass.
using InputMask = std::vector<bool>;

using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad_output, const std::vector<Tensor>& inputs,
                                      const InputMask& needed)>;

// One recorded operation. Nodes are ordered by `sequence`, which is the
// global append order, so sorting reachable nodes by descending sequence is a
// valid reverse topological order.
struct Node {
  std::uint64_t sequence = 0;
  const char* op = "";
  std::vector<Tensor> inputs;
  BackwardFn backward;
  const TensorImpl* output = nullptr;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
  std::shared_ptr<TensorImpl> grad;
};

}  // namespace detail

/// Dense row-major float32 array with reverse-mode autodiff.
///
/// Copies share storage (handle semantics, like a framework tensor); use
/// clone() for an independent copy. Only leaves may be mutated in place.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, float value);
  static Tensor scalar(float value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;

  std::span<const float> values() const;
  /// Writable view of a leaf's storage; throws UsageError on graph outputs.
  std::span<float> mutable_values();
  float item() const;
  float at(std::int64_t flat_index) const { return values()[static_cast<std::size_t>(flat_index)]; }

  bool requires_grad() const;
  /// Marks a leaf as differentiable. Throws UsageError on non-leaves.
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  /// Accumulated gradient from backward(); undefined tensor when absent.
  Tensor grad() const;
  void set_grad(const Tensor& g);
  void clear_grad();

  /// Same values, no graph history, requires_grad off.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  void check_defined() const;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Whether new operations are recorded onto the graph (thread-local).
bool grad_mode_enabled() noexcept;

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

namespace detail {

/// Wraps freshly computed values as an op result, recording a node when grad
/// mode is on and any input requires a gradient.
Tensor make_result(Shape shape, std::vector<float> data, const char* op, std::vector<Tensor> inputs,
                   BackwardFn backward);

}  // namespace detail

}  // namespace nnd
