#pragma once

#include <span>
#include <vector>

#include "nnd/tensor.hpp"

namespace nnd {

/// Gradients of a scalar `output` with respect to `inputs`, returned in order.
/// Inputs the output does not depend on get zeros. With `create_graph` the
/// returned gradients are themselves recorded and can be differentiated again.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs, bool create_graph = false);

/// Accumulates d(output)/d(leaf) into `.grad()` of every requires_grad leaf.
void backward(const Tensor& output, bool create_graph = false);

}  // namespace nnd
