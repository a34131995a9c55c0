#include "nnd/autograd.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "nnd/error.hpp"
#include "nnd/ops.hpp"

namespace nnd {
namespace {

using detail::Node;
using detail::TensorImpl;

struct Plan {
  std::vector<Node*> order;                          // reverse topological
  std::unordered_map<const Node*, bool> reaches;     // node's output leads to a target
};

// Collects every node reachable from `root` and marks which of them lie on a
// path to one of the targets, so backward functions can skip unneeded inputs.
Plan plan_backward(const Tensor& root, const std::unordered_set<const TensorImpl*>& targets,
                   bool all_leaves) {
  Plan plan;
  std::vector<Node*> stack;
  std::unordered_set<const Node*> seen;
  if (root.impl()->grad_fn) {
    stack.push_back(root.impl()->grad_fn.get());
    seen.insert(stack.back());
  }
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    plan.order.push_back(n);
    for (const auto& in : n->inputs) {
      if (!in.defined()) continue;
      Node* child = in.impl()->grad_fn.get();
      if (child && seen.insert(child).second) stack.push_back(child);
    }
  }
  std::sort(plan.order.begin(), plan.order.end(),
            [](const Node* a, const Node* b) { return a->sequence > b->sequence; });

  auto input_reaches = [&](const Tensor& in) {
    if (!in.defined() || !in.requires_grad()) return false;
    const TensorImpl* impl = in.impl().get();
    if (targets.count(impl)) return true;
    if (!impl->grad_fn) return all_leaves;
    auto it = plan.reaches.find(impl->grad_fn.get());
    return it != plan.reaches.end() && it->second;
  };
  // Inputs always have smaller sequence numbers, so ascending order visits
  // children before parents.
  for (auto it = plan.order.rbegin(); it != plan.order.rend(); ++it) {
    bool r = false;
    for (const auto& in : (*it)->inputs) r = r || input_reaches(in);
    plan.reaches[*it] = r;
  }
  return plan;
}

using GradMap = std::unordered_map<const TensorImpl*, Tensor>;

void accumulate(GradMap& grads, const TensorImpl* key, const Tensor& g) {
  auto it = grads.find(key);
  if (it == grads.end()) {
    grads.emplace(key, g);
  } else {
    it->second = add(it->second, g);
  }
}

GradMap run_backward(const Tensor& output, const std::unordered_set<const TensorImpl*>& targets,
                     bool all_leaves, bool create_graph) {
  if (!output.defined()) throw UsageError("backward on an undefined tensor");
  if (output.numel() != 1) {
    throw UsageError("backward requires a scalar output, got shape " + shape_string(output.shape()));
  }
  GradMap grads;
  grads.emplace(output.impl().get(), Tensor::ones(output.shape()));
  if (!output.requires_grad()) return grads;

  const Plan plan = plan_backward(output, targets, all_leaves);
  GradModeGuard mode(create_graph);
  for (Node* node : plan.order) {
    if (!plan.reaches.at(node)) continue;
    auto found = grads.find(node->output);
    if (found == grads.end()) continue;
    const Tensor grad_out = found->second;

    detail::InputMask needed(node->inputs.size(), false);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Tensor& in = node->inputs[i];
      if (!in.defined() || !in.requires_grad()) continue;
      const TensorImpl* impl = in.impl().get();
      needed[i] = targets.count(impl) > 0 || (impl->grad_fn ? plan.reaches.at(impl->grad_fn.get())
                                                            : all_leaves);
    }
    auto input_grads = node->backward(grad_out, node->inputs, needed);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      if (!needed[i] || !input_grads[i].defined()) continue;
      accumulate(grads, node->inputs[i].impl().get(), input_grads[i]);
    }
    // Intermediate gradients are no longer needed once propagated.
    if (!targets.count(node->output)) grads.erase(node->output);
  }
  return grads;
}

}  // namespace

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs, bool create_graph) {
  std::unordered_set<const TensorImpl*> targets;
  for (const auto& in : inputs) {
    if (!in.defined()) throw UsageError("grad() with an undefined input tensor");
    targets.insert(in.impl().get());
  }
  GradMap grads = run_backward(output, targets, false, create_graph);
  std::vector<Tensor> result;
  result.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto it = grads.find(in.impl().get());
    result.push_back(it != grads.end() ? it->second : Tensor::zeros(in.shape()));
  }
  return result;
}

void backward(const Tensor& output, bool create_graph) {
  GradMap grads = run_backward(output, {}, true, create_graph);
  for (auto& [impl, g] : grads) {
    if (impl->grad_fn || !impl->requires_grad) continue;
    auto* leaf = const_cast<TensorImpl*>(impl);
    if (leaf->grad) {
      leaf->grad = add(Tensor(leaf->grad), g).impl();
    } else {
      leaf->grad = g.impl();
    }
  }
}

}  // namespace nnd
