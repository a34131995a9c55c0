#pragma once

// Double-precision re-implementation of the critic forward pass and of the
// WGAN-GP loss, with input gradients by central differences. Used to check the
// library's double-backprop path against something that never calls grad().

#include <cmath>
#include <vector>

#include "nnd/nn.hpp"
#include "support/oracle.hpp"

namespace nnd::oracle {

struct CriticOracle {
  CriticSpec spec;
  std::vector<Vec> params;  // same order as CriticParams::tensors

  static CriticOracle from(const CriticParams& p) {
    CriticOracle o{p.spec, {}};
    for (const auto& t : p.tensors) o.params.push_back(to_double(t.value));
    return o;
  }

  std::int64_t element_numel() const { return shape_numel(spec.input_shape); }

  /// f(x) for a single example.
  double forward(const Vec& x) const {
    Vec h = x;
    std::size_t next = 0;
    if (spec.kind == CriticKind::cnn) {
      Shape s{1, spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
      for (auto c : spec.conv_channels()) {
        const Vec& k = params[next++];
        const Vec& b = params[next++];
        Vec y = conv2d(h, s, k, CriticSpec::kKernelSize, c, static_cast<int>(CriticSpec::kStride));
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = swish(y[i] + b[i % static_cast<std::size_t>(c)]);
        s = {1, (s[1] + 1) / 2, (s[2] + 1) / 2, c};
        h = std::move(y);
      }
    } else {
      auto d = static_cast<std::int64_t>(h.size());
      for (auto m : spec.mlp_hidden) {
        Vec y = dense(h, 1, d, params[next], m, params[next + 1]);
        next += 2;
        for (auto& v : y) v = swish(v);
        h = std::move(y);
        d = m;
      }
    }
    return dense(h, 1, static_cast<std::int64_t>(h.size()), params[next], 1, params[next + 1])[0];
  }

  Vec input_gradient(Vec x, double step = 1e-4) const {
    return numeric_gradient([this](const Vec& v) { return forward(v); }, std::move(x), step);
  }

  /// mean_i (‖∇f(x̂_i)‖ − 1)², x̂_i = ε_i r_i + (1 − ε_i) m_i.
  double penalty(const Vec& real, const Vec& model, const Vec& eps) const {
    const auto d = static_cast<std::size_t>(element_numel());
    double total = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      Vec xhat(d);
      for (std::size_t k = 0; k < d; ++k) xhat[k] = eps[i] * real[i * d + k] + (1.0 - eps[i]) * model[i * d + k];
      double norm = 0.0;
      for (double g : input_gradient(xhat)) norm += g * g;
      total += (std::sqrt(norm) - 1.0) * (std::sqrt(norm) - 1.0);
    }
    return total / static_cast<double>(eps.size());
  }

  double mean_output(const Vec& batch) const {
    const auto d = static_cast<std::size_t>(element_numel());
    const std::size_t n = batch.size() / d;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += forward(Vec(batch.begin() + i * d, batch.begin() + (i + 1) * d));
    return total / static_cast<double>(n);
  }

  double loss(const Vec& real, const Vec& model, const Vec& eps, double lambda) const {
    return mean_output(model) - mean_output(real) + lambda * penalty(real, model, eps);
  }

  /// Parameters flattened in tensor order.
  Vec flat() const {
    Vec out;
    for (const auto& p : params) out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  CriticOracle with_flat(const Vec& theta) const {
    CriticOracle o = *this;
    std::size_t at = 0;
    for (auto& p : o.params) {
      for (auto& v : p) v = theta[at++];
    }
    return o;
  }
};

}  // namespace nnd::oracle
