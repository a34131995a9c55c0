#include "nnd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <span>

#include "nnd/error.hpp"

namespace nnd {

using detail::InputMask;
using detail::make_result;

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::vector<float> copy_values(const Tensor& t) {
  auto v = t.values();
  return {v.begin(), v.end()};
}

// Walks the elements of `out_shape` in row-major order and reports, for each,
// the matching flat offset into a tensor of `in_shape` broadcast against it.
class BroadcastIndexer {
 public:
  BroadcastIndexer(const Shape& out_shape, const Shape& in_shape) : out_shape_(out_shape) {
    const std::size_t rank = out_shape.size();
    strides_.assign(rank, 0);
    std::int64_t stride = 1;
    for (std::size_t i = 0; i < in_shape.size(); ++i) {
      const std::size_t in_axis = in_shape.size() - 1 - i;
      const std::size_t out_axis = rank - 1 - i;
      if (in_shape[in_axis] != 1) strides_[out_axis] = stride;
      stride *= in_shape[in_axis];
    }
  }

  template <class F>
  void for_each(F&& f) const {
    const std::int64_t total = shape_numel(out_shape_);
    if (total == 0) return;
    const std::size_t rank = out_shape_.size();
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t in_off = 0;
    for (std::int64_t o = 0; o < total; ++o) {
      f(o, in_off);
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        in_off += strides_[ax];
        if (idx[ax] < out_shape_[ax]) break;
        in_off -= strides_[ax] * out_shape_[ax];
        idx[ax] = 0;
      }
    }
  }

 private:
  Shape out_shape_;
  std::vector<std::int64_t> strides_;
};

// True when `part`, ignoring leading 1s, equals the trailing dims of `full`.
bool is_trailing_block(const Shape& part, const Shape& full) {
  std::size_t lead = 0;
  while (lead < part.size() && part[lead] == 1) ++lead;
  const std::size_t k = part.size() - lead;
  if (k > full.size() || shape_numel(part) == 0) return false;
  return std::equal(part.begin() + static_cast<std::ptrdiff_t>(lead), part.end(),
                    full.end() - static_cast<std::ptrdiff_t>(k));
}

template <class F>
std::vector<float> binary_values(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  std::vector<float> out(static_cast<std::size_t>(shape_numel(out_shape)));
  auto av = a.values();
  auto bv = b.values();
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    return out;
  }
  if (a.shape() == out_shape && b.numel() == 1) {
    const float s = bv[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], s);
    return out;
  }
  if (b.shape() == out_shape && a.numel() == 1) {
    const float s = av[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(s, bv[i]);
    return out;
  }
  // Row-wise broadcast of a trailing block, e.g. a bias over [N, ..., C].
  const auto tile = [&](std::span<const float> full, std::span<const float> part, bool part_is_b) {
    const std::size_t m = part.size();
    for (std::size_t r = 0; r < out.size(); r += m) {
      for (std::size_t k = 0; k < m; ++k) {
        out[r + k] = part_is_b ? f(full[r + k], part[k]) : f(part[k], full[r + k]);
      }
    }
  };
  if (a.shape() == out_shape && is_trailing_block(b.shape(), out_shape)) {
    tile(av, bv, true);
    return out;
  }
  if (b.shape() == out_shape && is_trailing_block(a.shape(), out_shape)) {
    tile(bv, av, false);
    return out;
  }
  BroadcastIndexer ia(out_shape, a.shape());
  std::vector<std::int64_t> a_off(out.size());
  ia.for_each([&](std::int64_t o, std::int64_t i) { a_off[static_cast<std::size_t>(o)] = i; });
  BroadcastIndexer ib(out_shape, b.shape());
  ib.for_each([&](std::int64_t o, std::int64_t i) {
    const auto oi = static_cast<std::size_t>(o);
    out[oi] = f(av[static_cast<std::size_t>(a_off[oi])], bv[static_cast<std::size_t>(i)]);
  });
  return out;
}

template <class F>
std::vector<float> unary_values(const Tensor& x, F f) {
  auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Swish x·σ(x) and its first three derivatives, vectorised through Eigen.
std::vector<float> swish_values(const Tensor& x, int order) {
  auto xv = x.values();
  std::vector<float> out(xv.size());
  const Eigen::Map<const Eigen::ArrayXf> a(xv.data(), static_cast<Eigen::Index>(xv.size()));
  Eigen::Map<Eigen::ArrayXf> o(out.data(), static_cast<Eigen::Index>(out.size()));
  const Eigen::ArrayXf s = a.logistic();
  switch (order) {
    case 0:
      o = a * s;
      break;
    case 1:
      o = s + a * s * (1.0F - s);
      break;
    case 2:
      o = s * (1.0F - s) * (2.0F + a * (1.0F - 2.0F * s));
      break;
    default:
      o = s * (1.0F - s) * (3.0F * (1.0F - 2.0F * s) + a * (1.0F - 6.0F * s + 6.0F * s * s));
      break;
  }
  return out;
}

void require_same_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " expects a rank-2 tensor, got " + shape_string(t.shape()));
  }
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + shape_string(a) + " and " + shape_string(b) + " are not broadcast-compatible");
    }
    out[rank - 1 - i] = da == 1 ? db : da;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Broadcasting elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto data = binary_values(a, b, out_shape, [](float x, float y) { return x + y; });
  return make_result(std::move(out_shape), std::move(data), "add", {a, b},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask& need) {
                       std::vector<Tensor> r(2);
                       if (need[0]) r[0] = sum_to(g, in[0].shape());
                       if (need[1]) r[1] = sum_to(g, in[1].shape());
                       return r;
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto data = binary_values(a, b, out_shape, [](float x, float y) { return x - y; });
  return make_result(std::move(out_shape), std::move(data), "sub", {a, b},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask& need) {
                       std::vector<Tensor> r(2);
                       if (need[0]) r[0] = sum_to(g, in[0].shape());
                       if (need[1]) r[1] = sum_to(neg(g), in[1].shape());
                       return r;
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto data = binary_values(a, b, out_shape, [](float x, float y) { return x * y; });
  return make_result(std::move(out_shape), std::move(data), "mul", {a, b},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask& need) {
                       std::vector<Tensor> r(2);
                       if (need[0]) r[0] = sum_to(mul(g, in[1]), in[0].shape());
                       if (need[1]) r[1] = sum_to(mul(g, in[0]), in[1].shape());
                       return r;
                     });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto data = binary_values(a, b, out_shape, [](float x, float y) { return x / y; });
  return make_result(std::move(out_shape), std::move(data), "div", {a, b},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask& need) {
                       std::vector<Tensor> r(2);
                       if (need[0]) r[0] = sum_to(div(g, in[1]), in[0].shape());
                       if (need[1]) {
                         r[1] = sum_to(neg(div(mul(g, in[0]), square(in[1]))), in[1].shape());
                       }
                       return r;
                     });
}

// ---------------------------------------------------------------------------
// Unary elementwise ops

Tensor neg(const Tensor& x) {
  return make_result(x.shape(), unary_values(x, [](float v) { return -v; }), "neg", {x},
                     [](const Tensor& g, const std::vector<Tensor>&, const InputMask&) {
                       return std::vector<Tensor>{neg(g)};
                     });
}

Tensor add_scalar(const Tensor& x, float c) {
  return make_result(x.shape(), unary_values(x, [c](float v) { return v + c; }), "add_scalar", {x},
                     [](const Tensor& g, const std::vector<Tensor>&, const InputMask&) {
                       return std::vector<Tensor>{g};
                     });
}

Tensor mul_scalar(const Tensor& x, float c) {
  return make_result(x.shape(), unary_values(x, [c](float v) { return v * c; }), "mul_scalar", {x},
                     [c](const Tensor& g, const std::vector<Tensor>&, const InputMask&) {
                       return std::vector<Tensor>{mul_scalar(g, c)};
                     });
}

Tensor rsub_scalar(const Tensor& x, float c) {
  return make_result(x.shape(), unary_values(x, [c](float v) { return c - v; }), "rsub_scalar", {x},
                     [](const Tensor& g, const std::vector<Tensor>&, const InputMask&) {
                       return std::vector<Tensor>{neg(g)};
                     });
}

Tensor square(const Tensor& x) {
  return make_result(x.shape(), unary_values(x, [](float v) { return v * v; }), "square", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       return std::vector<Tensor>{mul(g, mul_scalar(in[0], 2.0F))};
                     });
}

Tensor sqrt(const Tensor& x) {
  return make_result(x.shape(), unary_values(x, [](float v) { return std::sqrt(v); }), "sqrt", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       return std::vector<Tensor>{div(mul_scalar(g, 0.5F), sqrt(in[0]))};
                     });
}

Tensor exp(const Tensor& x) {
  return make_result(x.shape(), unary_values(x, [](float v) { return std::exp(v); }), "exp", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       return std::vector<Tensor>{mul(g, exp(in[0]))};
                     });
}

Tensor log(const Tensor& x) {
  return make_result(x.shape(), unary_values(x, [](float v) { return std::log(v); }), "log", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       return std::vector<Tensor>{div(g, in[0])};
                     });
}

Tensor sigmoid(const Tensor& x) {
  auto data = unary_values(x, [](float v) { return static_cast<float>(stable_sigmoid(v)); });
  return make_result(x.shape(), std::move(data), "sigmoid", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       Tensor s = sigmoid(in[0]);
                       return std::vector<Tensor>{mul(g, mul(s, rsub_scalar(s, 1.0F)))};
                     });
}

Tensor swish_derivative(const Tensor& x, int order) {
  if (order < 0 || order > 3) {
    throw UsageError("swish derivative order " + std::to_string(order) + " not supported");
  }
  auto data = swish_values(x, order);
  return make_result(x.shape(), std::move(data), "swish", {x},
                     [order](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       if (order == 3) throw UsageError("swish is differentiable up to third order only");
                       return std::vector<Tensor>{mul(g, swish_derivative(in[0], order + 1))};
                     });
}

Tensor swish(const Tensor& x) { return swish_derivative(x, 0); }

// ---------------------------------------------------------------------------
// Reductions and shape ops

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shape(shape, x.shape()) != x.shape() || shape.size() > x.rank()) {
    throw ShapeError("cannot reduce shape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  if (shape == x.shape()) return x;
  std::vector<double> acc(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  auto xv = x.values();
  if (is_trailing_block(shape, x.shape())) {
    for (std::size_t r = 0; r < xv.size(); r += acc.size()) {
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += static_cast<double>(xv[r + k]);
    }
  } else {
    BroadcastIndexer idx(x.shape(), shape);
    idx.for_each([&](std::int64_t o, std::int64_t t) {
      acc[static_cast<std::size_t>(t)] += static_cast<double>(xv[static_cast<std::size_t>(o)]);
    });
  }
  std::vector<float> out(acc.begin(), acc.end());
  return make_result(shape, std::move(out), "sum_to", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       return std::vector<Tensor>{expand(g, in[0].shape())};
                     });
}

Tensor expand(const Tensor& x, const Shape& shape) {
  if (broadcast_shape(x.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast shape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  if (shape == x.shape()) return x;
  std::vector<float> out(static_cast<std::size_t>(shape_numel(shape)));
  auto xv = x.values();
  BroadcastIndexer idx(shape, x.shape());
  idx.for_each([&](std::int64_t o, std::int64_t i) {
    out[static_cast<std::size_t>(o)] = xv[static_cast<std::size_t>(i)];
  });
  return make_result(shape, std::move(out), "expand", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       return std::vector<Tensor>{sum_to(g, in[0].shape())};
                     });
}

Tensor sum(const Tensor& x) { return sum_to(x, Shape{}); }

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return mul_scalar(sum(x), static_cast<float>(1.0 / static_cast<double>(x.numel())));
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  return make_result(shape, copy_values(x), "reshape", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       return std::vector<Tensor>{reshape(g, in[0].shape())};
                     });
}

Tensor l2_norm_rows(const Tensor& x) {
  require_same_rank2(x, "l2_norm_rows");
  const std::int64_t rows = x.dim(0);
  Tensor sq = sum_to(square(x), Shape{rows, 1});
  return reshape(sqrt(add_scalar(sq, kNormEpsilon)), Shape{rows});
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  require_same_rank2(a, "matmul");
  require_same_rank2(b, "matmul");
  const std::int64_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::int64_t ka = transpose_a ? a.dim(0) : a.dim(1);
  const std::int64_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::int64_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_string(a.shape()) +
                     (transpose_a ? "^T" : "") + " x " + shape_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  std::vector<float> out(static_cast<std::size_t>(m * n), 0.0F);
  if (m > 0 && n > 0 && ka > 0) {
    ConstMap A(a.values().data(), a.dim(0), a.dim(1));
    ConstMap B(b.values().data(), b.dim(0), b.dim(1));
    MutMap C(out.data(), m, n);
    if (!transpose_a && !transpose_b) C.noalias() = A * B;
    if (!transpose_a && transpose_b) C.noalias() = A * B.transpose();
    if (transpose_a && !transpose_b) C.noalias() = A.transpose() * B;
    if (transpose_a && transpose_b) C.noalias() = A.transpose() * B.transpose();
  }
  return make_result(Shape{m, n}, std::move(out), "matmul", {a, b},
                     [transpose_a, transpose_b](const Tensor& g, const std::vector<Tensor>& in,
                                                const InputMask& need) {
                       std::vector<Tensor> r(2);
                       const Tensor& A = in[0];
                       const Tensor& B = in[1];
                       if (need[0]) {
                         r[0] = transpose_a ? matmul(B, g, transpose_b, true) : matmul(g, B, false, !transpose_b);
                       }
                       if (need[1]) {
                         r[1] = transpose_b ? matmul(g, A, true, transpose_a) : matmul(A, g, !transpose_a, false);
                       }
                       return r;
                     });
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (bias.rank() != 1 || weight.rank() != 2 || bias.dim(0) != weight.dim(1)) {
    throw ShapeError("dense: weight " + shape_string(weight.shape()) + " and bias " +
                     shape_string(bias.shape()) + " disagree");
  }
  return add(matmul(input, weight), bias);
}

// ---------------------------------------------------------------------------
// Softmax

namespace {

std::vector<float> softmax_values(const Tensor& x, bool log_space) {
  if (x.rank() == 0) throw ShapeError("softmax of a rank-0 tensor");
  const auto cols = static_cast<std::size_t>(x.shape().back());
  auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t r = 0; cols > 0 && r < xv.size() / cols; ++r) {
    const float* row = xv.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
    const double logz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) {
      const double lv = static_cast<double>(row[c]) - logz;
      out[r * cols + c] = static_cast<float>(log_space ? lv : std::exp(lv));
    }
  }
  return out;
}

Shape keep_last_reduced(const Shape& s) {
  Shape r = s;
  r.back() = 1;
  return r;
}

}  // namespace

Tensor softmax(const Tensor& x) {
  return make_result(x.shape(), softmax_values(x, false), "softmax", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       Tensor s = softmax(in[0]);
                       Tensor dot = sum_to(mul(g, s), keep_last_reduced(in[0].shape()));
                       return std::vector<Tensor>{mul(s, sub(g, dot))};
                     });
}

Tensor log_softmax(const Tensor& x) {
  return make_result(x.shape(), softmax_values(x, true), "log_softmax", {x},
                     [](const Tensor& g, const std::vector<Tensor>& in, const InputMask&) {
                       Tensor total = sum_to(g, keep_last_reduced(in[0].shape()));
                       return std::vector<Tensor>{sub(g, mul(softmax(in[0]), total))};
                     });
}

}  // namespace nnd
