#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "nnd/autograd.hpp"
#include "nnd/error.hpp"
#include "nnd/ops.hpp"
#include "support/oracle.hpp"

namespace nnd {
namespace {

using oracle::Vec;

Tensor leaf(const Shape& shape, const Vec& v) {
  Tensor t = oracle::to_tensor(shape, v);
  t.set_requires_grad(true);
  return t;
}

// ---------------------------------------------------------------------------
// conv2d

TEST(Conv2d, DegenerateOneByOne) {
  Tensor x(Shape{1, 1, 1, 1}, {3.0F});
  Tensor w(Shape{1, 1, 1, 1}, {-2.5F});
  EXPECT_FLOAT_EQ(conv2d(x, w, 1).item(), -7.5F);
}

TEST(Conv2d, CenteredDeltaIsIdentity) {
  const Shape xs{2, 6, 7, 3};
  Vec xv = oracle::random_vec(static_cast<std::size_t>(shape_numel(xs)), 1);
  Tensor x = oracle::to_tensor(xs, xv);
  // 5x5 kernel, delta at the centre tap mapping channel c -> c.
  Tensor w = Tensor::zeros({5, 5, 3, 3});
  for (int c = 0; c < 3; ++c) w.mutable_values()[static_cast<std::size_t>(((2 * 5 + 2) * 3 + c) * 3 + c)] = 1.0F;
  Tensor y = conv2d(x, w, 1);
  ASSERT_EQ(y.shape(), xs);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Conv2d, OutputExtentIsCeilOfInputOverStride) {
  Tensor x = Tensor::ones({1, 7, 8, 1});
  Tensor w = Tensor::ones({5, 5, 1, 2});
  EXPECT_EQ(conv2d(x, w, 2).shape(), (Shape{1, 4, 4, 2}));
  EXPECT_EQ(conv2d(x, w, 3).shape(), (Shape{1, 3, 3, 2}));
}

TEST(Conv2d, MatchesDirectReference) {
  for (int stride : {1, 2}) {
    const Shape xs{2, 8, 8, 2};
    Vec xv = oracle::random_vec(static_cast<std::size_t>(shape_numel(xs)), 3);
    Vec wv = oracle::random_vec(5 * 5 * 2 * 3, 4);
    Tensor y = conv2d(oracle::to_tensor(xs, xv), oracle::to_tensor({5, 5, 2, 3}, wv), stride);
    Vec ref = oracle::conv2d(xv, xs, wv, 5, 3, stride);
    EXPECT_LT(oracle::relative_error(oracle::to_double(y), ref), 1e-6) << "stride " << stride;
  }
}

TEST(Conv2d, ChannelMismatchNamesDimensions) {
  Tensor x = Tensor::ones({1, 4, 4, 2});
  Tensor w = Tensor::ones({5, 5, 3, 1});
  try {
    conv2d(x, w, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[5, 5, 3, 1]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[1, 4, 4, 2]"), std::string::npos);
  }
  EXPECT_THROW(conv2d(x, Tensor::ones({4, 4, 2, 1}), 1), ConfigError);
}

TEST(Conv2d, GradcheckAgainstFiniteDifferences) {
  for (int stride : {1, 2}) {
    const Shape xs{1, 8, 8, 2};
    const Shape ws{5, 5, 2, 3};
    Vec xv = oracle::random_vec(128, 10);
    Vec wv = oracle::random_vec(150, 11, 0.3);
    Vec probe = oracle::random_vec(static_cast<std::size_t>(8 / stride * 8 / stride * 3), 12);
    // Scalar objective: <probe, conv(x, w)>
    auto objective = [&](const Vec& x, const Vec& w) {
      Vec y = oracle::conv2d(x, xs, w, 5, 3, stride);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += probe[i] * y[i];
      return s;
    };
    Tensor x = leaf(xs, xv), w = leaf(ws, wv);
    Tensor out = sum(mul(conv2d(x, w, stride), oracle::to_tensor({1, 8 / stride, 8 / stride, 3}, probe)));
    const Tensor inputs[] = {x, w};
    auto grads = grad(out, inputs);
    Vec nx = oracle::numeric_gradient([&](const Vec& v) { return objective(v, wv); }, xv);
    Vec nw = oracle::numeric_gradient([&](const Vec& v) { return objective(xv, v); }, wv);
    EXPECT_LT(oracle::relative_error(oracle::to_double(grads[0]), nx), 1e-3);
    EXPECT_LT(oracle::relative_error(oracle::to_double(grads[1]), nw), 1e-3);
  }
}

// ---------------------------------------------------------------------------
// dense

TEST(Dense, IdentityWeightZeroBias) {
  Tensor x(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor y = dense(x, w, Tensor::zeros({3}));
  for (int i = 0; i < 6; ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Dense, ScalarAffine) {
  Tensor y = dense(Tensor({1, 1}, {2}), Tensor({1, 1}, {3}), Tensor({1}, {1}));
  EXPECT_FLOAT_EQ(y.item(), 7.0F);
}

TEST(Dense, InnerDimensionMismatch) {
  EXPECT_THROW(dense(Tensor::ones({2, 3}), Tensor::ones({4, 1}), Tensor::zeros({1})), ShapeError);
  EXPECT_THROW(dense(Tensor::ones({2, 3}), Tensor::ones({3, 2}), Tensor::zeros({3})), ShapeError);
}

TEST(Dense, Gradcheck) {
  const std::int64_t n = 3, d = 4, m = 2;
  Vec xv = oracle::random_vec(12, 20), wv = oracle::random_vec(8, 21), bv = oracle::random_vec(2, 22);
  auto objective = [&](const Vec& x, const Vec& w, const Vec& b) {
    Vec y = oracle::dense(x, n, d, w, m, b);
    double s = 0.0;
    for (double v : y) s += oracle::swish(v);
    return s;
  };
  Tensor x = leaf({n, d}, xv), w = leaf({d, m}, wv), b = leaf({m}, bv);
  const Tensor inputs[] = {x, w, b};
  auto g = grad(sum(swish(dense(x, w, b))), inputs);
  EXPECT_LT(oracle::relative_error(oracle::to_double(g[0]),
                                   oracle::numeric_gradient([&](const Vec& v) { return objective(v, wv, bv); }, xv)),
            1e-3);
  EXPECT_LT(oracle::relative_error(oracle::to_double(g[1]),
                                   oracle::numeric_gradient([&](const Vec& v) { return objective(xv, v, bv); }, wv)),
            1e-3);
  EXPECT_LT(oracle::relative_error(oracle::to_double(g[2]),
                                   oracle::numeric_gradient([&](const Vec& v) { return objective(xv, wv, v); }, bv)),
            1e-3);
}

TEST(Matmul, TransposeVariantsAgree) {
  Vec av = oracle::random_vec(6, 30), bv = oracle::random_vec(6, 31);
  Tensor a = oracle::to_tensor({2, 3}, av), b = oracle::to_tensor({3, 2}, bv);
  Tensor at = oracle::to_tensor({3, 2}, {av[0], av[3], av[1], av[4], av[2], av[5]});
  Tensor bt = oracle::to_tensor({2, 3}, {bv[0], bv[2], bv[4], bv[1], bv[3], bv[5]});
  Tensor ref = matmul(a, b);
  for (const Tensor& y : {matmul(at, b, true, false), matmul(a, bt, false, true), matmul(at, bt, true, true)}) {
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.at(i), ref.at(i), 1e-6);
  }
}

// ---------------------------------------------------------------------------
// swish and elementwise primitives

TEST(Swish, ZeroAndAsymptotes) {
  EXPECT_EQ(swish(Tensor::scalar(0.0F)).item(), 0.0F);
  // 10 * sigmoid(10) evaluated in double: 9.999546...
  EXPECT_NEAR(swish(Tensor::scalar(10.0F)).item(), 9.99955, 1e-5);
  EXPECT_NEAR(swish(Tensor::scalar(40.0F)).item(), 40.0F, 1e-5);
  EXPECT_NEAR(swish(Tensor::scalar(-40.0F)).item(), 0.0F, 1e-5);
}

TEST(Swish, Gradcheck) {
  Vec xv = oracle::random_vec(20, 40, 2.0);
  Tensor x = leaf({4, 5}, xv);
  const Tensor inputs[] = {x};
  auto g = grad(sum(swish(x)), inputs);
  auto f = [](const Vec& v) {
    double s = 0.0;
    for (double e : v) s += oracle::swish(e);
    return s;
  };
  EXPECT_LT(oracle::relative_error(oracle::to_double(g[0]), oracle::numeric_gradient(f, xv)), 1e-3);
}

TEST(Swish, DerivativeOrdersAreConsistent) {
  // Each derivative order is the finite difference of the previous one.
  for (int order = 0; order < 3; ++order) {
    for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
      const float h = 1e-2F;
      const double up = swish_derivative(Tensor::scalar(static_cast<float>(x) + h), order).item();
      const double dn = swish_derivative(Tensor::scalar(static_cast<float>(x) - h), order).item();
      const double next = swish_derivative(Tensor::scalar(static_cast<float>(x)), order + 1).item();
      EXPECT_NEAR((up - dn) / (2 * h), next, 2e-4) << "order " << order << " at " << x;
    }
  }
}

TEST(Reductions, MeanAndRowNorm) {
  EXPECT_FLOAT_EQ(mean(Tensor({3}, {1, 2, 3})).item(), 2.0F);
  Tensor n = l2_norm_rows(Tensor({2, 2}, {3, 4, 0, 0}));
  EXPECT_FLOAT_EQ(n.at(0), 5.0F);
  EXPECT_NEAR(n.at(1), 1e-6F, 1e-9F);  // sqrt(eps)
  EXPECT_EQ(n.shape(), (Shape{2}));
}

TEST(Reductions, PenaltyShapedExpressionGradcheck) {
  Vec xv = oracle::random_vec(12, 50);
  Tensor x = leaf({3, 4}, xv);
  const Tensor inputs[] = {x};
  auto g = grad(sum(square(add_scalar(l2_norm_rows(x), -1.0F))), inputs);
  auto f = [](const Vec& v) {
    double s = 0.0;
    for (int r = 0; r < 3; ++r) {
      double q = 1e-12;
      for (int c = 0; c < 4; ++c) q += v[static_cast<std::size_t>(r * 4 + c)] * v[static_cast<std::size_t>(r * 4 + c)];
      s += (std::sqrt(q) - 1.0) * (std::sqrt(q) - 1.0);
    }
    return s;
  };
  EXPECT_LT(oracle::relative_error(oracle::to_double(g[0]), oracle::numeric_gradient(f, xv)), 1e-3);
}

TEST(Broadcast, AddRowVectorAndReduceBack) {
  Tensor a = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = leaf({3}, {10, 20, 30});
  Tensor y = add(a, b);
  EXPECT_EQ(y.at(5), 36.0F);
  const Tensor inputs[] = {a, b};
  auto g = grad(sum(y), inputs);
  EXPECT_EQ(g[1].shape(), (Shape{3}));
  EXPECT_EQ(g[1].at(0), 2.0F);
  EXPECT_THROW(add(Tensor::ones({2, 3}), Tensor::ones({2})), ShapeError);
}

TEST(Softmax, RowsSumToOneAndLogSoftmaxAgrees) {
  Tensor x(Shape{2, 3}, {1, 2, 3, -1, 0, 5});
  Tensor s = softmax(x), ls = log_softmax(x);
  for (int r = 0; r < 2; ++r) {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
      total += s.at(r * 3 + c);
      EXPECT_NEAR(std::log(s.at(r * 3 + c)), ls.at(r * 3 + c), 1e-6);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

// ---------------------------------------------------------------------------
// backward

TEST(Backward, SquareAtThree) {
  Tensor x = leaf({}, {3.0});
  backward(square(x));
  EXPECT_FLOAT_EQ(x.grad().item(), 6.0F);
}

TEST(Backward, GradientOfGradientNorm) {
  Tensor x = leaf({}, {2.0});
  Tensor cube = mul(mul(x, x), x);
  const Tensor inputs[] = {x};
  Tensor first = grad(cube, inputs, /*create_graph=*/true)[0];
  EXPECT_FLOAT_EQ(first.item(), 12.0F);
  Tensor second = grad(square(first), inputs)[0];
  EXPECT_FLOAT_EQ(second.item(), 288.0F);
}

TEST(Backward, LeafOffThePathGetsZero) {
  Tensor x = leaf({}, {1.5});
  Tensor unused = leaf({2}, {0.0, 0.0});
  const Tensor inputs[] = {x, unused};
  auto g = grad(square(x), inputs);
  EXPECT_EQ(g[1].shape(), (Shape{2}));
  EXPECT_EQ(g[1].at(0), 0.0F);
  EXPECT_EQ(g[1].at(1), 0.0F);
}

TEST(Backward, NonScalarOutputIsUsageError) {
  Tensor x = leaf({2}, {1.0, 2.0});
  EXPECT_THROW(backward(square(x)), UsageError);
}

TEST(Backward, AccumulatesAcrossCalls) {
  Tensor x = leaf({}, {3.0});
  backward(square(x));
  backward(mul_scalar(x, 2.0F));
  EXPECT_FLOAT_EQ(x.grad().item(), 8.0F);
  x.clear_grad();
  EXPECT_FALSE(x.grad().defined());
}

TEST(Backward, SecondOrderThroughConvolution) {
  // h(w) = || d/dx sum(swish(conv(x, w))) ||^2, the shape of a gradient penalty.
  const Shape xs{2, 4, 4, 1}, ws{3, 3, 1, 2};
  Vec xv = oracle::random_vec(32, 60), wv = oracle::random_vec(18, 61, 0.5);
  auto first_grad = [&](const Vec& w_values, bool create_graph, Tensor* w_out) {
    Tensor x = leaf(xs, xv);
    Tensor w = leaf(ws, w_values);
    if (w_out) *w_out = w;
    Tensor out = sum(swish(conv2d(x, w, 2)));
    const Tensor inputs[] = {x};
    return grad(out, inputs, create_graph)[0];
  };
  Tensor w;
  Tensor gx = first_grad(wv, true, &w);
  Tensor h = sum(square(gx));
  const Tensor inputs[] = {w};
  Vec analytic = oracle::to_double(grad(h, inputs)[0]);
  auto h_value = [&](const Vec& v) {
    Vec g = oracle::to_double(first_grad(v, false, nullptr));
    double s = 0.0;
    for (double e : g) s += e * e;
    return s;
  };
  EXPECT_LT(oracle::relative_error(analytic, oracle::numeric_gradient(h_value, wv)), 1e-2);
}

TEST(Tensor, LeafOnlyMutation) {
  Tensor x = leaf({2}, {1.0, 2.0});
  Tensor y = square(x);
  EXPECT_THROW(y.mutable_values(), UsageError);
  EXPECT_THROW(y.set_requires_grad(false), UsageError);
  EXPECT_THROW(Tensor(Shape{2, 2}, {1.0F}), ShapeError);
}

// ---------------------------------------------------------------------------
// Randomly composed expressions against a 64-bit reference evaluator.

struct Mat {
  std::int64_t n = 0;
  Vec v;
};

enum class Op { Leaf, Square, Swish, Sigmoid, Neg, Scale, Shift, SoftSqrt, Add, Sub, Mul, SafeDiv, MatMul, RowBroadcast, Conv };

struct Expr {
  Op op = Op::Leaf;
  int leaf = 0;
  std::unique_ptr<Expr> a, b;
};

bool is_binary(Op op) { return op >= Op::Add; }

std::unique_ptr<Expr> random_expr(std::mt19937_64& gen, int depth, int leaves, bool root = true) {
  auto e = std::make_unique<Expr>();
  std::uniform_int_distribution<int> pick_leaf(0, leaves - 1);
  if (depth == 0 || (!root && gen() % 5 == 0)) {
    e->leaf = pick_leaf(gen);
    return e;
  }
  e->op = static_cast<Op>(1 + gen() % static_cast<std::uint64_t>(Op::Conv));
  e->a = random_expr(gen, depth - 1, leaves, false);
  if (is_binary(e->op)) e->b = random_expr(gen, depth - 1, leaves, false);
  return e;
}

// Conv reads an n x n matrix as a 1 x n x n x 1 image and the other operand's
// leading 3x3 block as a 3x3 kernel.
Tensor eval_tensor(const Expr& e, const std::vector<Tensor>& leaves, std::int64_t n) {
  switch (e.op) {
    case Op::Leaf: return leaves[static_cast<std::size_t>(e.leaf)];
    case Op::Square: return square(eval_tensor(*e.a, leaves, n));
    case Op::Swish: return swish(eval_tensor(*e.a, leaves, n));
    case Op::Sigmoid: return sigmoid(eval_tensor(*e.a, leaves, n));
    case Op::Neg: return neg(eval_tensor(*e.a, leaves, n));
    case Op::Scale: return mul_scalar(eval_tensor(*e.a, leaves, n), 0.5F);
    case Op::Shift: return add_scalar(eval_tensor(*e.a, leaves, n), 0.25F);
    case Op::SoftSqrt: return sqrt(add_scalar(square(eval_tensor(*e.a, leaves, n)), 1.0F));
    default: break;
  }
  Tensor a = eval_tensor(*e.a, leaves, n);
  Tensor b = eval_tensor(*e.b, leaves, n);
  switch (e.op) {
    case Op::Add: return add(a, b);
    case Op::Sub: return sub(a, b);
    case Op::Mul: return mul(a, b);
    case Op::SafeDiv: return div(a, add_scalar(square(b), 1.0F));
    case Op::MatMul: return mul_scalar(matmul(a, b), 0.5F);
    case Op::RowBroadcast: return add(a, mul_scalar(sum_to(b, {1, n}), 0.25F));
    case Op::Conv: {
      // Kernel from b: a 3x3 window built with a ones-mask product keeps it differentiable.
      Tensor img = reshape(a, {1, n, n, 1});
      Vec mask(static_cast<std::size_t>(n * n), 0.0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) mask[static_cast<std::size_t>(i * n + j)] = 1.0;
      Tensor masked = mul(b, oracle::to_tensor({n, n}, mask));
      // Gather the 3x3 block via matmul with selection matrices.
      Vec sel(static_cast<std::size_t>(3 * n), 0.0);
      for (int i = 0; i < 3; ++i) sel[static_cast<std::size_t>(i * n + i)] = 1.0;
      Tensor s = oracle::to_tensor({3, n}, sel);
      Tensor k33 = matmul(matmul(s, masked), s, false, true);
      return reshape(conv2d(img, reshape(k33, {3, 3, 1, 1}), 1), {n, n});
    }
    default: throw std::logic_error("unreachable");
  }
}

Mat eval_ref(const Expr& e, const std::vector<Mat>& leaves) {
  auto map1 = [](Mat m, auto f) {
    for (auto& x : m.v) x = f(x);
    return m;
  };
  switch (e.op) {
    case Op::Leaf: return leaves[static_cast<std::size_t>(e.leaf)];
    case Op::Square: return map1(eval_ref(*e.a, leaves), [](double x) { return x * x; });
    case Op::Swish: return map1(eval_ref(*e.a, leaves), [](double x) { return oracle::swish(x); });
    case Op::Sigmoid: return map1(eval_ref(*e.a, leaves), [](double x) { return oracle::sigmoid(x); });
    case Op::Neg: return map1(eval_ref(*e.a, leaves), [](double x) { return -x; });
    case Op::Scale: return map1(eval_ref(*e.a, leaves), [](double x) { return 0.5 * x; });
    case Op::Shift: return map1(eval_ref(*e.a, leaves), [](double x) { return x + 0.25; });
    case Op::SoftSqrt: return map1(eval_ref(*e.a, leaves), [](double x) { return std::sqrt(x * x + 1.0); });
    default: break;
  }
  Mat a = eval_ref(*e.a, leaves);
  Mat b = eval_ref(*e.b, leaves);
  const std::int64_t n = a.n;
  Mat out{n, Vec(a.v.size())};
  auto at = [n](const Mat& m, std::int64_t r, std::int64_t c) { return m.v[static_cast<std::size_t>(r * n + c)]; };
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) {
      double& o = out.v[static_cast<std::size_t>(r * n + c)];
      const double x = at(a, r, c), y = at(b, r, c);
      switch (e.op) {
        case Op::Add: o = x + y; break;
        case Op::Sub: o = x - y; break;
        case Op::Mul: o = x * y; break;
        case Op::SafeDiv: o = x / (y * y + 1.0); break;
        case Op::MatMul: {
          double s = 0.0;
          for (std::int64_t t = 0; t < n; ++t) s += at(a, r, t) * at(b, t, c);
          o = 0.5 * s;
          break;
        }
        case Op::RowBroadcast: {
          double s = 0.0;
          for (std::int64_t t = 0; t < n; ++t) s += at(b, t, c);
          o = x + 0.25 * s;
          break;
        }
        case Op::Conv: break;
        default: throw std::logic_error("unreachable");
      }
    }
  if (e.op == Op::Conv) {
    Vec kernel(9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) kernel[static_cast<std::size_t>(i * 3 + j)] = at(b, i, j);
    out.v = oracle::conv2d(a.v, {1, n, n, 1}, kernel, 3, 1, 1);
  }
  return out;
}

// Final scalar: mean of (row norm - 1)^2 plus the mean, mirroring the penalty reduction.
Tensor reduce_tensor(const Tensor& m) { return add(mean(square(add_scalar(l2_norm_rows(m), -1.0F))), mean(m)); }

double reduce_ref(const Mat& m) {
  double pen = 0.0, total = 0.0;
  for (std::int64_t r = 0; r < m.n; ++r) {
    double q = 1e-12;
    for (std::int64_t c = 0; c < m.n; ++c) {
      const double x = m.v[static_cast<std::size_t>(r * m.n + c)];
      q += x * x;
      total += x;
    }
    pen += (std::sqrt(q) - 1.0) * (std::sqrt(q) - 1.0);
  }
  return pen / static_cast<double>(m.n) + total / static_cast<double>(m.n * m.n);
}

class RandomExpression : public ::testing::TestWithParam<int> {};

TEST_P(RandomExpression, FirstOrderMatchesFiniteDifferences) {
  std::mt19937_64 gen(static_cast<std::uint64_t>(GetParam()));
  const std::int64_t n = 3 + static_cast<std::int64_t>(gen() % 6);  // up to 8x8 = 64 elements
  const int leaves = 2;
  auto expr = random_expr(gen, 5, leaves);
  std::vector<Vec> values;
  for (int i = 0; i < leaves; ++i) values.push_back(oracle::random_vec(static_cast<std::size_t>(n * n), gen(), 0.7));

  std::vector<Tensor> tensors;
  for (const auto& v : values) tensors.push_back(leaf({n, n}, v));
  Tensor out = reduce_tensor(eval_tensor(*expr, tensors, n));
  auto grads = grad(out, tensors);

  for (int which = 0; which < leaves; ++which) {
    auto f = [&](const Vec& v) {
      std::vector<Mat> mats;
      for (int i = 0; i < leaves; ++i) mats.push_back({n, i == which ? v : values[static_cast<std::size_t>(i)]});
      return reduce_ref(eval_ref(*expr, mats));
    };
    Vec numeric = oracle::numeric_gradient(f, values[static_cast<std::size_t>(which)]);
    EXPECT_LT(oracle::relative_error(oracle::to_double(grads[static_cast<std::size_t>(which)]), numeric), 1e-3)
        << "seed " << GetParam() << " leaf " << which;
  }
}

TEST_P(RandomExpression, SecondOrderMatchesFiniteDifferencesOfFirstGradient) {
  std::mt19937_64 gen(1000 + static_cast<std::uint64_t>(GetParam()));
  const std::int64_t n = 3 + static_cast<std::int64_t>(gen() % 4);
  auto expr = random_expr(gen, 4, 1);
  Vec xv = oracle::random_vec(static_cast<std::size_t>(n * n), gen(), 0.7);
  Vec probe = oracle::random_vec(xv.size(), gen());

  // h(x) = <probe, grad f(x)>, so grad h is a Hessian-vector product.
  auto first = [&](const Vec& v, bool create_graph, Tensor* x_out) {
    Tensor x = leaf({n, n}, v);
    if (x_out) *x_out = x;
    std::vector<Tensor> ls{x};
    const Tensor inputs[] = {x};
    return grad(reduce_tensor(eval_tensor(*expr, ls, n)), inputs, create_graph)[0];
  };
  Tensor x;
  Tensor g = first(xv, true, &x);
  Tensor h = sum(mul(g, oracle::to_tensor({n, n}, probe)));
  const Tensor inputs[] = {x};
  Vec analytic = oracle::to_double(grad(h, inputs)[0]);

  Vec numeric(xv.size());
  const double step = 1e-3;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    Vec up = xv, dn = xv;
    up[i] += step;
    dn[i] -= step;
    Vec gu = oracle::to_double(first(up, false, nullptr));
    Vec gd = oracle::to_double(first(dn, false, nullptr));
    double s = 0.0;
    for (std::size_t j = 0; j < gu.size(); ++j) s += probe[j] * (gu[j] - gd[j]) / (2 * step);
    numeric[i] = s;
  }
  EXPECT_LT(oracle::relative_error(analytic, numeric, 1e-3), 1e-2) << "seed " << GetParam();
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomExpression, ::testing::Range(0, 40));

TEST(Determinism, RepeatedEvaluationIsBitIdentical) {
  auto run = [] {
    Vec xv = oracle::random_vec(2 * 8 * 8 * 2, 70), wv = oracle::random_vec(5 * 5 * 2 * 4, 71, 0.2);
    Tensor x = leaf({2, 8, 8, 2}, xv), w = leaf({5, 5, 2, 4}, wv);
    Tensor y = sum(swish(conv2d(x, w, 2)));
    const Tensor inputs[] = {x, w};
    auto g = grad(y, inputs, true);
    Tensor pen = sum(square(l2_norm_rows(reshape(g[0], {2, 128}))));
    const Tensor w_only[] = {w};
    auto gg = grad(pen, w_only);
    std::vector<float> all{y.item(), pen.item()};
    for (float v : gg[0].values()) all.push_back(v);
    for (float v : g[1].values()) all.push_back(v);
    return all;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace nnd
