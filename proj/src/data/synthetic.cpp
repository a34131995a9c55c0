#include <algorithm>
#include <cmath>
#include <numeric>

#include "nnd/data.hpp"
#include "nnd/error.hpp"
#include "nnd/rng.hpp"

namespace nnd {

namespace {

// Stream tags; every draw of element i comes from CounterRng(seed, tag) at counters
// derived from i, so elements are independent of n and of each other.
constexpr std::uint64_t kPickStream = 0x91C4;
constexpr std::uint64_t kGaussStream = 0x6A55;
constexpr std::uint64_t kShapeStream = 0x54A9;
constexpr std::uint64_t kPerturbStream = 0x9E27;
constexpr std::uint64_t kMixStream = 0x313C;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::size_t pick_weighted(std::span<const double> weights, double u) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u * total < acc) return k;
  }
  return weights.size() - 1;
}

void check_weights(std::span<const double> w, const std::string& what) {
  if (w.empty()) throw ConfigError(what + ": no components");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(what + ": weights must be finite and non-negative");
    total += x;
  }
  if (total <= 0.0) throw ConfigError(what + ": weights sum to zero");
}

void validate(const GaussianMixture& g) {
  check_weights(g.weights, "gaussian_mixture");
  if (g.means.size() != g.weights.size() || g.stddevs.size() != g.weights.size()) {
    throw ConfigError("gaussian_mixture: weights, means and stddevs must have one entry per component");
  }
  const auto d = g.means[0].size();
  if (d == 0) throw ConfigError("gaussian_mixture: zero-dimensional components");
  for (std::size_t k = 0; k < g.means.size(); ++k) {
    if (g.means[k].size() != d || g.stddevs[k].size() != d) {
      throw ConfigError("gaussian_mixture: component " + std::to_string(k) + " has inconsistent dimension");
    }
    for (double s : g.stddevs[k]) {
      if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("gaussian_mixture: stddevs must be positive");
    }
  }
}

void validate(const ShapesImage& s) {
  if (s.height < 1 || s.width < 1 || s.channels < 1) throw ConfigError("shapes_image: extents must be positive");
  if (s.supersampling < 1) throw ConfigError("shapes_image: supersampling must be at least 1");
  check_weights(s.kind_weights, "shapes_image kind_weights");
  auto range = [](double lo, double hi, const char* name) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ConfigError(std::string("shapes_image: invalid ") + name + " range");
    }
  };
  range(s.center_min, s.center_max, "center");
  range(s.size_min, s.size_max, "size");
  range(s.intensity_min, s.intensity_max, "intensity");
  if (s.size_min <= 0.0) throw ConfigError("shapes_image: sizes must be positive");
}

// -- shapes renderer ---------------------------------------------------------

struct ShapeDraw {
  ShapeKind kind;
  double cx, cy, hw, hh;  // centre and half extents, in units of width / height
  std::vector<double> intensity;
};

ShapeDraw draw_shape(const ShapesImage& s, std::uint64_t seed, std::int64_t index) {
  CounterRng rng(seed, kShapeStream);
  const std::uint64_t base = static_cast<std::uint64_t>(index) << 16;
  std::uint64_t k = 0;
  auto u = [&] { return rng.uniform(base + k++); };
  ShapeDraw d{};
  d.kind = static_cast<ShapeKind>(pick_weighted(s.kind_weights, u()));
  d.cx = s.center_min + (s.center_max - s.center_min) * u();
  d.cy = s.center_min + (s.center_max - s.center_min) * u();
  d.hw = s.size_min + (s.size_max - s.size_min) * u();
  d.hh = s.size_min + (s.size_max - s.size_min) * u();
  d.intensity.resize(static_cast<std::size_t>(s.channels));
  for (auto& v : d.intensity) v = s.intensity_min + (s.intensity_max - s.intensity_min) * u();
  return d;
}

bool inside(const ShapeDraw& d, double x, double y) {
  const double dx = (x - d.cx) / d.hw;
  const double dy = (y - d.cy) / d.hh;
  switch (d.kind) {
    case ShapeKind::rectangle:
      return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
    case ShapeKind::ellipse:
      return dx * dx + dy * dy <= 1.0;
    case ShapeKind::triangle:
      // apex at top centre, base along the bottom edge
      return dy <= 1.0 && dy >= -1.0 && std::abs(dx) <= (dy + 1.0) * 0.5;
  }
  return false;
}

void render(const ShapesImage& s, const ShapeDraw& d, std::span<float> out) {
  const int ss = s.supersampling;
  const double inv = 1.0 / (ss * ss);
  for (std::int64_t r = 0; r < s.height; ++r) {
    for (std::int64_t c = 0; c < s.width; ++c) {
      int hits = 0;
      for (int a = 0; a < ss; ++a) {
        const double y = (static_cast<double>(r) + (a + 0.5) / ss) / static_cast<double>(s.height);
        for (int b = 0; b < ss; ++b) {
          const double x = (static_cast<double>(c) + (b + 0.5) / ss) / static_cast<double>(s.width);
          hits += inside(d, x, y) ? 1 : 0;
        }
      }
      const double cover = hits * inv;
      for (std::int64_t ch = 0; ch < s.channels; ++ch) {
        const double v = cover * d.intensity[static_cast<std::size_t>(ch)];
        out[static_cast<std::size_t>((r * s.width + c) * s.channels + ch)] = static_cast<float>(2.0 * v - 1.0);
      }
    }
  }
}

// -- perturbation --------------------------------------------------------------

GaussianMixture perturb(GaussianMixture g, double sigma, std::uint64_t seed) {
  RngStream rng(seed, kPerturbStream);
  for (auto& m : g.means) {
    for (auto& x : m) x += sigma * rng.normal();
  }
  for (auto& sd : g.stddevs) {
    for (auto& x : sd) x *= std::exp(sigma * rng.normal());
  }
  return g;
}

ShapesImage perturb(ShapesImage s, double sigma, std::uint64_t seed) {
  RngStream rng(seed, kPerturbStream);
  auto shift = [&](double& lo, double& hi, double floor, double ceil) {
    lo += sigma * rng.normal();
    hi += sigma * rng.normal();
    if (lo > hi) std::swap(lo, hi);
    lo = std::clamp(lo, floor, ceil);
    hi = std::clamp(hi, floor, ceil);
  };
  for (auto& w : s.kind_weights) w *= std::exp(sigma * rng.normal());
  shift(s.center_min, s.center_max, 0.0, 1.0);
  shift(s.size_min, s.size_max, 0.02, 1.0);
  shift(s.intensity_min, s.intensity_max, 0.0, 1.0);
  return s;
}

// -- per-element draws -----------------------------------------------------------

// Writes element `index` of a resolved model into `out`; returns its label (or -1).
std::int32_t draw_into(const SyntheticModel& m, std::uint64_t seed, std::int64_t index, std::span<float> out) {
  return std::visit(
      Overloaded{
          [&](const GaussianMixture& g) -> std::int32_t {
            CounterRng pick(seed, kPickStream);
            CounterRng rng(seed, kGaussStream);
            const auto k = pick_weighted(g.weights, pick.uniform(static_cast<std::uint64_t>(index)));
            const std::uint64_t base = static_cast<std::uint64_t>(index) << 20;
            for (std::size_t j = 0; j < out.size(); ++j) {
              out[j] = static_cast<float>(g.means[k][j] + g.stddevs[k][j] * rng.normal(base + j));
            }
            return static_cast<std::int32_t>(k);
          },
          [&](const ShapesImage& s) -> std::int32_t {
            const auto d = draw_shape(s, seed, index);
            render(s, d, out);
            return static_cast<std::int32_t>(d.kind);
          },
          [&](const Empirical& e) -> std::int32_t {
            CounterRng pick(seed, kPickStream);
            const auto j = pick.below(static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(e.backing->size()));
            auto src = e.backing->element(static_cast<std::int64_t>(j));
            std::copy(src.begin(), src.end(), out.begin());
            return -1;
          },
          [&](const Mixture& mix) -> std::int32_t {
            CounterRng pick(seed, kPickStream);
            const auto k = pick_weighted(mix.weights, pick.uniform(static_cast<std::uint64_t>(index)));
            return draw_into(mix.components[k], derive_seed(seed, kMixStream + k), index, out);
          },
          [&](const Perturbed&) -> std::int32_t { throw UsageError("perturbed model must be resolved first"); },
      },
      m.params);
}

}  // namespace

SyntheticModel SyntheticModel::perturbed(SyntheticModel base, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("perturbation sigma must be finite and >= 0");
  return {Perturbed{std::make_shared<const SyntheticModel>(std::move(base)), sigma}, seed};
}

SyntheticModel SyntheticModel::empirical(SampleSet backing) {
  return {Empirical{std::make_shared<const SampleSet>(std::move(backing))}, 0};
}

SyntheticModel SyntheticModel::mixture(std::vector<SyntheticModel> components, std::vector<double> weights) {
  if (components.size() != weights.size()) throw ConfigError("mixture: one weight per component required");
  check_weights(weights, "mixture");
  const auto shape = components[0].element_shape();
  for (const auto& c : components) {
    if (c.element_shape() != shape) {
      throw ShapeError("mixture: component shapes " + shape_string(c.element_shape()) + " and " +
                       shape_string(shape) + " differ");
    }
  }
  return {Mixture{std::move(components), std::move(weights)}, 0};
}

std::string SyntheticModel::kind() const {
  return std::visit(Overloaded{
                        [](const GaussianMixture&) { return std::string("gaussian_mixture"); },
                        [](const ShapesImage&) { return std::string("shapes_image"); },
                        [](const Perturbed&) { return std::string("perturbed"); },
                        [](const Empirical&) { return std::string("empirical"); },
                        [](const Mixture&) { return std::string("mixture"); },
                    },
                    params);
}

Shape SyntheticModel::element_shape() const {
  return std::visit(Overloaded{
                        [](const GaussianMixture& g) {
                          return g.means.empty() ? Shape{0} : Shape{static_cast<std::int64_t>(g.means[0].size())};
                        },
                        [](const ShapesImage& s) { return Shape{s.height, s.width, s.channels}; },
                        [](const Perturbed& p) { return p.base->element_shape(); },
                        [](const Empirical& e) { return e.backing->element_shape(); },
                        [](const Mixture& m) { return m.components[0].element_shape(); },
                    },
                    params);
}

SyntheticModel resolve(const SyntheticModel& model) {
  return std::visit(
      Overloaded{
          [&](const GaussianMixture& g) -> SyntheticModel {
            validate(g);
            return model;
          },
          [&](const ShapesImage& s) -> SyntheticModel {
            validate(s);
            return model;
          },
          [&](const Empirical& e) -> SyntheticModel {
            if (!e.backing) throw ConfigError("empirical model without backing set");
            return model;
          },
          [&](const Mixture& m) -> SyntheticModel {
            std::vector<SyntheticModel> parts;
            parts.reserve(m.components.size());
            for (const auto& c : m.components) parts.push_back(resolve(c));
            return SyntheticModel::mixture(std::move(parts), m.weights);
          },
          [&](const Perturbed& p) -> SyntheticModel {
            if (!p.base) throw ConfigError("perturbed model without base");
            const auto base = resolve(*p.base);
            if (const auto* g = std::get_if<GaussianMixture>(&base.params)) {
              return SyntheticModel::gaussian(perturb(*g, p.sigma, model.seed));
            }
            if (const auto* s = std::get_if<ShapesImage>(&base.params)) {
              auto out = perturb(*s, p.sigma, model.seed);
              validate(out);
              return SyntheticModel::shapes(out);
            }
            throw ConfigError("cannot perturb a " + base.kind() + " model: it has no continuous parameters");
          },
      },
      model.params);
}

LabeledSampleSet sample_labeled(const SyntheticModel& model, std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample count must be at least 1, got " + std::to_string(n));
  const auto concrete = resolve(model);
  const auto shape = concrete.element_shape();
  const auto numel = shape_numel(shape);
  std::vector<float> values(static_cast<std::size_t>(n * numel));
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = draw_into(
        concrete, seed, i, std::span<float>(values).subspan(static_cast<std::size_t>(i * numel), static_cast<std::size_t>(numel)));
  }
  return {SampleSet(shape, std::move(values),
                    model.kind() + "(seed=" + std::to_string(seed) + ", n=" + std::to_string(n) + ")"),
          std::move(labels)};
}

SampleSet sample(const SyntheticModel& model, std::int64_t n, std::uint64_t seed) {
  return sample_labeled(model, n, seed).samples;
}

}  // namespace nnd
