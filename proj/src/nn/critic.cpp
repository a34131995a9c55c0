#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "common/json_strict.hpp"
#include "nnd/error.hpp"
#include "nnd/nn.hpp"
#include "nnd/ops.hpp"
#include "nnd/rng.hpp"

namespace nnd {

// ---------------------------------------------------------------------------
// Rational

Rational Rational::parse(const std::string& text) {
  Rational r;
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    r.num = std::stoll(text.substr(0, slash), &used);
    if (used != (slash == std::string::npos ? text.size() : slash)) throw std::invalid_argument(text);
    if (slash != std::string::npos) {
      const auto rest = text.substr(slash + 1);
      r.den = std::stoll(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(text);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("invalid rational \"" + text + "\"; expected p or p/q");
  }
  if (r.num <= 0 || r.den <= 0) throw ConfigError("rational \"" + text + "\" must be positive");
  const auto g = std::gcd(r.num, r.den);
  r.num /= g;
  r.den /= g;
  return r;
}

std::string Rational::to_string() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

// ---------------------------------------------------------------------------
// CriticSpec

std::string to_string(CriticKind kind) { return kind == CriticKind::cnn ? "cnn" : "mlp"; }

void CriticSpec::validate() const {
  if (channel_multiplier.num <= 0 || channel_multiplier.den <= 0) {
    throw ConfigError("channel_multiplier must be positive");
  }
  for (auto d : input_shape) {
    if (d < 1) throw ConfigError("input_shape " + shape_string(input_shape) + " has a non-positive extent");
  }
  if (kind == CriticKind::cnn) {
    if (input_shape.size() != 3) {
      throw ConfigError("cnn critic needs input_shape [H, W, C], got " + shape_string(input_shape));
    }
    if (!mlp_hidden.empty()) throw ConfigError("mlp_hidden is only valid for mlp critics");
    for (auto c : conv_channels()) {
      if (c < 1) {
        throw ConfigError("channel_multiplier " + channel_multiplier.to_string() + " rounds a layer to zero channels");
      }
    }
  } else {
    if (input_shape.empty()) throw ConfigError("mlp critic needs a non-empty input_shape");
    for (auto h : mlp_hidden) {
      if (h < 1) throw ConfigError("mlp_hidden widths must be positive");
    }
  }
}

std::vector<std::int64_t> CriticSpec::conv_channels() const {
  std::vector<std::int64_t> out;
  for (auto base : kBaseChannels) {
    out.push_back(static_cast<std::int64_t>(std::llround(static_cast<double>(base) * channel_multiplier.value())));
  }
  return out;
}

std::vector<std::array<std::int64_t, 2>> CriticSpec::conv_extents() const {
  std::vector<std::array<std::int64_t, 2>> out;
  std::int64_t h = input_shape.at(0);
  std::int64_t w = input_shape.at(1);
  for (std::size_t i = 0; i < kBaseChannels.size(); ++i) {
    h = (h + kStride - 1) / kStride;
    w = (w + kStride - 1) / kStride;
    out.push_back({h, w});
  }
  return out;
}

std::int64_t CriticSpec::feature_dim() const {
  if (kind == CriticKind::mlp) return mlp_hidden.empty() ? shape_numel(input_shape) : mlp_hidden.back();
  const auto last = conv_extents().back();
  return last[0] * last[1] * conv_channels().back();
}

void to_json(nlohmann::json& j, const CriticSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)},
                     {"input_shape", spec.input_shape},
                     {"channel_multiplier", spec.channel_multiplier.to_string()},
                     {"mlp_hidden", spec.mlp_hidden}};
}

void from_json(const nlohmann::json& j, CriticSpec& spec) {
  json_strict::Object obj(j, "critic");
  spec = CriticSpec{};
  if (auto kind = obj.optional<std::string>("kind")) {
    if (*kind == "cnn") {
      spec.kind = CriticKind::cnn;
    } else if (*kind == "mlp") {
      spec.kind = CriticKind::mlp;
    } else {
      throw ConfigError("critic.kind must be \"cnn\" or \"mlp\", got \"" + *kind + "\"");
    }
  }
  if (auto s = obj.optional<std::vector<std::int64_t>>("input_shape")) spec.input_shape = *s;
  if (auto m = obj.optional<std::string>("channel_multiplier")) spec.channel_multiplier = Rational::parse(*m);
  if (auto h = obj.optional<std::vector<std::int64_t>>("mlp_hidden")) spec.mlp_hidden = *h;
  obj.finish();
  spec.validate();
}

// ---------------------------------------------------------------------------
// CriticParams

const Tensor& CriticParams::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw UsageError("no parameter named " + name);
}

std::vector<Tensor> CriticParams::values() const {
  std::vector<Tensor> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.push_back(t.value);
  return out;
}

CriticParams CriticParams::with_values(const std::vector<Tensor>& values) const {
  if (values.size() != tensors.size()) {
    throw ShapeError("expected " + std::to_string(tensors.size()) + " parameter tensors, got " +
                     std::to_string(values.size()));
  }
  CriticParams out{spec, outputs, {}};
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != tensors[i].value.shape()) {
      throw ShapeError(tensors[i].name + ": shape " + shape_string(values[i].shape()) + " does not match " +
                       shape_string(tensors[i].value.shape()));
    }
    out.tensors.push_back({tensors[i].name, values[i].detach()});
  }
  return out;
}

CriticParams CriticParams::clone(bool requires_grad) const {
  auto out = with_values(values());
  for (auto& t : out.tensors) t.value.set_requires_grad(requires_grad);
  return out;
}

std::int64_t CriticParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors) n += t.value.numel();
  return n;
}

namespace {

struct LayerPlan {
  std::string weight_name;
  std::string bias_name;
  Shape weight_shape;
  std::int64_t fan_in;
};

std::vector<LayerPlan> plan_layers(const CriticSpec& spec, std::int64_t outputs) {
  std::vector<LayerPlan> plan;
  std::int64_t width = 0;
  if (spec.kind == CriticKind::cnn) {
    const auto k = CriticSpec::kKernelSize;
    std::int64_t cin = spec.input_shape[2];
    const auto channels = spec.conv_channels();
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const auto p = "conv" + std::to_string(i);
      plan.push_back({p + ".kernel", p + ".bias", {k, k, cin, channels[i]}, k * k * cin});
      cin = channels[i];
    }
  } else {
    width = shape_numel(spec.input_shape);
    for (std::size_t i = 0; i < spec.mlp_hidden.size(); ++i) {
      const auto p = "hidden" + std::to_string(i);
      plan.push_back({p + ".weight", p + ".bias", {width, spec.mlp_hidden[i]}, width});
      width = spec.mlp_hidden[i];
    }
  }
  const auto features = spec.feature_dim();
  plan.push_back({"out.weight", "out.bias", {features, outputs}, features});
  return plan;
}

}  // namespace

CriticParams build_critic(const CriticSpec& spec, std::uint64_t seed, std::int64_t outputs) {
  spec.validate();
  if (outputs < 1) throw ConfigError("critic needs at least one output");
  CriticParams params{spec, outputs, {}};
  const auto plan = plan_layers(spec, outputs);
  for (std::size_t layer = 0; layer < plan.size(); ++layer) {
    const auto& l = plan[layer];
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.fan_in));
    CounterRng rng(seed, layer);
    std::vector<float> w(static_cast<std::size_t>(shape_numel(l.weight_shape)));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(stddev * rng.normal(i));
    params.tensors.push_back({l.weight_name, Tensor(l.weight_shape, std::move(w))});
    params.tensors.push_back({l.bias_name, Tensor::zeros({l.weight_shape.back()})});
  }
  return params;
}

Tensor critic_features(const CriticParams& params, const Tensor& batch) {
  const auto& spec = params.spec;
  const Shape& in = spec.input_shape;
  if (batch.rank() != in.size() + 1 ||
      !std::equal(in.begin(), in.end(), batch.shape().begin() + 1)) {
    throw ShapeError("critic expects batches of shape [N, " + shape_string(in).substr(1) + ", got " +
                     shape_string(batch.shape()));
  }
  const auto n = batch.dim(0);
  if (spec.kind == CriticKind::cnn) {
    Tensor x = batch;
    for (std::size_t i = 0; i < CriticSpec::kBaseChannels.size(); ++i) {
      const auto p = "conv" + std::to_string(i);
      x = swish(conv2d(x, params.at(p + ".kernel"), static_cast<int>(CriticSpec::kStride)) + params.at(p + ".bias"));
    }
    return reshape(x, {n, x.numel() / n});
  }
  Tensor x = reshape(batch, {n, shape_numel(in)});
  for (std::size_t i = 0; i < spec.mlp_hidden.size(); ++i) {
    const auto p = "hidden" + std::to_string(i);
    x = swish(dense(x, params.at(p + ".weight"), params.at(p + ".bias")));
  }
  return x;
}

Tensor critic_forward(const CriticParams& params, const Tensor& batch) {
  return dense(critic_features(params, batch), params.at("out.weight"), params.at("out.bias"));
}

CriticParams params_from_checkpoint(const std::vector<NamedTensor>& tensors, const Shape& input_shape) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& t : tensors) {
      if (t.name == name) return &t.value;
    }
    return nullptr;
  };
  const Tensor* out_w = find("out.weight");
  if (!out_w || out_w->rank() != 2) throw ConfigError("checkpoint lacks a rank-2 out.weight");
  CriticSpec spec;
  spec.input_shape = input_shape;
  if (const Tensor* k0 = find("conv0.kernel")) {
    spec.kind = CriticKind::cnn;
    if (k0->rank() != 4) throw ConfigError("conv0.kernel must be rank 4");
    spec.channel_multiplier = Rational::parse(std::to_string(k0->dim(3)) + "/" +
                                              std::to_string(CriticSpec::kBaseChannels[0]));
  } else {
    spec.kind = CriticKind::mlp;
    for (std::size_t i = 0;; ++i) {
      const Tensor* w = find("hidden" + std::to_string(i) + ".weight");
      if (!w) break;
      spec.mlp_hidden.push_back(w->dim(1));
    }
  }
  spec.validate();
  const auto plan = plan_layers(spec, out_w->dim(1));
  CriticParams params{spec, out_w->dim(1), {}};
  for (const auto& l : plan) {
    for (const auto* name : {&l.weight_name, &l.bias_name}) {
      const Tensor* t = find(*name);
      const Shape expected = name == &l.weight_name ? l.weight_shape : Shape{l.weight_shape.back()};
      if (!t) throw ConfigError("checkpoint lacks " + *name);
      if (t->shape() != expected) {
        throw ShapeError("checkpoint tensor " + *name + " has shape " + shape_string(t->shape()) + ", expected " +
                         shape_string(expected) + " for input " + shape_string(input_shape));
      }
      params.tensors.push_back({*name, t->detach()});
    }
  }
  if (params.tensors.size() != tensors.size()) throw ConfigError("checkpoint has unexpected extra tensors");
  return params;
}

// ---------------------------------------------------------------------------
// EMA

EmaState ema_init(const CriticParams& live, double coefficient) {
  if (!(coefficient > 0.0 && coefficient < 1.0)) throw ConfigError("EMA coefficient must lie in (0, 1)");
  EmaState s{{}, coefficient};
  for (const auto& t : live.tensors) s.shadow.push_back(t.value.detach());
  return s;
}

EmaState ema_update(const EmaState& state, const CriticParams& live) {
  if (state.shadow.size() != live.tensors.size()) {
    throw ShapeError("EMA tracks " + std::to_string(state.shadow.size()) + " tensors, live has " +
                     std::to_string(live.tensors.size()));
  }
  const double c = state.coefficient;
  EmaState next{{}, c};
  next.shadow.reserve(state.shadow.size());
  for (std::size_t i = 0; i < state.shadow.size(); ++i) {
    const auto& s = state.shadow[i];
    const auto& l = live.tensors[i].value;
    if (s.shape() != l.shape()) {
      throw ShapeError("EMA shadow " + shape_string(s.shape()) + " vs live " + shape_string(l.shape()));
    }
    std::vector<float> v(static_cast<std::size_t>(s.numel()));
    auto sv = s.values();
    auto lv = l.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = static_cast<float>(c * static_cast<double>(sv[k]) + (1.0 - c) * static_cast<double>(lv[k]));
    }
    next.shadow.emplace_back(s.shape(), std::move(v));
  }
  return next;
}

}  // namespace nnd
