#include "nnd/optim.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "common/json_strict.hpp"
#include "nnd/error.hpp"

namespace nnd {

std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "linear_decay_to_zero"; }

void TrainSpec::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("train.base_lr must be finite and >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (!(gp_lambda >= 0.0) || !std::isfinite(gp_lambda)) throw ConfigError("train.gp_lambda must be >= 0");
  if (!(ema_coefficient > 0.0 && ema_coefficient < 1.0)) {
    throw ConfigError("train.ema_coefficient must lie in (0, 1)");
  }
}

void to_json(nlohmann::json& j, const TrainSpec& s) {
  j = nlohmann::json{{"iterations", s.iterations},   {"batch_size", s.batch_size},
                     {"base_lr", s.base_lr},         {"lr_schedule", to_string(s.lr_schedule)},
                     {"adam_beta1", s.adam_beta1},   {"adam_beta2", s.adam_beta2},
                     {"adam_eps", s.adam_eps},       {"gp_lambda", s.gp_lambda},
                     {"ema_coefficient", s.ema_coefficient}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TrainSpec& s) {
  json_strict::Object obj(j, "train");
  s = TrainSpec{};
  if (auto v = obj.optional<std::int64_t>("iterations")) s.iterations = *v;
  if (auto v = obj.optional<std::int64_t>("batch_size")) s.batch_size = *v;
  if (auto v = obj.optional<double>("base_lr")) s.base_lr = *v;
  if (auto v = obj.optional<std::string>("lr_schedule")) {
    if (*v == "constant") {
      s.lr_schedule = LrSchedule::constant;
    } else if (*v == "linear_decay_to_zero") {
      s.lr_schedule = LrSchedule::linear_decay_to_zero;
    } else {
      throw ConfigError("train.lr_schedule must be \"constant\" or \"linear_decay_to_zero\", got \"" + *v + "\"");
    }
  }
  if (auto v = obj.optional<double>("adam_beta1")) s.adam_beta1 = *v;
  if (auto v = obj.optional<double>("adam_beta2")) s.adam_beta2 = *v;
  if (auto v = obj.optional<double>("adam_eps")) s.adam_eps = *v;
  if (auto v = obj.optional<double>("gp_lambda")) s.gp_lambda = *v;
  if (auto v = obj.optional<double>("ema_coefficient")) s.ema_coefficient = *v;
  if (auto v = obj.optional<std::uint64_t>("seed")) s.seed = *v;
  obj.finish();
  s.validate();
}

double lr_at(const TrainSpec& spec, std::int64_t iteration) {
  if (iteration < 0 || iteration >= spec.iterations) {
    throw UsageError("iteration " + std::to_string(iteration) + " outside [0, " + std::to_string(spec.iterations) +
                     ")");
  }
  if (spec.lr_schedule == LrSchedule::constant) return spec.base_lr;
  return spec.base_lr * (1.0 - static_cast<double>(iteration) / static_cast<double>(spec.iterations));
}

AdamState adam_init(const CriticParams& params) {
  AdamState s;
  for (const auto& t : params.tensors) {
    s.m.emplace_back(static_cast<std::size_t>(t.value.numel()), 0.0);
    s.v.emplace_back(static_cast<std::size_t>(t.value.numel()), 0.0);
  }
  return s;
}

void adam_step(AdamState& state, CriticParams& params, std::span<const Tensor> grads, double lr,
               const AdamHyper& hyper) {
  if (grads.size() != params.tensors.size() || state.m.size() != params.tensors.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.tensors.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) + " moments");
  }
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.tensors[i].value.shape()) {
      throw ShapeError("adam_step: gradient " + shape_string(grads[i].shape()) + " for " + params.tensors[i].name +
                       " " + shape_string(params.tensors[i].value.shape()));
    }
  }
  state.step += 1;
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double eps = hyper.eps;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto gs = grads[i].values();
    auto ps = params.tensors[i].value.mutable_values();
    const float* __restrict g = gs.data();
    float* __restrict p = ps.data();
    double* __restrict m = state.m[i].data();
    double* __restrict v = state.v[i].data();
    const std::size_t n = ps.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double gk = g[k];
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      const double update = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      p[k] = static_cast<float>(static_cast<double>(p[k]) - update);
    }
  }
}

}  // namespace nnd
