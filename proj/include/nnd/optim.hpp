#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nnd/nn.hpp"

namespace nnd {

enum class LrSchedule { constant, linear_decay_to_zero };

std::string to_string(LrSchedule s);

/// Optimisation hyperparameters of one critic training run.
struct TrainSpec {
  std::int64_t iterations = 100000;
  std::int64_t batch_size = 256;
  double base_lr = 2e-4;
  LrSchedule lr_schedule = LrSchedule::linear_decay_to_zero;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  double gp_lambda = 10.0;
  double ema_coefficient = 0.999;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainSpec&) const = default;
};

void to_json(nlohmann::json& j, const TrainSpec& spec);
/// Strict: unknown keys are ConfigErrors; missing keys take the defaults above.
void from_json(const nlohmann::json& j, TrainSpec& spec);

/// Learning rate at `iteration` ∈ [0, iterations).
double lr_at(const TrainSpec& spec, std::int64_t iteration);

/// First and second moments (kept in double), one entry per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

AdamState adam_init(const CriticParams& params);

struct AdamHyper {
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// One bias-corrected Adam update, in place on `state` and the leaf storage of
/// `params`. Deterministic: the result depends only on the arguments.
void adam_step(AdamState& state, CriticParams& params, std::span<const Tensor> grads, double lr,
               const AdamHyper& hyper);

}  // namespace nnd
