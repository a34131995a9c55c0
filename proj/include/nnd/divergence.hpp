#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nnd/data.hpp"
#include "nnd/nn.hpp"
#include "nnd/optim.hpp"

namespace nnd {

/// Version of the report schema and of the canonical config serialisation
/// that feeds the config hash.
inline constexpr std::int32_t kReportFormatVersion = 1;
inline constexpr std::int64_t kLossLogStride = 100;

/// Critic objective Δ. Only the WGAN-GP difference-of-means is implemented.
struct Objective {
  enum class Kind { wgan_gp };
  Kind kind = Kind::wgan_gp;
  bool operator==(const Objective&) const = default;
};

void to_json(nlohmann::json& j, const Objective& o);
void from_json(const nlohmann::json& j, Objective& o);

struct LossPoint {
  std::int64_t iteration = 0;  // number of iterations completed
  double loss = 0.0;           // mean training loss over the preceding stride
};

struct DivergenceReport {
  double value = 0.0;               // E_real f_ema − E_model f_ema
  double value_with_penalty = 0.0;  // value − λ·GP under the EMA critic
  CriticSpec critic;
  TrainSpec train;
  Objective objective;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<LossPoint> loss_curve;
  double wall_time = 0.0;  // seconds
  std::string real_fingerprint;
  std::string model_fingerprint;
  std::int64_t real_size = 0;
  std::int64_t model_size = 0;
};

/// SHA-256 over the canonical serialisation of all configs and the format version.
std::string config_hash(const CriticSpec& critic, const TrainSpec& train, const Objective& objective);

/// `with_wall_time = false` gives a byte-stable serialisation for golden files.
nlohmann::json report_to_json(const DivergenceReport& r, bool with_wall_time = true);
DivergenceReport report_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Training pieces

/// Interpolation weights ε ~ U[0, 1), one per example, as a [N] tensor.
Tensor interpolation_weights(std::int64_t n, std::uint64_t seed, std::uint64_t counter_base = 0);

/// mean_i (‖∇_x̂ f(x̂_i)‖₂ − 1)² at x̂ = ε·real + (1−ε)·model (ε per example).
/// Differentiable with respect to the critic parameters.
Tensor gradient_penalty(const CriticParams& params, const Tensor& real_batch, const Tensor& model_batch,
                        const Tensor& eps);
Tensor gradient_penalty(const CriticParams& params, const Tensor& real_batch, const Tensor& model_batch,
                        std::uint64_t seed);

struct CriticLoss {
  Tensor total;    // mean f(model) − mean f(real) + λ·penalty
  Tensor penalty;  // undefined when λ = 0
};

CriticLoss critic_loss(const CriticParams& params, const Tensor& real_batch, const Tensor& model_batch,
                       const Tensor& eps, double gp_lambda);

struct TrainingState {
  CriticParams params;  // leaves with requires_grad
  EmaState ema;
  AdamState adam;
  std::int64_t iteration = 0;

  static TrainingState init(const CriticSpec& critic, const TrainSpec& train);
};

struct StepResult {
  double loss = 0.0;
  double penalty = 0.0;
};

/// One optimisation step at state.iteration: loss, parameter gradients via
/// double backprop, Adam at lr_at(iteration), EMA update. Throws
/// NumericalError on a non-finite loss or gradient.
StepResult training_step(TrainingState& state, const Tensor& real_batch, const Tensor& model_batch,
                         const Tensor& eps, const TrainSpec& train);

struct EstimateOptions {
  std::int64_t eval_chunk = 512;
  /// Called every kLossLogStride iterations with (iteration, window mean loss).
  std::function<void(std::int64_t, double)> progress;
};

/// Trains a fresh critic to separate `real` from `model` and evaluates the
/// EMA critic on one full pass over both sets.
DivergenceReport estimate_nnd(const SampleSet& real, const SampleSet& model, const CriticSpec& critic,
                              const TrainSpec& train, const Objective& objective = {},
                              const EstimateOptions& options = {});

/// Mean critic output over the whole set, in chunks, without recording a graph.
double mean_critic_output(const CriticParams& params, const SampleSet& set, std::int64_t chunk = 512);

/// Strict comparison d_model < d_memorizer.
bool outperforms_memorization(double d_model, double d_train_memorizer);

/// As above, after checking both reports came from identical configs and the
/// same real-side sample (UsageError otherwise).
bool outperforms_memorization(const DivergenceReport& model, const DivergenceReport& memorizer);

}  // namespace nnd
