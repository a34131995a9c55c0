#include "nnd/divergence.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "common/json_strict.hpp"
#include "nnd/autograd.hpp"
#include "nnd/error.hpp"
#include "nnd/hash.hpp"
#include "nnd/ops.hpp"
#include "nnd/rng.hpp"

namespace nnd {

namespace {

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kRealTag = 0x4EA1;
constexpr std::uint64_t kModelTag = 0x30DE;
constexpr std::uint64_t kEpsTag = 0xE951;
constexpr std::uint64_t kEvalEpsTag = 0xE7A1;

// x̂ = ε·real + (1−ε)·model as a fresh differentiable leaf.
Tensor interpolate(const Tensor& real_batch, const Tensor& model_batch, const Tensor& eps) {
  if (real_batch.shape() != model_batch.shape()) {
    throw ShapeError("gradient penalty: real batch " + shape_string(real_batch.shape()) + " vs model batch " +
                     shape_string(model_batch.shape()));
  }
  if (eps.shape() != Shape{real_batch.dim(0)}) {
    throw ShapeError("gradient penalty: eps " + shape_string(eps.shape()) + " for batch of " +
                     std::to_string(real_batch.dim(0)));
  }
  const auto n = real_batch.dim(0);
  const auto per = real_batch.numel() / n;
  auto r = real_batch.values();
  auto m = model_batch.values();
  auto e = eps.values();
  std::vector<float> out(r.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const float w = e[static_cast<std::size_t>(i)];
    for (std::int64_t k = 0; k < per; ++k) {
      const auto j = static_cast<std::size_t>(i * per + k);
      out[j] = w * r[j] + (1.0F - w) * m[j];
    }
  }
  Tensor xhat(real_batch.shape(), std::move(out));
  xhat.set_requires_grad(true);
  return xhat;
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const Objective&) { j = nlohmann::json{{"kind", "wgan_gp"}}; }

void from_json(const nlohmann::json& j, Objective& o) {
  json_strict::Object obj(j, "objective");
  o = Objective{};
  if (auto k = obj.optional<std::string>("kind"); k && *k != "wgan_gp") {
    throw ConfigError("objective.kind must be \"wgan_gp\", got \"" + *k + "\"");
  }
  obj.finish();
}

std::string config_hash(const CriticSpec& critic, const TrainSpec& train, const Objective& objective) {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  nlohmann::json canon{{"format_version", kReportFormatVersion},
                       {"critic", critic},
                       {"train", train},
                       {"objective", objective}};
  return sha256_hex(canon.dump());
}

nlohmann::json report_to_json(const DivergenceReport& r, bool with_wall_time) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.loss_curve) curve.push_back({p.iteration, p.loss});
  nlohmann::json j{{"format_version", kReportFormatVersion},
                   {"value", r.value},
                   {"value_with_penalty", r.value_with_penalty},
                   {"critic", r.critic},
                   {"train", r.train},
                   {"objective", r.objective},
                   {"seed", r.seed},
                   {"config_hash", r.config_hash},
                   {"sample_fingerprints", {{"real", r.real_fingerprint}, {"model", r.model_fingerprint}}},
                   {"sample_sizes", {{"real", r.real_size}, {"model", r.model_size}}},
                   {"pixel_range", "[-1, 1]"},
                   {"loss_logging_stride", kLossLogStride},
                   {"loss_curve", curve}};
  if (with_wall_time) j["wall_time"] = r.wall_time;
  return j;
}

DivergenceReport report_from_json(const nlohmann::json& j) {
  json_strict::Object obj(j, "report");
  DivergenceReport r;
  if (obj.required<std::int32_t>("format_version") != kReportFormatVersion) {
    throw ConfigError("unsupported report format_version");
  }
  r.value = obj.required<double>("value");
  r.value_with_penalty = obj.required<double>("value_with_penalty");
  r.critic = obj.required<CriticSpec>("critic");
  r.train = obj.required<TrainSpec>("train");
  r.objective = obj.required<Objective>("objective");
  r.seed = obj.required<std::uint64_t>("seed");
  r.config_hash = obj.required<std::string>("config_hash");
  const auto fp = obj.required<nlohmann::json>("sample_fingerprints");
  r.real_fingerprint = fp.at("real").get<std::string>();
  r.model_fingerprint = fp.at("model").get<std::string>();
  const auto sizes = obj.required<nlohmann::json>("sample_sizes");
  r.real_size = sizes.at("real").get<std::int64_t>();
  r.model_size = sizes.at("model").get<std::int64_t>();
  obj.optional<std::string>("pixel_range");
  obj.optional<std::int64_t>("loss_logging_stride");
  for (const auto& p : obj.required<nlohmann::json>("loss_curve")) {
    r.loss_curve.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<double>()});
  }
  if (auto w = obj.optional<double>("wall_time")) r.wall_time = *w;
  obj.finish();
  return r;
}

// ---------------------------------------------------------------------------
// Training pieces

Tensor interpolation_weights(std::int64_t n, std::uint64_t seed, std::uint64_t counter_base) {
  CounterRng rng(seed, kEpsTag);
  std::vector<float> e(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    e[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform(counter_base + static_cast<std::uint64_t>(i)));
  }
  return Tensor({n}, std::move(e));
}

Tensor gradient_penalty(const CriticParams& params, const Tensor& real_batch, const Tensor& model_batch,
                        const Tensor& eps) {
  Tensor xhat = interpolate(real_batch, model_batch, eps);
  const auto n = xhat.dim(0);
  Tensor scores;
  {
    GradModeGuard on(true);
    scores = sum(critic_forward(params, xhat));
  }
  const Tensor inputs[] = {xhat};
  Tensor g = grad(scores, inputs, /*create_graph=*/true)[0];
  GradModeGuard on(true);
  Tensor norms = l2_norm_rows(reshape(g, {n, g.numel() / n}));
  return mean(square(add_scalar(norms, -1.0F)));
}

Tensor gradient_penalty(const CriticParams& params, const Tensor& real_batch, const Tensor& model_batch,
                        std::uint64_t seed) {
  return gradient_penalty(params, real_batch, model_batch, interpolation_weights(real_batch.dim(0), seed));
}

CriticLoss critic_loss(const CriticParams& params, const Tensor& real_batch, const Tensor& model_batch,
                       const Tensor& eps, double gp_lambda) {
  GradModeGuard on(true);
  CriticLoss out;
  Tensor diff = mean(critic_forward(params, model_batch)) - mean(critic_forward(params, real_batch));
  if (gp_lambda > 0.0) {
    out.penalty = gradient_penalty(params, real_batch, model_batch, eps);
    out.total = diff + mul_scalar(out.penalty, static_cast<float>(gp_lambda));
  } else {
    out.total = diff;
  }
  return out;
}

TrainingState TrainingState::init(const CriticSpec& critic, const TrainSpec& train) {
  TrainingState s;
  s.params = build_critic(critic, derive_seed(train.seed, kInitTag)).clone(true);
  s.ema = ema_init(s.params, train.ema_coefficient);
  s.adam = adam_init(s.params);
  return s;
}

StepResult training_step(TrainingState& state, const Tensor& real_batch, const Tensor& model_batch,
                         const Tensor& eps, const TrainSpec& train) {
  if (real_batch.dim(0) != model_batch.dim(0)) {
    throw ShapeError("training_step: batch sizes " + std::to_string(real_batch.dim(0)) + " and " +
                     std::to_string(model_batch.dim(0)) + " differ");
  }
  const auto loss = critic_loss(state.params, real_batch, model_batch, eps, train.gp_lambda);
  StepResult result{loss.total.item(), loss.penalty.defined() ? loss.penalty.item() : 0.0};
  if (!finite(result.loss)) throw NumericalError("non-finite critic loss", state.iteration);
  const auto params = state.params.values();
  const auto grads = grad(loss.total, params);
  for (const auto& g : grads) {
    for (float v : g.values()) {
      if (!std::isfinite(v)) throw NumericalError("non-finite critic gradient", state.iteration);
    }
  }
  adam_step(state.adam, state.params, grads, lr_at(train, state.iteration),
            {train.adam_beta1, train.adam_beta2, train.adam_eps});
  state.ema = ema_update(state.ema, state.params);
  state.iteration += 1;
  return result;
}

double mean_critic_output(const CriticParams& params, const SampleSet& set, std::int64_t chunk) {
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::int64_t start = 0; start < set.size(); start += chunk) {
    const auto count = std::min(chunk, set.size() - start);
    const Tensor out = critic_forward(params, set.slice(start, count));
    for (float v : out.values()) total += v;
  }
  return total / static_cast<double>(set.size());
}

namespace {

// λ·GP under the EMA critic over max(N_real, N_model) cyclically paired examples.
double evaluation_penalty(const CriticParams& params, const SampleSet& real, const SampleSet& model,
                          std::uint64_t seed, std::int64_t chunk) {
  const auto n = std::max(real.size(), model.size());
  double total = 0.0;
  for (std::int64_t start = 0; start < n; start += chunk) {
    const auto count = std::min(chunk, n - start);
    std::vector<std::int64_t> ri(static_cast<std::size_t>(count));
    std::vector<std::int64_t> mi(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      ri[static_cast<std::size_t>(i)] = (start + i) % real.size();
      mi[static_cast<std::size_t>(i)] = (start + i) % model.size();
    }
    const Tensor eps = interpolation_weights(count, derive_seed(seed, kEvalEpsTag), static_cast<std::uint64_t>(start));
    const Tensor gp = gradient_penalty(params, real.gather(ri), model.gather(mi), eps);
    total += static_cast<double>(gp.item()) * static_cast<double>(count);
  }
  return total / static_cast<double>(n);
}

}  // namespace

DivergenceReport estimate_nnd(const SampleSet& real, const SampleSet& model, const CriticSpec& critic,
                              const TrainSpec& train, const Objective& objective, const EstimateOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  critic.validate();
  train.validate();
  if (real.element_shape() != model.element_shape()) {
    throw ShapeError("real elements " + shape_string(real.element_shape()) + " vs model elements " +
                     shape_string(model.element_shape()));
  }
  if (real.element_shape() != critic.input_shape) {
    throw ShapeError("critic input_shape " + shape_string(critic.input_shape) + " does not match samples " +
                     shape_string(real.element_shape()));
  }

  auto state = TrainingState::init(critic, train);
  const auto batch = train.batch_size;
  const CounterRng real_pick(train.seed, kRealTag);
  const CounterRng model_pick(train.seed, kModelTag);
  const auto eps_seed = derive_seed(train.seed, kEpsTag);

  DivergenceReport report;
  std::vector<std::int64_t> ri(static_cast<std::size_t>(batch));
  std::vector<std::int64_t> mi(static_cast<std::size_t>(batch));
  double window = 0.0;
  for (std::int64_t it = 0; it < train.iterations; ++it) {
    const auto base = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(batch);
    for (std::int64_t b = 0; b < batch; ++b) {
      const auto c = base + static_cast<std::uint64_t>(b);
      ri[static_cast<std::size_t>(b)] = static_cast<std::int64_t>(real_pick.below(c, static_cast<std::uint64_t>(real.size())));
      mi[static_cast<std::size_t>(b)] = static_cast<std::int64_t>(model_pick.below(c, static_cast<std::uint64_t>(model.size())));
    }
    const auto step = training_step(state, real.gather(ri), model.gather(mi), interpolation_weights(batch, eps_seed, base),
                                    train);
    window += step.loss;
    if ((it + 1) % kLossLogStride == 0) {
      const double mean_loss = window / static_cast<double>(kLossLogStride);
      report.loss_curve.push_back({it + 1, mean_loss});
      if (options.progress) options.progress(it + 1, mean_loss);
      window = 0.0;
    }
  }

  const auto ema_params = state.params.with_values(state.ema.shadow);
  report.value = mean_critic_output(ema_params, real, options.eval_chunk) -
                 mean_critic_output(ema_params, model, options.eval_chunk);
  if (!finite(report.value)) throw NumericalError("non-finite divergence estimate", train.iterations);
  report.value_with_penalty =
      train.gp_lambda > 0.0
          ? report.value - train.gp_lambda * evaluation_penalty(ema_params, real, model, train.seed, options.eval_chunk)
          : report.value;
  report.critic = critic;
  report.train = train;
  report.objective = objective;
  report.seed = train.seed;
  report.config_hash = config_hash(critic, train, objective);
  report.real_fingerprint = real.fingerprint();
  report.model_fingerprint = model.fingerprint();
  report.real_size = real.size();
  report.model_size = model.size();
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

bool outperforms_memorization(double d_model, double d_train_memorizer) { return d_model < d_train_memorizer; }

bool outperforms_memorization(const DivergenceReport& model, const DivergenceReport& memorizer) {
  if (model.config_hash != memorizer.config_hash) {
    throw UsageError("memorization comparison needs identical configs; hashes " + model.config_hash + " and " +
                     memorizer.config_hash + " differ");
  }
  if (model.real_fingerprint != memorizer.real_fingerprint) {
    throw UsageError("memorization comparison needs the same real-side sample");
  }
  return outperforms_memorization(model.value, memorizer.value);
}

}  // namespace nnd
