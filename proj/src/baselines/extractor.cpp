#include <algorithm>

#include "nnd/autograd.hpp"
#include "nnd/baselines.hpp"
#include "nnd/error.hpp"
#include "nnd/ops.hpp"
#include "nnd/optim.hpp"
#include "nnd/rng.hpp"

namespace nnd {

namespace {

constexpr std::uint64_t kClassifierInitTag = 0xC1A5;
constexpr std::uint64_t kClassifierBatchTag = 0xC1B7;

void require_input_shape(const FeatureExtractor& e, const SampleSet& set) {
  if (e.kind != ExtractorKind::identity && set.element_shape() != e.net.spec.input_shape) {
    throw ShapeError("extractor expects elements of shape " + shape_string(e.net.spec.input_shape) + ", got " +
                     shape_string(set.element_shape()));
  }
}

template <class F>
Eigen::MatrixXd rows_by_chunk(const SampleSet& set, std::int64_t chunk, std::int64_t cols, F f) {
  if (chunk < 1) throw ConfigError("chunk size must be positive");
  Eigen::MatrixXd out(set.size(), cols);
  NoGradGuard no_grad;
  for (std::int64_t start = 0; start < set.size(); start += chunk) {
    const auto count = std::min(chunk, set.size() - start);
    const Tensor t = f(set.slice(start, count));
    auto v = t.values();
    for (std::int64_t i = 0; i < count; ++i)
      for (std::int64_t j = 0; j < cols; ++j) out(start + i, j) = v[static_cast<std::size_t>(i * cols + j)];
  }
  return out;
}

}  // namespace

std::string to_string(ExtractorKind k) {
  switch (k) {
    case ExtractorKind::seeded_random_cnn:
      return "seeded_random_cnn";
    case ExtractorKind::trained_classifier_features:
      return "trained_classifier_features";
    case ExtractorKind::identity:
      break;
  }
  return "identity";
}

std::int64_t FeatureExtractor::output_dim(const Shape& element_shape) const {
  if (kind == ExtractorKind::identity) return shape_numel(element_shape);
  return net.spec.feature_dim();
}

std::int64_t FeatureExtractor::classes() const {
  if (kind != ExtractorKind::trained_classifier_features) {
    throw UsageError(to_string(kind) + " extractor has no classifier head");
  }
  return net.outputs;
}

FeatureExtractor identity_extractor() { return {}; }

FeatureExtractor random_cnn_extractor(const CriticSpec& trunk, std::uint64_t seed) {
  return {ExtractorKind::seeded_random_cnn, build_critic(trunk, seed)};
}

FeatureExtractor load_extractor(const std::filesystem::path& path, const Shape& input_shape) {
  auto net = params_from_checkpoint(load_nndw(path), input_shape);
  const auto kind = net.outputs > 1 ? ExtractorKind::trained_classifier_features : ExtractorKind::seeded_random_cnn;
  return {kind, std::move(net)};
}

void save_extractor(const std::filesystem::path& path, const FeatureExtractor& extractor) {
  if (extractor.kind == ExtractorKind::identity) throw UsageError("the identity extractor has no checkpoint");
  save_nndw(path, extractor.net.tensors);
}

Eigen::MatrixXd extract_features(const FeatureExtractor& extractor, const SampleSet& set, std::int64_t chunk) {
  require_input_shape(extractor, set);
  const auto d = extractor.output_dim(set.element_shape());
  if (extractor.kind == ExtractorKind::identity) {
    return rows_by_chunk(set, chunk, d, [](const Tensor& t) { return t; });
  }
  return rows_by_chunk(set, chunk, d, [&](const Tensor& t) { return critic_features(extractor.net, t); });
}

Eigen::MatrixXd classify(const FeatureExtractor& classifier, const SampleSet& set, std::int64_t chunk) {
  const auto k = classifier.classes();
  require_input_shape(classifier, set);
  return rows_by_chunk(set, chunk, k, [&](const Tensor& t) { return softmax(critic_forward(classifier.net, t)); });
}

FeatureExtractor train_classifier(const LabeledSampleSet& data, std::int64_t classes, const CriticSpec& trunk,
                                  const ClassifierTraining& cfg) {
  if (classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  if (cfg.iterations < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) {
    throw ConfigError("classifier training needs positive iterations, batch_size and lr");
  }
  const auto& set = data.samples;
  if (static_cast<std::int64_t>(data.labels.size()) != set.size()) {
    throw DataError("label count " + std::to_string(data.labels.size()) + " != sample count " +
                    std::to_string(set.size()));
  }
  for (auto y : data.labels) {
    if (y < 0 || y >= classes) throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }
  if (set.element_shape() != trunk.input_shape) {
    throw ShapeError("classifier trunk expects " + shape_string(trunk.input_shape) + ", data has " +
                     shape_string(set.element_shape()));
  }

  auto params = build_critic(trunk, derive_seed(cfg.seed, kClassifierInitTag), classes).clone(true);
  auto adam = adam_init(params);
  const AdamHyper hyper{0.9, 0.999, 1e-8};
  const CounterRng pick(cfg.seed, kClassifierBatchTag);
  const auto b = cfg.batch_size;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(b));
  std::vector<float> onehot(static_cast<std::size_t>(b * classes));
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    std::fill(onehot.begin(), onehot.end(), 0.0F);
    for (std::int64_t i = 0; i < b; ++i) {
      const auto j = static_cast<std::int64_t>(
          pick.below(static_cast<std::uint64_t>(it * b + i), static_cast<std::uint64_t>(set.size())));
      idx[static_cast<std::size_t>(i)] = j;
      onehot[static_cast<std::size_t>(i * classes + data.labels[static_cast<std::size_t>(j)])] = 1.0F;
    }
    const Tensor targets({b, classes}, onehot);
    Tensor loss;
    {
      GradModeGuard on(true);
      const Tensor logp = log_softmax(critic_forward(params, set.gather(idx)));
      loss = mul_scalar(sum(mul(targets, logp)), -1.0F / static_cast<float>(b));
    }
    const auto grads = grad(loss, params.values());
    adam_step(adam, params, grads, cfg.lr, hyper);
  }
  return {ExtractorKind::trained_classifier_features, params.clone(false)};
}

double classifier_accuracy(const FeatureExtractor& classifier, const LabeledSampleSet& data) {
  const Eigen::MatrixXd p = classify(classifier, data.samples);
  std::int64_t hits = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index arg = 0;
    p.row(i).maxCoeff(&arg);
    if (arg == data.labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(p.rows());
}

}  // namespace nnd
