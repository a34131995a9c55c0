#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnd/data.hpp"
#include "nnd/nn.hpp"

namespace nnd {

// ---------------------------------------------------------------------------
// Moment matching (FID)

struct GaussianMoments {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

/// Sample mean and unbiased covariance (N − 1) of the rows of `features`,
/// symmetrised as (S + Sᵀ)/2. Needs N >= 2.
GaussianMoments moments(const Eigen::MatrixXd& features);

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `tolerance`. The input must be symmetric within 1e-6.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, double tolerance = 1e-10, int max_sweeps = 100);

/// Square root of a symmetric PSD matrix; negative eigenvalues clamp to 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

/// (Σ_p^{1/2} Σ_q Σ_p^{1/2})^{1/2}: symmetric PSD and with the same trace as
/// (Σ_p Σ_q)^{1/2}.
Eigen::MatrixXd sqrtm_product(const Eigen::MatrixXd& sigma_p, const Eigen::MatrixXd& sigma_q);

/// ‖μ_p − μ_q‖² + Tr(Σ_p + Σ_q − 2(Σ_p Σ_q)^{1/2}), clamped at 0.
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

// ---------------------------------------------------------------------------
// Inception-style score

enum class IsVariant {
  kl_mean,        // mean over splits of E_x KL(p(y|x) ‖ p(y))
  exponentiated,  // mean over splits of exp(E_x KL(...))
};

std::string to_string(IsVariant v);
IsVariant parse_is_variant(const std::string& text);

inline constexpr double kKlFloor = 1e-12;
inline constexpr int kIsSplits = 10;

struct IsScore {
  double value = 0.0;
  IsVariant variant = IsVariant::kl_mean;
  std::vector<double> split_scores;
};

/// Rows of `probs` are p(y|x); each must be nonnegative and sum to 1 within
/// 1e-5. The sample is cut into `splits` contiguous, near-equal parts (fewer
/// when N < splits); the marginal is taken per part.
IsScore inception_style_score(const Eigen::MatrixXd& probs, IsVariant variant = IsVariant::kl_mean,
                              int splits = kIsSplits);

/// |score_p − score_q|; UsageError when the variants differ.
double is_divergence(const IsScore& p, const IsScore& q);

// ---------------------------------------------------------------------------
// Feature extractors

enum class ExtractorKind { seeded_random_cnn, trained_classifier_features, identity };

std::string to_string(ExtractorKind k);

struct FeatureExtractor {
  ExtractorKind kind = ExtractorKind::identity;
  CriticParams net;  // unused for identity

  /// Feature dimension for inputs of the given element shape.
  std::int64_t output_dim(const Shape& element_shape) const;
  /// Class count of the classifier head (trained_classifier_features only).
  std::int64_t classes() const;
};

FeatureExtractor identity_extractor();
/// Fresh He-initialised CNN trunk; features are its last conv stage.
FeatureExtractor random_cnn_extractor(const CriticSpec& trunk, std::uint64_t seed);
/// A checkpointed CNN: with a single output it is a random-feature trunk,
/// with K > 1 outputs a classifier whose penultimate layer gives features.
FeatureExtractor load_extractor(const std::filesystem::path& path, const Shape& input_shape);
void save_extractor(const std::filesystem::path& path, const FeatureExtractor& extractor);

/// One feature row per sample, computed in chunks without a graph.
Eigen::MatrixXd extract_features(const FeatureExtractor& extractor, const SampleSet& set, std::int64_t chunk = 512);

/// Softmax class probabilities of a classifier extractor.
Eigen::MatrixXd classify(const FeatureExtractor& classifier, const SampleSet& set, std::int64_t chunk = 512);

struct ClassifierTraining {
  std::int64_t iterations = 2000;
  std::int64_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Trains a K-way softmax CNN with cross-entropy and Adam on labelled data.
FeatureExtractor train_classifier(const LabeledSampleSet& data, std::int64_t classes, const CriticSpec& trunk,
                                  const ClassifierTraining& cfg);

/// Fraction of argmax predictions equal to the labels.
double classifier_accuracy(const FeatureExtractor& classifier, const LabeledSampleSet& data);

}  // namespace nnd
