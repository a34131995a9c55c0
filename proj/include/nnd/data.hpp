#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nnd/tensor.hpp"

namespace nnd {

/// Immutable collection of N >= 1 equally shaped float tensors.
///
/// Pixel data everywhere in this library lives in [-1, 1]. The fingerprint
/// is a SHA-256 over shape and contents and is order-sensitive: it identifies
/// a sample (provenance), not a set.
class SampleSet {
 public:
  SampleSet(Shape element_shape, std::vector<float> values, std::string provenance);

  std::int64_t size() const { return impl_->count; }
  const Shape& element_shape() const { return impl_->element_shape; }
  std::int64_t element_numel() const { return impl_->element_numel; }
  std::span<const float> values() const { return impl_->values; }
  std::span<const float> element(std::int64_t i) const;
  const std::string& fingerprint() const { return impl_->fingerprint; }
  const std::string& provenance() const { return impl_->provenance; }

  /// Shape of a batch of `n` elements: [n, element_shape...].
  Shape batch_shape(std::int64_t n) const;
  Tensor gather(std::span<const std::int64_t> indices) const;
  Tensor slice(std::int64_t start, std::int64_t count) const;

  SampleSet with_provenance(std::string provenance) const;

 private:
  struct Impl {
    Shape element_shape;
    std::int64_t element_numel = 0;
    std::int64_t count = 0;
    std::vector<float> values;
    std::string fingerprint;
    std::string provenance;
  };
  std::shared_ptr<const Impl> impl_;
};

/// Concatenates sets of identical element shape, in order.
SampleSet concat(std::span<const SampleSet> parts, std::string provenance);

struct LabeledSampleSet {
  SampleSet samples;
  std::vector<std::int32_t> labels;
};

// ---------------------------------------------------------------------------
// Synthetic distributions

/// Mixture of axis-aligned Gaussians over vectors.
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> stddevs;  // per component, per coordinate
};

enum class ShapeKind : std::int32_t { rectangle = 0, ellipse = 1, triangle = 2 };
inline constexpr std::int32_t kShapeKinds = 3;

/// Procedural H×W×C renders of one anti-aliased shape on a black background.
/// Geometry is in units of the image extent; intensities in [0, 1] before
/// the map to [-1, 1].
struct ShapesImage {
  std::int64_t height = 8;
  std::int64_t width = 8;
  std::int64_t channels = 1;
  std::array<double, kShapeKinds> kind_weights{1.0, 1.0, 1.0};
  double center_min = 0.3;
  double center_max = 0.7;
  double size_min = 0.15;
  double size_max = 0.4;
  double intensity_min = 0.4;
  double intensity_max = 1.0;
  std::int32_t supersampling = 4;
};

struct SyntheticModel;

/// A nearby member of the wrapped model's family: parameters are displaced
/// once, by noise of scale `sigma` drawn from the owning model's seed.
struct Perturbed {
  std::shared_ptr<const SyntheticModel> base;
  double sigma = 0.0;
};

/// Uniform distribution over a finite set: the memorizer.
struct Empirical {
  std::shared_ptr<const SampleSet> backing;
};

struct Mixture {
  std::vector<SyntheticModel> components;
  std::vector<double> weights;
};

struct SyntheticModel {
  std::variant<GaussianMixture, ShapesImage, Perturbed, Empirical, Mixture> params;
  std::uint64_t seed = 0;

  static SyntheticModel gaussian(GaussianMixture m) { return {std::move(m), 0}; }
  static SyntheticModel shapes(ShapesImage s) { return {s, 0}; }
  static SyntheticModel perturbed(SyntheticModel base, double sigma, std::uint64_t seed);
  static SyntheticModel empirical(SampleSet backing);
  static SyntheticModel mixture(std::vector<SyntheticModel> components, std::vector<double> weights);

  std::string kind() const;
  Shape element_shape() const;
};

/// Replaces every perturbed layer by the concrete displaced model.
SyntheticModel resolve(const SyntheticModel& model);

/// n i.i.d. draws; element i depends only on (model, seed, i).
SampleSet sample(const SyntheticModel& model, std::int64_t n, std::uint64_t seed);

/// As sample(), with the shape-kind label of each draw (shapes models only).
LabeledSampleSet sample_labeled(const SyntheticModel& model, std::int64_t n, std::uint64_t seed);

/// Uniform without-replacement subset of size n.
SampleSet subset(const SampleSet& set, std::int64_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Files

inline constexpr std::uint32_t kNndsVersion = 1;

/// NNDS: "NNDS", u32 version, u32 rank, u32 dims (first = N), f32 LE payload.
void write_nnds(const std::filesystem::path& path, const Shape& full_shape, std::span<const float> values);
void save_nnds(const std::filesystem::path& path, const SampleSet& set);
SampleSet load_nnds(const std::filesystem::path& path);

struct IdxData {
  SampleSet images;
  std::optional<std::vector<std::uint8_t>> labels;
};

/// IDX u8 images (magic 0x00000803) scaled by x/127.5 - 1 to shape [N, rows, cols, 1],
/// with optional labels (magic 0x00000801).
IdxData load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {});

}  // namespace nnd
