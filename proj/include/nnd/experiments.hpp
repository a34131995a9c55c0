#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nnd/baselines.hpp"
#include "nnd/data.hpp"
#include "nnd/divergence.hpp"

namespace nnd {

inline constexpr std::int32_t kExperimentFormatVersion = 1;

// ---------------------------------------------------------------------------
// Metrics

/// One divergence used by an experiment. Every metric is oriented so that
/// lower is better (closer to the real sample).
struct MetricSpec {
  enum class Kind { critic, fid, is };
  Kind kind = Kind::critic;
  std::string name;

  // critic
  CriticSpec critic;
  TrainSpec train;

  // fid / is
  FeatureExtractor extractor;
  std::string extractor_ref;  // checkpoint path or "identity"; recorded for provenance
  IsVariant is_variant = IsVariant::kl_mean;

  static MetricSpec cnn(std::string name, CriticSpec critic, TrainSpec train);
  static MetricSpec fid(std::string name, FeatureExtractor extractor, std::string ref);
  static MetricSpec inception(std::string name, FeatureExtractor classifier, std::string ref, IsVariant variant);

  /// Hash of the configuration that produced a value with training seed
  /// `seed` (the seed only matters for critic metrics).
  std::string config_hash(std::uint64_t seed) const;
};

struct MetricValue {
  double value = 0.0;
  std::optional<DivergenceReport> report;  // critic metrics only
};

/// Evaluates a metric between a real-side and a model-side sample. Critic
/// metrics train with train.seed replaced by `seed`.
MetricValue evaluate_metric(const MetricSpec& metric, const SampleSet& real, const SampleSet& model,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Configuration

struct NamedModel {
  std::string name;
  SyntheticModel model;
};

/// Stand-in for GAN checkpoints: q_t = (1 − w_t)·perturbed(p, σ_t) + w_t·empirical(train),
/// with σ_t linear from sigma_start to sigma_end and w_t linear from 0 to
/// memorize_final over `checkpoints` steps.
struct CurveSchedule {
  std::int64_t checkpoints = 5;
  double sigma_start = 0.3;
  double sigma_end = 0.02;
  double memorize_final = 0.5;
  std::int64_t train_subset = 0;  // 0: all of train
};

struct ExperimentConfig {
  std::string experiment;
  SyntheticModel p;
  std::vector<NamedModel> candidates;
  std::int64_t train_size = 512;
  std::int64_t test_small = 512;
  std::int64_t test_large = 8192;
  std::int64_t model_samples = 8192;
  std::vector<MetricSpec> metrics;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::int64_t> n_grid;
  CurveSchedule curves;
  std::int64_t repetitions = 5;

  void validate() const;
};

/// Strict JSON config. Relative checkpoint paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Synthetic model JSON: {"kind": "shapes_image" | "gaussian_mixture" |
/// "perturbed" | "mixture" | "empirical", ...}. Empirical models name an
/// NNDS file ("path").
SyntheticModel synthetic_model_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json synthetic_model_to_json(const SyntheticModel& m);

// ---------------------------------------------------------------------------
// Results

/// One measurement. `real` and `model` name how the two sides were built
/// (see ExperimentData::set), so a row can be regenerated from the config.
struct ResultRow {
  std::string metric;
  std::string condition;
  std::string real;
  std::string model;
  std::uint64_t data_seed = 0;  // experiment seed the sample sets were drawn with
  std::uint64_t seed = 0;       // metric (critic training) seed
  double value = 0.0;
  std::string config_hash;
  std::string real_fingerprint;
  std::string model_fingerprint;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<ResultRow> rows;
  nlohmann::json summary;
  std::vector<DivergenceReport> reports;
  std::vector<std::string> verdicts;  // human-readable lines
};

void write_csv(const std::filesystem::path& path, const ExperimentResult& result);
nlohmann::json result_to_json(const ExperimentResult& result, bool with_wall_time = true);
void write_bundle(const std::filesystem::path& dir, const ExperimentResult& result, bool with_wall_time = true);

// ---------------------------------------------------------------------------
// Sample sets of one seed

/// Lazily built, deterministic sample sets of one experiment seed. Not
/// thread-safe: build every set a job needs before dispatching it. Names:
///   "train", "test", "test_small", "test2",
///   "train_subset",       a random curves.train_subset-point subset of train
///   "memorizer",          model_samples draws from the empirical distribution of train
///   "memorizer_n:<n>",    model_samples draws from a random n-point subset of train;
///                         the subsets are nested in n
///   "q:<candidate>",      model_samples draws of a candidate
///   "curve:<t>",          model_samples draws of checkpoint t
class ExperimentData {
 public:
  ExperimentData(const ExperimentConfig& cfg, std::uint64_t seed);
  const SampleSet& set(const std::string& name);
  std::uint64_t seed() const { return seed_; }
  SyntheticModel curve_model(std::int64_t t);

 private:
  const ExperimentConfig* cfg_;
  std::uint64_t seed_;
  std::map<std::string, SampleSet> cache_;  // node-stable: references stay valid
};

/// Recomputes one row from the config: rebuilds both sample sets, finds the
/// metric whose hash matches, and re-evaluates. UsageError when no metric
/// matches or the fingerprints differ from the row.
double rerun_row(const ExperimentConfig& cfg, const ResultRow& row);

// ---------------------------------------------------------------------------
// Experiments

struct RunOptions {
  /// Worker threads for independent metric runs (0 = hardware concurrency).
  int threads = 0;
  std::function<void(const std::string&)> log;
};

/// (train, q), (test, q), (train, memorizer), (test, memorizer) for every
/// metric and candidate, plus outperforms-memorization verdicts.
ExperimentResult run_memorization_table(const ExperimentConfig& cfg, const RunOptions& opts = {});

inline constexpr std::int64_t kNToWinSentinel = std::numeric_limits<std::int64_t>::max();

struct NToWin {
  std::int64_t n = kNToWinSentinel;  // grid point or kNToWinSentinel ("> max n")
  std::vector<double> memorizer_means;  // per grid point, averaged over seeds
  double model_mean = 0.0;
  bool found() const { return n != kNToWinSentinel; }
};

/// Scan of a grid with a seed-averaged metric: the first n whose memorizer
/// score beats the model's, or the sentinel. `memorizer(n, seed)` and
/// `model(seed)` return divergences (lower is better).
NToWin scan_n_to_win(const std::vector<std::int64_t>& grid, const std::vector<std::uint64_t>& seeds,
                     const std::function<double(std::int64_t, std::uint64_t)>& memorizer,
                     const std::function<double(std::uint64_t)>& model);

/// n-to-win of the first candidate for every metric.
ExperimentResult run_n_to_win(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Spearman ρ with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// D(test_small, q) against D(test_large, q) over all candidates, per metric.
ExperimentResult run_test_set_bias(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// D(test, q_t), D(test2, q_t) and D(train_subset, q_t) along the schedule.
ExperimentResult run_training_curves(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct VarianceStats {
  double mean = 0.0;
  double stddev = 0.0;  // N − 1 denominator
  double cv = 0.0;      // stddev / |mean|
};

VarianceStats variance_stats(const std::vector<double>& values);

/// `repetitions` estimates of D(test, first candidate) with training seeds
/// 0..repetitions−1 on the sample sets of the first experiment seed.
ExperimentResult run_variance(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Names accepted by run_experiment.
const std::vector<std::string>& experiment_names();
ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace nnd
