#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "nnd/error.hpp"
#include "nnd/experiments.hpp"
#include "nnd/hash.hpp"
#include "nnd/rng.hpp"

namespace nnd {

namespace {

using nlohmann::json;

// Seed tags of the per-seed sample sets.
constexpr std::uint64_t kTrainTag = 0x7121;
constexpr std::uint64_t kTestTag = 0x7E57;
constexpr std::uint64_t kTestSmallTag = 0x7E5A;
constexpr std::uint64_t kTest2Tag = 0x7E52;
constexpr std::uint64_t kTrainSubsetTag = 0x5B5E;
constexpr std::uint64_t kMemorizerTag = 0x3E30;
constexpr std::uint64_t kMemorizerSampleTag = 0x3E35;
constexpr std::uint64_t kCandidateTag = 0xCA4D;
constexpr std::uint64_t kCurvePerturbTag = 0xC0A7;
constexpr std::uint64_t kCurveSampleTag = 0xC05A;

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::int64_t parse_index(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw UsageError("bad " + what + " in sample-set name: \"" + text + "\"");
  return v;
}

void hash_extractor(Sha256& h, const FeatureExtractor& e) {
  h.update(to_string(e.kind));
  if (e.kind == ExtractorKind::identity) return;
  h.update(json(e.net.spec).dump());
  h.update_u64(static_cast<std::uint64_t>(e.net.outputs));
  for (const auto& t : e.net.tensors) {
    h.update(t.name);
    const auto& shape = t.value.shape();
    h.update_u64(shape.size());
    for (auto d : shape) h.update_u64(static_cast<std::uint64_t>(d));
    h.update_floats(t.value.values());
  }
}

std::string kind_name(MetricSpec::Kind k) {
  switch (k) {
    case MetricSpec::Kind::fid:
      return "fid";
    case MetricSpec::Kind::is:
      return "is";
    case MetricSpec::Kind::critic:
      break;
  }
  return "critic";
}

// --- jobs --------------------------------------------------------------------

/// Runs `count` independent jobs on up to `threads` workers. The first
/// exception (by job index) is rethrown after all workers have stopped.
void run_parallel(std::size_t count, int threads, const std::function<void(std::size_t)>& job) {
  if (count == 0) return;
  auto workers = threads > 0 ? static_cast<std::size_t>(threads)
                             : static_cast<std::size_t>(std::max(1U, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < count && !failed; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// A pending measurement: which metric on which two prepared sets.
struct Measurement {
  const MetricSpec* metric;
  std::string condition;
  std::string real_name;
  std::string model_name;
  const SampleSet* real;
  const SampleSet* model;
  std::uint64_t data_seed;
  std::uint64_t seed;
};

/// Evaluates the batch concurrently and appends rows (and critic reports) to
/// `out` in batch order, so results do not depend on the thread count.
std::vector<double> measure(const std::vector<Measurement>& batch, ExperimentResult& out, const RunOptions& opts) {
  std::vector<MetricValue> values(batch.size());
  std::mutex log_mutex;
  run_parallel(batch.size(), opts.threads, [&](std::size_t i) {
    const auto& m = batch[i];
    values[i] = evaluate_metric(*m.metric, *m.real, *m.model, m.seed);
    if (opts.log) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6g", values[i].value);
      std::lock_guard lock(log_mutex);
      opts.log(m.metric->name + " " + m.condition + " data_seed=" + std::to_string(m.data_seed) +
               " seed=" + std::to_string(m.seed) + ": " + buf);
    }
  });
  std::vector<double> result;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& m = batch[i];
    out.rows.push_back({m.metric->name, m.condition, m.real_name, m.model_name, m.data_seed, m.seed, values[i].value,
                        m.metric->config_hash(m.seed), m.real->fingerprint(), m.model->fingerprint()});
    if (values[i].report) out.reports.push_back(std::move(*values[i].report));
    result.push_back(values[i].value);
  }
  return result;
}

Measurement make(const MetricSpec& metric, std::string condition, ExperimentData& data, const std::string& real,
                 const std::string& model, std::uint64_t seed) {
  return {&metric, std::move(condition), real, model, &data.set(real), &data.set(model), data.seed(), seed};
}

/// Position of checkpoint t along the schedule, in [0, 1].
double schedule_fraction(const CurveSchedule& c, std::int64_t t) {
  return c.checkpoints == 1 ? 1.0 : static_cast<double>(t) / static_cast<double>(c.checkpoints - 1);
}

// Exact at both ends, unlike start + (end − start)·f.
double lerp(double start, double end, double f) { return (1.0 - f) * start + f * end; }

std::vector<ExperimentData> data_for_seeds(const ExperimentConfig& cfg) {
  std::vector<ExperimentData> data;
  data.reserve(cfg.seeds.size());
  for (auto s : cfg.seeds) data.emplace_back(cfg, s);
  return data;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_metrics(const ExperimentConfig& cfg) {
  if (cfg.metrics.empty()) throw ConfigError("experiment config defines no metrics");
}

void require_candidates(const ExperimentConfig& cfg, std::size_t at_least) {
  if (cfg.candidates.size() < at_least) {
    throw ConfigError("experiment needs at least " + std::to_string(at_least) + " candidate model(s), got " +
                      std::to_string(cfg.candidates.size()));
  }
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// First grid point whose mean beats `model_mean`; `mean_at` is called for
/// grid points in order and never past the crossing.
NToWin scan(const std::vector<std::int64_t>& grid, double model_mean,
            const std::function<double(std::int64_t)>& mean_at) {
  NToWin r;
  r.model_mean = model_mean;
  for (auto n : grid) {
    r.memorizer_means.push_back(mean_at(n));
    if (r.memorizer_means.back() < model_mean) {
      r.n = n;
      break;
    }
  }
  return r;
}

json n_to_win_json(const NToWin& r, const std::vector<std::int64_t>& grid) {
  json j{{"model_mean", r.model_mean}, {"memorizer_means", r.memorizer_means}};
  if (r.found()) {
    j["n"] = r.n;
  } else {
    j["n"] = nullptr;
    j["n_label"] = "> " + std::to_string(grid.empty() ? 0 : grid.back());
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// MetricSpec

MetricSpec MetricSpec::cnn(std::string name, CriticSpec critic, TrainSpec train) {
  critic.validate();
  train.validate();
  MetricSpec m;
  m.kind = Kind::critic;
  m.name = std::move(name);
  m.critic = std::move(critic);
  m.train = train;
  return m;
}

MetricSpec MetricSpec::fid(std::string name, FeatureExtractor extractor, std::string ref) {
  MetricSpec m;
  m.kind = Kind::fid;
  m.name = std::move(name);
  m.extractor = std::move(extractor);
  m.extractor_ref = std::move(ref);
  return m;
}

MetricSpec MetricSpec::inception(std::string name, FeatureExtractor classifier, std::string ref, IsVariant variant) {
  classifier.classes();
  MetricSpec m;
  m.kind = Kind::is;
  m.name = std::move(name);
  m.extractor = std::move(classifier);
  m.extractor_ref = std::move(ref);
  m.is_variant = variant;
  return m;
}

std::string MetricSpec::config_hash(std::uint64_t seed) const {
  if (kind == Kind::critic) {
    TrainSpec t = train;
    t.seed = seed;
    return nnd::config_hash(critic, t, Objective{});
  }
  Sha256 h;
  h.update("nnd-metric");
  h.update_u64(static_cast<std::uint64_t>(kExperimentFormatVersion));
  h.update(kind_name(kind));
  if (kind == Kind::is) h.update(to_string(is_variant));
  hash_extractor(h, extractor);
  return h.hex_digest();
}

MetricValue evaluate_metric(const MetricSpec& metric, const SampleSet& real, const SampleSet& model,
                            std::uint64_t seed) {
  switch (metric.kind) {
    case MetricSpec::Kind::critic: {
      TrainSpec t = metric.train;
      t.seed = seed;
      auto report = estimate_nnd(real, model, metric.critic, t);
      const double v = report.value;
      return {v, std::move(report)};
    }
    case MetricSpec::Kind::fid:
      return {frechet_distance(moments(extract_features(metric.extractor, real)),
                               moments(extract_features(metric.extractor, model))),
              std::nullopt};
    case MetricSpec::Kind::is:
      return {is_divergence(inception_style_score(classify(metric.extractor, real), metric.is_variant),
                            inception_style_score(classify(metric.extractor, model), metric.is_variant)),
              std::nullopt};
  }
  throw UsageError("unknown metric kind");
}

// ---------------------------------------------------------------------------
// ExperimentData

ExperimentData::ExperimentData(const ExperimentConfig& cfg, std::uint64_t seed) : cfg_(&cfg), seed_(seed) {}

SyntheticModel ExperimentData::curve_model(std::int64_t t) {
  const auto& c = cfg_->curves;
  if (t < 0 || t >= c.checkpoints) {
    throw UsageError("checkpoint " + std::to_string(t) + " outside [0, " + std::to_string(c.checkpoints) + ")");
  }
  const double frac = schedule_fraction(c, t);
  const double sigma = lerp(c.sigma_start, c.sigma_end, frac);
  const double w = c.memorize_final * frac;
  // One perturbation direction for the whole run: only its scale shrinks.
  auto q = SyntheticModel::perturbed(cfg_->p, sigma, derive_seed(seed_, kCurvePerturbTag));
  if (w <= 0.0) return q;
  return SyntheticModel::mixture({std::move(q), SyntheticModel::empirical(set("train"))}, {1.0 - w, w});
}

const SampleSet& ExperimentData::set(const std::string& name) {
  if (auto it = cache_.find(name); it != cache_.end()) return it->second;
  const auto& cfg = *cfg_;
  auto build = [&]() -> SampleSet {
    if (name == "train") return sample(cfg.p, cfg.train_size, derive_seed(seed_, kTrainTag));
    if (name == "test") return sample(cfg.p, cfg.test_large, derive_seed(seed_, kTestTag));
    if (name == "test_small") return sample(cfg.p, cfg.test_small, derive_seed(seed_, kTestSmallTag));
    if (name == "test2") return sample(cfg.p, cfg.test_large, derive_seed(seed_, kTest2Tag));
    if (name == "memorizer") {
      return sample(SyntheticModel::empirical(set("train")), cfg.model_samples, derive_seed(seed_, kMemorizerSampleTag));
    }
    if (name == "train_subset") {
      const auto n = cfg.curves.train_subset == 0 ? cfg.train_size : cfg.curves.train_subset;
      return subset(set("train"), n, derive_seed(seed_, kTrainSubsetTag));
    }
    if (starts_with(name, "memorizer_n:")) {
      // One shuffle per seed: smaller memorizers are prefixes of larger ones.
      const auto n = parse_index(name.substr(12), "memorizer size");
      const auto memorized = subset(set("train"), n, derive_seed(seed_, kMemorizerTag));
      return sample(SyntheticModel::empirical(memorized), cfg.model_samples,
                    derive_seed(derive_seed(seed_, kMemorizerSampleTag), static_cast<std::uint64_t>(n)));
    }
    if (starts_with(name, "q:")) {
      const auto key = name.substr(2);
      for (std::size_t i = 0; i < cfg.candidates.size(); ++i) {
        if (cfg.candidates[i].name == key) {
          return sample(cfg.candidates[i].model, cfg.model_samples,
                        derive_seed(derive_seed(seed_, kCandidateTag), static_cast<std::uint64_t>(i)));
        }
      }
      throw UsageError("no candidate model named \"" + key + "\"");
    }
    if (starts_with(name, "curve:")) {
      const auto t = parse_index(name.substr(6), "checkpoint");
      return sample(curve_model(t), cfg.model_samples,
                    derive_seed(derive_seed(seed_, kCurveSampleTag), static_cast<std::uint64_t>(t)));
    }
    throw UsageError("unknown sample-set name \"" + name + "\"");
  };
  auto s = build();
  return cache_.emplace(name, std::move(s)).first->second;
}

double rerun_row(const ExperimentConfig& cfg, const ResultRow& row) {
  const MetricSpec* metric = nullptr;
  for (const auto& m : cfg.metrics) {
    if (m.name == row.metric && m.config_hash(row.seed) == row.config_hash) metric = &m;
  }
  if (!metric) throw UsageError("no metric in the config matches row hash " + row.config_hash);
  ExperimentData data(cfg, row.data_seed);
  const auto& real = data.set(row.real);
  const auto& model = data.set(row.model);
  if (real.fingerprint() != row.real_fingerprint || model.fingerprint() != row.model_fingerprint) {
    throw UsageError("regenerated sample sets do not match the row's fingerprints");
  }
  return evaluate_metric(*metric, real, model, row.seed).value;
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentResult run_memorization_table(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_metrics(cfg);
  require_candidates(cfg, 1);
  ExperimentResult out;
  out.experiment = "memorization";
  auto data = data_for_seeds(cfg);
  std::vector<Measurement> batch;
  for (auto& d : data) {
    for (const auto& m : cfg.metrics) {
      for (const auto& c : cfg.candidates) {
        batch.push_back(make(m, "train_vs_" + c.name, d, "train", "q:" + c.name, d.seed()));
        batch.push_back(make(m, "test_vs_" + c.name, d, "test", "q:" + c.name, d.seed()));
      }
      batch.push_back(make(m, "train_vs_memorizer", d, "train", "memorizer", d.seed()));
      batch.push_back(make(m, "test_vs_memorizer", d, "test", "memorizer", d.seed()));
    }
  }
  measure(batch, out, opts);

  auto value_of = [&](const std::string& metric, const std::string& condition, std::uint64_t s) {
    for (const auto& r : out.rows) {
      if (r.metric == metric && r.condition == condition && r.data_seed == s) return r.value;
    }
    throw UsageError("missing row " + metric + "/" + condition);
  };
  json table = json::object();
  for (const auto& m : cfg.metrics) {
    json jm = json::object();
    std::vector<std::string> conditions;
    for (const auto& c : cfg.candidates) {
      conditions.push_back("train_vs_" + c.name);
      conditions.push_back("test_vs_" + c.name);
    }
    conditions.push_back("train_vs_memorizer");
    conditions.push_back("test_vs_memorizer");
    for (const auto& cond : conditions) {
      std::vector<double> v;
      for (auto s : cfg.seeds) v.push_back(value_of(m.name, cond, s));
      jm[cond] = {{"mean", mean(v)}, {"per_seed", v}};
    }
    for (const auto& c : cfg.candidates) {
      std::int64_t wins = 0;
      std::vector<double> dq;
      std::vector<double> dm;
      for (auto s : cfg.seeds) {
        dq.push_back(value_of(m.name, "test_vs_" + c.name, s));
        dm.push_back(value_of(m.name, "test_vs_memorizer", s));
        if (outperforms_memorization(dq.back(), dm.back())) ++wins;
      }
      const bool verdict = outperforms_memorization(mean(dq), mean(dm));
      jm["verdict_" + c.name] = {{"outperforms_memorization", verdict},
                                 {"seeds_outperforming", wins},
                                 {"seeds", cfg.seeds.size()}};
      out.verdicts.push_back(m.name + " [" + c.name + "]: model outperforms memorization: " +
                             (verdict ? "true" : "false") + " (" + std::to_string(wins) + "/" +
                             std::to_string(cfg.seeds.size()) + " seeds)");
    }
    table[m.name] = jm;
  }
  out.summary = {{"table", table}};
  return out;
}

NToWin scan_n_to_win(const std::vector<std::int64_t>& grid, const std::vector<std::uint64_t>& seeds,
                     const std::function<double(std::int64_t, std::uint64_t)>& memorizer,
                     const std::function<double(std::uint64_t)>& model) {
  if (seeds.empty()) throw ConfigError("n-to-win needs at least one seed");
  std::vector<double> mv;
  for (auto s : seeds) mv.push_back(model(s));
  return scan(grid, mean(mv), [&](std::int64_t n) {
    std::vector<double> v;
    for (auto s : seeds) v.push_back(memorizer(n, s));
    return mean(v);
  });
}

ExperimentResult run_n_to_win(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_metrics(cfg);
  require_candidates(cfg, 1);
  if (cfg.n_grid.empty()) throw ConfigError("n-to-win needs a non-empty n_grid");
  ExperimentResult out;
  out.experiment = "n-to-win";
  auto data = data_for_seeds(cfg);
  const auto q = "q:" + cfg.candidates.front().name;
  json per_metric = json::object();
  for (const auto& m : cfg.metrics) {
    std::vector<Measurement> batch;
    for (auto& d : data) batch.push_back(make(m, "test_vs_" + cfg.candidates.front().name, d, "test", q, d.seed()));
    const double model_mean = mean(measure(batch, out, opts));
    // Seeds of one grid point run concurrently; the scan stops at the crossing.
    const auto r = scan(cfg.n_grid, model_mean, [&](std::int64_t n) {
      std::vector<Measurement> b;
      const auto name = "memorizer_n:" + std::to_string(n);
      for (auto& d : data) b.push_back(make(m, "test_vs_memorizer_n=" + std::to_string(n), d, "test", name, d.seed()));
      return mean(measure(b, out, opts));
    });
    per_metric[m.name] = n_to_win_json(r, cfg.n_grid);
    out.verdicts.push_back(m.name + ": n-to-win = " +
                           (r.found() ? std::to_string(r.n) : "> " + std::to_string(cfg.n_grid.back())));
  }
  out.summary = {{"candidate", cfg.candidates.front().name}, {"n_grid", cfg.n_grid}, {"n_to_win", per_metric}};
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("spearman: lists differ in length");
  if (a.size() < 2) throw ConfigError("spearman: need at least 2 paired values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double ma = mean(ra);
  const double mb = mean(rb);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DataError("spearman: a list is constant, correlation undefined");
  return sab / std::sqrt(saa * sbb);
}

ExperimentResult run_test_set_bias(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_metrics(cfg);
  require_candidates(cfg, 2);
  ExperimentResult out;
  out.experiment = "bias";
  auto data = data_for_seeds(cfg);
  std::vector<Measurement> batch;
  for (const auto& m : cfg.metrics) {
    for (const auto& c : cfg.candidates) {
      for (auto& d : data) {
        batch.push_back(make(m, "test_small_vs_" + c.name, d, "test_small", "q:" + c.name, d.seed()));
        batch.push_back(make(m, "test_large_vs_" + c.name, d, "test", "q:" + c.name, d.seed()));
      }
    }
  }
  const auto values = measure(batch, out, opts);
  json per_metric = json::object();
  std::size_t k = 0;
  for (const auto& m : cfg.metrics) {
    std::vector<double> small;
    std::vector<double> large;
    json scatter = json::array();
    for (const auto& c : cfg.candidates) {
      std::vector<double> s;
      std::vector<double> l;
      for (std::size_t i = 0; i < data.size(); ++i) {
        s.push_back(values[k++]);
        l.push_back(values[k++]);
      }
      small.push_back(mean(s));
      large.push_back(mean(l));
      scatter.push_back({{"candidate", c.name}, {"test_small", small.back()}, {"test_large", large.back()}});
    }
    const double rho = spearman(small, large);
    per_metric[m.name] = {{"spearman", rho}, {"scatter", scatter}};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", rho);
    out.verdicts.push_back(m.name + ": spearman(test_small, test_large) = " + buf + " over " +
                           std::to_string(cfg.candidates.size()) + " models");
  }
  out.summary = {{"test_small", cfg.test_small}, {"test_large", cfg.test_large}, {"metrics", per_metric}};
  return out;
}

ExperimentResult run_training_curves(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_metrics(cfg);
  ExperimentResult out;
  out.experiment = "curves";
  auto data = data_for_seeds(cfg);
  const std::vector<std::string> refs{"test", "test2", "train_subset"};
  std::vector<Measurement> batch;
  for (const auto& m : cfg.metrics) {
    for (std::int64_t t = 0; t < cfg.curves.checkpoints; ++t) {
      const auto q = "curve:" + std::to_string(t);
      for (auto& d : data) {
        for (const auto& r : refs) batch.push_back(make(m, r + "_vs_checkpoint=" + std::to_string(t), d, r, q, d.seed()));
      }
    }
  }
  const auto values = measure(batch, out, opts);
  json per_metric = json::object();
  std::size_t k = 0;
  for (const auto& m : cfg.metrics) {
    json curves = json::object();
    std::vector<std::vector<double>> means(refs.size());
    for (std::int64_t t = 0; t < cfg.curves.checkpoints; ++t) {
      std::vector<std::vector<double>> v(refs.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t r = 0; r < refs.size(); ++r) v[r].push_back(values[k++]);
      }
      for (std::size_t r = 0; r < refs.size(); ++r) means[r].push_back(mean(v[r]));
    }
    for (std::size_t r = 0; r < refs.size(); ++r) curves[refs[r]] = means[r];
    const double gap = means[0].back() - means[2].back();
    per_metric[m.name] = {{"curves", curves}, {"final_overfit_gap", gap}};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", gap);
    out.verdicts.push_back(m.name + ": final D(test) - D(train_subset) = " + buf);
  }
  std::vector<double> sigma;
  std::vector<double> weight;
  for (std::int64_t t = 0; t < cfg.curves.checkpoints; ++t) {
    const double frac = schedule_fraction(cfg.curves, t);
    sigma.push_back(lerp(cfg.curves.sigma_start, cfg.curves.sigma_end, frac));
    weight.push_back(cfg.curves.memorize_final * frac);
  }
  out.summary = {{"sigma", sigma}, {"memorize_weight", weight}, {"metrics", per_metric}};
  return out;
}

VarianceStats variance_stats(const std::vector<double>& values) {
  if (values.size() < 2) throw ConfigError("variance needs at least 2 values");
  VarianceStats s;
  s.mean = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  s.cv = s.stddev == 0.0 ? 0.0 : s.stddev / std::abs(s.mean);
  return s;
}

ExperimentResult run_variance(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_metrics(cfg);
  require_candidates(cfg, 1);
  if (cfg.repetitions < 2) throw ConfigError("variance needs repetitions >= 2");
  ExperimentResult out;
  out.experiment = "variance";
  ExperimentData d(cfg, cfg.seeds.front());
  const auto& c = cfg.candidates.front();
  std::vector<Measurement> batch;
  for (const auto& m : cfg.metrics) {
    for (std::int64_t r = 0; r < cfg.repetitions; ++r) {
      batch.push_back(make(m, "test_vs_" + c.name, d, "test", "q:" + c.name, static_cast<std::uint64_t>(r)));
    }
  }
  const auto values = measure(batch, out, opts);
  json per_metric = json::object();
  for (std::size_t i = 0; i < cfg.metrics.size(); ++i) {
    const auto first = values.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(cfg.repetitions));
    const auto st = variance_stats({first, first + cfg.repetitions});
    per_metric[cfg.metrics[i].name] = {{"mean", st.mean}, {"stddev", st.stddev}, {"cv", st.cv}};
    char buf[128];
    std::snprintf(buf, sizeof buf, "mean %.6g, stddev %.3g, cv %.2f%%", st.mean, st.stddev, 100.0 * st.cv);
    out.verdicts.push_back(cfg.metrics[i].name + ": " + buf);
  }
  out.summary = {{"candidate", c.name}, {"repetitions", cfg.repetitions}, {"metrics", per_metric}};
  return out;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"memorization", "n-to-win", "bias", "curves", "variance"};
  return names;
}

ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& cfg, const RunOptions& opts) {
  if (name == "memorization") return run_memorization_table(cfg, opts);
  if (name == "n-to-win") return run_n_to_win(cfg, opts);
  if (name == "bias") return run_test_set_bias(cfg, opts);
  if (name == "curves") return run_training_curves(cfg, opts);
  if (name == "variance") return run_variance(cfg, opts);
  std::string list;
  for (const auto& n : experiment_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown experiment \"" + name + "\"; valid names: " + list);
}

}  // namespace nnd
