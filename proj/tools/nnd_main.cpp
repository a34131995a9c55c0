// Command-line front end: metric commands (nnd, fid, is), experiment suites,
// and helpers to produce sample files and extractor checkpoints.
//
// Exit codes: 0 ok, 1 internal/usage failure, 2 configuration error,
// 3 data error (missing or malformed files), 4 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "common/json_strict.hpp"
#include "nnd/baselines.hpp"
#include "nnd/divergence.hpp"
#include "nnd/error.hpp"
#include "nnd/experiments.hpp"
#include "nnd/rng.hpp"

namespace {

using namespace nnd;
using nlohmann::json;

constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr std::int32_t kCliFormatVersion = 1;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

void print_value(double v) { std::printf("%.6g\n", v); }

void check_format_version(json_strict::Object& obj, const std::string& what) {
  const auto v = obj.required<std::int32_t>("format_version");
  if (v != kCliFormatVersion) {
    throw ConfigError(what + ": unsupported format_version " + std::to_string(v) + " (expected " +
                      std::to_string(kCliFormatVersion) + ")");
  }
}

Shape parse_shape(const std::string& text) {
  Shape s;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      s.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw ConfigError("bad shape \"" + text + "\"; expected e.g. 8,8,1");
    }
  }
  if (s.empty()) throw ConfigError("empty shape");
  return s;
}

FeatureExtractor extractor_arg(const std::string& ref, const Shape& element_shape) {
  if (ref == "identity") return identity_extractor();
  return load_extractor(ref, element_shape);
}

json moments_summary(const GaussianMoments& m) {
  return {{"dim", m.mu.size()}, {"mean_norm_sq", m.mu.squaredNorm()}, {"trace_cov", m.sigma.trace()}};
}

// --- metric config ----------------------------------------------------------

struct MetricConfig {
  CriticSpec critic;
  TrainSpec train;
  Objective objective;
};

/// {"format_version": 1, "critic": {...}, "train": {...}, "objective": {...}}.
/// The training seed comes only from --seed.
MetricConfig load_metric_config(const std::string& path) {
  const auto j = read_json(path);
  json_strict::Object obj(j, path);
  check_format_version(obj, path);
  MetricConfig c;
  c.critic = obj.optional<CriticSpec>("critic").value_or(CriticSpec{});
  if (const json* t = obj.child("train")) {
    if (t->is_object() && t->contains("seed")) {
      throw ConfigError(path + ": train.seed is not allowed; pass --seed");
    }
    c.train = t->get<TrainSpec>();
  }
  c.objective = obj.optional<Objective>("objective").value_or(Objective{});
  obj.finish();
  c.critic.validate();
  return c;
}

// --- commands ----------------------------------------------------------------

struct Common {
  std::string real;
  std::string model;
  std::string out;
  std::uint64_t seed = 0;
  bool omit_wall_time = false;
  bool verbose = false;
};

int cmd_nnd(const Common& o, const std::string& config_path) {
  auto cfg = load_metric_config(config_path);
  const auto real = load_nnds(o.real);
  const auto model = load_nnds(o.model);
  if (real.element_shape() != cfg.critic.input_shape) {
    throw ShapeError("critic input_shape " + shape_string(cfg.critic.input_shape) + " does not match " + o.real +
                     " elements " + shape_string(real.element_shape()));
  }
  cfg.train.seed = o.seed;
  EstimateOptions opts;
  if (o.verbose) {
    opts.progress = [](std::int64_t it, double loss) { std::fprintf(stderr, "iteration %lld loss %.6g\n", (long long)it, loss); };
  }
  const auto report = estimate_nnd(real, model, cfg.critic, cfg.train, cfg.objective, opts);
  write_text(o.out, report_to_json(report, !o.omit_wall_time).dump(2) + "\n");
  print_value(report.value);
  return 0;
}

int cmd_fid(const Common& o, const std::string& extractor) {
  const auto real = load_nnds(o.real);
  const auto model = load_nnds(o.model);
  const auto ex = extractor_arg(extractor, real.element_shape());
  const auto mr = moments(extract_features(ex, real));
  const auto mm = moments(extract_features(ex, model));
  const double fid = frechet_distance(mr, mm);
  const json j{{"format_version", kCliFormatVersion},
               {"metric", "fid"},
               {"value", fid},
               {"extractor", extractor},
               {"extractor_kind", to_string(ex.kind)},
               {"real", {{"fingerprint", real.fingerprint()}, {"size", real.size()}, {"moments", moments_summary(mr)}}},
               {"model", {{"fingerprint", model.fingerprint()}, {"size", model.size()}, {"moments", moments_summary(mm)}}},
               {"mean_sq_diff", (mr.mu - mm.mu).squaredNorm()},
               {"trace_sqrt_product", sqrtm_product(mr.sigma, mm.sigma).trace()}};
  write_text(o.out, j.dump(2) + "\n");
  print_value(fid);
  return 0;
}

int cmd_is(const Common& o, const std::string& classifier, const std::string& variant_text) {
  const auto variant = parse_is_variant(variant_text);
  const auto real = load_nnds(o.real);
  const auto model = load_nnds(o.model);
  const auto clf = load_extractor(classifier, real.element_shape());
  const auto sr = inception_style_score(classify(clf, real), variant);
  const auto sm = inception_style_score(classify(clf, model), variant);
  const double d = is_divergence(sr, sm);
  auto score_json = [](const IsScore& s, const SampleSet& set) {
    return json{{"fingerprint", set.fingerprint()}, {"size", set.size()}, {"score", s.value}, {"split_scores", s.split_scores}};
  };
  const json j{{"format_version", kCliFormatVersion}, {"metric", "is"},
               {"variant", to_string(variant)},       {"value", d},
               {"classifier", classifier},            {"classes", clf.classes()},
               {"real", score_json(sr, real)},        {"model", score_json(sm, model)}};
  write_text(o.out, j.dump(2) + "\n");
  print_value(d);
  return 0;
}

int cmd_experiment(const std::string& name, const std::string& config_path, const std::string& out_dir,
                   std::uint64_t seed, int threads, bool omit_wall_time, bool verbose) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown experiment \"" + name + "\"; valid names: " + list);
  }
  auto cfg = load_experiment_config(config_path);
  // Config seeds are offsets from --seed, so the command line fixes all randomness.
  for (auto& s : cfg.seeds) s += seed;
  RunOptions opts;
  opts.threads = threads;
  if (verbose) opts.log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
  const auto result = run_experiment(name, cfg, opts);
  write_bundle(out_dir, result, !omit_wall_time);
  for (const auto& v : result.verdicts) std::printf("%s\n", v.c_str());
  return 0;
}

// Rows carry absolute seeds, so the config's seed list is not consulted.
int cmd_rerun(const std::string& config_path, const std::string& bundle_path, std::size_t row_index) {
  const auto cfg = load_experiment_config(config_path);
  const auto bundle = read_json(bundle_path);
  const auto& rows = bundle.at("rows");
  if (row_index >= rows.size()) {
    throw ConfigError("row " + std::to_string(row_index) + " out of range (bundle has " + std::to_string(rows.size()) +
                      " rows)");
  }
  const auto& r = rows[row_index];
  ResultRow row{r.at("metric"), r.at("condition"), r.at("real"), r.at("model"), r.at("data_seed"), r.at("seed"),
                r.at("value"), r.at("config_hash"), r.at("real_fingerprint"), r.at("model_fingerprint")};
  const double v = rerun_row(cfg, row);
  print_value(v);
  std::printf("bit-identical: %s\n", v == row.value ? "true" : "false");
  return v == row.value ? 0 : kExitInternal;
}

int cmd_sample(const std::string& model_path, std::int64_t n, std::uint64_t seed, const std::string& out,
               const std::string& labels_out) {
  const auto model = synthetic_model_from_json(read_json(model_path),
                                               std::filesystem::path(model_path).parent_path());
  if (labels_out.empty()) {
    save_nnds(out, sample(model, n, seed));
    return 0;
  }
  const auto labeled = sample_labeled(model, n, seed);
  save_nnds(out, labeled.samples);
  json j = labeled.labels;
  write_text(labels_out, j.dump() + "\n");
  return 0;
}

int cmd_make_extractor(const std::string& kind, const std::string& shape_text, const std::string& multiplier,
                       std::uint64_t seed, const std::string& out, const std::string& model_path,
                       std::int64_t samples, std::int64_t iterations) {
  CriticSpec trunk;
  trunk.input_shape = parse_shape(shape_text);
  trunk.channel_multiplier = Rational::parse(multiplier);
  trunk.validate();
  if (kind == "random") {
    save_extractor(out, random_cnn_extractor(trunk, seed));
    return 0;
  }
  if (kind != "classifier") throw ConfigError("extractor kind must be \"random\" or \"classifier\"");
  const auto model = model_path.empty() ? SyntheticModel::shapes({})
                                        : synthetic_model_from_json(read_json(model_path),
                                                                    std::filesystem::path(model_path).parent_path());
  if (model.element_shape() != trunk.input_shape) {
    throw ShapeError("model elements " + shape_string(model.element_shape()) + " do not match --input-shape");
  }
  const auto train = sample_labeled(model, samples, derive_seed(seed, 1));
  const auto held_out = sample_labeled(model, samples, derive_seed(seed, 2));
  ClassifierTraining ct;
  ct.iterations = iterations;
  ct.seed = seed;
  const auto clf = train_classifier(train, kShapeKinds, trunk, ct);
  save_extractor(out, clf);
  std::fprintf(stderr, "held-out accuracy %.4f\n", classifier_accuracy(clf, held_out));
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Neural-network divergences for sample-based evaluation of generative models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nnd format " + std::to_string(kCliFormatVersion));

  Common o;
  auto add_pair = [&](CLI::App* sub) {
    sub->add_option("--real", o.real, "Real-side samples (NNDS)")->required();
    sub->add_option("--model", o.model, "Model-side samples (NNDS)")->required();
    sub->add_option("--out", o.out, "Output JSON path")->required();
  };

  std::string config;
  auto* nnd_cmd = app.add_subcommand("nnd", "Train a critic and report the neural-network divergence");
  add_pair(nnd_cmd);
  nnd_cmd->add_option("--config", config, "Metric config JSON (critic, train, objective)")->required();
  nnd_cmd->add_option("--seed", o.seed, "Seed for all randomness")->required();
  nnd_cmd->add_flag("--omit-wall-time", o.omit_wall_time, "Leave wall time out of the report (byte-stable output)");
  nnd_cmd->add_flag("-v,--verbose", o.verbose, "Log the training loss to stderr");

  std::string extractor;
  auto* fid_cmd = app.add_subcommand("fid", "Frechet distance between feature moments");
  add_pair(fid_cmd);
  fid_cmd->add_option("--extractor", extractor, "Extractor checkpoint (NNDW) or \"identity\"")->required();

  std::string variant = "kl_mean";
  auto* is_cmd = app.add_subcommand("is", "Difference of Inception-style scores under a classifier");
  add_pair(is_cmd);
  is_cmd->add_option("--extractor", extractor, "Classifier checkpoint (NNDW)")->required();
  is_cmd->add_option("--variant", variant, "kl_mean or exponentiated");

  std::string name;
  std::string out_dir;
  int threads = 0;
  auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment suite and write CSV + JSON bundle");
  exp_cmd->add_option("name", name, "memorization, n-to-win, bias, curves or variance")->required();
  exp_cmd->add_option("--config", config, "Experiment config JSON")->required();
  exp_cmd->add_option("--out", out_dir, "Output directory")->required();
  exp_cmd->add_option("--seed", o.seed, "Base seed; config seeds are offsets from it")->required();
  exp_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
  exp_cmd->add_flag("--omit-wall-time", o.omit_wall_time, "Leave wall times out of the bundle");
  exp_cmd->add_flag("-v,--verbose", o.verbose, "Log every measurement to stderr");

  std::string bundle;
  std::size_t row = 0;
  auto* rerun_cmd = app.add_subcommand("rerun", "Recompute one stored result row from its config");
  rerun_cmd->add_option("--config", config, "Experiment config JSON the bundle was produced with")->required();
  rerun_cmd->add_option("--bundle", bundle, "bundle.json of the run")->required();
  rerun_cmd->add_option("--row", row, "Row index")->required();

  std::string model_json;
  std::string labels_out;
  std::int64_t n = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Draw samples of a synthetic model into an NNDS file");
  sample_cmd->add_option("--model", model_json, "Synthetic model JSON")->required();
  sample_cmd->add_option("-n,--count", n, "Number of samples")->required();
  sample_cmd->add_option("--seed", o.seed, "Sampling seed")->required();
  sample_cmd->add_option("--out", o.out, "Output NNDS path")->required();
  sample_cmd->add_option("--labels", labels_out, "Also write shape-kind labels (JSON array)");

  std::string kind;
  std::string shape = "8,8,1";
  std::string multiplier = "1/4";
  std::int64_t samples = 8192;
  std::int64_t iterations = 2000;
  auto* mx_cmd = app.add_subcommand("make-extractor", "Create a feature extractor checkpoint");
  mx_cmd->add_option("kind", kind, "random or classifier")->required();
  mx_cmd->add_option("--input-shape", shape, "Element shape H,W,C");
  mx_cmd->add_option("--multiplier", multiplier, "Channel multiplier of the CNN trunk");
  mx_cmd->add_option("--seed", o.seed, "Initialisation / training seed")->required();
  mx_cmd->add_option("--out", o.out, "Output NNDW path")->required();
  mx_cmd->add_option("--model", model_json, "Synthetic model for classifier training (default shapes_image)");
  mx_cmd->add_option("--samples", samples, "Classifier training samples");
  mx_cmd->add_option("--iterations", iterations, "Classifier training iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*nnd_cmd) return cmd_nnd(o, config);
  if (*fid_cmd) return cmd_fid(o, extractor);
  if (*is_cmd) return cmd_is(o, extractor, variant);
  if (*exp_cmd) return cmd_experiment(name, config, out_dir, o.seed, threads, o.omit_wall_time, o.verbose);
  if (*rerun_cmd) return cmd_rerun(config, bundle, row);
  if (*sample_cmd) return cmd_sample(model_json, n, o.seed, o.out, labels_out);
  return cmd_make_extractor(kind, shape, multiplier, o.seed, o.out, model_json, samples, iterations);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const nnd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const nnd::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const nnd::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  }
}
