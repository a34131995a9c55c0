#include <fstream>

#include "common/json_strict.hpp"
#include "nnd/error.hpp"
#include "nnd/experiments.hpp"
#include "nnd/hash.hpp"

namespace nnd {

namespace {

using nlohmann::json;

std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

std::pair<double, double> range_or(json_strict::Object& obj, const std::string& key, std::pair<double, double> dflt) {
  auto v = obj.optional<std::vector<double>>(key);
  if (!v) return dflt;
  if (v->size() != 2) throw ConfigError("model." + key + " must be [min, max]");
  return {(*v)[0], (*v)[1]};
}

ShapesImage shapes_from_json(json_strict::Object& obj) {
  ShapesImage s;
  if (auto v = obj.optional<std::int64_t>("height")) s.height = *v;
  if (auto v = obj.optional<std::int64_t>("width")) s.width = *v;
  if (auto v = obj.optional<std::int64_t>("channels")) s.channels = *v;
  if (auto v = obj.optional<std::vector<double>>("kind_weights")) {
    if (v->size() != static_cast<std::size_t>(kShapeKinds)) throw ConfigError("model.kind_weights needs 3 entries");
    std::copy(v->begin(), v->end(), s.kind_weights.begin());
  }
  std::tie(s.center_min, s.center_max) = range_or(obj, "center", {s.center_min, s.center_max});
  std::tie(s.size_min, s.size_max) = range_or(obj, "size", {s.size_min, s.size_max});
  std::tie(s.intensity_min, s.intensity_max) = range_or(obj, "intensity", {s.intensity_min, s.intensity_max});
  if (auto v = obj.optional<std::int32_t>("supersampling")) s.supersampling = *v;
  return s;
}

FeatureExtractor extractor_from_json(const json& j, const Shape& input_shape, const std::filesystem::path& base,
                                     std::string& ref) {
  if (j.is_string()) {
    ref = j.get<std::string>();
    if (ref == "identity") return identity_extractor();
    return load_extractor(resolve_path(ref, base), input_shape);
  }
  json_strict::Object obj(j, "extractor");
  const auto kind = obj.required<std::string>("kind");
  if (kind != "seeded_random_cnn") throw ConfigError("extractor.kind must be \"seeded_random_cnn\" (or give a path)");
  auto trunk = obj.required<CriticSpec>("trunk");
  const auto seed = obj.required<std::uint64_t>("seed");
  obj.finish();
  trunk.input_shape = input_shape;
  trunk.validate();
  ref = "seeded_random_cnn:" + std::to_string(seed);
  return random_cnn_extractor(trunk, seed);
}

MetricSpec metric_from_json(const json& j, const Shape& input_shape, const std::filesystem::path& base) {
  json_strict::Object obj(j, "metric");
  const auto kind = obj.required<std::string>("kind");
  const auto name = obj.required<std::string>("name");
  MetricSpec m;
  if (kind == "critic") {
    auto critic = obj.required<CriticSpec>("critic");
    auto train = obj.optional<TrainSpec>("train").value_or(TrainSpec{});
    if (critic.input_shape != input_shape) {
      throw ShapeError("metric " + name + ": critic input_shape " + shape_string(critic.input_shape) +
                       " does not match the data " + shape_string(input_shape));
    }
    m = MetricSpec::cnn(name, critic, train);
  } else if (kind == "fid") {
    const json* e = obj.child("extractor");
    if (!e) throw ConfigError("metric " + name + ": missing \"extractor\"");
    std::string ref;
    auto ex = extractor_from_json(*e, input_shape, base, ref);
    m = MetricSpec::fid(name, std::move(ex), ref);
  } else if (kind == "is") {
    const auto path = obj.required<std::string>("classifier");
    const auto variant = parse_is_variant(obj.optional<std::string>("variant").value_or("kl_mean"));
    auto clf = load_extractor(resolve_path(path, base), input_shape);
    clf.classes();  // must carry a classifier head
    m = MetricSpec::inception(name, std::move(clf), path, variant);
  } else {
    throw ConfigError("metric.kind must be \"critic\", \"fid\" or \"is\", got \"" + kind + "\"");
  }
  obj.finish();
  return m;
}

}  // namespace

SyntheticModel synthetic_model_from_json(const json& j, const std::filesystem::path& base) {
  json_strict::Object obj(j, "model");
  const auto kind = obj.required<std::string>("kind");
  SyntheticModel m;
  if (kind == "shapes_image") {
    m = SyntheticModel::shapes(shapes_from_json(obj));
  } else if (kind == "gaussian_mixture") {
    GaussianMixture g;
    g.weights = obj.required<std::vector<double>>("weights");
    g.means = obj.required<std::vector<std::vector<double>>>("means");
    g.stddevs = obj.required<std::vector<std::vector<double>>>("stddevs");
    m = SyntheticModel::gaussian(std::move(g));
  } else if (kind == "perturbed") {
    const json* b = obj.child("base");
    if (!b) throw ConfigError("model: perturbed needs \"base\"");
    m = SyntheticModel::perturbed(synthetic_model_from_json(*b, base), obj.required<double>("sigma"),
                                  obj.required<std::uint64_t>("seed"));
  } else if (kind == "mixture") {
    const json* cs = obj.child("components");
    if (!cs || !cs->is_array()) throw ConfigError("model: mixture needs a \"components\" array");
    std::vector<SyntheticModel> parts;
    for (const auto& c : *cs) parts.push_back(synthetic_model_from_json(c, base));
    m = SyntheticModel::mixture(std::move(parts), obj.required<std::vector<double>>("weights"));
  } else if (kind == "empirical") {
    m = SyntheticModel::empirical(load_nnds(resolve_path(obj.required<std::string>("path"), base)));
  } else {
    throw ConfigError("model.kind \"" + kind + "\" is not one of shapes_image, gaussian_mixture, perturbed, "
                      "mixture, empirical");
  }
  obj.finish();
  (void)resolve(m);  // surfaces invalid perturbation settings early
  return m;
}

json synthetic_model_to_json(const SyntheticModel& m) {
  return std::visit(
      [&](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShapesImage>) {
          return {{"kind", "shapes_image"},
                  {"height", p.height},
                  {"width", p.width},
                  {"channels", p.channels},
                  {"kind_weights", p.kind_weights},
                  {"center", {p.center_min, p.center_max}},
                  {"size", {p.size_min, p.size_max}},
                  {"intensity", {p.intensity_min, p.intensity_max}},
                  {"supersampling", p.supersampling}};
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          return {{"kind", "gaussian_mixture"}, {"weights", p.weights}, {"means", p.means}, {"stddevs", p.stddevs}};
        } else if constexpr (std::is_same_v<T, Perturbed>) {
          return {{"kind", "perturbed"}, {"base", synthetic_model_to_json(*p.base)}, {"sigma", p.sigma}, {"seed", m.seed}};
        } else if constexpr (std::is_same_v<T, Mixture>) {
          json parts = json::array();
          for (const auto& c : p.components) parts.push_back(synthetic_model_to_json(c));
          return {{"kind", "mixture"}, {"components", parts}, {"weights", p.weights}};
        } else {
          return {{"kind", "empirical"}, {"fingerprint", p.backing->fingerprint()}, {"size", p.backing->size()}};
        }
      },
      m.params);
}

ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& base) {
  json_strict::Object obj(j, "experiment config");
  if (auto v = obj.optional<std::int32_t>("format_version"); v && *v != kExperimentFormatVersion) {
    throw ConfigError("unsupported experiment config format_version " + std::to_string(*v));
  }
  ExperimentConfig cfg;
  cfg.experiment = obj.optional<std::string>("experiment").value_or("");
  const json* p = obj.child("p");
  if (!p) throw ConfigError("experiment config: missing \"p\"");
  cfg.p = synthetic_model_from_json(*p, base);
  if (const json* cs = obj.child("candidates")) {
    for (const auto& c : *cs) {
      json_strict::Object co(c, "candidate");
      NamedModel nm{co.required<std::string>("name"), {}};
      const json* mj = co.child("model");
      if (!mj) throw ConfigError("candidate " + nm.name + ": missing \"model\"");
      nm.model = synthetic_model_from_json(*mj, base);
      co.finish();
      cfg.candidates.push_back(std::move(nm));
    }
  }
  if (auto v = obj.optional<std::int64_t>("train_size")) cfg.train_size = *v;
  if (auto v = obj.optional<std::int64_t>("test_small")) cfg.test_small = *v;
  if (auto v = obj.optional<std::int64_t>("test_large")) cfg.test_large = *v;
  if (auto v = obj.optional<std::int64_t>("model_samples")) cfg.model_samples = *v;
  const Shape shape = cfg.p.element_shape();
  if (const json* ms = obj.child("metrics")) {
    for (const auto& m : *ms) cfg.metrics.push_back(metric_from_json(m, shape, base));
  }
  if (auto v = obj.optional<std::vector<std::uint64_t>>("seeds")) cfg.seeds = *v;
  if (auto v = obj.optional<std::vector<std::int64_t>>("n_grid")) cfg.n_grid = *v;
  if (const json* c = obj.child("curves")) {
    json_strict::Object co(*c, "curves");
    if (auto v = co.optional<std::int64_t>("checkpoints")) cfg.curves.checkpoints = *v;
    if (auto v = co.optional<double>("sigma_start")) cfg.curves.sigma_start = *v;
    if (auto v = co.optional<double>("sigma_end")) cfg.curves.sigma_end = *v;
    if (auto v = co.optional<double>("memorize_final")) cfg.curves.memorize_final = *v;
    if (auto v = co.optional<std::int64_t>("train_subset")) cfg.curves.train_subset = *v;
    co.finish();
  }
  if (auto v = obj.optional<std::int64_t>("repetitions")) cfg.repetitions = *v;
  obj.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (train_size < 1 || test_small < 1 || test_large < 1 || model_samples < 1) {
    throw ConfigError("experiment set sizes must be positive");
  }
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) throw ConfigError("n_grid must be strictly increasing");
  }
  if (!n_grid.empty() && (n_grid.front() < 1 || n_grid.back() > train_size)) {
    throw ConfigError("n_grid must lie in [1, train_size]");
  }
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (metrics[i].name == metrics[k].name) throw ConfigError("duplicate metric name " + metrics[i].name);
    }
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (candidates[i].name == candidates[k].name) throw ConfigError("duplicate candidate name " + candidates[i].name);
    }
  }
  if (curves.checkpoints < 1 || curves.train_subset < 0 || curves.train_subset > train_size) {
    throw ConfigError("curves: checkpoints >= 1 and train_subset in [0, train_size] required");
  }
  if (!(curves.sigma_start >= 0.0 && curves.sigma_end >= 0.0)) throw ConfigError("curves: sigma must be >= 0");
  if (!(curves.memorize_final >= 0.0 && curves.memorize_final < 1.0)) {
    throw ConfigError("curves: memorize_final must lie in [0, 1)");
  }
  if (repetitions < 1) throw ConfigError("repetitions must be positive");
}

}  // namespace nnd
