#include <cstdio>
#include <fstream>

#include "nnd/error.hpp"
#include "nnd/experiments.hpp"

namespace nnd {

namespace {

using nlohmann::json;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Names and hashes never contain separators, but conditions are user-named.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  return out;
}

json row_to_json(const ResultRow& r) {
  return {{"metric", r.metric},
          {"condition", r.condition},
          {"real", r.real},
          {"model", r.model},
          {"data_seed", r.data_seed},
          {"seed", r.seed},
          {"value", r.value},
          {"config_hash", r.config_hash},
          {"real_fingerprint", r.real_fingerprint},
          {"model_fingerprint", r.model_fingerprint}};
}

}  // namespace

void write_csv(const std::filesystem::path& path, const ExperimentResult& result) {
  auto out = open_out(path);
  out << "metric,condition,real,model,data_seed,seed,value,config_hash,real_fingerprint,model_fingerprint\n";
  for (const auto& r : result.rows) {
    out << csv_field(r.metric) << ',' << csv_field(r.condition) << ',' << csv_field(r.real) << ','
        << csv_field(r.model) << ',' << r.data_seed << ',' << r.seed << ',' << g17(r.value) << ',' << r.config_hash
        << ',' << r.real_fingerprint << ',' << r.model_fingerprint << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

json result_to_json(const ExperimentResult& result, bool with_wall_time) {
  json rows = json::array();
  for (const auto& r : result.rows) rows.push_back(row_to_json(r));
  json reports = json::array();
  for (const auto& r : result.reports) reports.push_back(report_to_json(r, with_wall_time));
  return {{"format_version", kExperimentFormatVersion},
          {"experiment", result.experiment},
          {"rows", rows},
          {"summary", result.summary},
          {"verdicts", result.verdicts},
          {"reports", reports}};
}

void write_bundle(const std::filesystem::path& dir, const ExperimentResult& result, bool with_wall_time) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  write_csv(dir / "results.csv", result);
  {
    auto out = open_out(dir / "summary.csv");
    out << "key,value\n";
    const json flat = result.summary.flatten();
    for (const auto& [key, value] : flat.items()) {
      out << csv_field(key) << ',' << (value.is_number() ? g17(value.get<double>()) : csv_field(value.dump()))
          << '\n';
    }
  }
  auto out = open_out(dir / "bundle.json");
  out << result_to_json(result, with_wall_time).dump(2) << '\n';
  if (!out) throw DataError("write failed: " + (dir / "bundle.json").string());
}

}  // namespace nnd
