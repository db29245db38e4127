#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bseg/data.hpp"
#include "bseg/trainer.hpp"

namespace bseg::config {

/// Parse a restricted TOML document into a JSON tree. Supported: [table]
/// and [table.sub] headers, dotted bare keys, strings with basic escapes,
/// integers, floats, booleans, single-line homogeneous arrays, # comments.
/// Unsupported constructs raise ParseError with the line number.
nlohmann::ordered_json parse_toml(const std::string& text);
nlohmann::ordered_json load_toml(const std::string& path);

/// Checks a parsed document against a schema tree before anything is
/// interpreted: objects list their allowed keys, leaves name the expected
/// type ("string", "int", "float", "bool", "array_int", "array_float",
/// "array_string"). Unknown keys and type mismatches raise ConfigError
/// naming the offending path. Missing keys are fine; every field defaults.
void check_schema(const nlohmann::ordered_json& doc, const nlohmann::json& schema,
                  const std::string& path = "");

/// Schema fragments for the documented config sections.
const nlohmann::json& train_schema();
const nlohmann::json& experiment_schema();
const nlohmann::json& sweep_schema();
const nlohmann::json& synthetic_schema();

struct ExperimentConfig {
  train::TrainConfig train;
  std::string manifest;
  std::string out_dir;
  std::vector<uint64_t> seeds{0};
  /// Number of labeled training volumes; -1 keeps the manifest's own lists.
  int64_t labeled_count = -1;
  uint64_t split_seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ExperimentConfig from_doc(const nlohmann::ordered_json& doc);
  static ExperimentConfig from_toml_file(const std::string& path);
};

enum class SweepAxis { kernel_r, lambda_boundary };

SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis a);

std::vector<double> default_sweep_values(SweepAxis axis);

struct SweepSpec {
  SweepAxis axis = SweepAxis::kernel_r;
  std::vector<double> values = default_sweep_values(SweepAxis::kernel_r);
  ExperimentConfig base;

  void validate() const;
  /// Base config with the axis value applied.
  ExperimentConfig apply(double value) const;
  static SweepSpec from_doc(const nlohmann::ordered_json& doc);
  static SweepSpec from_toml_file(const std::string& path);
};

data::SyntheticSpec synthetic_from_doc(const nlohmann::ordered_json& doc);
data::SyntheticSpec synthetic_from_toml_file(const std::string& path);

}  // namespace bseg::config
