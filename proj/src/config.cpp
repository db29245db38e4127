#include "bseg/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "bseg/errors.hpp"

namespace bseg::config {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ParseError("toml line " + std::to_string(line) + ": " + msg);
}

bool is_bare_char(char ch) {
  return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
}

struct Cursor {
  const std::string& s;
  size_t i = 0;
  int line;

  bool done() const { return i >= s.size(); }
  char peek() const { return s[i]; }
  void skip_ws() {
    while (!done() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
};

std::string parse_basic_string(Cursor& c) {
  ++c.i;  // opening quote
  std::string out;
  while (true) {
    if (c.done()) fail(c.line, "unterminated string");
    char ch = c.s[c.i++];
    if (ch == '"') return out;
    if (ch == '\\') {
      if (c.done()) fail(c.line, "unterminated escape");
      char e = c.s[c.i++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail(c.line, std::string("unsupported escape \\") + e);
      }
    } else {
      out += ch;
    }
  }
}

nlohmann::ordered_json parse_scalar(Cursor& c);

nlohmann::ordered_json parse_array(Cursor& c) {
  ++c.i;  // opening bracket
  auto arr = nlohmann::ordered_json::array();
  c.skip_ws();
  if (!c.done() && c.peek() == ']') {
    ++c.i;
    return arr;
  }
  while (true) {
    c.skip_ws();
    if (c.done()) fail(c.line, "unterminated array");
    arr.push_back(parse_scalar(c));
    if (arr.size() > 1) {
      auto kind = [](const nlohmann::ordered_json& v) {
        return v.is_string() ? 0 : v.is_boolean() ? 1 : 2;
      };
      if (kind(arr.front()) != kind(arr.back()))
        fail(c.line, "arrays must hold one element type");
    }
    c.skip_ws();
    if (c.done()) fail(c.line, "unterminated array");
    char ch = c.s[c.i++];
    if (ch == ']') return arr;
    if (ch != ',') fail(c.line, "expected ',' or ']' in array");
  }
}

nlohmann::ordered_json parse_scalar(Cursor& c) {
  c.skip_ws();
  if (c.done()) fail(c.line, "missing value");
  char ch = c.peek();
  if (ch == '"') return parse_basic_string(c);
  if (ch == '[') return parse_array(c);

  size_t start = c.i;
  while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != ' ' &&
         c.peek() != '\t' && c.peek() != '#')
    ++c.i;
  std::string tok = c.s.substr(start, c.i - start);
  if (tok.empty()) fail(c.line, "missing value");
  if (tok == "true") return true;
  if (tok == "false") return false;

  std::string digits = tok;
  digits.erase(std::remove(digits.begin(), digits.end(), '_'), digits.end());
  bool is_float = digits.find_first_of(".eE") != std::string::npos;
  try {
    size_t used = 0;
    if (is_float) {
      double v = std::stod(digits, &used);
      if (used != digits.size()) fail(c.line, "bad number '" + tok + "'");
      return v;
    }
    long long v = std::stoll(digits, &used, 10);
    if (used != digits.size()) fail(c.line, "bad number '" + tok + "'");
    return int64_t(v);
  } catch (const std::invalid_argument&) {
    fail(c.line, "bad value '" + tok + "'");
  } catch (const std::out_of_range&) {
    fail(c.line, "number out of range '" + tok + "'");
  }
}

std::vector<std::string> parse_key_path(Cursor& c) {
  std::vector<std::string> path;
  while (true) {
    c.skip_ws();
    if (c.done()) fail(c.line, "missing key");
    std::string part;
    if (c.peek() == '"') {
      part = parse_basic_string(c);
    } else {
      size_t start = c.i;
      while (!c.done() && is_bare_char(c.peek())) ++c.i;
      part = c.s.substr(start, c.i - start);
    }
    if (part.empty()) fail(c.line, "empty key");
    path.push_back(part);
    c.skip_ws();
    if (c.done() || c.peek() != '.') return path;
    ++c.i;
  }
}

nlohmann::ordered_json* descend(nlohmann::ordered_json& root,
                                const std::vector<std::string>& path, int line) {
  nlohmann::ordered_json* node = &root;
  for (const auto& part : path) {
    if (!node->contains(part)) (*node)[part] = nlohmann::ordered_json::object();
    node = &(*node)[part];
    if (!node->is_object()) fail(line, "'" + part + "' is not a table");
  }
  return node;
}

std::string strip_comment(const std::string& line, int lineno) {
  std::string out;
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (in_string && ch == '\\' && i + 1 < line.size()) {
      out += ch;
      out += line[i + 1];
      ++i;
      continue;
    }
    if (ch == '"') in_string = !in_string;
    if (ch == '#' && !in_string) break;
    out += ch;
  }
  if (in_string) fail(lineno, "unterminated string");
  return out;
}

std::string json_type_name(const nlohmann::ordered_json& v) {
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "bool";
  if (v.is_number_integer()) return "int";
  if (v.is_number_float()) return "float";
  if (v.is_array()) return "array";
  if (v.is_object()) return "table";
  return v.type_name();
}

bool matches_type(const nlohmann::ordered_json& v, const std::string& want) {
  if (want == "string") return v.is_string();
  if (want == "bool") return v.is_boolean();
  if (want == "int") return v.is_number_integer();
  if (want == "float") return v.is_number();
  auto all = [&](auto pred) {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!pred(e)) return false;
    return true;
  };
  if (want == "array_int") return all([](const auto& e) { return e.is_number_integer(); });
  if (want == "array_float") return all([](const auto& e) { return e.is_number(); });
  if (want == "array_string") return all([](const auto& e) { return e.is_string(); });
  throw Error("unknown schema type '" + want + "'");
}

}  // namespace

nlohmann::ordered_json parse_toml(const std::string& text) {
  auto root = nlohmann::ordered_json::object();
  nlohmann::ordered_json* table = &root;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = strip_comment(raw, lineno);
    Cursor c{line, 0, lineno};
    c.skip_ws();
    if (c.done()) continue;

    if (c.peek() == '[') {
      ++c.i;
      std::vector<std::string> path = parse_key_path(c);
      c.skip_ws();
      if (c.done() || c.s[c.i++] != ']') fail(lineno, "expected ']'");
      c.skip_ws();
      if (!c.done()) fail(lineno, "trailing text after table header");
      nlohmann::ordered_json* parent =
          descend(root, {path.begin(), path.end() - 1}, lineno);
      if (parent->contains(path.back()) && !(*parent)[path.back()].empty())
        fail(lineno, "table '" + path.back() + "' defined twice");
      table = descend(root, path, lineno);
      continue;
    }

    std::vector<std::string> path = parse_key_path(c);
    c.skip_ws();
    if (c.done() || c.s[c.i++] != '=') fail(lineno, "expected '='");
    nlohmann::ordered_json value = parse_scalar(c);
    c.skip_ws();
    if (!c.done()) fail(lineno, "trailing text after value");

    nlohmann::ordered_json* parent =
        descend(*table, {path.begin(), path.end() - 1}, lineno);
    if (parent->contains(path.back()))
      fail(lineno, "key '" + path.back() + "' defined twice");
    (*parent)[path.back()] = std::move(value);
  }
  return root;
}

nlohmann::ordered_json load_toml(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_toml(buf.str());
}

void check_schema(const nlohmann::ordered_json& doc, const nlohmann::json& schema,
                  const std::string& path) {
  for (const auto& [key, value] : doc.items()) {
    std::string where = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown key '" + where + "'");
    const auto& want = schema.at(key);
    if (want.is_object()) {
      if (!value.is_object())
        throw ConfigError("'" + where + "' must be a table, got " + json_type_name(value));
      check_schema(value, want, where);
    } else if (!matches_type(value, want.get<std::string>())) {
      throw ConfigError("'" + where + "' must be " + want.get<std::string>() + ", got " +
                        json_type_name(value));
    }
  }
}

const nlohmann::json& train_schema() {
  static const nlohmann::json schema = {
      {"iterations", "int"},
      {"batch_size", "int"},
      {"labeled_batch_size", "int"},
      {"r", "int"},
      {"mode", "string"},
      {"method", "string"},
      {"seed", "int"},
      {"eval_every", "int"},
      {"log_every", "int"},
      {"patch_size", "array_int"},
      {"infer_strides", "array_int"},
      {"fg_bias", "float"},
      {"threshold", "float"},
      {"hd_percentile", "float"},
      {"freeze_boundary_head", "bool"},
      {"weights",
       {{"lambda_boundary", "float"},
        {"lambda_cons", "float"},
        {"cons_variant", "string"},
        {"dice_epsilon", "float"},
        {"cons_stop_grad_seg", "bool"}}},
      {"optimizer",
       {{"kind", "string"},
        {"learning_rate", "float"},
        {"momentum", "float"},
        {"weight_decay", "float"}}},
      {"augment", {{"flip_prob", "float"}, {"rot90_prob", "float"}}},
      {"model",
       {{"in_channels", "int"},
        {"depth", "int"},
        {"base_width", "int"},
        {"feat_channels", "int"},
        {"class_count", "int"},
        {"dual_head", "bool"},
        {"norm", "string"},
        {"activation", "string"},
        {"leaky_slope", "float"}}}};
  return schema;
}

const nlohmann::json& experiment_schema() {
  static const nlohmann::json schema = {
      {"experiment",
       {{"manifest", "string"},
        {"out", "string"},
        {"seeds", "array_int"},
        {"labeled_count", "int"},
        {"split_seed", "int"}}},
      {"train", train_schema()}};
  return schema;
}

const nlohmann::json& sweep_schema() {
  static const nlohmann::json schema = [] {
    nlohmann::json s = experiment_schema();
    s["sweep"] = {{"axis", "string"}, {"values", "array_float"}};
    return s;
  }();
  return schema;
}

const nlohmann::json& synthetic_schema() {
  static const nlohmann::json schema = {
      {"synthetic",
       {{"volume_size", "int"},
        {"semi_axis_min", "float"},
        {"semi_axis_max", "float"},
        {"perturb_amplitude", "float"},
        {"contrast", "float"},
        {"noise_sigma", "float"},
        {"sample_count", "int"},
        {"seed", "int"},
        {"spacing", "array_float"}}}};
  return schema;
}

void ExperimentConfig::validate() const {
  train.validate();
  if (manifest.empty()) throw ConfigError("experiment.manifest is required");
  if (out_dir.empty()) throw ConfigError("experiment.out is required");
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  for (size_t i = 0; i < seeds.size(); ++i)
    for (size_t j = i + 1; j < seeds.size(); ++j)
      if (seeds[i] == seeds[j])
        throw ConfigError("experiment.seeds contains duplicate " + std::to_string(seeds[i]));
  if (labeled_count < -1) throw ConfigError("experiment.labeled_count must be >= -1");
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  return {{"experiment",
           {{"manifest", manifest},
            {"out", out_dir},
            {"seeds", seeds},
            {"labeled_count", labeled_count},
            {"split_seed", split_seed}}},
          {"train", train.to_json()}};
}

ExperimentConfig ExperimentConfig::from_doc(const nlohmann::ordered_json& doc) {
  check_schema(doc, experiment_schema());
  ExperimentConfig c;
  if (doc.contains("experiment")) {
    const auto& e = doc.at("experiment");
    c.manifest = e.value("manifest", c.manifest);
    c.out_dir = e.value("out", c.out_dir);
    if (e.contains("seeds")) c.seeds = e.at("seeds").get<std::vector<uint64_t>>();
    c.labeled_count = e.value("labeled_count", c.labeled_count);
    c.split_seed = e.value("split_seed", c.split_seed);
  }
  if (doc.contains("train")) c.train = train::TrainConfig::from_json(doc.at("train"));
  return c;
}

ExperimentConfig ExperimentConfig::from_toml_file(const std::string& path) {
  return from_doc(load_toml(path));
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "kernel_r") return SweepAxis::kernel_r;
  if (s == "lambda_boundary") return SweepAxis::lambda_boundary;
  throw ConfigError("unknown sweep axis '" + s + "'");
}

std::string to_string(SweepAxis a) {
  return a == SweepAxis::kernel_r ? "kernel_r" : "lambda_boundary";
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  if (axis == SweepAxis::kernel_r) return {1, 3, 5, 7, 9};
  return {1, 3, 10, 30, 100};
}

void SweepSpec::validate() const {
  base.validate();
  if (values.empty()) throw ConfigError("sweep.values must not be empty");
  for (double v : values) {
    if (axis == SweepAxis::kernel_r) {
      int64_t r = int64_t(v);
      if (double(r) != v || r < 1 || r % 2 == 0)
        throw ConfigError("sweep kernel_r values must be odd positive integers");
    } else if (v < 0.0) {
      throw ConfigError("sweep lambda_boundary values must be >= 0");
    }
  }
}

ExperimentConfig SweepSpec::apply(double value) const {
  ExperimentConfig c = base;
  if (axis == SweepAxis::kernel_r)
    c.train.r = int(value);
  else
    c.train.weights.lambda_boundary = value;
  return c;
}

SweepSpec SweepSpec::from_doc(const nlohmann::ordered_json& doc) {
  check_schema(doc, sweep_schema());
  SweepSpec s;
  nlohmann::ordered_json base_doc = doc;
  base_doc.erase("sweep");
  s.base = ExperimentConfig::from_doc(base_doc);
  if (doc.contains("sweep")) {
    const auto& j = doc.at("sweep");
    if (j.contains("axis")) s.axis = sweep_axis_from_string(j.at("axis").get<std::string>());
    s.values = default_sweep_values(s.axis);
    if (j.contains("values")) s.values = j.at("values").get<std::vector<double>>();
  }
  return s;
}

SweepSpec SweepSpec::from_toml_file(const std::string& path) {
  return from_doc(load_toml(path));
}

data::SyntheticSpec synthetic_from_doc(const nlohmann::ordered_json& doc) {
  check_schema(doc, synthetic_schema());
  data::SyntheticSpec s;
  if (doc.contains("synthetic")) {
    const auto& j = doc.at("synthetic");
    s.volume_size = j.value("volume_size", s.volume_size);
    s.semi_axis_min = j.value("semi_axis_min", s.semi_axis_min);
    s.semi_axis_max = j.value("semi_axis_max", s.semi_axis_max);
    s.perturb_amplitude = j.value("perturb_amplitude", s.perturb_amplitude);
    s.contrast = j.value("contrast", s.contrast);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.sample_count = j.value("sample_count", s.sample_count);
    s.seed = j.value("seed", s.seed);
    if (j.contains("spacing")) s.spacing = j.at("spacing").get<Spacing>();
  }
  return s;
}

data::SyntheticSpec synthetic_from_toml_file(const std::string& path) {
  return synthetic_from_doc(load_toml(path));
}

}  // namespace bseg::config
