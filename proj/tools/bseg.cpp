#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bseg/config.hpp"
#include "bseg/data.hpp"
#include "bseg/errors.hpp"
#include "bseg/nn/checkpoint.hpp"
#include "bseg/plot.hpp"
#include "bseg/trainer.hpp"

using namespace bseg;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct GlobalOpts {
  std::string config;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
  bool resume = false;
};

[[noreturn]] void die_validation(const std::string& msg) {
  std::cerr << "error[validation]: " << msg << "\n";
  std::exit(kExitValidation);
}

/// Run dirs must be fresh unless the user resumes explicitly.
void prepare_out_dir(const std::string& dir, bool resume) {
  fs::path p(dir);
  if (fs::exists(p)) {
    if (!fs::is_directory(p)) throw ConfigError("output path " + dir + " is not a directory");
    if (!fs::is_empty(p) && !resume)
      throw ConfigError("output directory " + dir + " is not empty; pass --resume to reuse it");
  } else {
    fs::create_directories(p);
  }
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string run_id_of(const std::string& out_dir) {
  fs::path p = fs::path(out_dir).lexically_normal();
  std::string name = p.filename().string();
  if (name.empty() || name == ".") name = p.parent_path().filename().string();
  return name.empty() ? "run" : name;
}

void apply_overrides(config::ExperimentConfig& cfg, const GlobalOpts& g) {
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.seed_set) cfg.seeds = {g.seed};
}

struct RunOutcome {
  train::RunResult result;
  int64_t la = 0;
  int64_t un = 0;
};

/// Shared body of train and each sweep value: resolve the labeled split,
/// train every seed, and drop a result envelope into the run directory.
RunOutcome execute_experiment(const config::ExperimentConfig& cfg, train::TrainInputs inputs) {
  RunOutcome out;
  out.la = int64_t(inputs.labeled.size());
  out.un = int64_t(inputs.unlabeled.size());
  out.result = train::run_seeds(cfg.train, inputs, cfg.seeds, cfg.out_dir);

  nlohmann::ordered_json envelope{{"run_id", run_id_of(cfg.out_dir)},
                                  {"method", train::to_string(cfg.train.method)},
                                  {"mode", train::to_string(cfg.train.mode)},
                                  {"la", out.la},
                                  {"un", out.un},
                                  {"manifest", cfg.manifest},
                                  {"seeds", cfg.seeds},
                                  {"result", out.result.to_json()}};
  std::ofstream f(fs::path(cfg.out_dir) / "result.json");
  if (!f) throw IoError("cannot write result.json under " + cfg.out_dir);
  f << envelope.dump(2) << "\n";
  return out;
}

train::TrainInputs load_experiment_inputs(const config::ExperimentConfig& cfg) {
  data::DatasetManifest manifest = data::load_manifest(cfg.manifest);
  if (cfg.labeled_count >= 0)
    data::select_labeled(manifest, cfg.labeled_count, cfg.split_seed);
  train::TrainInputs inputs = train::load_inputs(manifest);
  if (cfg.train.mode == train::TrainMode::fp_semisup && inputs.unlabeled.empty())
    throw ConfigError("fp_semisup requires a non-empty unlabeled set; manifest " + cfg.manifest +
                      " has none after the labeled split");
  return inputs;
}

int cmd_train(const GlobalOpts& g) {
  if (g.config.empty()) throw ConfigError("train requires --config");
  config::ExperimentConfig cfg = config::ExperimentConfig::from_toml_file(g.config);
  apply_overrides(cfg, g);
  cfg.validate();
  prepare_out_dir(cfg.out_dir, g.resume);

  RunOutcome out = execute_experiment(cfg, load_experiment_inputs(cfg));
  const auto& m = out.result.mean;
  const auto& s = out.result.stddev;
  std::cout << "method=" << train::to_string(cfg.train.method) << " la=" << out.la
            << " un=" << out.un << " seeds=" << cfg.seeds.size() << "\n";
  std::cout << "dice=" << fmt(m.dice) << "+-" << fmt(s.dice) << " jaccard=" << fmt(m.jaccard)
            << "+-" << fmt(s.jaccard) << " hd" << fmt(cfg.train.hd_percentile)
            << "_mm=" << fmt(m.hausdorff_mm) << "+-" << fmt(s.hausdorff_mm)
            << " asd_mm=" << fmt(m.asd_mm) << "+-" << fmt(s.asd_mm) << "\n";
  std::cout << "result=" << (fs::path(cfg.out_dir) / "result.json").string() << "\n";
  return kExitOk;
}

std::string sweep_value_label(config::SweepAxis axis, double v) {
  if (axis == config::SweepAxis::kernel_r) return "r_" + std::to_string(int64_t(v));
  std::string s = fmt(v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return "lambda_" + s;
}

int cmd_sweep(const GlobalOpts& g, bool parallel) {
  if (g.config.empty()) throw ConfigError("sweep requires --config");
  if (parallel && g.deterministic)
    throw ConfigError("--parallel is not allowed together with --deterministic");
  config::SweepSpec spec = config::SweepSpec::from_toml_file(g.config);
  apply_overrides(spec.base, g);
  spec.validate();
  prepare_out_dir(spec.base.out_dir, g.resume);

  // one load; every value trains on its own copy of the volumes
  train::TrainInputs inputs = load_experiment_inputs(spec.base);

  struct Row {
    double value;
    bool failed = false;
    std::string error;
    train::RunResult result;
  };
  std::vector<Row> rows(spec.values.size());

  auto run_value = [&](size_t i) {
    Row& row = rows[i];
    row.value = spec.values[i];
    try {
      config::ExperimentConfig cfg = spec.apply(spec.values[i]);
      cfg.out_dir = (fs::path(spec.base.out_dir) / sweep_value_label(spec.axis, row.value))
                        .string();
      cfg.validate();
      prepare_out_dir(cfg.out_dir, g.resume);
      train::TrainInputs copy = inputs;
      row.result = execute_experiment(cfg, std::move(copy)).result;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  };

  if (parallel) {
    std::vector<std::thread> workers;
    workers.reserve(spec.values.size());
    for (size_t i = 0; i < spec.values.size(); ++i) workers.emplace_back(run_value, i);
    for (auto& w : workers) w.join();
  } else {
    for (size_t i = 0; i < spec.values.size(); ++i) run_value(i);
  }

  fs::path csv_path = fs::path(spec.base.out_dir) / "sweep.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << config::to_string(spec.axis) << ",dice,jaccard,hd_mm,asd_mm,status\n";
  for (const auto& row : rows) {
    std::string value = spec.axis == config::SweepAxis::kernel_r
                            ? std::to_string(int64_t(row.value))
                            : fmt(row.value);
    if (row.failed) {
      csv << value << ",,,,," << csv_quote("error: " + row.error) << "\n";
    } else {
      const auto& m = row.result.mean;
      csv << value << "," << fmt(m.dice) << "," << fmt(m.jaccard) << ","
          << fmt(m.hausdorff_mm) << "," << fmt(m.asd_mm) << ",ok\n";
    }
  }
  csv.close();

  int failures = 0;
  for (const auto& row : rows)
    if (row.failed) {
      std::cout << config::to_string(spec.axis) << "=" << fmt(row.value)
                << " error: " << row.error << "\n";
      failures++;
    } else {
      std::cout << config::to_string(spec.axis) << "=" << fmt(row.value)
                << " dice=" << fmt(row.result.mean.dice) << "\n";
    }
  std::cout << "sweep=" << csv_path.string() << "\n";
  if (failures == int(rows.size())) throw Error("every sweep value failed");
  return kExitOk;
}

int cmd_gen_data(const GlobalOpts& g) {
  if (g.config.empty()) throw ConfigError("gen-data requires --config");
  if (g.out.empty()) throw ConfigError("gen-data requires --out");
  data::SyntheticSpec spec = config::synthetic_from_toml_file(g.config);
  if (g.seed_set) spec.seed = g.seed;
  spec.validate();
  prepare_out_dir(g.out, g.resume);

  std::vector<data::Sample> samples = data::generate_synthetic(spec);
  fs::path root(g.out);
  fs::create_directories(root / "hdf5");
  fs::create_directories(root / "rawjson");

  data::DatasetManifest h5_manifest, raw_manifest;
  h5_manifest.root = (root / "hdf5").string();
  raw_manifest.root = (root / "rawjson").string();

  int64_t train_count = int64_t(samples.size()) * 8 / 10;
  for (size_t i = 0; i < samples.size(); ++i) {
    std::string h5_name = samples[i].id + ".h5";
    data::save_sample((root / "hdf5" / h5_name).string(), samples[i],
                      data::SampleFormat::hdf5);
    data::save_sample((root / "rawjson" / samples[i].id).string(), samples[i],
                      data::SampleFormat::rawjson);
    auto& h5_list = int64_t(i) < train_count ? h5_manifest.train_ids : h5_manifest.test_ids;
    auto& raw_list = int64_t(i) < train_count ? raw_manifest.train_ids : raw_manifest.test_ids;
    h5_list.push_back(h5_name);
    raw_list.push_back(samples[i].id);
  }
  h5_manifest.labeled_ids = h5_manifest.train_ids;
  raw_manifest.labeled_ids = raw_manifest.train_ids;
  h5_manifest.validate();
  raw_manifest.validate();

  // the manifest lives next to the files it names, so sample ids stay
  // relative and regeneration into another directory is byte-identical
  auto write_manifest = [](const data::DatasetManifest& m, const fs::path& path) {
    nlohmann::ordered_json j{
        {"train", m.train_ids}, {"test", m.test_ids}, {"labeled", m.labeled_ids}};
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << j.dump(2) << "\n";
  };
  write_manifest(h5_manifest, root / "hdf5" / "manifest.json");
  write_manifest(raw_manifest, root / "rawjson" / "manifest.json");

  std::cout << "samples=" << samples.size() << " train=" << train_count
            << " test=" << (int64_t(samples.size()) - train_count) << "\n";
  std::cout << "manifest=" << (root / "hdf5" / "manifest.json").string() << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalOpts& g, const std::string& checkpoint, const std::string& manifest) {
  if (checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  if (manifest.empty()) throw ConfigError("eval requires --manifest");

  nlohmann::json extra;
  auto model = nn::load_checkpoint(checkpoint, &extra);
  if (model->config().class_count != 1)
    throw ConfigError("checkpoint has class_count " +
                      std::to_string(model->config().class_count) +
                      " but evaluation data is binary (class_count 1)");
  if (model->config().in_channels != 1)
    throw ConfigError("checkpoint expects " + std::to_string(model->config().in_channels) +
                      " input channels but volumes have 1");

  train::EvalConfig ec;
  if (extra.contains("config")) {
    train::TrainConfig tc = train::TrainConfig::from_json(extra.at("config"));
    ec = {tc.patch_size, tc.infer_strides, tc.threshold, tc.hd_percentile};
  }

  data::DatasetManifest m = data::load_manifest(manifest);
  train::TrainInputs inputs = train::load_inputs(m);
  train::EvalResult r = train::evaluate_model(*model, inputs.test, ec);

  fs::path out_dir = g.out.empty() ? fs::path(checkpoint).parent_path() : fs::path(g.out);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  fs::path csv_path = out_dir / "eval.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "id,dice,jaccard,hd_mm,asd_mm\n";
  for (size_t i = 0; i < r.ids.size(); ++i) {
    const auto& s = r.per_sample[i];
    csv << csv_quote(r.ids[i]) << "," << fmt(s.dice) << "," << fmt(s.jaccard) << ","
        << fmt(s.hausdorff_mm) << "," << fmt(s.asd_mm) << "\n";
  }
  csv << "mean," << fmt(r.mean.dice) << "," << fmt(r.mean.jaccard) << ","
      << fmt(r.mean.hausdorff_mm) << "," << fmt(r.mean.asd_mm) << "\n";
  csv.close();

  for (size_t i = 0; i < r.ids.size(); ++i) {
    const auto& s = r.per_sample[i];
    std::cout << r.ids[i] << " dice=" << fmt(s.dice) << " jaccard=" << fmt(s.jaccard)
              << " hd_mm=" << fmt(s.hausdorff_mm) << " asd_mm=" << fmt(s.asd_mm) << "\n";
  }
  std::cout << "mean dice=" << fmt(r.mean.dice) << " jaccard=" << fmt(r.mean.jaccard)
            << " hd_mm=" << fmt(r.mean.hausdorff_mm) << " asd_mm=" << fmt(r.mean.asd_mm)
            << "\n";
  std::cout << "csv=" << csv_path.string() << "\n";
  return kExitOk;
}

struct ReportRow {
  std::string run_id;
  std::string method;
  int64_t la = 0;
  int64_t un = 0;
  size_t seed_count = 0;
  double hd_percentile = 95.0;
  metrics::SegMetrics mean;
  metrics::SegMetrics stddev;
  fs::path dir;
  nlohmann::json result;
};

void plot_run(const ReportRow& row, const fs::path& out_dir) {
  std::vector<plot::Series> loss_series;
  size_t idx = 0;
  for (const auto& run : row.result.at("runs")) {
    if (run.value("failed", false)) continue;
    uint64_t seed = run.at("seed").get<uint64_t>();
    fs::path log_path = row.dir / ("seed_" + std::to_string(seed)) / "train_log.jsonl";
    std::ifstream log(log_path);
    if (!log) continue;
    plot::Series s;
    s.name = "seed " + std::to_string(seed);
    s.color = plot::palette(idx++);
    std::string line;
    while (std::getline(log, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) continue;
      s.x.push_back(j.value("iter", 0.0));
      s.y.push_back(j.value("loss_total", 0.0));
    }
    if (!s.x.empty()) loss_series.push_back(std::move(s));
  }
  if (!loss_series.empty())
    plot::line_plot((out_dir / (row.run_id + "_loss.png")).string(), row.run_id + " loss",
                    "iteration", "loss", loss_series);

  plot::Series dice;
  dice.name = "dice";
  dice.color = plot::palette(0);
  double i = 1.0;
  for (const auto& run : row.result.at("runs")) {
    if (run.value("failed", false)) continue;
    dice.x.push_back(i);
    dice.y.push_back(run.at("metrics").at("dice").get<double>());
    i += 1.0;
  }
  if (!dice.x.empty()) {
    plot::Series mean_line;
    mean_line.name = "mean";
    mean_line.color = plot::palette(1);
    mean_line.x = {dice.x.front(), dice.x.back()};
    mean_line.y = {row.mean.dice, row.mean.dice};
    plot::line_plot((out_dir / (row.run_id + "_dice.png")).string(),
                    row.run_id + " test dice", "seed run", "dice", {dice, mean_line});
  }
}

int cmd_report(const GlobalOpts& g, const std::string& results_dir) {
  if (results_dir.empty()) throw ConfigError("report requires --results");
  if (!fs::is_directory(results_dir))
    throw ConfigError("results directory " + results_dir + " does not exist");

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(results_dir))
    if (entry.is_regular_file() && entry.path().filename() == "result.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<ReportRow> rows;
  std::vector<std::string> broken;
  for (const auto& file : files) {
    try {
      std::ifstream f(file);
      nlohmann::json j = nlohmann::json::parse(f);
      ReportRow row;
      row.run_id = j.at("run_id").get<std::string>();
      row.method = j.at("method").get<std::string>();
      row.la = j.at("la").get<int64_t>();
      row.un = j.at("un").get<int64_t>();
      row.dir = file.parent_path();
      row.result = j.at("result");
      row.seed_count = j.at("seeds").size();
      const auto& mean = row.result.at("mean");
      row.mean.dice = mean.at("dice").get<double>();
      row.mean.jaccard = mean.at("jaccard").get<double>();
      row.mean.hausdorff_mm = mean.at("hausdorff_mm").get<double>();
      row.mean.asd_mm = mean.at("asd_mm").get<double>();
      const auto& sd = row.result.at("stddev");
      row.stddev.dice = sd.at("dice").get<double>();
      row.stddev.jaccard = sd.at("jaccard").get<double>();
      row.stddev.hausdorff_mm = sd.at("hausdorff_mm").get<double>();
      row.stddev.asd_mm = sd.at("asd_mm").get<double>();
      row.hd_percentile =
          row.result.at("config").value("hd_percentile", row.hd_percentile);
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      broken.push_back(file.string() + ": " + e.what());
    }
  }
  for (const auto& b : broken) std::cerr << "warning: skipped " << b << "\n";
  if (rows.empty())
    throw ConfigError("no results found under " + results_dir +
                      (broken.empty() ? "" : " (" + std::to_string(broken.size()) +
                                                 " unreadable result files)"));
  std::sort(rows.begin(), rows.end(),
            [](const ReportRow& a, const ReportRow& b) { return a.run_id < b.run_id; });

  fs::path out_dir = g.out.empty() ? fs::path(results_dir) : fs::path(g.out);
  fs::create_directories(out_dir);

  fs::path csv_path = out_dir / "report.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "run_id,method,la,un,seeds,dice,dice_std,jaccard,jaccard_std,hd_mm,hd_std,"
         "asd_mm,asd_std,hd_percentile\n";
  for (const auto& r : rows)
    csv << csv_quote(r.run_id) << "," << csv_quote(r.method) << "," << r.la << "," << r.un
        << "," << r.seed_count << "," << fmt(r.mean.dice) << "," << fmt(r.stddev.dice) << ","
        << fmt(r.mean.jaccard) << "," << fmt(r.stddev.jaccard) << ","
        << fmt(r.mean.hausdorff_mm) << "," << fmt(r.stddev.hausdorff_mm) << ","
        << fmt(r.mean.asd_mm) << "," << fmt(r.stddev.asd_mm) << "," << fmt(r.hd_percentile)
        << "\n";
  csv.close();

  bool uniform_hd = std::all_of(rows.begin(), rows.end(), [&](const ReportRow& r) {
    return r.hd_percentile == rows.front().hd_percentile;
  });
  std::string hd_name =
      uniform_hd ? "HD" + fmt(rows.front().hd_percentile) + "(mm)" : "HD(mm)";

  std::ostringstream txt;
  size_t name_w = 11;
  for (const auto& r : rows) name_w = std::max(name_w, r.run_id.size() + 2);
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s %-12s %4s %4s %8s %8s %10s %9s\n", int(name_w),
                "run", "method", "La", "Un", "Dice", "Jac", hd_name.c_str(), "ASD(mm)");
  txt << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-*s %-12s %4lld %4lld %8.4f %8.4f %10.3f %9.3f\n",
                  int(name_w), r.run_id.c_str(), r.method.c_str(),
                  static_cast<long long>(r.la), static_cast<long long>(r.un), r.mean.dice,
                  r.mean.jaccard, r.mean.hausdorff_mm, r.mean.asd_mm);
    txt << line;
  }
  txt << "\nstd over seeds:\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line),
                  "%-*s dice %.4f  jac %.4f  hd %.3f  asd %.3f  (%zu seeds)\n", int(name_w),
                  r.run_id.c_str(), r.stddev.dice, r.stddev.jaccard, r.stddev.hausdorff_mm,
                  r.stddev.asd_mm, r.seed_count);
    txt << line;
  }
  txt << "\nhigher is better: Dice, Jac; lower is better: " << hd_name << ", ASD(mm)\n";
  if (!uniform_hd) {
    txt << "HD percentile per run:";
    for (const auto& r : rows) txt << " " << r.run_id << "=" << fmt(r.hd_percentile);
    txt << "\n";
  }

  std::ofstream table(out_dir / "report.txt");
  if (!table) throw IoError("cannot write report.txt under " + out_dir.string());
  table << txt.str();
  table.close();
  std::cout << txt.str();

  for (const auto& r : rows) plot_run(r, out_dir);
  std::cout << "report=" << csv_path.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boundary-aware volumetric segmentation workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config, "TOML config file");
  app.add_option("--out", g.out, "output directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", g.seed, "single seed (overrides the config list)");
  app.add_flag("--deterministic", g.deterministic,
               "reproducibility mode; forbids --parallel sweeps");
  app.add_flag("--resume", g.resume, "allow writing into a non-empty output directory");

  auto* train_cmd = app.add_subcommand("train", "train one configuration across its seeds");
  bool parallel = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "run an ablation sweep over one axis");
  sweep_cmd->add_flag("--parallel", parallel, "run sweep values concurrently");
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string checkpoint, manifest, results_dir;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest's test set");
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint file");
  eval_cmd->add_option("--manifest", manifest, "dataset manifest");
  auto* report_cmd = app.add_subcommand("report", "summarize result files into tables and plots");
  report_cmd->add_option("--results", results_dir, "directory scanned for result.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    g.seed_set = seed_opt->count() > 0;
    if (train_cmd->parsed()) return cmd_train(g);
    if (sweep_cmd->parsed()) return cmd_sweep(g, parallel);
    if (gen_cmd->parsed()) return cmd_gen_data(g);
    if (eval_cmd->parsed()) return cmd_eval(g, checkpoint, manifest);
    if (report_cmd->parsed()) return cmd_report(g, results_dir);
    die_validation("no command given");
  } catch (const ConfigError& e) {
    die_validation(e.what());
  } catch (const ParseError& e) {
    die_validation(e.what());
  } catch (const ValidationError& e) {
    die_validation(e.what());
  } catch (const nlohmann::json::exception& e) {
    die_validation(e.what());
  } catch (const std::exception& e) {
    std::cerr << "error[runtime]: " << e.what() << "\n";
    return kExitRuntime;
  }
}
