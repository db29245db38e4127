#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int status = -1;
  std::string output;

  bool contains(const std::string& needle) const {
    return output.find(needle) != std::string::npos;
  }
};

/// Runs the bseg binary through the shell, merging stderr into stdout.
CmdResult run_cli(const std::string& args) {
  std::string cmd = std::string(BSEG_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int rc = pclose(pipe);
  REQUIRE(WIFEXITED(rc));
  r.status = WEXITSTATUS(rc);
  return r;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  REQUIRE(f.good());
  f << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) { return json::parse(slurp(path)); }

std::vector<std::string> csv_lines(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

bool trees_identical(const fs::path& a, const fs::path& b) {
  std::string cmd = "diff -r " + a.string() + " " + b.string() + " >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

/// One shared corpus plus a finished training run, generated by the CLI
/// itself on first use.
struct Workspace {
  fs::path base;
  fs::path manifest;
  fs::path train_cfg;
  fs::path train_out;

  Workspace() {
    std::string tmpl = (fs::temp_directory_path() / "bseg_cli_XXXXXX").string();
    REQUIRE(mkdtemp(tmpl.data()) != nullptr);
    base = tmpl;

    write_file(base / "gen.toml",
               "[synthetic]\n"
               "volume_size = 24\n"
               "semi_axis_min = 3.0\n"
               "semi_axis_max = 4.0\n"
               "noise_sigma = 0.05\n"
               "sample_count = 10\n"
               "seed = 11\n");
    CmdResult gen = run_cli("gen-data --config " + (base / "gen.toml").string() +
                            " --out " + (base / "ds").string());
    REQUIRE(gen.status == 0);
    manifest = base / "ds" / "hdf5" / "manifest.json";
    REQUIRE(fs::exists(manifest));

    train_cfg = base / "train.toml";
    train_out = base / "runs" / "smoke";
    write_file(train_cfg, experiment_toml(train_out, 3, "[1, 2]"));
    CmdResult tr = run_cli("train --config " + train_cfg.string());
    REQUIRE(tr.status == 0);
  }

  std::string experiment_toml(const fs::path& out, int labeled,
                              const std::string& seeds,
                              const std::string& extra_train = "") const {
    std::ostringstream cfg;
    cfg << "[experiment]\n"
        << "manifest = \"" << manifest.string() << "\"\n"
        << "out = \"" << out.string() << "\"\n"
        << "seeds = " << seeds << "\n"
        << "labeled_count = " << labeled << "\n"
        << "[train]\n"
        << "iterations = 3\n"
        << "batch_size = 2\n"
        << "r = 3\n"
        << "log_every = 1\n"
        << "patch_size = [16, 16, 16]\n"
        << "infer_strides = [8, 8, 8]\n"
        << extra_train << "[train.model]\n"
        << "depth = 2\n"
        << "base_width = 4\n"
        << "feat_channels = 4\n"
        << "[train.augment]\n"
        << "flip_prob = 0.0\n"
        << "rot90_prob = 0.0\n";
    return cfg.str();
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("gen-data splits 80/20 and reruns byte identical") {
  auto& w = ws();
  json m = read_json(w.manifest);
  CHECK(m.at("train").size() == 8);
  CHECK(m.at("test").size() == 2);
  CHECK(m.at("labeled") == m.at("train"));
  CHECK(fs::exists(w.base / "ds" / "rawjson" / "manifest.json"));

  CmdResult again = run_cli("gen-data --config " + (w.base / "gen.toml").string() +
                            " --out " + (w.base / "ds_again").string());
  REQUIRE(again.status == 0);
  CHECK(trees_identical(w.base / "ds", w.base / "ds_again"));
}

TEST_CASE("train writes a result envelope") {
  auto& w = ws();
  json env = read_json(w.train_out / "result.json");
  CHECK(env.at("run_id") == "smoke");
  CHECK(env.at("method") == "boundaryseg");
  CHECK(env.at("la") == 3);
  CHECK(env.at("un") == 5);
  CHECK(env.at("seeds") == json({1, 2}));
  CHECK(env.at("result").at("runs").size() == 2);
  CHECK(env.at("result").at("mean").contains("dice"));
  for (int seed : {1, 2}) {
    fs::path d = w.train_out / ("seed_" + std::to_string(seed));
    CHECK(fs::exists(d / "final.ckpt"));
    CHECK(fs::exists(d / "best.ckpt"));
    CHECK(fs::exists(d / "train_log.jsonl"));
  }
}

TEST_CASE("train log holds one record per logged iteration") {
  auto& w = ws();
  std::istringstream in(slurp(w.train_out / "seed_1" / "train_log.jsonl"));
  std::string line;
  int64_t expected_iter = 1;
  while (std::getline(in, line)) {
    json rec = json::parse(line);
    CHECK(rec.at("iter") == expected_iter++);
    CHECK(rec.contains("loss_total"));
    CHECK(rec.contains("loss_seg"));
    CHECK(rec.contains("loss_bnd"));
    CHECK(rec.contains("loss_cons"));
  }
  CHECK(expected_iter == 4);
}

TEST_CASE("train refuses a dirty output directory without --resume") {
  auto& w = ws();
  CmdResult r = run_cli("train --config " + w.train_cfg.string());
  CHECK(r.status == 2);
  CHECK(r.contains("error[validation]"));
  CHECK(r.contains("--resume"));

  CmdResult ok = run_cli("train --config " + w.train_cfg.string() + " --resume");
  CHECK(ok.status == 0);
}

TEST_CASE("train rejects an even kernel radius before any compute") {
  auto& w = ws();
  fs::path cfg = w.base / "even_r.toml";
  fs::path out = w.base / "runs" / "even_r";
  std::string text = w.experiment_toml(out, 3, "[1]");
  size_t pos = text.find("r = 3");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 5, "r = 4");
  write_file(cfg, text);

  CmdResult r = run_cli("train --config " + cfg.string());
  CHECK(r.status == 2);
  CHECK(r.contains("error[validation]"));
  CHECK(r.contains("odd"));
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("fp mode without unlabeled volumes is a validation error") {
  auto& w = ws();
  fs::path cfg = w.base / "fp_empty.toml";
  write_file(cfg, w.experiment_toml(w.base / "runs" / "fp_empty", -1, "[1]",
                                    "mode = \"fp_semisup\"\n"
                                    "labeled_batch_size = 1\n"));
  CmdResult r = run_cli("train --config " + cfg.string());
  CHECK(r.status == 2);
  CHECK(r.contains("error[validation]"));
  CHECK(r.contains("unlabeled"));
}

TEST_CASE("fp mode trains when unlabeled volumes exist") {
  auto& w = ws();
  fs::path cfg = w.base / "fp.toml";
  fs::path out = w.base / "runs" / "fp";
  write_file(cfg, w.experiment_toml(out, 3, "[1]",
                                    "mode = \"fp_semisup\"\n"
                                    "labeled_batch_size = 1\n"));
  CmdResult r = run_cli("train --config " + cfg.string());
  CHECK(r.status == 0);
  json env = read_json(out / "result.json");
  CHECK(env.at("mode") == "fp_semisup");
  CHECK(env.at("un") == 5);
}

TEST_CASE("eval reproduces the metrics stored by train") {
  auto& w = ws();
  fs::path out = w.base / "evalout";
  CmdResult r = run_cli("eval --checkpoint " +
                        (w.train_out / "seed_1" / "final.ckpt").string() +
                        " --manifest " + w.manifest.string() + " --out " + out.string());
  REQUIRE(r.status == 0);
  CHECK(r.contains("mean dice="));

  auto lines = csv_lines(out / "eval.csv");
  REQUIRE(lines.size() == 4);  // header, two volumes, mean
  CHECK(lines[0] == "id,dice,jaccard,hd_mm,asd_mm");
  CHECK(lines[3].rfind("mean,", 0) == 0);

  json env = read_json(w.train_out / "result.json");
  const json& stored = env.at("result").at("runs").at(0).at("metrics");
  std::istringstream mean_row(lines[3].substr(5));
  std::string cell;
  std::getline(mean_row, cell, ',');
  CHECK(std::abs(std::stod(cell) - stored.at("dice").get<double>()) < 1e-6);
}

TEST_CASE("eval fails cleanly on a missing checkpoint") {
  auto& w = ws();
  CmdResult r = run_cli("eval --checkpoint " + (w.base / "no.ckpt").string() +
                        " --manifest " + w.manifest.string());
  CHECK(r.status == 3);
  CHECK(r.contains("error[runtime]"));
}

TEST_CASE("sweep writes one row per value and reruns byte identical") {
  auto& w = ws();
  fs::path cfg = w.base / "sweep.toml";
  fs::path out = w.base / "runs" / "sw";
  std::string text = w.experiment_toml(out, 3, "[1]");
  write_file(cfg, "[sweep]\naxis = \"kernel_r\"\nvalues = [1, 3]\n" + text);

  CmdResult r = run_cli("sweep --config " + cfg.string());
  REQUIRE(r.status == 0);
  auto lines = csv_lines(out / "sweep.csv");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "kernel_r,dice,jaccard,hd_mm,asd_mm,status");
  CHECK(lines[1].rfind("1,", 0) == 0);
  CHECK(lines[2].rfind("3,", 0) == 0);
  CHECK(lines[1].find(",ok") != std::string::npos);
  CHECK(fs::exists(out / "r_1" / "result.json"));
  CHECK(fs::exists(out / "r_3" / "result.json"));

  fs::path copy = w.base / "runs" / "sw_first";
  fs::copy(out, copy, fs::copy_options::recursive);
  CmdResult again = run_cli("sweep --config " + cfg.string() + " --resume");
  REQUIRE(again.status == 0);
  CHECK(trees_identical(out, copy));
}

TEST_CASE("single value sweep matches a plain train run") {
  auto& w = ws();
  fs::path cfg = w.base / "sweep_one.toml";
  fs::path out = w.base / "runs" / "sw_one";
  write_file(cfg, "[sweep]\naxis = \"kernel_r\"\nvalues = [3]\n" +
                      w.experiment_toml(out, 3, "[1, 2]"));
  CmdResult r = run_cli("sweep --config " + cfg.string());
  REQUIRE(r.status == 0);

  json from_sweep = read_json(out / "r_3" / "result.json");
  json from_train = read_json(w.train_out / "result.json");
  CHECK(from_sweep.at("result") == from_train.at("result"));
}

TEST_CASE("sweep refuses --parallel with --deterministic") {
  auto& w = ws();
  CmdResult r = run_cli("sweep --config " + (w.base / "sweep.toml").string() +
                        " --parallel --deterministic --out " +
                        (w.base / "runs" / "swx").string());
  CHECK(r.status == 2);
  CHECK(r.contains("error[validation]"));
  CHECK(r.contains("--parallel"));
}

TEST_CASE("sweep marks failing values and keeps going") {
  auto& w = ws();
  fs::path cfg = w.base / "sweep_fail.toml";
  fs::path out = w.base / "runs" / "sw_fail";
  write_file(cfg, "[sweep]\naxis = \"kernel_r\"\nvalues = [3, 19]\n" +
                      w.experiment_toml(out, 3, "[1]"));
  // Block the second value's run directory with a plain file.
  fs::create_directories(out);
  write_file(out / "r_19", "in the way\n");

  CmdResult r = run_cli("sweep --config " + cfg.string() + " --resume");
  REQUIRE(r.status == 0);
  auto lines = csv_lines(out / "sweep.csv");
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].rfind("3,", 0) == 0);
  CHECK(lines[1].find(",ok") != std::string::npos);
  CHECK(lines[2].rfind("19,", 0) == 0);
  CHECK(lines[2].find("error") != std::string::npos);
  CHECK(fs::exists(out / "r_3" / "result.json"));
}

TEST_CASE("report aggregates result envelopes") {
  auto& w = ws();
  fs::path out = w.base / "reportout";
  CmdResult r = run_cli("report --results " + (w.base / "runs").string() + " --out " +
                        out.string());
  REQUIRE(r.status == 0);
  CHECK(fs::exists(out / "report.csv"));
  CHECK(fs::exists(out / "report.txt"));

  auto lines = csv_lines(out / "report.csv");
  CHECK(lines[0].rfind("run_id,method,la,un,seeds,dice", 0) == 0);
  REQUIRE(lines.size() >= 3);

  bool smoke_row = false;
  for (const auto& line : lines)
    if (line.rfind("smoke,boundaryseg,3,5,2,", 0) == 0) smoke_row = true;
  CHECK(smoke_row);

  CHECK(r.contains("higher is better"));
  CHECK(fs::exists(out / "smoke_loss.png"));
  CHECK(fs::exists(out / "smoke_dice.png"));
  CHECK(slurp(out / "smoke_loss.png").rfind("\x89PNG\r\n\x1a\n", 0) == 0);
}

TEST_CASE("report with no results is a validation error") {
  auto& w = ws();
  fs::path empty = w.base / "no_results";
  fs::create_directories(empty);
  CmdResult r = run_cli("report --results " + empty.string());
  CHECK(r.status == 2);
  CHECK(r.contains("no results found"));
}

TEST_CASE("usage errors exit with the validation code") {
  CHECK(run_cli("").status == 2);
  CHECK(run_cli("frobnicate").status == 2);
  CHECK(run_cli("train").status == 2);
  CmdResult help = run_cli("--help");
  CHECK(help.status == 0);
  CHECK(help.contains("train"));
  CHECK(help.contains("sweep"));
}

TEST_CASE("config parse errors point at the offending line") {
  auto& w = ws();
  fs::path cfg = w.base / "broken.toml";
  write_file(cfg, "[experiment]\nmanifest = \"m\"\nout = = \"o\"\n");
  CmdResult r = run_cli("train --config " + cfg.string());
  CHECK(r.status == 2);
  CHECK(r.contains("line 3"));
}
