#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "fps/harness/report.hpp"
#include "fps/selector.hpp"
#include "fps/stats.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "fps_test_cli";
    fs::remove_all(d);
    fs::create_directories(d / "out");
    return d;
  }();
  return dir;
}

struct Run {
  int code;
  std::string err;
};

// Runs the CLI with FPS_OUT_DIR pointing at workdir()/out.
Run fps_cli(const std::string& args) {
  const fs::path err = workdir() / "stderr.txt";
  const std::string cmd = "FPS_OUT_DIR='" + (workdir() / "out").string() + "' '" +
                          std::string(FPS_CLI_PATH) + "' " + args + " >/dev/null 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  std::ifstream in(err);
  std::stringstream text;
  text << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

std::string write_config(const std::string& name, const std::string& body) {
  const fs::path p = workdir() / name;
  std::ofstream(p) << body;
  return p.string();
}

const char* kConfig = R"({
  "seed": 4,
  "model": {"arch": "mlp", "dims": [6, 10, 3]},
  "dataset": {"source": "synthetic-gaussian-classes", "samples": 90,
              "features": 6, "classes": 3},
  "budget": {"fraction": 0.25},
  "train": {"epochs": 2, "batch_size": 16},
  "strategies": ["fps-l1-neuron", "gps", "random"]
})";

}  // namespace

TEST_CASE("version and usage errors") {
  CHECK(fps_cli("--version").code == 0);
  const Run none = fps_cli("");
  CHECK(none.code == 2);
  CHECK(fps_cli("select --out x.mask").code == 2);  // --config missing
}

TEST_CASE("pipeline: stats, select, finetune") {
  const std::string cfg = write_config("cfg.json", kConfig);
  REQUIRE(fps_cli("collect-stats --config " + cfg + " --out stats.json").code == 0);
  const fs::path out = workdir() / "out";
  REQUIRE(fs::exists(out / "stats.json"));

  REQUIRE(fps_cli("select --config " + cfg + " --stats " + (out / "stats.json").string() +
                  " --out from_stats.mask").code == 0);
  REQUIRE(fps_cli("select --config " + cfg + " --strategy fps-l1-neuron --out direct.mask")
              .code == 0);
  const fps::SelectionMask a = fps::load_mask(out / "from_stats.mask");
  const fps::SelectionMask b = fps::load_mask(out / "direct.mask");
  CHECK(a == b);
  CHECK(a.k() == 18);  // round(0.25 * (6*10 + 10)) = round(17.5)

  REQUIRE(fps_cli("finetune --config " + cfg + " --mask " + (out / "direct.mask").string() +
                  " --out tuned/result.json").code == 0);
  CHECK(fs::exists(out / "tuned" / "result.json"));
  CHECK(fs::exists(out / "tuned" / "result.curves.csv"));

  // A different seed means a different model: the stats no longer apply.
  const Run stale = fps_cli("select --config " + cfg + " --seed 99 --stats " +
                            (out / "stats.json").string() + " --out stale.mask");
  CHECK(stale.code == 5);
  CHECK(stale.err.rfind("error[contract]", 0) == 0);
}

TEST_CASE("compare and report") {
  const std::string cfg = write_config("cfg.json", kConfig);
  REQUIRE(fps_cli("compare --config " + cfg + " --out run.json").code == 0);
  const fs::path out = workdir() / "out";
  const auto report = fps::harness::load_report(out / "run.json");
  REQUIRE(report.results.size() == 3);
  CHECK(fs::exists(out / report.results[0].curves));

  REQUIRE(fps_cli("report --in " + (out / "run.json").string() + " --format csv --out run.csv")
              .code == 0);
  std::ifstream csv(out / "run.csv");
  std::stringstream text;
  text << csv.rdbuf();
  CHECK(fps::harness::parse_report_csv(text.str()) == fps::harness::report_rows(report));
}

TEST_CASE("errors map to categories and exit codes") {
  const std::string typo = write_config(
      "typo.json", R"({"model": {"arch": "mlp", "dims": [2, 2]},
        "dataset": {"source": "csv-file", "csv": "x.csv"}, "budgte": {}})");
  const Run config = fps_cli("compare --config " + typo + " --out r.json");
  CHECK(config.code == 2);
  CHECK(config.err.rfind("error[config]", 0) == 0);

  const std::string cfg = write_config("cfg.json", kConfig);
  const Run io = fps_cli("finetune --config " + cfg + " --mask /nonexistent.mask --out r.json");
  CHECK(io.code == 4);
  CHECK(io.err.rfind("error[io]", 0) == 0);

  const std::string garbage = (workdir() / "garbage.mask").string();
  std::ofstream(garbage) << "fps-mask v1\nmodel_hash: nothex\n";
  const Run parse = fps_cli("finetune --config " + cfg + " --mask " + garbage + " --out r.json");
  CHECK(parse.code == 3);
  CHECK(parse.err.rfind("error[parse]", 0) == 0);
}
