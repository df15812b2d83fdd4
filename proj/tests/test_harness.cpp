#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fps/alloc_meter.hpp"
#include "fps/errors.hpp"
#include "fps/harness/comparison.hpp"
#include "fps/harness/config.hpp"
#include "fps/harness/csv.hpp"
#include "fps/harness/idx.hpp"
#include "fps/harness/ingest.hpp"
#include "fps/harness/planted.hpp"
#include "fps/harness/report.hpp"

using namespace fps;
using namespace fps::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "fps_test_harness";
  fs::create_directories(dir);
  return dir;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

// n images of rows x cols with pixel (i, p) = (i + p) % 256, labels i % 10.
void write_idx_pair(const fs::path& images, const fs::path& labels, std::uint32_t n,
                    std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> img;
  put_be32(img, kIdxImagesMagic);
  put_be32(img, n);
  put_be32(img, rows);
  put_be32(img, cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t p = 0; p < rows * cols; ++p) img.push_back(std::uint8_t((i + p) % 256));
  }
  write_bytes(images, img);
  std::vector<std::uint8_t> lab;
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, n);
  for (std::uint32_t i = 0; i < n; ++i) lab.push_back(std::uint8_t(i % 10));
  write_bytes(labels, lab);
}

ExperimentConfig small_config() {
  return parse_config(R"({
    "seed": 3,
    "model": {"arch": "mlp", "dims": [8, 12, 3]},
    "dataset": {"source": "synthetic-gaussian-classes", "samples": 120,
                "features": 8, "classes": 3},
    "budget": {"fraction": 0.2},
    "train": {"epochs": 3, "batch_size": 16},
    "strategies": ["fps-l1-neuron", "fps-l2-neuron", "gps", "random", "bias", "linear"]
  })");
}

}  // namespace

TEST_CASE("csv: quoting, CRLF, BOM and blank lines") {
  const CsvTable t = parse_csv("\xEF\xBB\xBF" "a,b,c\r\n1,\"x, y\",\"say \"\"hi\"\"\"\r\n\r\n2,,3\n");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0] == std::vector<std::string>{"1", "x, y", "say \"hi\""});
  CHECK(t.rows[1] == std::vector<std::string>{"2", "", "3"});
  CHECK(t.column("c") == 2);
  CHECK_THROWS_AS(t.column("zz"), DataError);

  const CsvTable multi = parse_csv("k\n\"two\nlines\"");
  CHECK(multi.rows[0][0] == "two\nlines");

  for (std::string s : {std::string("plain"), std::string("a,b"), std::string("q\"q"),
                        std::string("line\nbreak")}) {
    const CsvTable rt = parse_csv("h\n" + csv_field(s) + "\n");
    CHECK(rt.rows[0][0] == s);
  }
}

TEST_CASE("csv: malformed input carries a byte offset") {
  auto offset = [](std::string_view text) -> std::size_t {
    try {
      parse_csv(text);
    } catch (const ParseError& e) {
      return e.byte_offset();
    }
    FAIL("expected ParseError");
    return 0;
  };
  CHECK(offset("a,b\n1,2\n3\n") == 8);
  CHECK(offset("a\n\"open") == 7);
  CHECK(offset("a\nx\"y\n") == 3);
  CHECK(offset("") == 0);
}

TEST_CASE("idx: 100 images of 28x28 split 80/20") {
  const fs::path dir = scratch_dir();
  write_idx_pair(dir / "img.idx", dir / "lab.idx", 100, 28, 28);
  DatasetSpec spec;
  spec.source = DataSource::kIdxFilePair;
  spec.images = dir / "img.idx";
  spec.labels = dir / "lab.idx";
  spec.split = {0.8, 0.2, 0.0};
  spec.standardize = false;
  const DataSplits s = ingest(spec);
  CHECK(s.train.features.shape() == Shape{80, 784});
  CHECK(s.val.features.shape() == Shape{20, 784});
  CHECK(s.train.num_classes == 10);

  const Dataset raw = load_idx_pair(dir / "img.idx", dir / "lab.idx");
  CHECK(raw.features.data()[0] == 0.0);
  CHECK(raw.features.data()[784 + 255] == 0.0);       // (1 + 255) % 256
  CHECK(raw.features.data()[784 + 254] == 1.0);       // 255 / 255
  CHECK(raw.features.data()[3] == doctest::Approx(3.0 / 255.0));
  CHECK(raw.labels[13] == 3);
}

TEST_CASE("idx: magic, truncation and mismatched counts") {
  const fs::path dir = scratch_dir();
  write_idx_pair(dir / "img.idx", dir / "lab.idx", 4, 2, 2);
  // Swapped files: the label magic is checked.
  try {
    load_idx_pair(dir / "lab.idx", dir / "img.idx");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() == 0);
  }

  std::vector<std::uint8_t> bytes;
  put_be32(bytes, kIdxImagesMagic);
  put_be32(bytes, 2);
  put_be32(bytes, 2);
  put_be32(bytes, 2);
  bytes.insert(bytes.end(), 7, 1);  // one byte short
  try {
    parse_idx(bytes, kIdxImagesMagic);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() == 16 + 7);
  }
  const std::vector<std::uint8_t> stub{0, 0, 8};
  CHECK_THROWS_AS(parse_idx(stub, kIdxImagesMagic), ParseError);

  write_idx_pair(dir / "img5.idx", dir / "lab5.idx", 5, 2, 2);
  CHECK_THROWS_AS(load_idx_pair(dir / "img.idx", dir / "lab5.idx"), DataError);
  CHECK_THROWS_AS(load_idx_pair(dir / "missing.idx", dir / "lab.idx"), IoError);
}

TEST_CASE("gaussian classes: size, labels, determinism") {
  DatasetSpec spec;
  spec.source = DataSource::kSyntheticGaussianClasses;
  spec.samples = 60;
  spec.features = 4;
  spec.classes = 3;
  spec.seed = 11;
  const DataSplits a = ingest(spec);
  CHECK(a.train.size() + a.val.size() == 60);
  std::set<int> labels(a.train.labels.begin(), a.train.labels.end());
  labels.insert(a.val.labels.begin(), a.val.labels.end());
  CHECK(labels == std::set<int>{0, 1, 2});

  const DataSplits b = ingest(spec);
  CHECK(a.train_index == b.train_index);
  CHECK(a.train.features.to_vector() == b.train.features.to_vector());
  spec.seed = 12;
  CHECK(ingest(spec).train_index != a.train_index);
}

TEST_CASE("splits are disjoint and standardization uses train only") {
  const Dataset all = make_gaussian_classes(101, 5, 2, 2.0, 4);
  const DataSplits s = split_dataset(all, {0.6, 0.3, 0.1}, 9, true);
  CHECK(s.train.size() == 61);
  CHECK(s.val.size() == 30);
  CHECK(s.test.size() == 10);
  std::set<std::size_t> seen;
  for (const auto* idx : {&s.train_index, &s.val_index, &s.test_index}) {
    for (std::size_t i : *idx) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 101);

  // Train features have mean 0 and unit variance; the fit ignored val/test.
  const Standardization refit = Standardization::fit(all.subset(s.train_index));
  CHECK(refit.mean == s.standardization.mean);
  CHECK(refit.scale == s.standardization.scale);
  const auto x = s.train.features.to_vector();
  for (std::size_t f = 0; f < 5; ++f) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 61; ++i) mean += x[i * 5 + f];
    mean /= 61;
    for (std::size_t i = 0; i < 61; ++i) sq += (x[i * 5 + f] - mean) * (x[i * 5 + f] - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(sq / 61 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("csv dataset ingestion") {
  const Dataset d = parse_csv_dataset("f1,label,f2\n0.5,1,2\n-1,0,3e2\n", "label");
  CHECK(d.features.shape() == Shape{2, 2});
  CHECK(d.features.to_vector() == std::vector<double>{0.5, 2, -1, 300});
  CHECK(d.labels == std::vector<int>{1, 0});
  CHECK(d.num_classes == 2);
  CHECK_THROWS_AS(parse_csv_dataset("f1,label\nabc,1\n", "label"), DataError);
  CHECK_THROWS_AS(parse_csv_dataset("f1,label\n1,1.5\n", "label"), DataError);
  CHECK_THROWS_AS(parse_csv_dataset("f1,y\n1,1\n", "label"), DataError);
  CHECK_THROWS_AS(parse_csv_dataset("f1,label\n1,1,2\n", "label"), ParseError);
}

TEST_CASE("planted task construction") {
  PlantedSpec spec;
  spec.architecture = MlpConfig{{20, 16, 16, 4}};
  spec.model_seed = 1;
  spec.data_seed = 2;
  spec.plant_fraction = 0.02;
  spec.samples = 100;
  spec.active_features = 5;
  const PlantedTask t = make_planted_task(spec);
  const std::size_t eligible = t.student.eligible_parameter_count();
  CHECK(t.planted.size() == std::size_t(std::llround(0.02 * double(eligible))));
  CHECK(t.data.size() == 100);
  for (const auto& a : t.planted) {
    CHECK_FALSE(a.is_bias());
    CHECK(t.student.is_eligible(a));
    CHECK(std::abs(t.teacher.parameter(a) - t.student.parameter(a)) == doctest::Approx(2.0));
    if (a.layer_id == 0) CHECK(a.in_index < 5);
  }
  const auto x = t.data.features.to_vector();
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t f = 5; f < 20; ++f) CHECK(x[i * 20 + f] == 0.0);
  }

  SelectionMask oracle;
  oracle.model_hash = t.student.hash();
  oracle.addresses = t.planted;
  oracle.budget = t.planted.size();
  CHECK(recovery_rate(oracle, t.planted) == 1.0);

  spec.plant_fraction = 0.06;
  CHECK_THROWS_AS(make_planted_task(spec), ContractError);
  spec.plant_fraction = 0.0;
  CHECK_THROWS_AS(make_planted_task(spec), ContractError);
}

TEST_CASE("a null plant leaves nothing to learn beyond the untuned model") {
  PlantedSpec spec;
  spec.architecture = MlpConfig{{10, 12, 3}};
  spec.shift_magnitude = 0.0;
  spec.samples = 80;
  const PlantedTask t = make_planted_task(spec);
  CHECK(t.teacher.parameter_hash() == t.student.parameter_hash());
  CHECK(evaluate(t.student, t.data) == 1.0);
}

TEST_CASE("config: strict keys, seeds and strategies") {
  const ExperimentConfig c = small_config();
  CHECK(c.seed == 3);
  CHECK(c.dataset.seed == 3);
  CHECK(c.train.seed == 3);
  CHECK(c.train.epochs == 3);
  CHECK(c.budget.is_fraction());
  REQUIRE(c.strategies.size() == 6);
  CHECK(c.strategies[1].norm == Norm::kL2);
  CHECK(c.strategies[2].kind == StrategyKind::kGps);

  ExperimentConfig r = c;
  r.reseed(9);
  CHECK(r.dataset.seed == 9);
  CHECK(r.train.seed == 9);

  CHECK_THROWS_AS(parse_config(R"({"model": {"arch": "mlp", "dims": [2, 2]},
      "dataset": {"source": "csv-file", "csv": "x.csv"}, "trian": {}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"arch": "mlp", "dims": [2, 2], "depth": 3},
      "dataset": {"source": "csv-file", "csv": "x.csv"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"arch": "mlp", "dims": [2, 2]},
      "dataset": {"source": "csv-file", "csv": "x.csv"}, "train": {"epochs": "ten"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"arch": "mlp", "dims": [2, 2]},
      "dataset": {"source": "csv-file", "csv": "x.csv"}, "budget": {"k": 3, "fraction": 0.1}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("{ not json"), ParseError);

  const Strategy act = parse_strategy("fps-act-l2-layer");
  CHECK_FALSE(act.use_weight_magnitude);
  CHECK(act.scheme == Scheme::kLayerLevel);
  CHECK(act.variant() == "fps-act-l2");
  CHECK(parse_strategy("gps-layer").scheme == Scheme::kLayerLevel);
  CHECK_THROWS_AS(parse_strategy("fps-l3-neuron"), ConfigError);
  CHECK_THROWS_AS(parse_strategy("magic"), ConfigError);
}

TEST_CASE("selection metering sees only the selection stage") {
  ExperimentConfig cfg = small_config();
  const Experiment ex = prepare_experiment(cfg);

  Model fps_model = ex.model.clone();
  auto outer = std::make_shared<AllocationMeter>();
  ScopedMeter scope(outer);
  const SelectionRun fps_run = run_selection(fps_model, ex.data.train,
                                             parse_strategy("fps-l1-neuron"),
                                             cfg.budget, cfg.selection, 1);
  // Nothing allocated during selection was charged to the caller's meter.
  CHECK(outer->peak_live_bytes() == 0);
  CHECK(fps_run.tape_peak_bytes == 0);
  CHECK(fps_run.peak_bytes > 0);

  Model gps_model = ex.model.clone();
  const SelectionRun gps_run = run_selection(gps_model, ex.data.train, parse_strategy("gps"),
                                             cfg.budget, cfg.selection, 1);
  CHECK(gps_run.tape_peak_bytes > 0);
  CHECK(fps_run.peak_bytes < gps_run.peak_bytes);

  // Tuning afterwards never touches the selection numbers.
  const SelectionRun again = run_selection(fps_model, ex.data.train,
                                           parse_strategy("fps-l1-neuron"),
                                           cfg.budget, cfg.selection, 1);
  finetune(fps_model, again.mask, ex.data.train, ex.data.val, cfg.train);
  CHECK(again.peak_bytes == fps_run.peak_bytes);
}

TEST_CASE("comparison: fairness, baselines and determinism") {
  const ExperimentConfig cfg = small_config();
  const RunReport a = run_comparison(cfg);
  REQUIRE(a.results.size() == 6);
  for (const auto& r : a.results) {
    CAPTURE(r.strategy);
    CHECK(r.ok());
    CHECK(r.train.l0_non_head <= r.k);
  }
  CHECK(a.at("fps-l1-neuron").k == a.budget_k);
  CHECK(a.at("random").k == a.budget_k);
  CHECK(a.at("gps").k == a.budget_k);
  CHECK(a.at("linear").k == 0);
  CHECK(a.at("bias").variant == "bias-only");
  CHECK(a.at("gps").tape_peak_bytes > 0);
  CHECK(a.at("fps-l1-neuron").tape_peak_bytes == 0);

  const RunReport b = run_comparison(cfg);
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    CHECK(a.results[i].mask == b.results[i].mask);
    CHECK(a.results[i].accuracy == b.results[i].accuracy);
    CHECK(a.results[i].train == b.results[i].train);
  }

  ExperimentConfig par = cfg;
  par.parallel = true;
  const RunReport c = run_comparison(par);
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    CHECK(a.results[i].mask == c.results[i].mask);
    CHECK(a.results[i].accuracy == c.results[i].accuracy);
    CHECK(a.results[i].peak_bytes == c.results[i].peak_bytes);
  }
}

TEST_CASE("comparison: single-sample data makes l1 and l2 agree") {
  ExperimentConfig cfg = small_config();
  const Experiment full = prepare_experiment(cfg);
  Experiment one{full.model.clone(), full.data, {}};
  one.data.train = full.data.train.subset(std::vector<std::size_t>{0});
  cfg.strategies = {parse_strategy("fps-l1-neuron"), parse_strategy("fps-l2-neuron")};
  const RunReport r = run_comparison(cfg, one);
  CHECK(r.results[0].mask.addresses == r.results[1].mask.addresses);
  CHECK(r.results[0].accuracy == r.results[1].accuracy);
}

TEST_CASE("comparison: a failing strategy is recorded, the rest continue") {
  ExperimentConfig cfg = small_config();
  cfg.budget = BudgetSpec::absolute(3);  // below one pick per neuron
  cfg.strategies = {parse_strategy("fps-l1-neuron"), parse_strategy("random")};
  const RunReport r = run_comparison(cfg);
  CHECK(r.results[0].status == "failed");
  CHECK(r.results[0].error_category == "contract");
  CHECK(r.results[0].k == 0);
  CHECK(r.results[1].ok());

  cfg.strategies.pop_back();
  CHECK_THROWS_AS(run_comparison(cfg), ConfigError);
}

TEST_CASE("report: CSV round-trip, failed rows, JSON round-trip") {
  ExperimentConfig cfg = small_config();
  cfg.strategies = {parse_strategy("fps-l1-neuron"), parse_strategy("gps")};
  RunReport report = run_comparison(cfg);
  report.results[1] = StrategyResult{};
  report.results[1].strategy = "gps";
  report.results[1].variant = "gps";
  report.results[1].status = "failed";
  report.results[1].error_category = "numeric";
  report.results[0].curves = "run.fps-l1-neuron.curves.csv";

  std::ostringstream csv;
  write_report_csv(report, csv);
  const std::string text = csv.str();
  CHECK(text.substr(0, text.find('\n')) == kReportColumns);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(text.find("gps,gps,,,,,failed,,,") != std::string::npos);
  CHECK(parse_report_csv(text) == report_rows(report));

  const RunReport back = report_from_json(report_to_json(report));
  CHECK(report_rows(back) == report_rows(report));
  CHECK(back.model_hash == report.model_hash);
  CHECK(back.results[0].train == report.results[0].train);
  CHECK(back.results[0].mask_digest == mask_digest(report.results[0].mask));

  const fs::path dir = scratch_dir();
  emit_report(report, ReportFormat::kJson, dir / "nested" / "r.json");
  CHECK(report_rows(load_report(dir / "nested" / "r.json")) == report_rows(report));
  fs::create_directories(dir / "blocker");
  CHECK_THROWS_AS(emit_report(report, ReportFormat::kCsv, dir / "blocker"), IoError);
  CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
}
