// fps: command-line driver for statistics collection, parameter selection,
// masked fine-tuning and strategy comparisons.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fps/alloc_meter.hpp"
#include "fps/autograd.hpp"
#include "fps/errors.hpp"
#include "fps/harness/comparison.hpp"
#include "fps/harness/config.hpp"
#include "fps/harness/report.hpp"
#include "fps/hash.hpp"
#include "fps/selector.hpp"
#include "fps/stats.hpp"
#include "fps/trainer.hpp"
#include "fps/version.hpp"

namespace fs = std::filesystem;
using namespace fps;
using namespace fps::harness;

namespace {

constexpr const char* kOutputRootVar = "FPS_OUT_DIR";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output file")->required();
}

// Relative output paths land under $FPS_OUT_DIR when it is set.
fs::path output_path(const std::string& out) {
  fs::path p(out);
  if (const char* root = std::getenv(kOutputRootVar); root && *root && p.is_relative()) {
    p = fs::path(root) / p;
  }
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
  }
  return p;
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.reseed(*c.seed);
  return cfg;
}

Strategy pick_strategy(const ExperimentConfig& cfg, const std::string& name) {
  if (!name.empty()) return parse_strategy(name);
  if (!cfg.strategies.empty()) return cfg.strategies.front();
  return parse_strategy("fps-l1-neuron");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

fs::path curves_path(const fs::path& out, const std::string& tag) {
  fs::path p = out;
  p.replace_extension();
  return p.string() + (tag.empty() ? "" : "." + tag) + ".curves.csv";
}

void write_curves(const fs::path& path, const TrainResult& result) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_curves_csv(result, out);
}

int cmd_init_model(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const Experiment ex = prepare_experiment(cfg);
  const fs::path out = output_path(c.out);
  ex.model.save(out);
  std::cout << "model " << to_hex(ex.model.hash()) << " ("
            << ex.model.parameter_count() << " parameters) -> " << out.string() << "\n";
  return 0;
}

int cmd_collect_stats(const Common& c) {
  const ExperimentConfig cfg = load(c);
  Experiment ex = prepare_experiment(cfg);
  const ActivationStats stats = with_grad_disabled(
      [&] { return collect(ex.model, ex.data.train, cfg.selection.batch_size); });
  const fs::path out = output_path(c.out);
  stats.save(out);
  std::cout << "stats for " << stats.neuron_count() << " input neurons over "
            << ex.data.train.size() << " samples -> " << out.string() << "\n";
  return 0;
}

int cmd_select(const Common& c, const std::string& strategy_name,
               const std::string& stats_path) {
  const ExperimentConfig cfg = load(c);
  Experiment ex = prepare_experiment(cfg);
  const Strategy strategy = pick_strategy(cfg, strategy_name);

  SelectionMask mask;
  if (!stats_path.empty()) {
    if (strategy.kind != StrategyKind::kFps) {
      throw ConfigError("--stats only applies to fps strategies");
    }
    const ActivationStats stats = ActivationStats::load(stats_path);
    mask = with_grad_disabled([&] {
      const ImportanceScore scores =
          score_fps(ex.model, stats, strategy.norm, strategy.use_weight_magnitude);
      return select(scores, cfg.budget, strategy.scheme);
    });
  } else {
    const SelectionRun run =
        run_selection(ex.model, ex.data.train, strategy, cfg.budget,
                      cfg.selection, cfg.seed, cfg.timing_repetitions);
    mask = run.mask;
    std::cout << "selection peak " << run.peak_bytes << " bytes, tape peak "
              << run.tape_peak_bytes << " bytes, " << run.select_ms << " ms\n";
  }
  const fs::path out = output_path(c.out);
  save_mask(mask, out);
  std::cout << strategy.name << ": " << mask.k() << " parameters -> "
            << out.string() << "\n";
  return 0;
}

int cmd_finetune(const Common& c, const std::string& mask_path) {
  const ExperimentConfig cfg = load(c);
  Experiment ex = prepare_experiment(cfg);
  const SelectionMask mask = load_mask(mask_path);
  const TrainResult result =
      finetune(ex.model, mask, ex.data.train, ex.data.val, cfg.train);
  const fs::path out = output_path(c.out);
  write_text(out, to_json(result));
  write_curves(curves_path(out, ""), result);
  std::cout << "val accuracy " << result.val_accuracy << ", l0 "
            << result.l0_non_head << " <= k " << result.budget_k << " -> "
            << out.string() << "\n";
  return 0;
}

int cmd_compare(const Common& c, const std::string& format) {
  const ExperimentConfig cfg = load(c);
  RunReport report = run_comparison(cfg);
  const fs::path out = output_path(c.out);
  for (StrategyResult& r : report.results) {
    if (!r.ok()) continue;
    const fs::path curves = curves_path(out, r.strategy);
    write_curves(curves, r.train);
    r.curves = curves.filename().string();
  }
  const ReportFormat fmt = format.empty()
                               ? (out.extension() == ".csv" ? ReportFormat::kCsv
                                                            : ReportFormat::kJson)
                               : parse_report_format(format);
  emit_report(report, fmt, out);
  for (const StrategyResult& r : report.results) {
    if (r.ok()) {
      std::cout << r.strategy << ": acc " << r.accuracy << ", k " << r.k
                << ", peak " << r.peak_bytes << " B, " << r.select_ms << " ms\n";
    } else {
      std::cout << r.strategy << ": failed [" << r.error_category << "] "
                << r.error << "\n";
    }
  }
  return 0;
}

int cmd_report(const Common& c, const std::string& in, const std::string& format) {
  const RunReport report = load_report(in);
  emit_report(report, parse_report_format(format), output_path(c.out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedforward-based parameter selection toolkit"};
  app.set_version_flag("--version", std::string(fps::kVersion));
  app.require_subcommand(1);

  Common common;
  std::string strategy, stats, mask, in, compare_format, report_format;

  auto* init = app.add_subcommand("init-model", "build theta_0 and write a checkpoint");
  add_common(init, common, true);

  auto* collect_cmd = app.add_subcommand("collect-stats", "stream the train split and save activation statistics");
  add_common(collect_cmd, common, true);

  auto* select_cmd = app.add_subcommand("select", "produce a selection mask");
  add_common(select_cmd, common, true);
  select_cmd->add_option("--strategy", strategy, "strategy name, e.g. fps-l1-neuron");
  select_cmd->add_option("--stats", stats, "reuse a saved statistics file");

  auto* finetune_cmd = app.add_subcommand("finetune", "train a mask and write the result");
  add_common(finetune_cmd, common, true);
  finetune_cmd->add_option("--mask", mask, "mask file")->required();

  auto* compare_cmd = app.add_subcommand("compare", "run every configured strategy");
  add_common(compare_cmd, common, true);
  compare_cmd->add_option("--format", compare_format, "csv or json (default: from --out)");

  auto* report_cmd = app.add_subcommand("report", "convert a JSON run report");
  add_common(report_cmd, common, false);
  report_cmd->add_option("--in", in, "JSON run report")->required();
  report_cmd->add_option("--format", report_format, "csv or json")->default_val("csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::kConfig);
  }

  try {
    if (*init) return cmd_init_model(common);
    if (*collect_cmd) return cmd_collect_stats(common);
    if (*select_cmd) return cmd_select(common, strategy, stats);
    if (*finetune_cmd) return cmd_finetune(common, mask);
    if (*compare_cmd) return cmd_compare(common, compare_format);
    if (*report_cmd) return cmd_report(common, in, report_format);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
