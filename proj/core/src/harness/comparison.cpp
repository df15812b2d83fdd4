#include "fps/harness/comparison.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <thread>

#include "fps/alloc_meter.hpp"
#include "fps/autograd.hpp"
#include "fps/errors.hpp"
#include "fps/harness/planted.hpp"
#include "fps/hash.hpp"

namespace fps::harness {

const StrategyResult& RunReport::at(std::string_view strategy) const {
  for (const StrategyResult& r : results) {
    if (r.strategy == strategy) return r;
  }
  throw ContractError("report has no strategy '" + std::string(strategy) + "'");
}

std::string mask_digest(const SelectionMask& mask) {
  ContentHash h;
  for (const ParameterAddress& a : mask.addresses) h.update(a.flat());
  return to_hex(h.digest());
}

Experiment prepare_experiment(const ExperimentConfig& cfg) {
  const DatasetSpec& ds = cfg.dataset;
  if (ds.source == DataSource::kSyntheticPlanted) {
    if (!cfg.model.checkpoint.empty()) {
      throw ConfigError("the planted source builds its own model; drop model.checkpoint");
    }
    PlantedSpec spec;
    spec.architecture = cfg.model.architecture;
    spec.model_seed = cfg.seed;
    spec.plant_fraction = ds.plant_fraction;
    spec.shift_magnitude = ds.shift_magnitude;
    spec.data_seed = ds.seed;
    spec.samples = ds.samples;
    spec.active_features = ds.active_features;
    PlantedTask task = make_planted_task(spec);
    DataSplits splits = split_dataset(task.data, ds.split, ds.seed, false);
    return Experiment{std::move(task.student), std::move(splits),
                      std::move(task.planted)};
  }

  Model model = cfg.model.checkpoint.empty()
                    ? build_model(cfg.model.architecture, cfg.seed)
                    : Model::load(cfg.model.checkpoint);
  DataSplits splits = ingest(ds);
  if (splits.train.feature_size() != model.input_size()) {
    throw DimensionError("dataset has " + std::to_string(splits.train.feature_size()) +
                         " features, model expects " +
                         std::to_string(model.input_size()));
  }
  if (splits.train.num_classes > model.num_classes()) {
    throw DataError("dataset has " + std::to_string(splits.train.num_classes) +
                    " classes, model head has " +
                    std::to_string(model.num_classes()));
  }
  return Experiment{std::move(model), std::move(splits), {}};
}

namespace {

SelectionMask select_once(Model& model, const Dataset& train,
                          const Strategy& strategy, const BudgetSpec& budget,
                          const SelectionSettings& settings, std::uint64_t seed) {
  switch (strategy.kind) {
    case StrategyKind::kFps: {
      FpsOptions options;
      options.norm = strategy.norm;
      options.use_weight_magnitude = strategy.use_weight_magnitude;
      options.scheme = strategy.scheme;
      options.batch_size = settings.batch_size;
      return select_fps(model, train, budget, options);
    }
    case StrategyKind::kGps: {
      GpsOptions options;
      options.batch_size = settings.batch_size;
      options.accumulation = settings.accumulation;
      const ImportanceScore scores = score_gps(model, train, options);
      return select(scores, budget, strategy.scheme);
    }
    case StrategyKind::kRandom:
      return select_baseline(BaselineKind::kRandom, model, budget, seed);
    case StrategyKind::kBiasOnly:
      return select_baseline(BaselineKind::kBiasOnly, model, budget, seed);
    case StrategyKind::kLinearHeadOnly:
      return select_baseline(BaselineKind::kLinearHeadOnly, model, budget, seed);
  }
  throw ContractError("unknown strategy kind");
}

}  // namespace

SelectionRun run_selection(Model& model, const Dataset& train,
                           const Strategy& strategy, const BudgetSpec& budget,
                           const SelectionSettings& settings, std::uint64_t seed,
                           std::size_t repetitions) {
  if (repetitions == 0) throw ContractError("repetitions must be positive");
  SelectionRun run;
  std::vector<double> times;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    auto meter = std::make_shared<AllocationMeter>();
    SelectionMask mask;
    double ms = 0.0;
    {
      ScopedMeter scope(meter);
      meter->reset_peak();
      const auto start = std::chrono::steady_clock::now();
      mask = select_once(model, train, strategy, budget, settings, seed);
      const auto stop = std::chrono::steady_clock::now();
      ms = std::chrono::duration<double, std::milli>(stop - start).count();
    }
    times.push_back(ms);
    run.peak_bytes = std::max(run.peak_bytes, meter->peak_above_baseline());
    run.tape_peak_bytes = std::max(run.tape_peak_bytes, meter->tape_peak_bytes());
    if (rep == 0) run.mask = std::move(mask);
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  run.select_ms = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  return run;
}

namespace {

StrategyResult run_strategy(const ExperimentConfig& cfg, const Experiment& ex,
                            const Strategy& strategy) {
  StrategyResult r;
  r.strategy = strategy.name;
  r.variant = strategy.variant();
  try {
    Model model = ex.model.clone();
    const SelectionRun sel =
        run_selection(model, ex.data.train, strategy, cfg.budget, cfg.selection,
                      cfg.seed, cfg.timing_repetitions);
    r.mask = sel.mask;
    r.k = sel.mask.k();
    r.peak_bytes = sel.peak_bytes;
    r.tape_peak_bytes = sel.tape_peak_bytes;
    r.select_ms = sel.select_ms;
    r.mask_digest = mask_digest(sel.mask);
    if (!ex.planted.empty()) r.recovery_rate = recovery_rate(sel.mask, ex.planted);

    // Tuning runs under its own meter so it can never touch selection numbers.
    ScopedMeter tuning(std::make_shared<AllocationMeter>());
    r.train = finetune(model, sel.mask, ex.data.train, ex.data.val, cfg.train);
    r.accuracy = r.train.val_accuracy;
    if (!ex.data.test.empty()) r.test_accuracy = evaluate(model, ex.data.test);
  } catch (const Error& e) {
    r.status = "failed";
    r.error_category = std::string(category_name(e.category()));
    r.error = e.what();
  } catch (const std::exception& e) {
    r.status = "failed";
    r.error_category = "internal";
    r.error = e.what();
  }
  if (!r.ok()) {
    // Failed rows carry no metrics.
    StrategyResult failed;
    failed.strategy = r.strategy;
    failed.variant = r.variant;
    failed.status = r.status;
    failed.error_category = r.error_category;
    failed.error = r.error;
    return failed;
  }
  return r;
}

}  // namespace

RunReport run_comparison(const ExperimentConfig& cfg, const Experiment& ex) {
  if (cfg.strategies.size() < 2) {
    throw ConfigError("a comparison needs at least two strategies");
  }
  RunReport report;
  report.model_hash = ex.model.hash();
  report.model_seed = cfg.seed;
  report.dataset_seed = cfg.dataset.seed;
  report.dataset_source = std::string(to_string(cfg.dataset.source));
  report.budget_k = cfg.budget.resolve(ex.model.eligible_parameter_count());
  report.results.resize(cfg.strategies.size());

  if (cfg.parallel) {
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
      workers.emplace_back([&, i] {
        report.results[i] = run_strategy(cfg, ex, cfg.strategies[i]);
      });
    }
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
      report.results[i] = run_strategy(cfg, ex, cfg.strategies[i]);
    }
  }
  return report;
}

RunReport run_comparison(const ExperimentConfig& cfg) {
  if (cfg.strategies.size() < 2) {
    throw ConfigError("a comparison needs at least two strategies");
  }
  const Experiment ex = prepare_experiment(cfg);
  return run_comparison(cfg, ex);
}

}  // namespace fps::harness
