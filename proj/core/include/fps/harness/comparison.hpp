#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fps/harness/config.hpp"
#include "fps/harness/ingest.hpp"
#include "fps/model.hpp"
#include "fps/selector.hpp"
#include "fps/trainer.hpp"

namespace fps::harness {

// theta_0 plus the data every strategy sees.
struct Experiment {
  Model model;
  DataSplits data;
  std::vector<ParameterAddress> planted;  // synthetic-planted only
};

// Builds or loads the model and ingests the dataset. The planted source is
// never standardized: its labels come from the teacher on raw inputs.
Experiment prepare_experiment(const ExperimentConfig& cfg);

struct SelectionRun {
  SelectionMask mask;
  // Logical bytes allocated above the meter baseline during selection.
  std::size_t peak_bytes = 0;
  std::size_t tape_peak_bytes = 0;
  // Median over the repetitions.
  double select_ms = 0.0;
};

// Runs the selection stage on `model` with a private allocation meter, reset
// before and read after. `repetitions` times; the first mask is kept.
SelectionRun run_selection(Model& model, const Dataset& train,
                           const Strategy& strategy, const BudgetSpec& budget,
                           const SelectionSettings& settings, std::uint64_t seed,
                           std::size_t repetitions = 1);

struct StrategyResult {
  std::string strategy;
  std::string variant;
  std::string status = "ok";  // "ok" or "failed"
  std::string error_category;
  std::string error;

  std::size_t k = 0;
  double accuracy = 0.0;  // validation
  std::optional<double> test_accuracy;
  std::size_t peak_bytes = 0;
  std::size_t tape_peak_bytes = 0;
  double select_ms = 0.0;
  std::optional<double> recovery_rate;
  std::string mask_digest;
  std::string curves;  // path of the per-epoch CSV, when written

  TrainResult train;
  SelectionMask mask;

  bool ok() const { return status == "ok"; }
};

struct RunReport {
  std::uint64_t model_hash = 0;
  std::uint64_t model_seed = 0;
  std::uint64_t dataset_seed = 0;
  std::string dataset_source;
  std::size_t budget_k = 0;
  std::vector<StrategyResult> results;

  const StrategyResult& at(std::string_view strategy) const;
};

// Hex digest of the mask's flat address codes.
std::string mask_digest(const SelectionMask& mask);

// Every strategy gets a clone of the same theta_0, the same splits, budget and
// TrainConfig. A failing strategy is recorded and the others continue.
RunReport run_comparison(const ExperimentConfig& cfg);
RunReport run_comparison(const ExperimentConfig& cfg, const Experiment& experiment);

}  // namespace fps::harness
