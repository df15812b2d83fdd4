#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fps/harness/ingest.hpp"
#include "fps/model.hpp"
#include "fps/selector.hpp"
#include "fps/trainer.hpp"

namespace fps::harness {

enum class StrategyKind { kFps, kGps, kRandom, kBiasOnly, kLinearHeadOnly };

// Parsed strategy name:
//   fps-<l1|l2>-<neuron|layer>, fps-act-<l1|l2>-<neuron|layer>,
//   gps[-<neuron|layer>], random, bias, linear.
struct Strategy {
  StrategyKind kind = StrategyKind::kFps;
  Norm norm = Norm::kL1;
  bool use_weight_magnitude = true;
  Scheme scheme = Scheme::kNeuronLevel;
  std::string name;

  std::string variant() const;
};

Strategy parse_strategy(std::string_view name);

struct ModelSpec {
  Architecture architecture;
  std::filesystem::path checkpoint;  // when set, overrides architecture
};

struct SelectionSettings {
  std::size_t batch_size = 32;
  GpsAccumulation accumulation = GpsAccumulation::kFullEpoch;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelSpec model;
  DatasetSpec dataset;
  BudgetSpec budget = BudgetSpec::fraction(0.01);
  TrainConfig train;
  SelectionSettings selection;
  std::vector<Strategy> strategies;
  bool parallel = false;
  // Selection is timed this many times; the median is reported.
  std::size_t timing_repetitions = 1;

  // Seeds left out of the dataset/train sections follow `seed`.
  bool dataset_seed_explicit = false;
  bool train_seed_explicit = false;

  // Changes the top-level seed and every seed derived from it.
  void reseed(std::uint64_t new_seed);
};

// JSON text. Unknown keys anywhere are a ConfigError; so are wrong types.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace fps::harness
