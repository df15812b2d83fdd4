#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fps/dataset.hpp"
#include "fps/model.hpp"

namespace fps::harness {

enum class DataSource {
  kSyntheticPlanted,
  kSyntheticGaussianClasses,
  kIdxFilePair,
  kCsvFile,
};

std::string_view to_string(DataSource source);
DataSource parse_data_source(std::string_view text);

struct SplitFractions {
  double train = 0.8;
  double val = 0.2;
  double test = 0.0;
};

struct DatasetSpec {
  DataSource source = DataSource::kSyntheticGaussianClasses;
  std::uint64_t seed = 0;
  SplitFractions split;
  bool standardize = true;

  // Synthetic sources.
  std::size_t samples = 0;
  std::size_t features = 0;  // gaussian classes only; planted uses the model
  std::size_t classes = 0;
  double separation = 3.0;

  // synthetic-planted.
  double plant_fraction = 0.01;
  double shift_magnitude = 2.0;
  // Number of input features carrying signal; 0 means all of them.
  std::size_t active_features = 0;

  // File sources.
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path csv;
  std::string label_column = "label";

  void validate() const;
};

// Per-feature standardization fitted on the train split.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  bool empty() const { return mean.empty(); }
  static Standardization fit(const Dataset& train);
  Dataset apply(const Dataset& data) const;
};

struct DataSplits {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> val_index;
  std::vector<std::size_t> test_index;
  Standardization standardization;
};

// Shuffles sample indices with `seed`, cuts them by the split fractions and
// fits standardization on the train part only. Throws ContractError if the
// index sets would overlap.
DataSplits split_dataset(const Dataset& all, const SplitFractions& split,
                         std::uint64_t seed, bool standardize);

Dataset make_gaussian_classes(std::size_t samples, std::size_t features,
                              std::size_t classes, double separation,
                              std::uint64_t seed);

// Reads a CSV whose `label_column` holds integer class ids; every other column
// is a numeric feature.
Dataset load_csv_dataset(const std::filesystem::path& path,
                         std::string_view label_column);
Dataset parse_csv_dataset(std::string_view text, std::string_view label_column);

// Loads or generates the full dataset, then splits it. The planted source
// needs the student model, see make_planted_task; here it is rejected.
DataSplits ingest(const DatasetSpec& spec);

}  // namespace fps::harness
