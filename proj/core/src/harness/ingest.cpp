#include "fps/harness/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fps/errors.hpp"
#include "fps/harness/csv.hpp"
#include "fps/harness/idx.hpp"

namespace fps::harness {

std::string_view to_string(DataSource source) {
  switch (source) {
    case DataSource::kSyntheticPlanted: return "synthetic-planted";
    case DataSource::kSyntheticGaussianClasses: return "synthetic-gaussian-classes";
    case DataSource::kIdxFilePair: return "idx-file-pair";
    case DataSource::kCsvFile: return "csv-file";
  }
  return "?";
}

DataSource parse_data_source(std::string_view text) {
  for (DataSource s : {DataSource::kSyntheticPlanted,
                       DataSource::kSyntheticGaussianClasses,
                       DataSource::kIdxFilePair, DataSource::kCsvFile}) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown dataset source '" + std::string(text) + "'");
}

void DatasetSpec::validate() const {
  const double total = split.train + split.val + split.test;
  if (split.train <= 0.0 || split.val < 0.0 || split.test < 0.0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative, train > 0, and sum to 1");
  }
  switch (source) {
    case DataSource::kSyntheticGaussianClasses:
      if (samples == 0 || features == 0 || classes < 2) {
        throw ConfigError("gaussian classes need samples, features and >= 2 classes");
      }
      break;
    case DataSource::kSyntheticPlanted:
      if (samples == 0) throw ConfigError("planted dataset needs samples");
      if (!(plant_fraction > 0.0 && plant_fraction <= 0.05)) {
        throw ConfigError("plant_fraction must be in (0, 0.05]");
      }
      if (!(shift_magnitude >= 0.0)) throw ConfigError("shift_magnitude must be >= 0");
      break;
    case DataSource::kIdxFilePair:
      if (images.empty() || labels.empty()) {
        throw ConfigError("idx-file-pair needs images and labels paths");
      }
      break;
    case DataSource::kCsvFile:
      if (csv.empty()) throw ConfigError("csv-file needs a path");
      break;
  }
}

Standardization Standardization::fit(const Dataset& train) {
  const std::size_t n = train.size();
  const std::size_t width = train.feature_size();
  auto x = train.features.data();
  Standardization s;
  s.mean.assign(width, 0.0);
  s.scale.assign(width, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < width; ++f) s.mean[f] += x[i * width + f];
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < width; ++f) {
      const double d = x[i * width + f] - s.mean[f];
      s.scale[f] += d * d;
    }
  }
  for (double& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-12) v = 1.0;  // constant feature
  }
  return s;
}

Dataset Standardization::apply(const Dataset& data) const {
  if (data.empty() || empty()) return data;
  const std::size_t width = data.feature_size();
  if (width != mean.size()) {
    throw DimensionError("standardization fitted on " +
                         std::to_string(mean.size()) + " features, data has " +
                         std::to_string(width));
  }
  std::vector<double> x = data.features.to_vector();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t f = i % width;
    x[i] = (x[i] - mean[f]) / scale[f];
  }
  Dataset out;
  out.features = Tensor::from_vector(data.features.shape(), std::move(x));
  out.labels = data.labels;
  out.num_classes = data.num_classes;
  return out;
}

namespace {

Dataset take(const Dataset& all, const std::vector<std::size_t>& index) {
  if (index.empty()) {
    Dataset none;
    none.num_classes = all.num_classes;
    return none;
  }
  return all.subset(index);
}

}  // namespace

DataSplits split_dataset(const Dataset& all, const SplitFractions& split,
                         std::uint64_t seed, bool standardize) {
  all.validate();
  const std::size_t n = all.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto count = [n](double f) {
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  };
  std::size_t n_train = std::clamp<std::size_t>(count(split.train), 1, n);
  std::size_t n_val = std::min(count(split.val), n - n_train);
  std::size_t n_test = split.test > 0.0 ? n - n_train - n_val : 0;
  if (split.test == 0.0) n_val = n - n_train;  // rounding leftovers go to val

  DataSplits out;
  out.train_index.assign(order.begin(), order.begin() + n_train);
  out.val_index.assign(order.begin() + n_train,
                       order.begin() + n_train + n_val);
  out.test_index.assign(order.begin() + n_train + n_val,
                        order.begin() + n_train + n_val + n_test);

  std::vector<char> seen(n, 0);
  for (const auto* index : {&out.train_index, &out.val_index, &out.test_index}) {
    for (std::size_t i : *index) {
      if (seen[i]++) throw ContractError("dataset splits overlap at sample " + std::to_string(i));
    }
  }

  out.train = take(all, out.train_index);
  out.val = take(all, out.val_index);
  out.test = take(all, out.test_index);
  if (standardize) {
    out.standardization = Standardization::fit(out.train);
    out.train = out.standardization.apply(out.train);
    out.val = out.standardization.apply(out.val);
    out.test = out.standardization.apply(out.test);
  }
  return out;
}

Dataset make_gaussian_classes(std::size_t samples, std::size_t features,
                              std::size_t classes, double separation,
                              std::uint64_t seed) {
  if (samples == 0 || features == 0 || classes == 0) {
    throw ContractError("gaussian classes need samples, features and classes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centers(classes * features);
  for (double& c : centers) c = normal(rng) * separation / 2.0;

  std::vector<double> x(samples * features);
  Dataset ds;
  ds.num_classes = classes;
  ds.labels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t label = i % classes;
    ds.labels[i] = static_cast<int>(label);
    for (std::size_t f = 0; f < features; ++f) {
      x[i * features + f] = centers[label * features + f] + normal(rng);
    }
  }
  ds.features = Tensor::from_vector({samples, features}, std::move(x));
  return ds;
}

Dataset parse_csv_dataset(std::string_view text, std::string_view label_column) {
  const CsvTable table = parse_csv(text);
  if (table.rows.empty()) throw DataError("CSV has no data rows");
  const std::size_t label_at = table.column(label_column);
  const std::size_t width = table.header.size() - 1;
  if (width == 0) throw DataError("CSV has no feature columns");

  auto number = [](const std::string& cell, std::size_t row) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size() || !std::isfinite(v)) {
      throw DataError("CSV row " + std::to_string(row + 1) +
                      ": not a finite number: '" + cell + "'");
    }
    return v;
  };

  Dataset ds;
  std::vector<double> x;
  x.reserve(table.rows.size() * width);
  int highest = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == label_at) continue;
      x.push_back(number(row[c], r));
    }
    const double label = number(row[label_at], r);
    if (label < 0 || label != std::floor(label) || label > 1e6) {
      throw DataError("CSV row " + std::to_string(r + 1) +
                      ": label must be a non-negative integer");
    }
    ds.labels.push_back(static_cast<int>(label));
    highest = std::max(highest, ds.labels.back());
  }
  ds.num_classes = static_cast<std::size_t>(highest) + 1;
  ds.features = Tensor::from_vector({table.rows.size(), width}, std::move(x));
  return ds;
}

Dataset load_csv_dataset(const std::filesystem::path& path,
                         std::string_view label_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read CSV file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv_dataset(text.str(), label_column);
}

DataSplits ingest(const DatasetSpec& spec) {
  spec.validate();
  Dataset all;
  switch (spec.source) {
    case DataSource::kSyntheticGaussianClasses:
      all = make_gaussian_classes(spec.samples, spec.features, spec.classes,
                                  spec.separation, spec.seed);
      break;
    case DataSource::kIdxFilePair:
      all = load_idx_pair(spec.images, spec.labels);
      break;
    case DataSource::kCsvFile:
      all = load_csv_dataset(spec.csv, spec.label_column);
      break;
    case DataSource::kSyntheticPlanted:
      throw ContractError("the planted source is built from a model; use make_planted_task");
  }
  return split_dataset(all, spec.split, spec.seed, spec.standardize);
}

}  // namespace fps::harness
