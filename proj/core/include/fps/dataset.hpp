#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fps/tensor.hpp"

namespace fps {

// Labeled samples; features are [n, feature_size], one row per sample.
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t feature_size() const;

  // Copies rows [begin, end).
  Tensor batch_features(std::size_t begin, std::size_t end) const;
  std::span<const int> batch_labels(std::size_t begin, std::size_t end) const;

  Dataset subset(std::span<const std::size_t> indices) const;

  // Throws DataError on inconsistent sizes or labels outside [0, num_classes).
  void validate() const;
};

}  // namespace fps
