#include "fps/dataset.hpp"

#include <string>

#include "fps/errors.hpp"

namespace fps {

std::size_t Dataset::feature_size() const {
  if (!features.defined()) return 0;
  return features.numel() / features.extent(0);
}

Tensor Dataset::batch_features(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) {
    throw ContractError("batch [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") outside dataset of " +
                        std::to_string(size()));
  }
  const std::size_t width = feature_size();
  auto all = features.data();
  std::vector<double> rows(all.begin() + begin * width,
                           all.begin() + end * width);
  return Tensor::from_vector({end - begin, width}, std::move(rows));
}

std::span<const int> Dataset::batch_labels(std::size_t begin,
                                           std::size_t end) const {
  return std::span<const int>(labels).subspan(begin, end - begin);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("empty subset");
  const std::size_t width = feature_size();
  auto all = features.data();
  std::vector<double> rows;
  rows.reserve(indices.size() * width);
  Dataset out;
  out.num_classes = num_classes;
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("subset index out of range");
    rows.insert(rows.end(), all.begin() + i * width,
                all.begin() + (i + 1) * width);
    out.labels.push_back(labels[i]);
  }
  out.features = Tensor::from_vector({indices.size(), width}, std::move(rows));
  return out;
}

void Dataset::validate() const {
  if (empty()) throw DataError("dataset has no samples");
  if (!features.defined() || features.extent(0) != labels.size()) {
    throw DataError("feature rows and labels disagree");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " of sample " +
                      std::to_string(i) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace fps
