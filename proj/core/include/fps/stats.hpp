#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fps/dataset.hpp"
#include "fps/model.hpp"
#include "fps/tensor.hpp"

namespace fps {

// Running first and second absolute moments of every tapped layer's input
// neurons: sum |a_k|, sum a_k^2 and the number of observations.
class ActivationStats {
 public:
  struct LayerMoments {
    std::uint32_t layer_id = 0;
    Tensor sum_abs;  // [fan_in]
    Tensor sum_sq;   // [fan_in]
    std::uint64_t count = 0;
  };

  ActivationStats() = default;
  // Zeroed moments for every tapped layer of `model`.
  explicit ActivationStats(const Model& model);

  std::uint64_t model_hash() const { return model_hash_; }
  const std::vector<LayerMoments>& layers() const { return layers_; }
  const LayerMoments& layer(std::uint32_t layer_id) const;

  // Accumulates rows [n, fan_in] observed at `layer_id`.
  void accumulate(std::uint32_t layer_id, const Tensor& rows);

  // Fieldwise sum. Both sides must describe the same model.
  ActivationStats& merge(const ActivationStats& other);

  std::size_t neuron_count() const;
  // Logical bytes held by the moment buffers.
  std::size_t bytes() const;

  void save(const std::filesystem::path& path) const;
  static ActivationStats load(const std::filesystem::path& path);

  bool operator==(const ActivationStats& other) const;

 private:
  LayerMoments& mutable_layer(std::uint32_t layer_id);

  std::uint64_t model_hash_ = 0;
  std::vector<LayerMoments> layers_;
};

// Streams `dataset` through `model` in batches of `batch_size` with taps armed
// and returns the accumulated moments. Must be called with grad mode off;
// calling it with grad mode on throws StateError. Parameters are not touched.
ActivationStats collect(Model& model, const Dataset& dataset,
                        std::size_t batch_size);

// sum_abs / N and sqrt(sum_sq / N).
double mean_abs(const ActivationStats& stats, std::uint32_t layer_id,
                std::size_t k);
double rms(const ActivationStats& stats, std::uint32_t layer_id, std::size_t k);

}  // namespace fps
