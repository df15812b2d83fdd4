#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fps/address.hpp"
#include "fps/dataset.hpp"
#include "fps/model.hpp"
#include "fps/stats.hpp"
#include "fps/tensor.hpp"

namespace fps {

enum class Norm { kL1, kL2 };

enum class Scheme {
  kNeuronLevel,  // top-m incoming parameters for every output neuron
  kLayerLevel,   // top floor(k / L) parameters in every layer
  kGlobal,       // no per-unit structure (baselines)
};

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view text);

// Non-negative importance of every eligible parameter, laid out like the
// layer tensors: weight[k * fan_out + j], bias[j].
struct LayerScores {
  std::uint32_t layer_id = 0;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  Tensor weight;
  Tensor bias;
};

struct ImportanceScore {
  std::uint64_t model_hash = 0;
  std::string variant;
  std::vector<LayerScores> layers;

  double at(const ParameterAddress& address) const;
  std::size_t parameter_count() const;
  std::size_t neuron_count() const;
  std::size_t bytes() const;
};

// |w| * agg_k (or agg_k alone without the weight term), agg being the mean
// absolute activation (l1) or the RMS activation (l2) of input neuron k.
// A bias is a weight on a constant input of 1, so it scores |b| (or 1).
// Runs with grad mode off.
ImportanceScore score_fps(const Model& model, const ActivationStats& stats,
                          Norm norm, bool use_weight_magnitude);

using LossFn =
    std::function<Tensor(const Tensor& logits, std::span<const int> labels)>;

enum class GpsAccumulation { kFullEpoch, kSingleBatch };

struct GpsOptions {
  std::size_t batch_size = 32;
  GpsAccumulation accumulation = GpsAccumulation::kFullEpoch;
  LossFn loss;  // cross-entropy when empty
};

// Sum over batches of |dL/dw| from a full forward-backward pass over the
// whole model. Needs grad mode on (StateError otherwise).
ImportanceScore score_gps(Model& model, const Dataset& dataset,
                          const GpsOptions& options = {});

// Either a fraction p in (0, 1] of the eligible parameters or an absolute k.
class BudgetSpec {
 public:
  static BudgetSpec fraction(double p);
  static BudgetSpec absolute(std::size_t k);

  bool is_fraction() const { return is_fraction_; }
  double fraction_value() const { return fraction_; }
  // k for a model with `eligible` parameters; round(p * eligible), at least 1.
  std::size_t resolve(std::size_t eligible) const;

 private:
  bool is_fraction_ = false;
  double fraction_ = 0.0;
  std::size_t count_ = 0;
};

struct SelectionMask {
  std::uint64_t model_hash = 0;
  Scheme scheme = Scheme::kGlobal;
  std::string variant;
  std::size_t budget = 0;
  // Sorted by flat code, no duplicates.
  std::vector<ParameterAddress> addresses;

  std::size_t k() const { return budget; }
  bool contains(const ParameterAddress& address) const;
  // Throws ContractError on hash mismatch, unknown or duplicate addresses,
  // unsorted addresses or |addresses| != k.
  void validate(const Model& model) const;

  bool operator==(const SelectionMask&) const = default;
};

SelectionMask select_neuron_level(const ImportanceScore& scores,
                                  const BudgetSpec& budget);
SelectionMask select_layer_level(const ImportanceScore& scores,
                                 const BudgetSpec& budget);
SelectionMask select(const ImportanceScore& scores, const BudgetSpec& budget,
                     Scheme scheme);

enum class BaselineKind {
  kRandom,          // k uniform draws without replacement
  kBiasOnly,        // every bias; the budget value is not used
  kLinearHeadOnly,  // empty mask, only the always-trainable head moves
};

SelectionMask select_baseline(BaselineKind kind, const Model& model,
                              const BudgetSpec& budget, std::uint64_t seed = 0);

struct FpsOptions {
  Norm norm = Norm::kL1;
  bool use_weight_magnitude = true;
  Scheme scheme = Scheme::kNeuronLevel;
  std::size_t batch_size = 32;
};

// Statistics collection, scoring and selection, all with grad mode off.
SelectionMask select_fps(Model& model, const Dataset& dataset,
                         const BudgetSpec& budget, const FpsOptions& options = {});

std::string fps_variant_tag(Norm norm, bool use_weight_magnitude);

void write_mask(const SelectionMask& mask, std::ostream& out);
SelectionMask read_mask(std::istream& in);
void save_mask(const SelectionMask& mask, const std::filesystem::path& path);
SelectionMask load_mask(const std::filesystem::path& path);

}  // namespace fps
