#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fps/dataset.hpp"
#include "fps/model.hpp"
#include "fps/selector.hpp"
#include "fps/tensor.hpp"

namespace fps {

enum class Schedule { kConstant, kCosine };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::kCosine;
  // When false the head is frozen too and only mask addresses move.
  bool train_head = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  double final_train_loss = 0.0;
  double val_accuracy = 0.0;
  std::vector<EpochRecord> curve;
  std::size_t budget_k = 0;
  // Parameters that differ from theta_0, outside the head and in total.
  std::size_t l0_non_head = 0;
  std::size_t l0_total = 0;

  bool operator==(const TrainResult&) const = default;
};

// SGD with momentum that only moves elements whose mask entry is non-zero.
// Weight decay is applied to those elements only.
class MaskedSgd {
 public:
  MaskedSgd(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<Tensor> params, std::span<const Tensor> grads,
            std::span<const std::vector<char>> masks, double learning_rate);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

// Learning rate at optimizer step `step` of `total_steps`.
double scheduled_rate(const TrainConfig& cfg, std::size_t step,
                      std::size_t total_steps);

// Trains mask addresses plus the head with cross-entropy. Every other
// parameter stays bit-identical to theta_0. Throws ContractError when the mask
// does not belong to the model and DivergenceError (with the epoch) when the
// loss stops being finite.
TrainResult finetune(Model& model, const SelectionMask& mask,
                     const Dataset& train, const Dataset& val,
                     const TrainConfig& cfg);

// Fraction of samples whose argmax logit (lowest index on ties) equals the
// label. Runs with grad mode off.
double evaluate(const Model& model, const Dataset& dataset,
                std::size_t batch_size = 256);

// Number of parameters whose value differs from theta_0.
std::size_t l0_distance(const Model& model, bool include_head);

// Hash of every non-head parameter outside `mask`, taken from the current
// values or from theta_0.
std::uint64_t frozen_slice_hash(const Model& model, const SelectionMask& mask,
                                bool from_snapshot);

std::string to_json(const TrainResult& result);
TrainResult train_result_from_json(const std::string& text);
// Header: epoch,train_loss,val_acc
void write_curves_csv(const TrainResult& result, std::ostream& out);

}  // namespace fps
