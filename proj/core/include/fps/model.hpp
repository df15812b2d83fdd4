#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fps/address.hpp"
#include "fps/tensor.hpp"

namespace fps {

// Receives the input of a tapped linear layer on every forward call.
class ActivationSink {
 public:
  virtual ~ActivationSink() = default;
  // `rows` is [n, fan_in]: one row per observation (sample, or sample x
  // position inside the transformer block).
  virtual void observe(std::uint32_t layer_id, const Tensor& rows) = 0;
};

// y = x W + b with W stored [fan_in, fan_out], so weight element (k, j) sits
// at k * fan_out + j.
class LinearLayer {
 public:
  LinearLayer(std::uint32_t layer_id, std::size_t fan_in, std::size_t fan_out);
  LinearLayer(LinearLayer&&) = default;
  LinearLayer& operator=(LinearLayer&&) = default;

  LinearLayer clone() const;

  std::uint32_t id() const { return id_; }
  std::size_t fan_in() const { return fan_in_; }
  std::size_t fan_out() const { return fan_out_; }
  std::size_t parameter_count() const { return fan_in_ * fan_out_ + fan_out_; }

  Tensor& weight() { return weight_; }
  const Tensor& weight() const { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& bias() const { return bias_; }

  Tensor forward(const Tensor& input) const;

  void set_tap(ActivationSink* sink) { tap_ = sink; }
  ActivationSink* tap() const { return tap_; }

 private:
  std::uint32_t id_;
  std::size_t fan_in_;
  std::size_t fan_out_;
  Tensor weight_;
  Tensor bias_;
  ActivationSink* tap_ = nullptr;
};

struct MlpConfig {
  // Layer widths, input first; the last linear is the classification head.
  std::vector<std::size_t> dims;
};

// Single pre-norm block with one attention head: Q/K/V/output projections,
// two feedforward linears with GeLU, non-affine layer norms, mean-pool over
// positions and a linear head.
struct TransformerConfig {
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t n_classes = 0;
  std::size_t seq_len = 0;
};

using Architecture = std::variant<MlpConfig, TransformerConfig>;

// A classifier made of linear layers. Tapped layers have ids 0..L-1 in
// topological order; the head has id L. The head is always trainable and never
// counted against a selection budget.
//
// The pre-trained snapshot (theta_0) is captured once, when the model is built
// or loaded. Models are move-only; use clone() for an independent copy.
class Model {
 public:
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // Independent deep copy sharing the same theta_0 and identity hash.
  Model clone() const;
  // Deep copy whose theta_0 is the current parameter state.
  Model rebased() const;

  const Architecture& architecture() const { return arch_; }
  std::string kind() const;
  std::size_t input_size() const;
  std::size_t num_classes() const;

  // batch: [n, input_size] (the transformer also accepts [n, seq_len, d_model]).
  Tensor forward(const Tensor& batch) const;
  // Input of the head.
  Tensor features(const Tensor& batch) const;

  std::span<LinearLayer> tapped_layers() { return layers_; }
  std::span<const LinearLayer> tapped_layers() const { return layers_; }
  LinearLayer& head() { return head_; }
  const LinearLayer& head() const { return head_; }
  LinearLayer& layer(std::uint32_t id);
  const LinearLayer& layer(std::uint32_t id) const;
  bool is_head(std::uint32_t id) const { return id == head_.id(); }
  std::size_t layer_count() const { return layers_.size() + 1; }

  // Weight and bias of every linear, tapped layers first, head last.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  // Parameters addressable by a selection mask (tapped weights and biases).
  std::size_t eligible_parameter_count() const;
  std::size_t head_parameter_count() const { return head_.parameter_count(); }

  bool contains(const ParameterAddress& address) const;
  bool is_eligible(const ParameterAddress& address) const;
  double parameter(const ParameterAddress& address) const;
  void set_parameter(const ParameterAddress& address, double value);
  double snapshot_value(const ParameterAddress& address) const;
  std::vector<ParameterAddress> addresses(bool eligible_only) const;

  // Identity of the pre-trained model: architecture plus theta_0.
  std::uint64_t hash() const { return hash_; }
  // Hash of the current parameter values.
  std::uint64_t parameter_hash() const;
  // theta_0, laid out like parameters().
  const std::vector<std::vector<double>>& snapshot() const { return snapshot_; }

  void arm_taps(ActivationSink& sink);
  void disarm_taps();
  bool taps_armed() const;

  // Versioned little-endian binary checkpoint ending in a content hash.
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  friend Model build_mlp(const std::vector<std::size_t>& dims,
                         std::uint64_t seed);
  friend Model build_mini_transformer(std::size_t d_model, std::size_t d_ff,
                                      std::size_t n_classes,
                                      std::size_t seq_len, std::uint64_t seed);

 private:
  Model(Architecture arch, std::vector<LinearLayer> layers, LinearLayer head);
  void capture_snapshot();
  std::pair<const Tensor*, std::size_t> locate(const ParameterAddress& a) const;
  std::size_t snapshot_index(std::uint32_t layer_id) const;
  Tensor forward_mlp(const Tensor& batch) const;
  Tensor forward_transformer(const Tensor& batch) const;

  Architecture arch_;
  std::vector<LinearLayer> layers_;
  LinearLayer head_;
  std::vector<std::vector<double>> snapshot_;
  std::uint64_t hash_ = 0;
};

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
Model build_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed);
Model build_mini_transformer(std::size_t d_model, std::size_t d_ff,
                             std::size_t n_classes, std::size_t seq_len,
                             std::uint64_t seed);
Model build_model(const Architecture& arch, std::uint64_t seed);

}  // namespace fps
