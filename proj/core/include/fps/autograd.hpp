#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fps/alloc_meter.hpp"
#include "fps/tensor.hpp"

namespace fps {

// Grad mode is per thread and enabled by default.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Runs f with grad mode off: nothing is recorded on the tape and no operand
// buffers are retained for the duration.
template <typename F>
decltype(auto) with_grad_disabled(F&& f) {
  NoGradGuard guard;
  return std::forward<F>(f)();
}

class GradientMap;
GradientMap backward(const Tensor& loss);

// Ordered record of primitive ops executed under grad mode, one per thread.
class GradTape {
 public:
  // Receives the gradient of the op output plus the recorded inputs and saved
  // tensors; returns one gradient per input (undefined for inputs that do not
  // require grad).
  using BackwardFn = std::function<std::vector<Tensor>(
      const Tensor& grad_output, std::span<const Tensor> inputs,
      std::span<const Tensor> saved)>;

  GradTape() = default;
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape& current();

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t retained_bytes() const;

  // Drops every entry and releases retained operands.
  void clear();

  // Records `output` as produced from `inputs` when grad mode is on and any
  // input requires grad. Returns true when something was recorded.
  bool record(Tensor& output, std::vector<Tensor> inputs,
              std::vector<Tensor> saved, BackwardFn backward);

 private:
  struct Entry {
    std::uint64_t output_id;
    std::vector<Tensor> inputs;
    std::vector<Tensor> saved;
    BackwardFn backward;
    std::size_t retained_bytes;
    std::shared_ptr<AllocationMeter> meter;
  };

  friend GradientMap backward(const Tensor& loss);

  std::vector<Entry> entries_;
};

// Gradients of a loss with respect to every requires-grad leaf that took part
// in the recorded computation.
class GradientMap {
 public:
  const Tensor* find(const Tensor& leaf) const;
  const Tensor& at(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const { return find(leaf) != nullptr; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend GradientMap backward(const Tensor& loss);
  std::unordered_map<std::uint64_t, Tensor> grads_;
};

// Replays the tape in reverse record order and consumes it. The loss must be a
// single-element tensor produced under grad mode.
GradientMap backward(const Tensor& loss);

}  // namespace fps
