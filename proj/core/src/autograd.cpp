#include "fps/autograd.hpp"

#include <unordered_set>

#include "fps/errors.hpp"
#include "fps/ops.hpp"

namespace fps {
namespace {

bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

std::size_t distinct_bytes(const std::vector<Tensor>& a,
                           const std::vector<Tensor>& b) {
  std::unordered_set<const void*> seen;
  std::size_t bytes = 0;
  auto visit = [&](const Tensor& t) {
    if (!t.defined()) return;
    const void* storage = t.data().data();
    if (seen.insert(storage).second) bytes += t.bytes();
  };
  for (const auto& t : a) visit(t);
  for (const auto& t : b) visit(t);
  return bytes;
}

}  // namespace

bool grad_enabled() { return grad_mode(); }

NoGradGuard::NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
NoGradGuard::~NoGradGuard() { grad_mode() = previous_; }

GradTape::~GradTape() { clear(); }

GradTape& GradTape::current() {
  thread_local GradTape tape;
  return tape;
}

std::size_t GradTape::retained_bytes() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.retained_bytes;
  return total;
}

void GradTape::clear() {
  for (auto& e : entries_) e.meter->on_tape_release(e.retained_bytes);
  entries_.clear();
}

bool GradTape::record(Tensor& output, std::vector<Tensor> inputs,
                      std::vector<Tensor> saved, BackwardFn backward) {
  if (!grad_enabled()) return false;
  bool any = false;
  for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
  if (!any) return false;

  output.node().requires_grad = true;
  output.node().is_leaf = false;

  Entry entry{output.id(), std::move(inputs), std::move(saved),
              std::move(backward), 0, AllocationMeter::current()};
  entry.retained_bytes = distinct_bytes(entry.inputs, entry.saved);
  entry.meter->on_tape_retain(entry.retained_bytes);
  entries_.push_back(std::move(entry));
  return true;
}

const Tensor* GradientMap::find(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& GradientMap::at(const Tensor& leaf) const {
  const Tensor* g = find(leaf);
  if (!g) throw ContractError("no gradient recorded for tensor");
  return *g;
}

GradientMap backward(const Tensor& loss) {
  if (!grad_enabled()) {
    throw StateError("backward called while grad mode is disabled");
  }
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        to_string(loss.shape()));
  }
  GradTape& tape = GradTape::current();
  if (tape.empty() || !loss.requires_grad() || loss.is_leaf()) {
    throw StateError("backward on a loss that was not recorded under grad mode");
  }

  GradientMap result;
  {
    NoGradGuard no_grad;
    std::unordered_map<std::uint64_t, Tensor> pending;
    pending.emplace(loss.id(), Tensor::full(loss.shape(), 1.0));

    for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
      auto found = pending.find(it->output_id);
      if (found == pending.end()) continue;
      Tensor grad_output = std::move(found->second);
      pending.erase(found);

      std::vector<Tensor> input_grads =
          it->backward(grad_output, it->inputs, it->saved);
      for (std::size_t i = 0; i < it->inputs.size(); ++i) {
        const Tensor& input = it->inputs[i];
        if (!input.requires_grad() || i >= input_grads.size() ||
            !input_grads[i].defined()) {
          continue;
        }
        auto& slot = input.is_leaf() ? result.grads_ : pending;
        auto [pos, inserted] = slot.try_emplace(input.id(), input_grads[i]);
        if (!inserted) pos->second = add(pos->second, input_grads[i]);
      }
    }

    // Leaves that were recorded but not reached by the loss get zeros.
    for (const auto& e : tape.entries_) {
      for (const auto& input : e.inputs) {
        if (input.is_leaf() && input.requires_grad() &&
            !result.grads_.contains(input.id())) {
          result.grads_.emplace(input.id(), Tensor::zeros(input.shape()));
        }
      }
    }
  }
  tape.clear();
  return result;
}

}  // namespace fps
