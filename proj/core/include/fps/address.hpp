#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace fps {

// Locates one scalar parameter: weight (in_index k -> out_index j) of a linear
// layer, or the bias of output neuron j when in_index is kBiasSentinel.
struct ParameterAddress {
  static constexpr std::uint32_t kBiasSentinel = 0xFFFFFF;
  static constexpr std::uint32_t kMaxLayerId = 0xFFFF;
  static constexpr std::uint32_t kMaxIndex = kBiasSentinel - 1;

  std::uint32_t layer_id = 0;
  std::uint32_t out_index = 0;
  std::uint32_t in_index = 0;

  static ParameterAddress weight(std::uint32_t layer, std::uint32_t out,
                                 std::uint32_t in) {
    return {layer, out, in};
  }
  static ParameterAddress bias(std::uint32_t layer, std::uint32_t out) {
    return {layer, out, kBiasSentinel};
  }

  bool is_bias() const { return in_index == kBiasSentinel; }

  // Canonical flat code: 16 bits layer | 24 bits out | 24 bits in. Ordering of
  // codes is lexicographic (layer, out, in) with a neuron's bias last.
  std::uint64_t flat() const;
  static ParameterAddress from_flat(std::uint64_t code);

  std::string to_string() const;

  auto operator<=>(const ParameterAddress&) const = default;
};

}  // namespace fps
