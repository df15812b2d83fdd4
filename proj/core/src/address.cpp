#include "fps/address.hpp"

#include "fps/errors.hpp"

namespace fps {

std::uint64_t ParameterAddress::flat() const {
  if (layer_id > kMaxLayerId || out_index > kMaxIndex ||
      (in_index > kMaxIndex && in_index != kBiasSentinel)) {
    throw ContractError("parameter address out of encodable range: " +
                        to_string());
  }
  return (static_cast<std::uint64_t>(layer_id) << 48) |
         (static_cast<std::uint64_t>(out_index) << 24) |
         static_cast<std::uint64_t>(in_index);
}

ParameterAddress ParameterAddress::from_flat(std::uint64_t code) {
  ParameterAddress a;
  a.layer_id = static_cast<std::uint32_t>(code >> 48);
  a.out_index = static_cast<std::uint32_t>((code >> 24) & 0xFFFFFF);
  a.in_index = static_cast<std::uint32_t>(code & 0xFFFFFF);
  if (a.out_index == kBiasSentinel) {
    throw ContractError("invalid flat parameter address " +
                        std::to_string(code));
  }
  return a;
}

std::string ParameterAddress::to_string() const {
  std::string s = "(" + std::to_string(layer_id) + ", " +
                  std::to_string(out_index) + ", ";
  s += is_bias() ? std::string("bias") : std::to_string(in_index);
  return s + ")";
}

}  // namespace fps
