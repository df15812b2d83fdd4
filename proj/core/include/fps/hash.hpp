#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fps {

// 64-bit FNV-1a, fed incrementally. Doubles are hashed by bit pattern.
class ContentHash {
 public:
  void update(std::span<const unsigned char> bytes);
  void update(std::string_view text);
  void update(std::uint64_t value);
  void update(std::span<const double> values);

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);
std::uint64_t from_hex(std::string_view text);

}  // namespace fps
