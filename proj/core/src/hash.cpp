#include "fps/hash.hpp"

#include <bit>
#include <charconv>
#include <cstdio>

#include "fps/errors.hpp"

namespace fps {

void ContentHash::update(std::span<const unsigned char> bytes) {
  for (unsigned char b : bytes) {
    state_ ^= b;
    state_ *= 0x100000001b3ULL;
  }
}

void ContentHash::update(std::string_view text) {
  update(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void ContentHash::update(std::uint64_t value) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  update(std::span<const unsigned char>(bytes, 8));
}

void ContentHash::update(std::span<const double> values) {
  for (double v : values) update(std::bit_cast<std::uint64_t>(v));
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t from_hex(std::string_view text) {
  std::uint64_t value = 0;
  auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("invalid hex hash '" + std::string(text) + "'", 0);
  }
  return value;
}

}  // namespace fps
