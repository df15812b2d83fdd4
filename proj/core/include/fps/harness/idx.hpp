#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fps/dataset.hpp"

namespace fps::harness {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Unsigned-byte IDX array: big-endian magic, big-endian u32 extents, payload.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

// Throws ParseError (with byte offset) when the magic differs from
// `expected_magic` or the payload length disagrees with the header.
IdxArray parse_idx(std::span<const std::uint8_t> bytes,
                   std::uint32_t expected_magic);
IdxArray read_idx_file(const std::filesystem::path& path,
                       std::uint32_t expected_magic);

// Images become rows of pixel / 255 values.
Dataset load_idx_pair(const std::filesystem::path& images,
                      const std::filesystem::path& labels);

}  // namespace fps::harness
