#include "fps/harness/idx.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "fps/errors.hpp"

namespace fps::harness {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  if (at + 4 > bytes.size()) throw ParseError("IDX header truncated", at);
  return (static_cast<std::uint32_t>(bytes[at]) << 24) |
         (static_cast<std::uint32_t>(bytes[at + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[at + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[at + 3]);
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes,
                   std::uint32_t expected_magic) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected_magic) {
    throw ParseError("IDX magic " + hex32(magic) + ", expected " +
                         hex32(expected_magic),
                     0);
  }
  IdxArray array;
  const std::uint32_t rank = magic & 0xFF;
  std::size_t expected = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    const std::uint32_t extent = read_be32(bytes, 4 + 4 * d);
    if (extent == 0) throw ParseError("IDX extent is zero", 4 + 4 * d);
    array.dims.push_back(extent);
    expected *= extent;
  }
  const std::size_t offset = 4 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() - offset != expected) {
    throw ParseError("IDX payload has " + std::to_string(bytes.size() - offset) +
                         " bytes, header declares " + std::to_string(expected),
                     std::min(bytes.size(), offset + expected));
  }
  array.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                      bytes.end());
  return array;
}

IdxArray read_idx_file(const std::filesystem::path& path,
                       std::uint32_t expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read IDX file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_idx(bytes, expected_magic);
}

Dataset load_idx_pair(const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  const IdxArray images = read_idx_file(images_path, kIdxImagesMagic);
  const IdxArray labels = read_idx_file(labels_path, kIdxLabelsMagic);
  if (images.dims[0] != labels.dims[0]) {
    throw DataError("IDX image count " + std::to_string(images.dims[0]) +
                    " differs from label count " + std::to_string(labels.dims[0]));
  }
  const std::size_t n = images.dims[0];
  const std::size_t width = images.values.size() / n;
  std::vector<double> pixels(images.values.size());
  std::transform(images.values.begin(), images.values.end(), pixels.begin(),
                 [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });

  Dataset ds;
  ds.features = Tensor::from_vector({n, width}, std::move(pixels));
  ds.labels.assign(labels.values.begin(), labels.values.end());
  int highest = 0;
  for (int l : ds.labels) highest = std::max(highest, l);
  ds.num_classes = static_cast<std::size_t>(highest) + 1;
  return ds;
}

}  // namespace fps::harness
