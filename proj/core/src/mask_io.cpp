#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "fps/errors.hpp"
#include "fps/hash.hpp"
#include "fps/selector.hpp"
#include "fps/version.hpp"

namespace fps {
namespace {

constexpr std::string_view kMaskMagic = "fps-mask v1";

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    line_start_ = offset_;
    if (!std::getline(in_, line)) return false;
    offset_ += line.size() + 1;
    return true;
  }

  std::string expect(const std::string& key) {
    std::string line;
    if (!next(line)) throw ParseError("mask file ends before '" + key + "'", line_start_);
    const std::string prefix = key + ": ";
    if (line.rfind(prefix, 0) != 0) {
      throw ParseError("expected '" + key + ":' in mask header", line_start_);
    }
    return line.substr(prefix.size());
  }

  std::size_t line_start() const { return line_start_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
  std::size_t line_start_ = 0;
};

std::uint64_t parse_u64(const std::string& text, std::size_t offset) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("expected an unsigned integer, got '" + text + "'", offset);
  }
  return value;
}

}  // namespace

void write_mask(const SelectionMask& mask, std::ostream& out) {
  out << kMaskMagic << '\n'
      << "model_hash: " << to_hex(mask.model_hash) << '\n'
      << "scheme: " << to_string(mask.scheme) << '\n'
      << "variant: " << mask.variant << '\n'
      << "k: " << mask.budget << '\n'
      << "tool_version: " << kVersion << '\n'
      << "addresses:\n";
  for (const auto& a : mask.addresses) out << a.flat() << '\n';
}

SelectionMask read_mask(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line) || line != kMaskMagic) {
    throw ParseError("not a mask file (missing '" + std::string(kMaskMagic) + "')", 0);
  }
  SelectionMask mask;
  try {
    mask.model_hash = from_hex(reader.expect("model_hash"));
  } catch (const ParseError&) {
    throw ParseError("invalid model_hash", reader.line_start());
  }
  try {
    mask.scheme = parse_scheme(reader.expect("scheme"));
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), reader.line_start());
  }
  mask.variant = reader.expect("variant");
  const std::string k = reader.expect("k");
  mask.budget = parse_u64(k, reader.line_start());
  reader.expect("tool_version");
  if (!reader.next(line) || line != "addresses:") {
    throw ParseError("expected 'addresses:'", reader.line_start());
  }
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::uint64_t code = parse_u64(line, reader.line_start());
    ParameterAddress a;
    try {
      a = ParameterAddress::from_flat(code);
    } catch (const ContractError& e) {
      throw ParseError(e.what(), reader.line_start());
    }
    if (!mask.addresses.empty() && !(mask.addresses.back() < a)) {
      throw ParseError("mask addresses must be sorted and unique",
                       reader.line_start());
    }
    mask.addresses.push_back(a);
  }
  if (mask.addresses.size() != mask.budget) {
    throw ParseError("mask declares k=" + std::to_string(mask.budget) +
                         " but lists " + std::to_string(mask.addresses.size()),
                     reader.line_start());
  }
  return mask;
}

void save_mask(const SelectionMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write mask file " + path.string());
  write_mask(mask, out);
  if (!out) throw IoError("failed writing mask file " + path.string());
}

SelectionMask load_mask(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read mask file " + path.string());
  return read_mask(in);
}

}  // namespace fps
