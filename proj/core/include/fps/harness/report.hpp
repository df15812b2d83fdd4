#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fps/harness/comparison.hpp"

namespace fps::harness {

enum class ReportFormat { kCsv, kJson };

ReportFormat parse_report_format(std::string_view text);

// One CSV line. Metrics are empty for failed strategies.
struct ReportRow {
  std::string strategy;
  std::string variant;
  std::optional<std::size_t> k;
  std::optional<double> acc;
  std::optional<std::size_t> peak_bytes;
  std::optional<double> select_ms;
  std::string status;
  std::optional<std::size_t> tape_peak_bytes;
  std::optional<double> recovery_rate;
  std::string curves;

  bool operator==(const ReportRow&) const = default;
};

inline constexpr const char* kReportColumns =
    "strategy,variant,k,acc,peak_bytes,select_ms,status,tape_peak_bytes,"
    "recovery_rate,curves";

std::vector<ReportRow> report_rows(const RunReport& report);

void write_report_csv(const RunReport& report, std::ostream& out);
std::vector<ReportRow> parse_report_csv(std::string_view text);

std::string report_to_json(const RunReport& report);
// Masks are not stored in the JSON form; only their digests.
RunReport report_from_json(std::string_view text);

// Creates missing parent directories; IoError when the file cannot be written.
void emit_report(const RunReport& report, ReportFormat format,
                 const std::filesystem::path& path);
RunReport load_report(const std::filesystem::path& path);

}  // namespace fps::harness
