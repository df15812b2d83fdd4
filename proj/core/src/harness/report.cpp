#include "fps/harness/report.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "fps/errors.hpp"
#include "fps/harness/csv.hpp"
#include "fps/hash.hpp"

namespace fps::harness {

using nlohmann::json;

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::kCsv;
  if (text == "json") return ReportFormat::kJson;
  throw ConfigError("report format must be 'csv' or 'json', got '" +
                    std::string(text) + "'");
}

std::vector<ReportRow> report_rows(const RunReport& report) {
  std::vector<ReportRow> rows;
  for (const StrategyResult& r : report.results) {
    ReportRow row;
    row.strategy = r.strategy;
    row.variant = r.variant;
    row.status = r.status;
    row.curves = r.curves;
    if (r.ok()) {
      row.k = r.k;
      row.acc = r.accuracy;
      row.peak_bytes = r.peak_bytes;
      row.select_ms = r.select_ms;
      row.tape_peak_bytes = r.tape_peak_bytes;
      row.recovery_rate = r.recovery_rate;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string cell(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    return fmt(*v);
  } else {
    return std::to_string(*v);
  }
}

std::optional<double> real_cell(const std::string& s, std::size_t row) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw DataError("report row " + std::to_string(row) + ": bad number '" + s + "'");
  }
  return v;
}

std::optional<std::size_t> count_cell(const std::string& s, std::size_t row) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE || s[0] == '-') {
    throw DataError("report row " + std::to_string(row) + ": bad count '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

void write_report_csv(const RunReport& report, std::ostream& out) {
  out << kReportColumns << '\n';
  for (const ReportRow& r : report_rows(report)) {
    out << csv_field(r.strategy) << ',' << csv_field(r.variant) << ','
        << cell(r.k) << ',' << cell(r.acc) << ',' << cell(r.peak_bytes) << ','
        << cell(r.select_ms) << ',' << csv_field(r.status) << ','
        << cell(r.tape_peak_bytes) << ',' << cell(r.recovery_rate) << ','
        << csv_field(r.curves) << '\n';
  }
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  const CsvTable table = parse_csv(text);
  std::string header;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    header += (i ? "," : "") + table.header[i];
  }
  if (header != kReportColumns) {
    throw DataError("unexpected report header '" + header + "'");
  }
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& c = table.rows[i];
    ReportRow r;
    r.strategy = c[0];
    r.variant = c[1];
    r.k = count_cell(c[2], i + 1);
    r.acc = real_cell(c[3], i + 1);
    r.peak_bytes = count_cell(c[4], i + 1);
    r.select_ms = real_cell(c[5], i + 1);
    r.status = c[6];
    r.tape_peak_bytes = count_cell(c[7], i + 1);
    r.recovery_rate = real_cell(c[8], i + 1);
    r.curves = c[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string report_to_json(const RunReport& report) {
  json root;
  root["format"] = "fps-run-report";
  root["version"] = 1;
  root["model_hash"] = to_hex(report.model_hash);
  root["model_seed"] = report.model_seed;
  root["dataset_seed"] = report.dataset_seed;
  root["dataset_source"] = report.dataset_source;
  root["budget_k"] = report.budget_k;
  json results = json::array();
  for (const StrategyResult& r : report.results) {
    json j;
    j["strategy"] = r.strategy;
    j["variant"] = r.variant;
    j["status"] = r.status;
    if (!r.ok()) {
      j["error_category"] = r.error_category;
      j["error"] = r.error;
      results.push_back(std::move(j));
      continue;
    }
    j["k"] = r.k;
    j["acc"] = r.accuracy;
    if (r.test_accuracy) j["test_acc"] = *r.test_accuracy;
    j["peak_bytes"] = r.peak_bytes;
    j["tape_peak_bytes"] = r.tape_peak_bytes;
    j["select_ms"] = r.select_ms;
    if (r.recovery_rate) j["recovery_rate"] = *r.recovery_rate;
    j["mask_digest"] = r.mask_digest;
    j["curves"] = r.curves;
    j["train"] = json::parse(to_json(r.train));
    results.push_back(std::move(j));
  }
  root["results"] = std::move(results);
  return root.dump(2) + "\n";
}

RunReport report_from_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what(), e.byte);
  }
  try {
    if (root.at("format") != "fps-run-report" || root.at("version") != 1) {
      throw DataError("not a version 1 run report");
    }
    RunReport report;
    report.model_hash = from_hex(root.at("model_hash").get<std::string>());
    report.model_seed = root.at("model_seed").get<std::uint64_t>();
    report.dataset_seed = root.at("dataset_seed").get<std::uint64_t>();
    report.dataset_source = root.at("dataset_source").get<std::string>();
    report.budget_k = root.at("budget_k").get<std::size_t>();
    for (const json& j : root.at("results")) {
      StrategyResult r;
      r.strategy = j.at("strategy").get<std::string>();
      r.variant = j.at("variant").get<std::string>();
      r.status = j.at("status").get<std::string>();
      if (!r.ok()) {
        r.error_category = j.value("error_category", "");
        r.error = j.value("error", "");
        report.results.push_back(std::move(r));
        continue;
      }
      r.k = j.at("k").get<std::size_t>();
      r.accuracy = j.at("acc").get<double>();
      if (j.contains("test_acc")) r.test_accuracy = j.at("test_acc").get<double>();
      r.peak_bytes = j.at("peak_bytes").get<std::size_t>();
      r.tape_peak_bytes = j.at("tape_peak_bytes").get<std::size_t>();
      r.select_ms = j.at("select_ms").get<double>();
      if (j.contains("recovery_rate")) r.recovery_rate = j.at("recovery_rate").get<double>();
      r.mask_digest = j.at("mask_digest").get<std::string>();
      r.curves = j.at("curves").get<std::string>();
      r.train = train_result_from_json(j.at("train").dump());
      report.results.push_back(std::move(r));
    }
    return report;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run report: ") + e.what());
  }
}

void emit_report(const RunReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  if (format == ReportFormat::kCsv) {
    write_report_csv(report, out);
  } else {
    out << report_to_json(report);
  }
  out.flush();
  if (!out) throw IoError("failed writing report " + path.string());
}

RunReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read report " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return report_from_json(text.str());
}

}  // namespace fps::harness
