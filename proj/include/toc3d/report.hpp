#pragma once

// Machine-readable sweep/profile reports (JSON schema v1 or CSV) and the
// signed-percentage formatting used in tables.

#include "toc3d/sweep.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace toc3d::prof {

inline constexpr int kReportSchemaVersion = 1;

struct Report {
  int schema_version = kReportSchemaVersion;
  std::string convention = FlopReport::convention();
  std::string config_digest;
  std::vector<SweepRow> rows;

  friend bool operator==(const Report&, const Report&) = default;
};

enum class ReportFormat { json, csv };

/// Throws UsageError for anything but "json" or "csv".
ReportFormat parse_report_format(const std::string& s);

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ReportIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path);
/// Format is inferred from the extension (.json or .csv).
Report load_report(const std::filesystem::path& path);

std::string to_json(const Report& report);
Report report_from_json(const std::string& text);
std::string to_csv(const Report& report);
Report report_from_csv(const std::string& text);

/// Relative change of cost as a signed percentage with one decimal:
/// a 0.28 reduction prints "-28.0%", an increase prints "+x.x%".
std::string format_delta(double reduction);

}  // namespace toc3d::prof
