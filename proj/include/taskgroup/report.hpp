#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace taskgroup {

struct ReportResult {
    std::string markdown;
    std::vector<std::string> warnings;
    /// Names of the tables that made it into the report, in order.
    std::vector<std::string> sections;
};

/// Reads the harness artifacts found in `dir` (occurrence, runs, ablation,
/// capacity and oracle CSVs), writes <dir>/report.md and <dir>/summary.csv,
/// and returns the report. Missing artifacts become warnings.
ReportResult report(const std::filesystem::path& dir);

}  // namespace taskgroup
