#include "taskgroup/report.hpp"

#include <fstream>
#include <sstream>

#include "taskgroup/errors.hpp"

namespace taskgroup {

namespace fs = std::filesystem;

namespace {

// Minimal CSV reader: commas separate cells, double quotes protect commas.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells(1);
        bool quoted = false;
        for (char ch : line) {
            if (ch == '"') {
                quoted = !quoted;
            } else if (ch == ',' && !quoted) {
                cells.emplace_back();
            } else {
                cells.back() += ch;
            }
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out += "|";
        for (const auto& c : rows[r]) out += " " + c + " |";
        out += "\n";
        if (r == 0) {
            out += "|";
            for (std::size_t k = 0; k < rows[0].size(); ++k) out += " --- |";
            out += "\n";
        }
    }
    return out;
}

struct Section {
    const char* file;
    const char* title;
    const char* note;
};

constexpr Section kSections[] = {
    {"occurrence.csv", "Grouping occurrences",
     "Task sets that ended up on one head, over all successful runs. Sorted by occurrences, then by head count "
     "at first occurrence."},
    {"runs.csv", "Runs", "Every (head count, seed) run, including failed ones."},
    {"ablation.csv", "Epsilon ablation", "Mean hard-assignment changes within the horizon, per epsilon."},
    {"capacity.csv", "Head capacity",
     "One head per task with distinct (embed, hidden). Parameters before and after pruning to the assigned charset."},
    {"oracle.csv", "Brute-force oracle",
     "Every task-to-head map trained with a frozen assignment, ranked by mean per-task accuracy."},
};

}  // namespace

ReportResult report(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("report: " + dir.string() + " is not a directory");
    ReportResult result;
    std::string body;
    std::string summary = "section,rows,file\n";

    for (const auto& s : kSections) {
        const fs::path path = dir / s.file;
        if (!fs::exists(path)) {
            result.warnings.push_back(std::string("missing ") + s.file);
            continue;
        }
        const auto rows = read_csv(path);
        if (rows.empty()) {
            result.warnings.push_back(std::string("empty ") + s.file);
            continue;
        }
        result.sections.emplace_back(s.title);
        body += std::string("## ") + s.title + "\n\n" + s.note + "\n\n";
        if (std::string(s.file) == "runs.csv") {
            std::size_t failed = 0;
            for (std::size_t r = 1; r < rows.size(); ++r) {
                if (rows[r].size() > 2 && rows[r][2] == "failed") ++failed;
            }
            body += "Runs: " + std::to_string(rows.size() - 1) + ", failed: " + std::to_string(failed) + ".\n\n";
        }
        body += markdown_table(rows) + "\n";
        summary += std::string(s.title) + "," + std::to_string(rows.size() - 1) + "," + s.file + "\n";
    }

    std::string md = "# Task grouping report\n\n";
    md += "Accuracy is the unweighted mean over tasks of teacher-forced character accuracy on a fixed "
          "validation set. Tables come from small synthetic worlds and are analogs of the multilingual "
          "experiments, not replications.\n\n";
    if (!result.warnings.empty()) {
        md += "Warnings:\n\n";
        for (const auto& w : result.warnings) md += "- " + w + "\n";
        md += "\n";
    }
    if (result.sections.empty()) md += "No tables found.\n";
    md += body;
    result.markdown = md;

    std::ofstream(dir / "report.md") << md;
    std::ofstream(dir / "summary.csv") << summary;
    return result;
}

}  // namespace taskgroup
