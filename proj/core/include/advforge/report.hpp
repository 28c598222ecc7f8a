#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advforge/evalkit.hpp"

namespace advforge::eval {

struct SummaryRow {
  Source source;
  PrecisionRecall pr;
};

struct Summary {
  std::size_t records = 0;
  std::size_t positives = 0;
  std::vector<SummaryRow> rows;  // every source whose verdicts are available
  std::vector<Curve> roc;        // per rule (or resid alone), empty without scores
  std::optional<Curve> envelope;
};

/// Metrics for every available detector and each of `rules`; ROC sweeps
/// over `grid` whenever residual scores are present.
Summary summarize(std::span<const VerdictRecord> records, std::span<const double> grid,
                  std::span<const Rule> rules = kAllRules);

std::string summary_markdown(const Summary& s, const std::string& title);

/// SVG line plots built from plain path elements.
std::string roc_svg(const Summary& s, const std::string& title);
std::string pr_svg(const Summary& s, const std::string& title);

struct ReportFiles {
  std::filesystem::path csv;
  std::filesystem::path summary;
  std::filesystem::path roc;
  std::filesystem::path pr;
};

/// Writes verdicts.csv, summary.md, roc.svg and pr.svg into `dir`. The CSV
/// holds one row per item and rule when all three verdicts are present,
/// otherwise one row per item and available detector.
ReportFiles write_report(const std::filesystem::path& dir, const std::string& title,
                         std::span<const VerdictRecord> records, std::span<const double> grid,
                         std::span<const Rule> rules = kAllRules);

}  // namespace advforge::eval
