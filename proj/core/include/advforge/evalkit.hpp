#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace advforge::eval {

enum class Rule { T1, T2, T3, T4 };

/// Anything that can flag an item: a single detector or a combination rule.
enum class Source { reg, hist, resid, T1, T2, T3, T4 };

const char* to_string(Rule r);
const char* to_string(Source s);
Rule parse_rule(const std::string& name);
Source parse_source(const std::string& name);
Source source_of(Rule r);
inline constexpr Rule kAllRules[] = {Rule::T1, Rule::T2, Rule::T3, Rule::T4};

struct VerdictRecord {
  std::string item_id;
  bool truth = false;  // true = adversarial
  std::optional<bool> r;
  std::optional<bool> h;
  std::optional<bool> i;
  std::optional<double> residual_score;
};

/// T1 = R&H&I, T2 = R|H|I, T3 = majority, T4 = H&(R|I).
bool combine(bool r, bool h, bool i, Rule rule);

/// Throws InvalidInput when any of the three verdicts is missing.
bool combine(const VerdictRecord& rec, Rule rule);

/// The flag a source assigns to a record. Residual verdicts are taken as
/// stored; throws InvalidInput when a required verdict is missing.
bool flag(const VerdictRecord& rec, Source src);

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct PrecisionRecall {
  std::optional<double> precision;  // null when nothing is flagged
  std::optional<double> recall;     // null when there are no positives
  Counts counts;
};

PrecisionRecall precision_recall(std::span<const VerdictRecord> records, Source src);

struct CurvePoint {
  double theta = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::optional<double> precision;
  double recall = 0.0;
};

struct Curve {
  std::string name;
  std::vector<CurvePoint> points;  // sorted by (fpr, tpr)
  double auc = 0.0;
};

/// n evenly spaced values covering [0, 1].
std::vector<double> theta_grid(int n = 101);

/// Sweeps the residual threshold: the residual verdict becomes
/// residual_score < theta while R and H keep their stored values. An empty
/// grid sweeps every distinct score (plus +inf), which yields the exact curve.
/// AUC is the trapezoid area with the curve anchored at (0,0) and (1,1).
Curve roc_sweep(std::span<const VerdictRecord> records, Source src,
                std::span<const double> grid);

/// Pointwise maximum of piecewise-linear ROC curves, including crossings.
Curve roc_envelope(std::span<const Curve> curves);

/// Trapezoid area under (fpr, tpr) after adding the (0,0) and (1,1) anchors.
double auc_trapezoid(std::span<const CurvePoint> points);

/// Inner join on item_id. Each part carries a subset of the verdicts; the
/// join fails when the id sets differ or truths disagree.
std::vector<VerdictRecord> join(std::span<const std::vector<VerdictRecord>> parts);

// ---------------------------------------------------------------- CSV

/// One row of the verdict CSV: the detector columns that are known, plus
/// the rule or detector label that produced `flag`.
struct CsvRow {
  VerdictRecord record;
  std::string rule;
  bool flag = false;
};

inline constexpr const char* kCsvHeader = "item_id,truth,reg,hist,resid,resid_score,rule,flag";

std::string format_csv(std::span<const CsvRow> rows);
std::vector<CsvRow> parse_csv(const std::string& text);

void write_csv(const std::filesystem::path& path, std::span<const CsvRow> rows);
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

/// Rows for every record under each of `rules`.
std::vector<CsvRow> rule_rows(std::span<const VerdictRecord> records,
                              std::span<const Rule> rules = kAllRules);

/// Collapses rows to one record per item_id (first-seen order). Rows for the
/// same item must agree on every column they share.
std::vector<VerdictRecord> records_from_rows(std::span<const CsvRow> rows);

}  // namespace advforge::eval
