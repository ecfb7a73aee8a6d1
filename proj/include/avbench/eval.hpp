#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "avbench/core.hpp"
#include "avbench/split.hpp"

namespace avbench::eval {

enum class MatchPolicy {
  normalized,  // lowercase, trim, strip terminal punctuation, collapse spaces
  exact,
};

MatchPolicy parse_match_policy(std::string_view text);

std::string normalize_answer(std::string_view text);
bool match_answer(std::string_view prediction, std::string_view gold,
                  MatchPolicy policy = MatchPolicy::normalized);

struct Tally {
  std::uint64_t count = 0;
  std::uint64_t correct = 0;

  std::optional<double> accuracy() const;
  Tally& operator+=(const Tally& other) {
    count += other.count;
    correct += other.correct;
    return *this;
  }
  bool operator==(const Tally&) const = default;
};

struct CellKey {
  GroupKey group;
  split::Side side = split::Side::head;

  auto operator<=>(const CellKey&) const = default;
  bool operator==(const CellKey&) const = default;
};

struct TaskRollup {
  Tally head;
  Tally tail;
  Tally overall;
};

struct EvalReport {
  std::map<CellKey, Tally> cells;        // only non-empty cells
  std::map<GroupKey, Tally> groups;      // head + tail per group
  std::map<Task, TaskRollup> tasks;      // tasks that have records
  TaskRollup pooled;
};

struct EvalOptions {
  MatchPolicy policy = MatchPolicy::normalized;
  // With false, a gold record without prediction is an error.
  bool missing_as_incorrect = false;
};

/// Micro-averaged accuracy per (task, type, side) cell plus rollups. Throws
/// Error listing orphan predictions, unassigned records, and (unless
/// missing_as_incorrect) records without a prediction.
EvalReport accuracy_report(const DatasetManifest& manifest, const split::SplitAssignment& assignment,
                           const std::vector<PredictionRecord>& preds,
                           const EvalOptions& options = {});

nlohmann::ordered_json to_json(const EvalReport& report);

/// Rows are question types, columns are H/T per task.
std::string render_table(const EvalReport& report);

/// Samples `ratio` of every (task, type, side) cell. Cell quotas use
/// largest-remainder rounding of ratio * cell size against a total of
/// round(ratio * |manifest|); members come from a seeded shuffle. Original
/// record order is kept.
DatasetManifest uniform_sample(const DatasetManifest& manifest,
                               const split::SplitAssignment& assignment, double ratio,
                               std::uint64_t seed);

/// Per-cell quotas, exposed for inspection and testing.
std::map<CellKey, std::size_t> sample_quotas(const std::map<CellKey, std::size_t>& cell_sizes,
                                             double ratio);

struct AgreementStats {
  std::map<unsigned, std::uint64_t> histogram;  // positive votes -> items
  unsigned raters = 0;
  std::uint64_t items = 0;
  double observed_agreement = 0.0;
  double chance_agreement = 0.0;
  std::optional<double> fleiss_kappa;  // absent when chance agreement is 1
  double pass_rate = 0.0;              // strict majority positive
};

/// Fleiss statistics for binary votes from `raters` raters per item.
AgreementStats agreement_stats(const std::map<unsigned, std::uint64_t>& histogram,
                               unsigned raters, unsigned categories = 2);

/// Parses {"3": 164219, "2": 47353, ...}.
std::map<unsigned, std::uint64_t> parse_histogram(const nlohmann::json& doc);

nlohmann::ordered_json to_json(const AgreementStats& stats);
std::string render_table(const AgreementStats& stats);

/// printf "%.6g", the precision used in every human-readable table.
std::string format_number(double value);

}  // namespace avbench::eval
