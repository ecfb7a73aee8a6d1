#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "avbench/balance.hpp"
#include "avbench/core.hpp"

namespace avbench::split {

enum class Mode { conformal, legacy };
enum class Side { head, tail };

std::string_view to_string(Mode mode);
std::string_view to_string(Side side);
/// Throws Error for anything other than "conformal" or "legacy".
Mode parse_mode(std::string_view text);
Side parse_side(std::string_view text);

inline constexpr double kDefaultLegacyMultiplier = 1.2;

/// Answer counts n_c of one group, with |D| = total() and mu = total / N.
struct GroupCounts {
  GroupKey key;
  std::map<std::string, std::uint64_t> counts;

  std::size_t num_classes() const;
  std::uint64_t total() const;
  double mean_count() const;
};

/// Labels with nonzero count, most frequent first, ties by ascending label.
std::vector<std::string> ranked_labels(const GroupCounts& g);

struct SplitSolution {
  GroupKey key;
  Mode mode = Mode::conformal;
  double k = 0.0;  // head_size / N
  std::size_t head_size = 0;
  std::vector<std::string> head_answers;  // ranked order
  std::vector<std::string> tail_answers;  // ranked order
  double coverage = 0.0;
  double normalized_entropy = 0.0;
  bool balanced = false;

  bool operator==(const SplitSolution&) const = default;
};

/// Smallest head prefix h with coverage >= 1 - h/N. The inequality is
/// evaluated in exact integer arithmetic.
SplitSolution conformal_split(const GroupCounts& g);

/// Label is tail iff n_c <= multiplier * mu.
SplitSolution legacy_split(const GroupCounts& g, double multiplier = kDefaultLegacyMultiplier);

struct SplitConfig {
  Mode mode = Mode::conformal;
  double legacy_multiplier = kDefaultLegacyMultiplier;
  double entropy_threshold = balance::kDefaultThreshold;
};

struct SplitAssignment {
  std::map<std::string, Side> sides;
  std::vector<SplitSolution> groups;  // group-key order

  std::optional<Side> side_of(const std::string& id) const;
  const SplitSolution* group(const GroupKey& key) const;
  bool operator==(const SplitAssignment&) const = default;
};

std::vector<GroupCounts> group_counts(const DatasetManifest& manifest);

SplitAssignment build_assignment(const DatasetManifest& manifest, const SplitConfig& config);

nlohmann::ordered_json to_json(const SplitAssignment& assignment);
SplitAssignment split_from_json(const nlohmann::json& doc);
SplitAssignment load_split(const std::filesystem::path& path);

/// Pretty-printed split document with trailing newline.
std::string serialize_split(const SplitAssignment& assignment);

struct GroupDistribution {
  GroupKey key;
  std::vector<std::string> labels;  // union of all three supports, ascending
  std::vector<double> reference;
  std::vector<double> head;
  std::vector<double> tail;
  std::optional<double> tv_head;
  std::optional<double> tv_tail;
  bool in_reference = true;
};

/// Total-variation distance 0.5 * sum |p - q| of two aligned distributions.
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

/// Compares each group's head and tail answer frequencies against the same
/// group of a reference (training) manifest.
std::vector<GroupDistribution> distribution_report(const DatasetManifest& manifest,
                                                   const SplitAssignment& assignment,
                                                   const DatasetManifest& reference);

nlohmann::ordered_json to_json(const std::vector<GroupDistribution>& report);

}  // namespace avbench::split
