#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avbench/core.hpp"

namespace avbench::balance {

inline constexpr double kDefaultThreshold = 0.9;

/// Answer-class counts of one question group. Classes with zero count are
/// kept in the map but do not count towards num_classes().
class AnswerDistribution {
 public:
  AnswerDistribution() = default;
  explicit AnswerDistribution(std::map<std::string, std::uint64_t> counts);

  template <typename Range>
  static AnswerDistribution from_labels(const Range& labels) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& label : labels) ++counts[std::string(label)];
    return AnswerDistribution(std::move(counts));
  }

  const std::map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }
  std::uint64_t total() const noexcept { return total_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  double probability(const std::string& label) const;

 private:
  std::map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
  std::size_t num_classes_ = 0;
};

/// Shannon entropy in bits. Throws Error on an empty distribution.
double entropy(const AnswerDistribution& dist);

/// entropy / log2(N), and 0 when only one class is present.
double normalized_entropy(const AnswerDistribution& dist);

bool is_imbalanced(const AnswerDistribution& dist, double threshold = kDefaultThreshold);

struct GroupBalance {
  GroupKey key;
  std::size_t num_classes = 0;
  std::uint64_t total = 0;
  double entropy = 0.0;
  double normalized_entropy = 0.0;
  bool imbalanced = false;
};

/// Answer distribution of every group of the manifest, in group-key order.
std::map<GroupKey, AnswerDistribution> group_distributions(const DatasetManifest& manifest);

std::vector<GroupBalance> balance_report(const DatasetManifest& manifest,
                                         double threshold = kDefaultThreshold);

}  // namespace avbench::balance
