#include "avbench/balance.hpp"

#include <cmath>

namespace avbench::balance {

namespace {

void require_nonempty(const AnswerDistribution& dist) {
  if (dist.total() == 0) throw Error("entropy of an empty answer distribution");
}

}  // namespace

AnswerDistribution::AnswerDistribution(std::map<std::string, std::uint64_t> counts)
    : counts_(std::move(counts)) {
  for (const auto& [label, n] : counts_) {
    total_ += n;
    if (n > 0) ++num_classes_;
  }
}

double AnswerDistribution::probability(const std::string& label) const {
  if (total_ == 0) return 0.0;
  auto it = counts_.find(label);
  return it == counts_.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total_);
}

double entropy(const AnswerDistribution& dist) {
  require_nonempty(dist);
  const double total = static_cast<double>(dist.total());
  // Neumaier summation of -p log2 p.
  double sum = 0.0;
  double compensation = 0.0;
  for (const auto& [label, n] : dist.counts()) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / total;
    const double term = -p * std::log2(p);
    const double t = sum + term;
    compensation += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  const double h = sum + compensation;
  return h <= 0.0 ? 0.0 : h;
}

double normalized_entropy(const AnswerDistribution& dist) {
  require_nonempty(dist);
  const std::size_t n = dist.num_classes();
  if (n < 2) return 0.0;
  return entropy(dist) / std::log2(static_cast<double>(n));
}

bool is_imbalanced(const AnswerDistribution& dist, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error("entropy threshold must lie in [0, 1], got " + std::to_string(threshold));
  }
  return normalized_entropy(dist) < threshold;
}

std::map<GroupKey, AnswerDistribution> group_distributions(const DatasetManifest& manifest) {
  std::map<GroupKey, std::map<std::string, std::uint64_t>> counts;
  for (const QARecord& r : manifest.records()) ++counts[r.group()][r.answer];
  std::map<GroupKey, AnswerDistribution> out;
  for (auto& [key, c] : counts) out.emplace(key, AnswerDistribution(std::move(c)));
  return out;
}

std::vector<GroupBalance> balance_report(const DatasetManifest& manifest, double threshold) {
  std::vector<GroupBalance> report;
  for (const auto& [key, dist] : group_distributions(manifest)) {
    GroupBalance g;
    g.key = key;
    g.num_classes = dist.num_classes();
    g.total = dist.total();
    g.entropy = entropy(dist);
    g.normalized_entropy = normalized_entropy(dist);
    g.imbalanced = is_imbalanced(dist, threshold);
    report.push_back(std::move(g));
  }
  return report;
}

}  // namespace avbench::balance
