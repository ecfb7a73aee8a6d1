#include "avbench/split.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace avbench::split {

namespace {

__extension__ typedef unsigned __int128 u128;

using ordered_json = nlohmann::ordered_json;

void require_nonempty(const GroupCounts& g) {
  if (g.total() == 0) throw Error("cannot split empty group " + to_string(g.key));
}

SplitSolution make_solution(const GroupCounts& g, Mode mode, const std::vector<std::string>& ranked,
                            std::size_t head_size) {
  SplitSolution s;
  s.key = g.key;
  s.mode = mode;
  s.head_size = head_size;
  s.k = static_cast<double>(head_size) / static_cast<double>(ranked.size());
  std::uint64_t covered = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < head_size) {
      s.head_answers.push_back(ranked[i]);
      covered += g.counts.at(ranked[i]);
    } else {
      s.tail_answers.push_back(ranked[i]);
    }
  }
  s.coverage = static_cast<double>(covered) / static_cast<double>(g.total());
  s.normalized_entropy = balance::normalized_entropy(balance::AnswerDistribution(g.counts));
  return s;
}

template <typename Map>
std::vector<double> frequencies(const std::vector<std::string>& labels, const Map& counts) {
  std::uint64_t total = 0;
  for (const auto& [label, n] : counts) total += n;
  std::vector<double> out(labels.size(), 0.0);
  if (total == 0) return out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = counts.find(labels[i]);
    if (it != counts.end()) out[i] = static_cast<double>(it->second) / static_cast<double>(total);
  }
  return out;
}

ordered_json key_json(const GroupKey& key) {
  return {{"task", to_string(key.task)}, {"question_type", key.question_type}};
}

}  // namespace

std::string_view to_string(Mode mode) {
  return mode == Mode::conformal ? "conformal" : "legacy";
}

std::string_view to_string(Side side) { return side == Side::head ? "head" : "tail"; }

Mode parse_mode(std::string_view text) {
  if (text == "conformal") return Mode::conformal;
  if (text == "legacy") return Mode::legacy;
  throw Error("unknown split mode \"" + std::string(text) + "\" (expected conformal|legacy)");
}

Side parse_side(std::string_view text) {
  if (text == "head") return Side::head;
  if (text == "tail") return Side::tail;
  throw Error("unknown split side \"" + std::string(text) + "\" (expected head|tail)");
}

std::size_t GroupCounts::num_classes() const {
  return static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [](const auto& kv) { return kv.second > 0; }));
}

std::uint64_t GroupCounts::total() const {
  std::uint64_t d = 0;
  for (const auto& [label, n] : counts) d += n;
  return d;
}

double GroupCounts::mean_count() const {
  const std::size_t n = num_classes();
  return n == 0 ? 0.0 : static_cast<double>(total()) / static_cast<double>(n);
}

std::vector<std::string> ranked_labels(const GroupCounts& g) {
  std::vector<std::pair<std::string, std::uint64_t>> items;
  for (const auto& [label, n] : g.counts) {
    if (n > 0) items.emplace_back(label, n);
  }
  // std::map iteration is already label-ascending, so a stable sort on count
  // alone yields the lexicographic tie-break.
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [label, n] : items) out.push_back(std::move(label));
  return out;
}

SplitSolution conformal_split(const GroupCounts& g) {
  require_nonempty(g);
  const auto ranked = ranked_labels(g);
  const u128 n = ranked.size();
  const u128 d = g.total();
  u128 prefix = 0;
  std::size_t h = ranked.size();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    prefix += g.counts.at(ranked[i]);
    const u128 head = i + 1;
    // prefix / D >= 1 - h / N  <=>  prefix * N >= (N - h) * D
    if (prefix * n >= (n - head) * d) {
      h = i + 1;
      break;
    }
  }
  return make_solution(g, Mode::conformal, ranked, h);
}

SplitSolution legacy_split(const GroupCounts& g, double multiplier) {
  require_nonempty(g);
  if (!(multiplier >= 0.0) || !std::isfinite(multiplier)) {
    throw Error("legacy multiplier must be a finite non-negative number");
  }
  const auto ranked = ranked_labels(g);
  const long double threshold = static_cast<long double>(multiplier) *
                                static_cast<long double>(g.total()) /
                                static_cast<long double>(ranked.size());
  std::size_t h = 0;
  while (h < ranked.size() && static_cast<long double>(g.counts.at(ranked[h])) > threshold) ++h;
  return make_solution(g, Mode::legacy, ranked, h);
}

std::optional<Side> SplitAssignment::side_of(const std::string& id) const {
  auto it = sides.find(id);
  if (it == sides.end()) return std::nullopt;
  return it->second;
}

const SplitSolution* SplitAssignment::group(const GroupKey& key) const {
  auto it = std::lower_bound(groups.begin(), groups.end(), key,
                             [](const SplitSolution& s, const GroupKey& k) { return s.key < k; });
  return it != groups.end() && it->key == key ? &*it : nullptr;
}

std::vector<GroupCounts> group_counts(const DatasetManifest& manifest) {
  std::map<GroupKey, GroupCounts> by_key;
  for (const QARecord& r : manifest.records()) {
    auto& g = by_key[r.group()];
    g.key = r.group();
    ++g.counts[r.answer];
  }
  std::vector<GroupCounts> out;
  out.reserve(by_key.size());
  for (auto& [key, g] : by_key) out.push_back(std::move(g));
  return out;
}

SplitAssignment build_assignment(const DatasetManifest& manifest, const SplitConfig& config) {
  if (!(config.entropy_threshold >= 0.0 && config.entropy_threshold <= 1.0)) {
    throw Error("entropy threshold must lie in [0, 1]");
  }
  SplitAssignment out;
  std::map<GroupKey, std::set<std::string>> head_sets;
  for (const GroupCounts& g : group_counts(manifest)) {
    SplitSolution s;
    switch (config.mode) {
      case Mode::conformal:
        s = conformal_split(g);
        break;
      case Mode::legacy:
        s = legacy_split(g, config.legacy_multiplier);
        break;
    }
    s.balanced = s.normalized_entropy >= config.entropy_threshold;
    head_sets[g.key].insert(s.head_answers.begin(), s.head_answers.end());
    out.groups.push_back(std::move(s));
  }
  for (const QARecord& r : manifest.records()) {
    const auto& heads = head_sets.at(r.group());
    out.sides.emplace(r.id, heads.contains(r.answer) ? Side::head : Side::tail);
  }
  return out;
}

ordered_json to_json(const SplitAssignment& assignment) {
  ordered_json groups = ordered_json::array();
  for (const SplitSolution& s : assignment.groups) {
    ordered_json g = key_json(s.key);
    g["mode"] = to_string(s.mode);
    g["k"] = s.k;
    g["head_size"] = s.head_size;
    g["coverage"] = s.coverage;
    g["normalized_entropy"] = s.normalized_entropy;
    g["balanced"] = s.balanced;
    g["head_answers"] = s.head_answers;
    g["tail_answers"] = s.tail_answers;
    groups.push_back(std::move(g));
  }
  ordered_json sides = ordered_json::object();
  for (const auto& [id, side] : assignment.sides) sides[id] = to_string(side);
  return {{"groups", std::move(groups)}, {"assignments", std::move(sides)}};
}

SplitAssignment split_from_json(const nlohmann::json& doc) {
  try {
    SplitAssignment out;
    for (const auto& g : doc.at("groups")) {
      SplitSolution s;
      const auto task = parse_task(g.at("task").get<std::string>());
      if (!task) throw Error("split file: unknown task " + g.at("task").dump());
      s.key = {*task, g.at("question_type").get<std::string>()};
      s.mode = parse_mode(g.at("mode").get<std::string>());
      s.k = g.at("k").get<double>();
      s.head_size = g.at("head_size").get<std::size_t>();
      s.coverage = g.at("coverage").get<double>();
      s.normalized_entropy = g.at("normalized_entropy").get<double>();
      s.balanced = g.at("balanced").get<bool>();
      s.head_answers = g.at("head_answers").get<std::vector<std::string>>();
      s.tail_answers = g.at("tail_answers").get<std::vector<std::string>>();
      if (s.head_answers.size() != s.head_size) {
        throw Error("split file: head_size disagrees with head_answers for " + to_string(s.key));
      }
      out.groups.push_back(std::move(s));
    }
    std::sort(out.groups.begin(), out.groups.end(),
              [](const SplitSolution& a, const SplitSolution& b) { return a.key < b.key; });
    for (const auto& [id, side] : doc.at("assignments").items()) {
      out.sides.emplace(id, parse_side(side.get<std::string>()));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed split document: ") + e.what());
  }
}

SplitAssignment load_split(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
  return split_from_json(doc);
}

std::string serialize_split(const SplitAssignment& assignment) {
  return to_json(assignment).dump(2) + "\n";
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw Error("total_variation: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

std::vector<GroupDistribution> distribution_report(const DatasetManifest& manifest,
                                                   const SplitAssignment& assignment,
                                                   const DatasetManifest& reference) {
  std::map<GroupKey, std::map<std::string, std::uint64_t>> head_counts, tail_counts;
  for (const QARecord& r : manifest.records()) {
    const auto side = assignment.side_of(r.id);
    if (!side) throw Error("record \"" + r.id + "\" has no split assignment");
    auto& target = *side == Side::head ? head_counts : tail_counts;
    ++target[r.group()][r.answer];
  }
  const auto ref = balance::group_distributions(reference);

  std::vector<GroupDistribution> report;
  for (const SplitSolution& s : assignment.groups) {
    GroupDistribution g;
    g.key = s.key;
    const auto& head = head_counts[s.key];
    const auto& tail = tail_counts[s.key];
    auto ref_it = ref.find(s.key);
    g.in_reference = ref_it != ref.end();

    std::set<std::string> labels;
    for (const auto& [label, n] : head) labels.insert(label);
    for (const auto& [label, n] : tail) labels.insert(label);
    if (g.in_reference) {
      for (const auto& [label, n] : ref_it->second.counts()) {
        if (n > 0) labels.insert(label);
      }
    }
    g.labels.assign(labels.begin(), labels.end());
    g.head = frequencies(g.labels, head);
    g.tail = frequencies(g.labels, tail);
    if (g.in_reference) {
      g.reference = frequencies(g.labels, ref_it->second.counts());
      if (!head.empty()) g.tv_head = total_variation(g.reference, g.head);
      if (!tail.empty()) g.tv_tail = total_variation(g.reference, g.tail);
    } else {
      g.reference.assign(g.labels.size(), 0.0);
    }
    report.push_back(std::move(g));
  }
  return report;
}

ordered_json to_json(const std::vector<GroupDistribution>& report) {
  ordered_json groups = ordered_json::array();
  for (const GroupDistribution& g : report) {
    ordered_json j = key_json(g.key);
    j["in_reference"] = g.in_reference;
    j["labels"] = g.labels;
    j["reference"] = g.reference;
    j["head"] = g.head;
    j["tail"] = g.tail;
    j["tv_head"] = g.tv_head ? ordered_json(*g.tv_head) : ordered_json(nullptr);
    j["tv_tail"] = g.tv_tail ? ordered_json(*g.tv_tail) : ordered_json(nullptr);
    groups.push_back(std::move(j));
  }
  return {{"groups", std::move(groups)}};
}

}  // namespace avbench::split
