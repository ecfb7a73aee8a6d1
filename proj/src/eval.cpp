#include "avbench/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "avbench/random.hpp"

namespace avbench::eval {

namespace {

using ordered_json = nlohmann::ordered_json;
using split::Side;

constexpr std::string_view kTerminalPunctuation = ".,!?;:";

ordered_json tally_json(const Tally& t) {
  ordered_json j;
  j["count"] = t.count;
  j["correct"] = t.correct;
  const auto acc = t.accuracy();
  j["accuracy"] = acc ? ordered_json(*acc) : ordered_json(nullptr);
  return j;
}

ordered_json rollup_json(const TaskRollup& r) {
  return {{"head", tally_json(r.head)}, {"tail", tally_json(r.tail)},
          {"overall", tally_json(r.overall)}};
}

std::string join(const std::vector<std::string>& ids, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
    if (i > 0) out += ", ";
    out += ids[i];
  }
  if (ids.size() > limit) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

std::string cell_text(const std::optional<double>& acc) {
  return acc ? format_number(*acc) : "-";
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

MatchPolicy parse_match_policy(std::string_view text) {
  if (text == "normalized") return MatchPolicy::normalized;
  if (text == "exact") return MatchPolicy::exact;
  throw Error("unknown match policy \"" + std::string(text) + "\" (expected normalized|exact)");
}

std::string normalize_answer(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char ch : text) {
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  std::string s = trim(lowered);
  while (!s.empty() && kTerminalPunctuation.find(s.back()) != std::string_view::npos) {
    s.pop_back();
    s = trim(s);
  }
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(ch);
  }
  return out;
}

bool match_answer(std::string_view prediction, std::string_view gold, MatchPolicy policy) {
  if (policy == MatchPolicy::exact) return prediction == gold;
  return normalize_answer(prediction) == normalize_answer(gold);
}

std::optional<double> Tally::accuracy() const {
  if (count == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(count);
}

EvalReport accuracy_report(const DatasetManifest& manifest, const split::SplitAssignment& assignment,
                           const std::vector<PredictionRecord>& preds,
                           const EvalOptions& options) {
  const ValidationReport v = validate_pair(manifest, preds);
  if (!v.orphan_predictions.empty()) {
    throw Error("predictions reference unknown ids: " + join(v.orphan_predictions));
  }
  if (!options.missing_as_incorrect && !v.missing_predictions.empty()) {
    throw Error("no prediction for ids: " + join(v.missing_predictions));
  }
  std::vector<std::string> unassigned;
  for (const QARecord& r : manifest.records()) {
    if (!assignment.side_of(r.id)) unassigned.push_back(r.id);
  }
  if (!unassigned.empty()) throw Error("records missing from the split: " + join(unassigned));

  std::unordered_map<std::string_view, std::string_view> by_id;
  by_id.reserve(preds.size());
  for (const auto& p : preds) by_id.emplace(p.id, p.prediction);

  EvalReport report;
  for (const QARecord& r : manifest.records()) {
    const Side side = *assignment.side_of(r.id);
    auto it = by_id.find(r.id);
    const bool ok = it != by_id.end() && match_answer(it->second, r.answer, options.policy);
    Tally& cell = report.cells[{r.group(), side}];
    ++cell.count;
    cell.correct += ok ? 1 : 0;
  }
  for (const auto& [key, t] : report.cells) {
    report.groups[key.group] += t;
    TaskRollup& task = report.tasks[key.group.task];
    (key.side == Side::head ? task.head : task.tail) += t;
    task.overall += t;
    (key.side == Side::head ? report.pooled.head : report.pooled.tail) += t;
    report.pooled.overall += t;
  }
  return report;
}

ordered_json to_json(const EvalReport& report) {
  ordered_json cells = ordered_json::array();
  for (const auto& [key, t] : report.cells) {
    ordered_json j;
    j["task"] = to_string(key.group.task);
    j["question_type"] = key.group.question_type;
    j["side"] = split::to_string(key.side);
    j.update(tally_json(t));
    cells.push_back(std::move(j));
  }
  ordered_json groups = ordered_json::array();
  for (const auto& [key, t] : report.groups) {
    ordered_json j;
    j["task"] = to_string(key.task);
    j["question_type"] = key.question_type;
    j.update(tally_json(t));
    groups.push_back(std::move(j));
  }
  ordered_json tasks = ordered_json::object();
  for (const auto& [task, r] : report.tasks) tasks[std::string(to_string(task))] = rollup_json(r);
  ordered_json out;
  out["cells"] = std::move(cells);
  out["groups"] = std::move(groups);
  out["tasks"] = std::move(tasks);
  out["pooled"] = rollup_json(report.pooled);
  return out;
}

std::string render_table(const EvalReport& report) {
  std::set<std::string> types;
  for (const auto& [key, t] : report.cells) types.insert(key.group.question_type);
  std::vector<Task> tasks;
  for (const auto& [task, r] : report.tasks) tasks.push_back(task);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"question_type"};
  for (Task task : tasks) {
    header.push_back(std::string(to_string(task)) + " H");
    header.push_back(std::string(to_string(task)) + " T");
  }
  rows.push_back(header);
  auto cell = [&](const GroupKey& g, Side side) -> std::optional<double> {
    auto it = report.cells.find({g, side});
    return it == report.cells.end() ? std::nullopt : it->second.accuracy();
  };
  for (const std::string& type : types) {
    std::vector<std::string> row{type};
    for (Task task : tasks) {
      row.push_back(cell_text(cell({task, type}, Side::head)));
      row.push_back(cell_text(cell({task, type}, Side::tail)));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::string> all{"all"};
  for (Task task : tasks) {
    all.push_back(cell_text(report.tasks.at(task).head.accuracy()));
    all.push_back(cell_text(report.tasks.at(task).tail.accuracy()));
  }
  rows.push_back(std::move(all));

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i == 0 ? "" : "  ") << (i + 1 == row.size() ? row[i] : pad(row[i], widths[i]));
    }
    out << '\n';
  }
  out << "pooled head " << cell_text(report.pooled.head.accuracy()) << "  tail "
      << cell_text(report.pooled.tail.accuracy()) << "  overall "
      << cell_text(report.pooled.overall.accuracy()) << '\n';
  return out.str();
}

std::map<CellKey, std::size_t> sample_quotas(const std::map<CellKey, std::size_t>& cell_sizes,
                                             double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error("sampling ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  struct Share {
    CellKey key;
    std::size_t base;
    double remainder;
  };
  std::vector<Share> shares;
  std::size_t total = 0;
  std::size_t assigned = 0;
  for (const auto& [key, size] : cell_sizes) {
    double exact = ratio * static_cast<double>(size);
    const double nearest = std::round(exact);
    if (std::abs(exact - nearest) < 1e-9) exact = nearest;
    const auto base = static_cast<std::size_t>(std::floor(exact));
    shares.push_back({key, base, exact - static_cast<double>(base)});
    total += size;
    assigned += base;
  }
  double target_exact = ratio * static_cast<double>(total);
  if (std::abs(target_exact - std::round(target_exact)) < 1e-9) target_exact = std::round(target_exact);
  const auto target = static_cast<std::size_t>(std::floor(target_exact + 0.5));

  // Largest remainders first; cell-key order breaks ties.
  std::vector<std::size_t> order(shares.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return shares[a].remainder > shares[b].remainder;
  });
  std::size_t extra = target > assigned ? target - assigned : 0;
  for (std::size_t i : order) {
    if (extra == 0) break;
    if (shares[i].remainder <= 0.0) break;
    ++shares[i].base;
    --extra;
  }
  std::map<CellKey, std::size_t> out;
  for (const Share& s : shares) out.emplace(s.key, s.base);
  return out;
}

DatasetManifest uniform_sample(const DatasetManifest& manifest,
                               const split::SplitAssignment& assignment, double ratio,
                               std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error("sampling ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  std::map<CellKey, std::vector<std::size_t>> members;
  const auto& records = manifest.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto side = assignment.side_of(records[i].id);
    if (!side) throw Error("record \"" + records[i].id + "\" has no split assignment");
    members[{records[i].group(), *side}].push_back(i);
  }
  std::map<CellKey, std::size_t> sizes;
  for (const auto& [key, idx] : members) sizes.emplace(key, idx.size());
  const auto quotas = sample_quotas(sizes, ratio);

  Rng rng(seed);
  std::vector<bool> keep(records.size(), false);
  for (auto& [key, idx] : members) {
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t quota = quotas.at(key);
    for (std::size_t i = 0; i < quota; ++i) keep[idx[i]] = true;
  }
  std::vector<QARecord> sampled;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) sampled.push_back(records[i]);
  }
  // rephrase_of may point at a record that was not sampled.
  std::set<std::string> kept_ids;
  for (const QARecord& r : sampled) kept_ids.insert(r.id);
  for (QARecord& r : sampled) {
    if (r.rephrase_of && !kept_ids.contains(*r.rephrase_of)) {
      r.extra["rephrase_of_unsampled"] = *r.rephrase_of;
      r.rephrase_of.reset();
    }
  }
  return DatasetManifest(std::move(sampled));
}

AgreementStats agreement_stats(const std::map<unsigned, std::uint64_t>& histogram,
                               unsigned raters, unsigned categories) {
  if (categories != 2) {
    throw Error("agreement histograms of positive-vote counts describe 2 categories only");
  }
  if (raters < 2) throw Error("agreement needs at least 2 raters");
  AgreementStats s;
  s.histogram = histogram;
  s.raters = raters;
  const double r = raters;
  double agreement_sum = 0.0;
  double positive_votes = 0.0;
  std::uint64_t passes = 0;
  for (const auto& [positive, items] : histogram) {
    if (positive > raters) {
      throw Error("histogram key " + std::to_string(positive) + " exceeds rater count " +
                  std::to_string(raters));
    }
    const double pos = positive;
    const double neg = r - pos;
    s.items += items;
    agreement_sum += static_cast<double>(items) * (pos * (pos - 1.0) + neg * (neg - 1.0)) /
                     (r * (r - 1.0));
    positive_votes += static_cast<double>(items) * pos;
    if (2 * positive > raters) passes += items;
  }
  if (s.items == 0) throw Error("agreement histogram is empty");
  const double n = static_cast<double>(s.items);
  s.observed_agreement = agreement_sum / n;
  const double p_pos = positive_votes / (n * r);
  s.chance_agreement = p_pos * p_pos + (1.0 - p_pos) * (1.0 - p_pos);
  if (s.chance_agreement < 1.0) {
    s.fleiss_kappa = (s.observed_agreement - s.chance_agreement) / (1.0 - s.chance_agreement);
  }
  s.pass_rate = static_cast<double>(passes) / n;
  return s;
}

std::map<unsigned, std::uint64_t> parse_histogram(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error("agreement histogram must be a JSON object");
  std::map<unsigned, std::uint64_t> out;
  for (const auto& [key, value] : doc.items()) {
    unsigned k = 0;
    std::size_t used = 0;
    try {
      const unsigned long parsed = std::stoul(key, &used);
      k = static_cast<unsigned>(parsed);
      if (parsed != k) used = 0;
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size() || key.empty() || key[0] == '-' || key[0] == '+') {
      throw Error("agreement histogram key \"" + key + "\" is not a vote count");
    }
    if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0)) {
      throw Error("agreement histogram value for \"" + key + "\" must be a non-negative integer");
    }
    out[k] = value.get<std::uint64_t>();
  }
  return out;
}

ordered_json to_json(const AgreementStats& s) {
  ordered_json hist = ordered_json::object();
  for (auto it = s.histogram.rbegin(); it != s.histogram.rend(); ++it) {
    hist[std::to_string(it->first)] = it->second;
  }
  ordered_json j;
  j["raters"] = s.raters;
  j["items"] = s.items;
  j["histogram"] = std::move(hist);
  j["observed_agreement"] = s.observed_agreement;
  j["chance_agreement"] = s.chance_agreement;
  j["fleiss_kappa"] = s.fleiss_kappa ? ordered_json(*s.fleiss_kappa) : ordered_json(nullptr);
  j["pass_rate"] = s.pass_rate;
  return j;
}

std::string render_table(const AgreementStats& s) {
  std::ostringstream out;
  out << "positive  negative  items\n";
  for (auto it = s.histogram.rbegin(); it != s.histogram.rend(); ++it) {
    out << pad(std::to_string(it->first), 10) << pad(std::to_string(s.raters - it->first), 10)
        << it->second << '\n';
  }
  out << "observed agreement  " << format_number(s.observed_agreement) << '\n';
  out << "chance agreement    " << format_number(s.chance_agreement) << '\n';
  out << "fleiss kappa        " << (s.fleiss_kappa ? format_number(*s.fleiss_kappa) : "-") << '\n';
  out << "pass rate           " << format_number(s.pass_rate) << '\n';
  return out.str();
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

}  // namespace avbench::eval
