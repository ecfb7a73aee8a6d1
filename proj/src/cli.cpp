#include "avbench/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "avbench/balance.hpp"
#include "avbench/core.hpp"
#include "avbench/eval.hpp"
#include "avbench/mccd.hpp"
#include "avbench/split.hpp"
#include "avbench/toy.hpp"

namespace avbench::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

/// Writes to `path` when set, otherwise to the output stream.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file(path, text);
  }
}

std::string json_text(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json loss_json(const mccd::LossBreakdown& b) {
  return {{"l_a", b.l_a}, {"l_d", b.l_d}, {"l_c", b.l_c}, {"total", b.total}};
}

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json run_json(const toy::RunResult& r) {
  ordered_json j;
  j["seed"] = r.seed;
  j["head_acc"] = optional_json(r.accuracy.head);
  j["tail_acc"] = optional_json(r.accuracy.tail);
  j["overall_acc"] = optional_json(r.accuracy.overall);
  j["final_losses"] = loss_json(r.final_loss);
  return j;
}

struct SplitArgs {
  std::string in, out, mode = "conformal", reference, report;
  double multiplier = split::kDefaultLegacyMultiplier;
  double threshold = balance::kDefaultThreshold;
};

struct EvaluateArgs {
  std::string gold, pred, split, format = "json", out, match = "normalized";
  bool missing_as_incorrect = false;
};

struct SampleArgs {
  std::string in, split, out;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

struct AgreementArgs {
  std::string in, format = "json", out;
  unsigned raters = 3;
};

struct ToyArgs {
  toy::SyntheticSpec spec;
  toy::TrainConfig train;
  std::string optimizer = "sgd_momentum";
  std::vector<std::uint64_t> seeds;
  std::uint64_t seed = 0;
  std::string out;
};

struct GradArgs {
  std::size_t classes = 32;
  std::size_t trials = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  mccd::MCCDConfig mccd;
  std::string out;
};

struct EntropyArgs {
  std::string in, format = "json", out;
  double threshold = balance::kDefaultThreshold;
};

int do_split(const SplitArgs& a, std::ostream& out) {
  const DatasetManifest manifest = parse_dataset(a.in);
  split::SplitConfig cfg;
  cfg.mode = split::parse_mode(a.mode);
  cfg.legacy_multiplier = a.multiplier;
  cfg.entropy_threshold = a.threshold;
  const split::SplitAssignment assignment = split::build_assignment(manifest, cfg);
  emit(a.out, split::serialize_split(assignment), out);
  if (!a.reference.empty()) {
    const DatasetManifest reference = parse_dataset(a.reference);
    const auto report = split::distribution_report(manifest, assignment, reference);
    emit(a.report, json_text(split::to_json(report)), out);
  }
  return kExitOk;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const DatasetManifest gold = parse_dataset(a.gold);
  const auto preds = parse_predictions(a.pred);
  const split::SplitAssignment assignment = split::load_split(a.split);
  eval::EvalOptions options;
  options.policy = eval::parse_match_policy(a.match);
  options.missing_as_incorrect = a.missing_as_incorrect;
  const eval::EvalReport report = eval::accuracy_report(gold, assignment, preds, options);
  emit(a.out, a.format == "table" ? eval::render_table(report) : json_text(eval::to_json(report)),
       out);
  return kExitOk;
}

int do_sample(const SampleArgs& a, std::ostream& out) {
  const DatasetManifest manifest = parse_dataset(a.in);
  const split::SplitAssignment assignment = split::load_split(a.split);
  const DatasetManifest sampled = eval::uniform_sample(manifest, assignment, a.ratio, a.seed);
  emit(a.out, serialize_dataset(sampled), out);
  return kExitOk;
}

int do_agreement(const AgreementArgs& a, std::ostream& out) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(a.in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(a.in + ": invalid JSON: " + e.what());
  }
  const auto stats = eval::agreement_stats(eval::parse_histogram(doc), a.raters);
  emit(a.out, a.format == "table" ? eval::render_table(stats) : json_text(eval::to_json(stats)),
       out);
  return kExitOk;
}

ordered_json toy_config_json(const ToyArgs& a) {
  ordered_json j;
  j["classes"] = a.spec.num_classes;
  j["dim"] = a.spec.feature_dim;
  j["bias_rate"] = a.spec.bias_rate;
  j["train_size"] = a.spec.train_size;
  j["head_test_size"] = a.spec.head_test_size;
  j["tail_test_size"] = a.spec.tail_test_size;
  j["noise_std"] = a.spec.noise_std;
  j["distractor_std"] = a.spec.distractor_std;
  j["signal_scale"] = a.spec.signal_scale;
  j["cue_scale"] = a.spec.cue_scale;
  j["hidden"] = a.train.hidden_dim;
  j["epochs"] = a.train.epochs;
  j["batch_size"] = a.train.batch_size;
  j["lr"] = a.train.learning_rate;
  j["optimizer"] = toy::to_string(a.train.optimizer);
  j["momentum"] = a.train.momentum;
  j["alpha"] = a.train.mccd.alpha;
  j["beta"] = a.train.mccd.beta;
  j["epsilon"] = a.train.mccd.epsilon;
  return j;
}

int do_toy(ToyArgs a, std::ostream& out) {
  a.train.optimizer = toy::parse_optimizer(a.optimizer);
  ordered_json doc;
  doc["config"] = toy_config_json(a);
  if (a.seeds.empty()) {
    const toy::RunResult r = toy::run_once(a.spec, a.train, a.seed);
    doc["runs"] = ordered_json::array({run_json(r)});
  } else {
    const toy::PairedSummary s = toy::paired_experiment(a.spec, a.train, a.seeds);
    ordered_json debiased = ordered_json::array(), baseline = ordered_json::array();
    for (const auto& r : s.debiased) debiased.push_back(run_json(r));
    for (const auto& r : s.baseline) baseline.push_back(run_json(r));
    doc["debiased"] = std::move(debiased);
    doc["baseline"] = std::move(baseline);
    ordered_json summary;
    summary["median_head_debiased"] = s.median_head_debiased;
    summary["median_tail_debiased"] = s.median_tail_debiased;
    summary["median_overall_debiased"] = s.median_overall_debiased;
    summary["median_head_baseline"] = s.median_head_baseline;
    summary["median_tail_baseline"] = s.median_tail_baseline;
    summary["median_overall_baseline"] = s.median_overall_baseline;
    summary["tail_gain"] = s.median_tail_debiased - s.median_tail_baseline;
    summary["head_drop"] = s.median_head_baseline - s.median_head_debiased;
    doc["summary"] = std::move(summary);
  }
  emit(a.out, json_text(doc), out);
  return kExitOk;
}

int do_grad_check(const GradArgs& a, std::ostream& out) {
  if (!(a.step > 0.0)) throw Error("--step must be positive");
  const auto summary = mccd::random_grad_check(a.classes, a.trials, a.step, a.seed, a.mccd);
  ordered_json j;
  j["trials"] = summary.trials;
  j["max_classes"] = a.classes;
  j["step"] = a.step;
  j["seed"] = a.seed;
  j["alpha"] = a.mccd.alpha;
  j["beta"] = a.mccd.beta;
  j["epsilon"] = a.mccd.epsilon;
  j["max_rel_error"] = summary.max_rel_error;
  j["worst_trial"] = summary.worst_trial;
  j["tolerance"] = a.tolerance;
  const bool passed = summary.max_rel_error < a.tolerance;
  j["passed"] = passed;
  emit(a.out, json_text(j), out);
  return passed ? kExitOk : kExitFailure;
}

int do_entropy(const EntropyArgs& a, std::ostream& out) {
  const DatasetManifest manifest = parse_dataset(a.in);
  const auto report = balance::balance_report(manifest, a.threshold);
  if (a.format == "table") {
    std::ostringstream t;
    t << "task    question_type         N      total     H(bits)   H_norm    imbalanced\n";
    for (const auto& g : report) {
      char line[256];
      std::snprintf(line, sizeof line, "%-7s %-20s %-6zu %-9llu %-9s %-9s %s\n",
                    std::string(to_string(g.key.task)).c_str(), g.key.question_type.c_str(),
                    g.num_classes, static_cast<unsigned long long>(g.total),
                    eval::format_number(g.entropy).c_str(),
                    eval::format_number(g.normalized_entropy).c_str(),
                    g.imbalanced ? "yes" : "no");
      t << line;
    }
    emit(a.out, t.str(), out);
    return kExitOk;
  }
  ordered_json groups = ordered_json::array();
  for (const auto& g : report) {
    ordered_json j;
    j["task"] = to_string(g.key.task);
    j["question_type"] = g.key.question_type;
    j["num_classes"] = g.num_classes;
    j["total"] = g.total;
    j["entropy_bits"] = g.entropy;
    j["normalized_entropy"] = g.normalized_entropy;
    j["imbalanced"] = g.imbalanced;
    groups.push_back(std::move(j));
  }
  ordered_json doc;
  doc["threshold"] = a.threshold;
  doc["groups"] = std::move(groups);
  emit(a.out, json_text(doc), out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Head/tail benchmark splitting, MCCD debiasing losses and robustness evaluation",
               "avbench"};
  app.set_config("--config", "", "TOML/INI file with option defaults; flags take precedence");
  app.require_subcommand(1, 1);

  const std::vector<std::string> formats{"json", "table"};

  SplitArgs split_args;
  auto* split_cmd = app.add_subcommand("split", "Partition each question group into head/tail");
  split_cmd->add_option("--in", split_args.in, "Dataset (JSON lines)")->required();
  split_cmd->add_option("--out", split_args.out, "Split document to write")->required();
  split_cmd->add_option("--mode", split_args.mode, "conformal|legacy")
      ->check(CLI::IsMember({"conformal", "legacy"}))
      ->capture_default_str();
  split_cmd->add_option("--legacy-multiplier", split_args.multiplier)->capture_default_str();
  split_cmd->add_option("--entropy-threshold", split_args.threshold)
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  auto* ref_opt = split_cmd->add_option("--reference", split_args.reference,
                                        "Reference (training) dataset for the distribution report");
  split_cmd->add_option("--report", split_args.report, "Distribution report to write")
      ->needs(ref_opt);

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Head/tail/overall accuracy report");
  eval_cmd->add_option("--gold", eval_args.gold)->required();
  eval_cmd->add_option("--pred", eval_args.pred)->required();
  eval_cmd->add_option("--split", eval_args.split)->required();
  eval_cmd->add_option("--format", eval_args.format)->check(CLI::IsMember(formats))
      ->capture_default_str();
  eval_cmd->add_option("--match", eval_args.match, "normalized|exact")
      ->check(CLI::IsMember({"normalized", "exact"}))
      ->capture_default_str();
  eval_cmd->add_flag("--missing-as-incorrect", eval_args.missing_as_incorrect);
  eval_cmd->add_option("--out", eval_args.out, "Write here instead of standard output");

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Stratified uniform subsample");
  sample_cmd->add_option("--in", sample_args.in)->required();
  sample_cmd->add_option("--split", sample_args.split)->required();
  sample_cmd->add_option("--ratio", sample_args.ratio)->required();
  sample_cmd->add_option("--seed", sample_args.seed)->capture_default_str();
  sample_cmd->add_option("--out", sample_args.out, "Write here instead of standard output");

  AgreementArgs agree_args;
  auto* agree_cmd = app.add_subcommand("agreement", "Fleiss agreement from a vote histogram");
  agree_cmd->add_option("--in", agree_args.in, "JSON object: positive votes -> items")->required();
  agree_cmd->add_option("--raters", agree_args.raters)->capture_default_str();
  agree_cmd->add_option("--format", agree_args.format)->check(CLI::IsMember(formats))
      ->capture_default_str();
  agree_cmd->add_option("--out", agree_args.out);

  ToyArgs toy_args;
  auto* toy_cmd = app.add_subcommand("toy-train", "Synthetic biased-data debiasing experiment");
  toy_cmd->add_option("--alpha", toy_args.train.mccd.alpha)->capture_default_str();
  toy_cmd->add_option("--beta", toy_args.train.mccd.beta)->capture_default_str();
  toy_cmd->add_option("--epsilon", toy_args.train.mccd.epsilon)->capture_default_str();
  toy_cmd->add_option("--bias-rate", toy_args.spec.bias_rate)->capture_default_str();
  toy_cmd->add_option("--classes", toy_args.spec.num_classes)->capture_default_str();
  toy_cmd->add_option("--dim", toy_args.spec.feature_dim)->capture_default_str();
  toy_cmd->add_option("--hidden", toy_args.train.hidden_dim)->capture_default_str();
  toy_cmd->add_option("--train-size", toy_args.spec.train_size)->capture_default_str();
  toy_cmd->add_option("--head-test-size", toy_args.spec.head_test_size)->capture_default_str();
  toy_cmd->add_option("--tail-test-size", toy_args.spec.tail_test_size)->capture_default_str();
  toy_cmd->add_option("--noise", toy_args.spec.noise_std)->capture_default_str();
  toy_cmd->add_option("--distractor", toy_args.spec.distractor_std)->capture_default_str();
  toy_cmd->add_option("--signal", toy_args.spec.signal_scale)->capture_default_str();
  toy_cmd->add_option("--cue-scale", toy_args.spec.cue_scale)->capture_default_str();
  toy_cmd->add_option("--epochs", toy_args.train.epochs)->capture_default_str();
  toy_cmd->add_option("--batch-size", toy_args.train.batch_size)->capture_default_str();
  toy_cmd->add_option("--lr", toy_args.train.learning_rate)->capture_default_str();
  toy_cmd->add_option("--optimizer", toy_args.optimizer, "sgd|sgd_momentum")
      ->check(CLI::IsMember({"sgd", "sgd_momentum"}))
      ->capture_default_str();
  toy_cmd->add_option("--momentum", toy_args.train.momentum)->capture_default_str();
  toy_cmd->add_option("--seed", toy_args.seed)->capture_default_str();
  toy_cmd->add_option("--seeds", toy_args.seeds, "Comma list; runs MCCD vs alpha=beta=0 pairs")
      ->delimiter(',');
  toy_cmd->add_option("--out", toy_args.out, "Metrics document (default: standard output)");

  GradArgs grad_args;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of MCCD gradients");
  grad_cmd->add_option("--classes", grad_args.classes, "Largest class count")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20))
      ->capture_default_str();
  grad_cmd->add_option("--trials", grad_args.trials)->capture_default_str();
  grad_cmd->add_option("--step", grad_args.step)->capture_default_str();
  grad_cmd->add_option("--seed", grad_args.seed)->capture_default_str();
  grad_cmd->add_option("--alpha", grad_args.mccd.alpha)->capture_default_str();
  grad_cmd->add_option("--beta", grad_args.mccd.beta)->capture_default_str();
  grad_cmd->add_option("--epsilon", grad_args.mccd.epsilon)->capture_default_str();
  grad_cmd->add_option("--tolerance", grad_args.tolerance)->capture_default_str();
  grad_cmd->add_option("--out", grad_args.out);

  EntropyArgs entropy_args;
  auto* entropy_cmd = app.add_subcommand("entropy-report", "Per-group answer entropy");
  entropy_cmd->add_option("--in", entropy_args.in)->required();
  entropy_cmd->add_option("--entropy-threshold", entropy_args.threshold)
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  entropy_cmd->add_option("--format", entropy_args.format)->check(CLI::IsMember(formats))
      ->capture_default_str();
  entropy_cmd->add_option("--out", entropy_args.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "avbench: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (split_cmd->parsed()) return do_split(split_args, out);
    if (eval_cmd->parsed()) return do_evaluate(eval_args, out);
    if (sample_cmd->parsed()) return do_sample(sample_args, out);
    if (agree_cmd->parsed()) return do_agreement(agree_args, out);
    if (toy_cmd->parsed()) return do_toy(toy_args, out);
    if (grad_cmd->parsed()) return do_grad_check(grad_args, out);
    if (entropy_cmd->parsed()) return do_entropy(entropy_args, out);
  } catch (const std::exception& e) {
    err << "avbench: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace avbench::cli
