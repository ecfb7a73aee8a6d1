#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace avbench::mccd {

using Vector = std::vector<double>;

/// Pre-softmax scores of the fusion head and the three single-modality
/// heads for one sample.
struct LogitBundle {
  Vector fusion;
  Vector question;
  Vector video;
  Vector audio;

  std::size_t num_classes() const { return fusion.size(); }
  /// Throws Error unless all four heads share a length >= 2 and are finite.
  void validate() const;
};

struct MCCDConfig {
  double alpha = 1e-3;
  double beta = 5e-3;
  double epsilon = 1e-5;
  double prob_floor = 1e-12;

  void validate() const;
};

struct LossBreakdown {
  double l_a = 0.0;
  double l_d = 0.0;
  double l_c = 0.0;
  double total = 0.0;
};

/// Gradients with respect to each head's logits.
struct BundleGradient {
  Vector fusion;
  Vector question;
  Vector video;
  Vector audio;
};

Vector softmax(std::span<const double> logits);

/// sum_i p_i ln(p_i / max(q_i, floor)), in nats. Terms with p_i == 0 vanish.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double prob_floor = 1e-12);

/// Cross-entropy of the fusion head against a class index.
double loss_answer(std::span<const double> fusion_logits, std::size_t label);

/// alpha * sum over q, v, a of 1 / (KL(fusion || unimodal) + epsilon).
double loss_discrepancy(const LogitBundle& bundle, const MCCDConfig& cfg);

/// beta * [KL(q || a) + KL(a || v) + KL(v || q)].
double loss_cycle(const LogitBundle& bundle, const MCCDConfig& cfg);

LossBreakdown total_loss(const LogitBundle& bundle, std::size_t label, const MCCDConfig& cfg);

BundleGradient loss_gradient(const LogitBundle& bundle, std::size_t label, const MCCDConfig& cfg);

/// Worst relative error between loss_gradient and central differences of
/// total_loss, using max(|analytic|, |numeric|, 1e-8) as denominator.
double finite_diff_check(const LogitBundle& bundle, std::size_t label, const MCCDConfig& cfg,
                         double step);

/// Mean of per-sample breakdowns, summed in sample order.
LossBreakdown mean_loss(std::span<const LogitBundle> bundles, std::span<const std::size_t> labels,
                        const MCCDConfig& cfg);

struct GradCheckSummary {
  std::size_t trials = 0;
  double max_rel_error = 0.0;
  std::size_t worst_trial = 0;
};

/// Runs finite_diff_check on `trials` seeded random bundles with 2..max_classes
/// classes and logits drawn from N(0, 2^2).
GradCheckSummary random_grad_check(std::size_t max_classes, std::size_t trials, double step,
                                   std::uint64_t seed, const MCCDConfig& cfg);

}  // namespace avbench::mccd
