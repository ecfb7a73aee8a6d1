#include "avbench/mccd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "avbench/core.hpp"
#include "avbench/random.hpp"

namespace avbench::mccd {

namespace {

struct Probabilities {
  Vector fusion, question, video, audio;
};

Probabilities probabilities(const LogitBundle& b) {
  return {softmax(b.fusion), softmax(b.question), softmax(b.video), softmax(b.audio)};
}

// d KL(p || q) / d z_p where p = softmax(z_p):  p_j (ln p_j - ln q~_j - KL).
void add_kl_grad_wrt_p(const Vector& p, const Vector& q, double floor, double weight, Vector& out) {
  if (weight == 0.0) return;
  const double kl = kl_divergence(p, q, floor);
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    out[j] += weight * p[j] * (std::log(p[j]) - std::log(std::max(q[j], floor)) - kl);
  }
}

// d KL(p || q) / d z_q where q = softmax(z_q). Floored entries carry no
// gradient: q_j * S - [q_j >= floor] p_j, with S the p-mass on unfloored q.
void add_kl_grad_wrt_q(const Vector& p, const Vector& q, double floor, double weight, Vector& out) {
  if (weight == 0.0) return;
  double mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (q[i] >= floor) mass += p[i];
  }
  for (std::size_t j = 0; j < q.size(); ++j) {
    out[j] += weight * (q[j] * mass - (q[j] >= floor ? p[j] : 0.0));
  }
}

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(classes) +
                " classes");
  }
}

}  // namespace

void LogitBundle::validate() const {
  const std::size_t c = fusion.size();
  if (c < 2) throw Error("logit bundle needs at least 2 classes");
  for (const Vector* v : {&fusion, &question, &video, &audio}) {
    if (v->size() != c) throw Error("logit bundle heads differ in length");
    for (double x : *v) {
      if (!std::isfinite(x)) throw Error("logit bundle contains a non-finite entry");
    }
  }
}

void MCCDConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw Error("alpha and beta must be non-negative");
  if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
  if (!(prob_floor > 0.0)) throw Error("prob_floor must be positive");
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("softmax of an empty vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double prob_floor) {
  if (p.size() != q.size()) {
    throw Error("kl_divergence: length mismatch (" + std::to_string(p.size()) + " vs " +
                std::to_string(q.size()) + ")");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], prob_floor)));
  }
  // Rounding can leave a tiny negative value when p ~= q.
  return std::max(kl, 0.0);
}

double loss_answer(std::span<const double> fusion_logits, std::size_t label) {
  check_label(label, fusion_logits.size());
  const double top = *std::max_element(fusion_logits.begin(), fusion_logits.end());
  double sum = 0.0;
  for (double z : fusion_logits) sum += std::exp(z - top);
  return std::max(0.0, std::log(sum) + top - fusion_logits[label]);
}

double loss_discrepancy(const LogitBundle& bundle, const MCCDConfig& cfg) {
  bundle.validate();
  if (cfg.alpha == 0.0) return 0.0;
  const auto p = probabilities(bundle);
  double s = 0.0;
  for (const Vector* k : {&p.question, &p.video, &p.audio}) {
    s += 1.0 / (kl_divergence(p.fusion, *k, cfg.prob_floor) + cfg.epsilon);
  }
  return cfg.alpha * s;
}

double loss_cycle(const LogitBundle& bundle, const MCCDConfig& cfg) {
  bundle.validate();
  if (cfg.beta == 0.0) return 0.0;
  const auto p = probabilities(bundle);
  return cfg.beta * (kl_divergence(p.question, p.audio, cfg.prob_floor) +
                     kl_divergence(p.audio, p.video, cfg.prob_floor) +
                     kl_divergence(p.video, p.question, cfg.prob_floor));
}

LossBreakdown total_loss(const LogitBundle& bundle, std::size_t label, const MCCDConfig& cfg) {
  bundle.validate();
  cfg.validate();
  LossBreakdown b;
  b.l_a = loss_answer(bundle.fusion, label);
  b.l_d = loss_discrepancy(bundle, cfg);
  b.l_c = loss_cycle(bundle, cfg);
  b.total = b.l_a + b.l_d + b.l_c;
  return b;
}

BundleGradient loss_gradient(const LogitBundle& bundle, std::size_t label, const MCCDConfig& cfg) {
  bundle.validate();
  cfg.validate();
  const std::size_t c = bundle.num_classes();
  check_label(label, c);
  const auto p = probabilities(bundle);
  BundleGradient g{Vector(c, 0.0), Vector(c, 0.0), Vector(c, 0.0), Vector(c, 0.0)};

  g.fusion = p.fusion;
  g.fusion[label] -= 1.0;

  if (cfg.alpha != 0.0) {
    const std::pair<const Vector*, Vector*> heads[] = {
        {&p.question, &g.question}, {&p.video, &g.video}, {&p.audio, &g.audio}};
    for (const auto& [prob, grad] : heads) {
      const double d = kl_divergence(p.fusion, *prob, cfg.prob_floor);
      const double weight = -cfg.alpha / ((d + cfg.epsilon) * (d + cfg.epsilon));
      add_kl_grad_wrt_p(p.fusion, *prob, cfg.prob_floor, weight, g.fusion);
      add_kl_grad_wrt_q(p.fusion, *prob, cfg.prob_floor, weight, *grad);
    }
  }

  if (cfg.beta != 0.0) {
    const double w = cfg.beta;
    const double f = cfg.prob_floor;
    // (q, a)
    add_kl_grad_wrt_p(p.question, p.audio, f, w, g.question);
    add_kl_grad_wrt_q(p.question, p.audio, f, w, g.audio);
    // (a, v)
    add_kl_grad_wrt_p(p.audio, p.video, f, w, g.audio);
    add_kl_grad_wrt_q(p.audio, p.video, f, w, g.video);
    // (v, q)
    add_kl_grad_wrt_p(p.video, p.question, f, w, g.video);
    add_kl_grad_wrt_q(p.video, p.question, f, w, g.question);
  }
  return g;
}

double finite_diff_check(const LogitBundle& bundle, std::size_t label, const MCCDConfig& cfg,
                         double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw Error("finite-difference step must be positive");
  const BundleGradient analytic = loss_gradient(bundle, label, cfg);

  LogitBundle probe = bundle;
  Vector LogitBundle::*heads[] = {&LogitBundle::fusion, &LogitBundle::question,
                                  &LogitBundle::video, &LogitBundle::audio};
  const Vector* grads[] = {&analytic.fusion, &analytic.question, &analytic.video,
                           &analytic.audio};

  double worst = 0.0;
  for (std::size_t h = 0; h < 4; ++h) {
    Vector& logits = probe.*heads[h];
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double saved = logits[j];
      logits[j] = saved + step;
      const LossBreakdown plus = total_loss(probe, label, cfg);
      logits[j] = saved - step;
      const LossBreakdown minus = total_loss(probe, label, cfg);
      logits[j] = saved;
      // Differencing each component separately keeps the small terms from
      // being swamped by rounding in the much larger answer loss.
      const double numeric =
          ((plus.l_a - minus.l_a) + (plus.l_d - minus.l_d) + (plus.l_c - minus.l_c)) /
          (2.0 * step);
      const double a = (*grads[h])[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

LossBreakdown mean_loss(std::span<const LogitBundle> bundles, std::span<const std::size_t> labels,
                        const MCCDConfig& cfg) {
  if (bundles.size() != labels.size()) throw Error("mean_loss: bundles and labels differ in size");
  LossBreakdown mean;
  if (bundles.empty()) return mean;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const LossBreakdown b = total_loss(bundles[i], labels[i], cfg);
    mean.l_a += b.l_a;
    mean.l_d += b.l_d;
    mean.l_c += b.l_c;
  }
  const double n = static_cast<double>(bundles.size());
  mean.l_a /= n;
  mean.l_d /= n;
  mean.l_c /= n;
  mean.total = mean.l_a + mean.l_d + mean.l_c;
  return mean;
}

GradCheckSummary random_grad_check(std::size_t max_classes, std::size_t trials, double step,
                                   std::uint64_t seed, const MCCDConfig& cfg) {
  if (max_classes < 2) throw Error("grad check needs at least 2 classes");
  Rng rng(seed);
  GradCheckSummary summary;
  summary.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t c = 2 + rng.index(max_classes - 1);
    LogitBundle b;
    for (Vector* v : {&b.fusion, &b.question, &b.video, &b.audio}) {
      v->resize(c);
      for (double& x : *v) x = rng.normal(0.0, 2.0);
    }
    const std::size_t label = rng.index(c);
    const double err = finite_diff_check(b, label, cfg, step);
    if (err > summary.max_rel_error) {
      summary.max_rel_error = err;
      summary.worst_trial = t;
    }
  }
  return summary;
}

}  // namespace avbench::mccd
