#include "avbench/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "avbench/core.hpp"
#include "avbench/random.hpp"

namespace avbench::toy {

namespace {

std::array<Vector*, 12> tensors(ToyModelParams& p) {
  return {&p.question_encoder.weight.data, &p.question_encoder.bias,
          &p.video_encoder.weight.data,    &p.video_encoder.bias,
          &p.audio_encoder.weight.data,    &p.audio_encoder.bias,
          &p.fusion_instruction,           &p.question_instruction,
          &p.video_instruction,            &p.audio_instruction,
          &p.head.weight.data,             &p.head.bias};
}

Affine zero_affine(std::size_t out, std::size_t in) { return {Matrix(out, in), Vector(out, 0.0)}; }

void init_affine(Affine& a, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(a.weight.cols));
  for (double& w : a.weight.data) w = rng.uniform(-bound, bound);
  for (double& b : a.bias) b = rng.uniform(-bound, bound);
}

Matrix orthonormal_projection(std::size_t dim, std::size_t classes, Rng& rng) {
  Matrix m(dim, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    for (;;) {
      Vector v(dim);
      for (double& x : v) x = rng.normal();
      for (std::size_t prev = 0; prev < c; ++prev) {
        double dot = 0.0;
        for (std::size_t r = 0; r < dim; ++r) dot += v[r] * m(r, prev);
        for (std::size_t r = 0; r < dim; ++r) v[r] -= dot * m(r, prev);
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (std::size_t r = 0; r < dim; ++r) m(r, c) = v[r] / norm;
      break;
    }
  }
  return m;
}

Vector embed(const Matrix& projection, const Vector& latent, double noise_std, Rng& rng) {
  Vector x = projection.apply(latent);
  if (noise_std > 0.0) {
    for (double& v : x) v += rng.normal(0.0, noise_std);
  }
  return x;
}

Sample draw_sample(const SyntheticSpec& spec, const ToyData& data, bool informative_cue, Rng& rng) {
  const std::size_t c = spec.num_classes;
  Sample s;
  s.label = rng.index(c);
  if (informative_cue) {
    s.cue = rng.uniform() < spec.bias_rate ? s.label : (s.label + 1 + rng.index(c - 1)) % c;
  } else {
    s.cue = rng.index(c);
  }
  Vector cue(c, 0.0), video(c, 0.0), audio(c, 0.0);
  cue[s.cue] = spec.cue_scale;
  for (std::size_t i = 0; i < c; ++i) {
    const double offset = rng.normal(0.0, spec.distractor_std);
    const double signal = i == s.label ? spec.signal_scale : 0.0;
    video[i] = signal + offset;
    audio[i] = signal - offset;
  }
  s.question = embed(data.question_projection, cue, spec.noise_std, rng);
  s.video = embed(data.video_projection, video, spec.noise_std, rng);
  s.audio = embed(data.audio_projection, audio, spec.noise_std, rng);
  return s;
}

struct Activations {
  Vector emb_question, emb_video, emb_audio;  // encoder outputs
  Vector fused;                               // mean + fusion instruction
  Vector uni_question, uni_video, uni_audio;  // encoder output + instruction
  mccd::LogitBundle logits;
};

Vector add(Vector a, const Vector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Activations run_forward(const ToyModelParams& p, const Sample& s) {
  if (s.question.size() != p.question_encoder.weight.cols ||
      s.video.size() != p.video_encoder.weight.cols ||
      s.audio.size() != p.audio_encoder.weight.cols) {
    throw Error("sample feature dimension does not match the model");
  }
  Activations a;
  a.emb_question = p.question_encoder.apply(s.question);
  a.emb_video = p.video_encoder.apply(s.video);
  a.emb_audio = p.audio_encoder.apply(s.audio);
  const std::size_t h = a.emb_question.size();
  a.fused.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    a.fused[i] = (a.emb_question[i] + a.emb_video[i] + a.emb_audio[i]) / 3.0 +
                 p.fusion_instruction[i];
  }
  a.uni_question = add(a.emb_question, p.question_instruction);
  a.uni_video = add(a.emb_video, p.video_instruction);
  a.uni_audio = add(a.emb_audio, p.audio_instruction);
  a.logits.fusion = p.head.apply(a.fused);
  a.logits.question = p.head.apply(a.uni_question);
  a.logits.video = p.head.apply(a.uni_video);
  a.logits.audio = p.head.apply(a.uni_audio);
  return a;
}

void accumulate_outer(Matrix& m, const Vector& left, const Vector& right, double scale) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double l = left[r] * scale;
    if (l == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) += l * right[c];
  }
}

void axpy(Vector& y, const Vector& x, double scale) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * x[i];
}

bool finite(const mccd::LossBreakdown& b) { return std::isfinite(b.total); }

}  // namespace

Vector Matrix::apply(const Vector& x) const {
  Vector y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += data[r * cols + c] * x[c];
    y[r] = s;
  }
  return y;
}

Vector Matrix::apply_transposed(const Vector& y) const {
  Vector x(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) x[c] += data[r * cols + c] * y[r];
  }
  return x;
}

Vector Affine::apply(const Vector& x) const { return add(weight.apply(x), bias); }

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw Error("synthetic data: num_classes must be at least 2");
  if (feature_dim < num_classes) {
    throw Error("synthetic data: feature_dim must be at least num_classes");
  }
  if (!(bias_rate >= 0.0 && bias_rate <= 1.0)) {
    throw Error("synthetic data: bias_rate must lie in [0, 1]");
  }
  if (train_size < 1 || head_test_size < 1 || tail_test_size < 1) {
    throw Error("synthetic data: sizes must be at least 1");
  }
  if (!(noise_std >= 0.0) || !(distractor_std >= 0.0) || !(signal_scale >= 0.0) ||
      !(cue_scale >= 0.0)) {
    throw Error("synthetic data: noise levels must be non-negative");
  }
}

ToyData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  ToyData data;
  data.question_projection = orthonormal_projection(spec.feature_dim, spec.num_classes, rng);
  data.video_projection = orthonormal_projection(spec.feature_dim, spec.num_classes, rng);
  data.audio_projection = orthonormal_projection(spec.feature_dim, spec.num_classes, rng);
  data.train.reserve(spec.train_size);
  for (std::size_t i = 0; i < spec.train_size; ++i) {
    data.train.push_back(draw_sample(spec, data, true, rng));
  }
  for (std::size_t i = 0; i < spec.head_test_size; ++i) {
    data.head_test.push_back(draw_sample(spec, data, true, rng));
  }
  for (std::size_t i = 0; i < spec.tail_test_size; ++i) {
    data.tail_test.push_back(draw_sample(spec, data, false, rng));
  }
  return data;
}

std::size_t ToyModelParams::parameter_count() const {
  return question_encoder.parameter_count() + video_encoder.parameter_count() +
         audio_encoder.parameter_count() + fusion_instruction.size() +
         question_instruction.size() + video_instruction.size() + audio_instruction.size() +
         head.parameter_count();
}

ToyModelParams zero_params(std::size_t feature_dim, std::size_t hidden_dim,
                           std::size_t num_classes) {
  ToyModelParams p;
  p.question_encoder = zero_affine(hidden_dim, feature_dim);
  p.video_encoder = zero_affine(hidden_dim, feature_dim);
  p.audio_encoder = zero_affine(hidden_dim, feature_dim);
  p.fusion_instruction.assign(hidden_dim, 0.0);
  p.question_instruction.assign(hidden_dim, 0.0);
  p.video_instruction.assign(hidden_dim, 0.0);
  p.audio_instruction.assign(hidden_dim, 0.0);
  p.head = zero_affine(num_classes, hidden_dim);
  return p;
}

ToyModelParams init_params(std::size_t feature_dim, std::size_t hidden_dim,
                           std::size_t num_classes, std::uint64_t seed) {
  ToyModelParams p = zero_params(feature_dim, hidden_dim, num_classes);
  Rng rng(seed);
  init_affine(p.question_encoder, rng);
  init_affine(p.video_encoder, rng);
  init_affine(p.audio_encoder, rng);
  init_affine(p.head, rng);
  return p;
}

mccd::LogitBundle forward(const ToyModelParams& params, const Sample& sample) {
  return run_forward(params, sample).logits;
}

std::string_view to_string(Optimizer opt) {
  return opt == Optimizer::sgd ? "sgd" : "sgd_momentum";
}

Optimizer parse_optimizer(std::string_view text) {
  if (text == "sgd") return Optimizer::sgd;
  if (text == "sgd_momentum") return Optimizer::sgd_momentum;
  throw Error("unknown optimizer \"" + std::string(text) + "\" (expected sgd|sgd_momentum)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (epochs < 1) throw Error("epochs must be at least 1");
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (hidden_dim < 1) throw Error("hidden dim must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0, 1)");
  mccd.validate();
}

ToyModelParams batch_gradient(const ToyModelParams& params, const std::vector<Sample>& samples,
                              const std::vector<std::size_t>& batch, const mccd::MCCDConfig& cfg) {
  ToyModelParams g = zero_params(params.feature_dim(), params.hidden_dim(), params.num_classes());
  if (batch.empty()) return g;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    const Sample& s = samples[idx];
    const Activations a = run_forward(params, s);
    const mccd::BundleGradient dl = mccd::loss_gradient(a.logits, s.label, cfg);

    // Shared head: all four paths accumulate into the same parameters.
    accumulate_outer(g.head.weight, dl.fusion, a.fused, scale);
    accumulate_outer(g.head.weight, dl.question, a.uni_question, scale);
    accumulate_outer(g.head.weight, dl.video, a.uni_video, scale);
    accumulate_outer(g.head.weight, dl.audio, a.uni_audio, scale);
    for (std::size_t c = 0; c < g.head.bias.size(); ++c) {
      g.head.bias[c] += scale * (dl.fusion[c] + dl.question[c] + dl.video[c] + dl.audio[c]);
    }

    const Vector d_fused = params.head.weight.apply_transposed(dl.fusion);
    const Vector d_question = params.head.weight.apply_transposed(dl.question);
    const Vector d_video = params.head.weight.apply_transposed(dl.video);
    const Vector d_audio = params.head.weight.apply_transposed(dl.audio);

    axpy(g.fusion_instruction, d_fused, scale);
    axpy(g.question_instruction, d_question, scale);
    axpy(g.video_instruction, d_video, scale);
    axpy(g.audio_instruction, d_audio, scale);

    const std::pair<Affine*, std::pair<const Vector*, const Vector*>> encoders[] = {
        {&g.question_encoder, {&d_question, &s.question}},
        {&g.video_encoder, {&d_video, &s.video}},
        {&g.audio_encoder, {&d_audio, &s.audio}}};
    for (const auto& [enc, grads] : encoders) {
      const auto& [d_uni, input] = grads;
      Vector d_emb = *d_uni;
      axpy(d_emb, d_fused, 1.0 / 3.0);
      accumulate_outer(enc->weight, d_emb, *input, scale);
      axpy(enc->bias, d_emb, scale);
    }
  }
  return g;
}

mccd::LossBreakdown dataset_loss(const ToyModelParams& params, const std::vector<Sample>& samples,
                                 const mccd::MCCDConfig& cfg) {
  std::vector<mccd::LogitBundle> bundles;
  std::vector<std::size_t> labels;
  bundles.reserve(samples.size());
  labels.reserve(samples.size());
  for (const Sample& s : samples) {
    bundles.push_back(forward(params, s));
    labels.push_back(s.label);
  }
  return mccd::mean_loss(bundles, labels, cfg);
}

TrainResult train(const std::vector<Sample>& train_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw Error("training set is empty");
  const std::size_t dim = train_set.front().question.size();
  std::size_t classes = 0;
  for (const Sample& s : train_set) classes = std::max({classes, s.label + 1, s.cue + 1});
  classes = std::max<std::size_t>(classes, 2);

  TrainResult result;
  result.params = init_params(dim, cfg.hidden_dim, classes, cfg.seed);
  result.initial = dataset_loss(result.params, train_set, cfg.mccd);
  if (!finite(result.initial)) throw Error("non-finite loss before training");

  ToyModelParams velocity = zero_params(dim, cfg.hidden_dim, classes);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const double mu = cfg.optimizer == Optimizer::sgd_momentum ? cfg.momentum : 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
      ToyModelParams grad;
      try {
        grad = batch_gradient(result.params, train_set, batch, cfg.mccd);
      } catch (const Error&) {
        throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      auto p = tensors(result.params);
      auto v = tensors(velocity);
      auto g = tensors(grad);
      for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t i = 0; i < p[t]->size(); ++i) {
          (*v[t])[i] = mu * (*v[t])[i] + (*g[t])[i];
          (*p[t])[i] -= cfg.learning_rate * (*v[t])[i];
        }
      }
    }
    mccd::LossBreakdown epoch_loss;
    bool ok = true;
    for (const Vector* t : tensors(result.params)) {
      ok = ok && std::all_of(t->begin(), t->end(), [](double x) { return std::isfinite(x); });
    }
    if (ok) {
      try {
        epoch_loss = dataset_loss(result.params, train_set, cfg.mccd);
        ok = finite(epoch_loss);
      } catch (const Error&) {
        ok = false;
      }
    }
    if (!ok) throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    result.trace.push_back(epoch_loss);
  }
  return result;
}

TrainResult train(const SyntheticSpec& spec, const TrainConfig& cfg) {
  return train(generate_synthetic(spec).train, cfg);
}

std::size_t predict(const ToyModelParams& params, const Sample& sample) {
  const Vector logits = forward(params, sample).fusion;
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

ToyAccuracy evaluate_toy(const ToyModelParams& params, const std::vector<Sample>& head_test,
                         const std::vector<Sample>& tail_test) {
  auto correct = [&](const std::vector<Sample>& set) {
    std::size_t n = 0;
    for (const Sample& s : set) n += predict(params, s) == s.label ? 1 : 0;
    return n;
  };
  ToyAccuracy acc;
  const std::size_t head_correct = correct(head_test);
  const std::size_t tail_correct = correct(tail_test);
  if (!head_test.empty()) acc.head = static_cast<double>(head_correct) / head_test.size();
  if (!tail_test.empty()) acc.tail = static_cast<double>(tail_correct) / tail_test.size();
  const std::size_t total = head_test.size() + tail_test.size();
  if (total > 0) acc.overall = static_cast<double>(head_correct + tail_correct) / total;
  return acc;
}

RunResult run_once(SyntheticSpec spec, TrainConfig cfg, std::uint64_t seed) {
  spec.seed = seed;
  cfg.seed = seed;
  const ToyData data = generate_synthetic(spec);
  const TrainResult trained = train(data.train, cfg);
  RunResult r;
  r.seed = seed;
  r.accuracy = evaluate_toy(trained.params, data.head_test, data.tail_test);
  r.final_loss = trained.trace.back();
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

PairedSummary paired_experiment(const SyntheticSpec& spec, const TrainConfig& cfg,
                                const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw Error("paired experiment needs at least one seed");
  TrainConfig base = cfg;
  base.mccd.alpha = 0.0;
  base.mccd.beta = 0.0;
  PairedSummary out;
  for (std::uint64_t seed : seeds) {
    out.debiased.push_back(run_once(spec, cfg, seed));
    out.baseline.push_back(run_once(spec, base, seed));
  }
  auto med = [](const std::vector<RunResult>& runs, std::optional<double> ToyAccuracy::*field) {
    std::vector<double> v;
    for (const RunResult& r : runs) v.push_back((r.accuracy.*field).value_or(0.0));
    return median(std::move(v));
  };
  out.median_head_debiased = med(out.debiased, &ToyAccuracy::head);
  out.median_tail_debiased = med(out.debiased, &ToyAccuracy::tail);
  out.median_overall_debiased = med(out.debiased, &ToyAccuracy::overall);
  out.median_head_baseline = med(out.baseline, &ToyAccuracy::head);
  out.median_tail_baseline = med(out.baseline, &ToyAccuracy::tail);
  out.median_overall_baseline = med(out.baseline, &ToyAccuracy::overall);
  return out;
}

}  // namespace avbench::toy
