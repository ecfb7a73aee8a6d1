#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "avbench/mccd.hpp"

namespace avbench::toy {

using mccd::Vector;

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  Vector apply(const Vector& x) const;
  Vector apply_transposed(const Vector& y) const;
  bool operator==(const Matrix&) const = default;
};

struct Affine {
  Matrix weight;
  Vector bias;

  Vector apply(const Vector& x) const;
  std::size_t parameter_count() const { return weight.data.size() + bias.size(); }
  bool operator==(const Affine&) const = default;
};

struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t feature_dim = 16;
  double bias_rate = 0.9;
  std::size_t train_size = 2000;
  std::size_t head_test_size = 1000;
  std::size_t tail_test_size = 1000;
  double noise_std = 0.3;
  // Std of the latent offset that is added to video and subtracted from
  // audio; it cancels only when both modalities are combined.
  double distractor_std = 2.0;
  // Magnitude of the label signal in the video and audio latents.
  double signal_scale = 0.5;
  // Magnitude of the one-hot question cue latent.
  double cue_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  Vector question;
  Vector video;
  Vector audio;
  std::size_t label = 0;
  std::size_t cue = 0;

  bool operator==(const Sample&) const = default;
};

struct ToyData {
  std::vector<Sample> train;
  std::vector<Sample> head_test;
  std::vector<Sample> tail_test;
  // feature_dim x num_classes maps with orthonormal columns taking one-hot
  // latents to features.
  Matrix question_projection;
  Matrix video_projection;
  Matrix audio_projection;

  bool operator==(const ToyData&) const = default;
};

/// Label y is uniform. Video latent is s e_y + r and audio latent s e_y - r
/// with r ~ N(0, distractor_std^2), so neither alone determines y. The
/// question latent is a one-hot cue equal to y with probability bias_rate in
/// train and head-test samples (otherwise a uniformly drawn other class), and
/// uniform over all classes in tail-test samples.
ToyData generate_synthetic(const SyntheticSpec& spec);

/// Three modality encoders, four path-specific "instruction" offsets, and a
/// single classifier head used by all four paths.
struct ToyModelParams {
  Affine question_encoder;
  Affine video_encoder;
  Affine audio_encoder;
  Vector fusion_instruction;
  Vector question_instruction;
  Vector video_instruction;
  Vector audio_instruction;
  Affine head;

  std::size_t feature_dim() const { return question_encoder.weight.cols; }
  std::size_t hidden_dim() const { return head.weight.cols; }
  std::size_t num_classes() const { return head.weight.rows; }
  /// Classifier head counted once.
  std::size_t parameter_count() const;
  bool operator==(const ToyModelParams&) const = default;
};

ToyModelParams zero_params(std::size_t feature_dim, std::size_t hidden_dim,
                           std::size_t num_classes);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; zero
/// instruction offsets.
ToyModelParams init_params(std::size_t feature_dim, std::size_t hidden_dim,
                           std::size_t num_classes, std::uint64_t seed);

/// Fusion logits use the mean of the three encoder outputs; each unimodal
/// logit sees only its own modality.
mccd::LogitBundle forward(const ToyModelParams& params, const Sample& sample);

enum class Optimizer { sgd, sgd_momentum };
std::string_view to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view text);

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  Optimizer optimizer = Optimizer::sgd_momentum;
  double momentum = 0.9;
  std::size_t hidden_dim = 16;
  mccd::MCCDConfig mccd;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  ToyModelParams params;
  mccd::LossBreakdown initial;              // full training set, before the first update
  std::vector<mccd::LossBreakdown> trace;   // full training set, after each epoch
};

TrainResult train(const std::vector<Sample>& train_set, const TrainConfig& cfg);
TrainResult train(const SyntheticSpec& spec, const TrainConfig& cfg);

/// Gradient of the mean MCCD objective over `batch` with respect to every
/// parameter, laid out like ToyModelParams.
ToyModelParams batch_gradient(const ToyModelParams& params, const std::vector<Sample>& samples,
                              const std::vector<std::size_t>& batch, const mccd::MCCDConfig& cfg);

mccd::LossBreakdown dataset_loss(const ToyModelParams& params, const std::vector<Sample>& samples,
                                 const mccd::MCCDConfig& cfg);

struct ToyAccuracy {
  std::optional<double> head;
  std::optional<double> tail;
  std::optional<double> overall;
};

std::size_t predict(const ToyModelParams& params, const Sample& sample);

ToyAccuracy evaluate_toy(const ToyModelParams& params, const std::vector<Sample>& head_test,
                         const std::vector<Sample>& tail_test);

struct RunResult {
  std::uint64_t seed = 0;
  ToyAccuracy accuracy;
  mccd::LossBreakdown final_loss;
};

/// Generates data and trains one model with spec.seed / cfg.seed = seed.
RunResult run_once(SyntheticSpec spec, TrainConfig cfg, std::uint64_t seed);

struct PairedSummary {
  std::vector<RunResult> debiased;
  std::vector<RunResult> baseline;  // same seeds with alpha = beta = 0
  double median_head_debiased = 0.0;
  double median_tail_debiased = 0.0;
  double median_overall_debiased = 0.0;
  double median_head_baseline = 0.0;
  double median_tail_baseline = 0.0;
  double median_overall_baseline = 0.0;
};

PairedSummary paired_experiment(const SyntheticSpec& spec, const TrainConfig& cfg,
                                const std::vector<std::uint64_t>& seeds);

double median(std::vector<double> values);

}  // namespace avbench::toy
