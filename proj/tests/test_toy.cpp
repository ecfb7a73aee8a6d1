#include <doctest.h>

#include <cmath>

#include "avbench/core.hpp"
#include "avbench/random.hpp"
#include "avbench/toy.hpp"

using namespace avbench;
using namespace avbench::toy;

namespace {

SyntheticSpec small_spec(std::size_t classes = 4, double rho = 0.9) {
  SyntheticSpec s;
  s.num_classes = classes;
  s.feature_dim = 8;
  s.bias_rate = rho;
  s.train_size = 200;
  s.head_test_size = 400;
  s.tail_test_size = 400;
  s.seed = 3;
  return s;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
  }
  return t;
}

Matrix scaled_identity(std::size_t n, double value) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = value;
  return m;
}

double fraction_cue_matches(const std::vector<Sample>& set) {
  std::size_t n = 0;
  for (const Sample& s : set) n += s.cue == s.label ? 1 : 0;
  return static_cast<double>(n) / set.size();
}

bool all_close(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-15) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("cue follows the label at the configured rate") {
  SyntheticSpec spec = small_spec(4, 1.0);
  const ToyData always = generate_synthetic(spec);
  CHECK(fraction_cue_matches(always.train) == 1.0);
  CHECK(fraction_cue_matches(always.head_test) == 1.0);
  CHECK(std::abs(fraction_cue_matches(always.tail_test) - 0.25) < 0.06);

  spec.bias_rate = 0.25;
  spec.head_test_size = spec.tail_test_size = 4000;
  const ToyData chance = generate_synthetic(spec);
  CHECK(std::abs(fraction_cue_matches(chance.train) - 0.25) < 0.07);
  CHECK(std::abs(fraction_cue_matches(chance.head_test) - fraction_cue_matches(chance.tail_test)) <
        0.04);
}

TEST_CASE("generation is deterministic and sized") {
  const SyntheticSpec spec = small_spec();
  const ToyData a = generate_synthetic(spec);
  CHECK(a == generate_synthetic(spec));
  CHECK(a.train.size() == 200);
  CHECK(a.head_test.size() == 400);
  CHECK(a.train.front().video.size() == 8);
  SyntheticSpec other = spec;
  other.seed = 4;
  CHECK_FALSE(a == generate_synthetic(other));
}

TEST_CASE("invalid synthetic settings are rejected") {
  SyntheticSpec s = small_spec();
  s.bias_rate = 1.5;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
  s = small_spec();
  s.train_size = 0;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
  s = small_spec();
  s.num_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
  s = small_spec();
  s.noise_std = -0.1;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
}

TEST_CASE("zero weights give the head bias on every path") {
  ToyModelParams p = zero_params(8, 5, 4);
  p.head.bias = {0.1, -0.2, 0.3, 0.0};
  const ToyData data = generate_synthetic(small_spec());
  const auto b = forward(p, data.train.front());
  CHECK(b.fusion == p.head.bias);
  CHECK(b.question == p.head.bias);
  CHECK(b.video == p.head.bias);
  CHECK(b.audio == p.head.bias);
}

TEST_CASE("perturbing the shared head changes all four paths") {
  const ToyData data = generate_synthetic(small_spec());
  ToyModelParams p = init_params(8, 6, 4, 1);
  const auto before = forward(p, data.train[0]);
  p.head.weight(1, 2) += 0.5;
  const auto after = forward(p, data.train[0]);
  CHECK_FALSE(all_close(before.fusion, after.fusion));
  CHECK_FALSE(all_close(before.question, after.question));
  CHECK_FALSE(all_close(before.video, after.video));
  CHECK_FALSE(all_close(before.audio, after.audio));
}

TEST_CASE("unimodal paths depend only on their own modality") {
  const ToyData data = generate_synthetic(small_spec());
  ToyModelParams p = init_params(8, 6, 4, 2);
  const Sample s = data.train[0];
  const auto before = forward(p, s);

  SUBCASE("audio encoder") {
    p.audio_encoder.weight(0, 0) += 1.0;
    const auto after = forward(p, s);
    CHECK(after.question == before.question);
    CHECK(after.video == before.video);
    CHECK_FALSE(all_close(after.audio, before.audio));
    CHECK_FALSE(all_close(after.fusion, before.fusion));
  }
  SUBCASE("video features") {
    Sample t = s;
    t.video[3] += 1.0;
    const auto after = forward(p, t);
    CHECK(after.question == before.question);
    CHECK(after.audio == before.audio);
    CHECK_FALSE(all_close(after.video, before.video));
    CHECK_FALSE(all_close(after.fusion, before.fusion));
  }
  SUBCASE("question encoder") {
    p.question_encoder.bias[1] += 1.0;
    const auto after = forward(p, s);
    CHECK(after.video == before.video);
    CHECK(after.audio == before.audio);
    CHECK_FALSE(all_close(after.question, before.question));
  }
}

TEST_CASE("dimension mismatch is an error") {
  const ToyData data = generate_synthetic(small_spec());
  CHECK_THROWS_AS(forward(zero_params(9, 4, 4), data.train[0]), Error);
}

TEST_CASE("parameter count includes the shared head once") {
  const ToyModelParams p = zero_params(8, 6, 4);
  const std::size_t encoders = 3 * (6 * 8 + 6);
  const std::size_t instructions = 4 * 6;
  const std::size_t head = 4 * 6 + 4;
  CHECK(p.parameter_count() == encoders + instructions + head);
}

TEST_CASE("cue-copying weights memorize the question cue") {
  for (std::size_t classes : {4u, 8u}) {
    SyntheticSpec spec = small_spec(classes, 1.0);
    spec.feature_dim = 16;
    spec.noise_std = 0.0;
    spec.head_test_size = spec.tail_test_size = 2000;
    const ToyData data = generate_synthetic(spec);
    ToyModelParams p = zero_params(16, classes, classes);
    p.question_encoder.weight = transpose(data.question_projection);
    p.head.weight = scaled_identity(classes, 3.0);
    const ToyAccuracy acc = evaluate_toy(p, data.head_test, data.tail_test);
    CHECK(*acc.head == 1.0);
    CHECK(std::abs(*acc.tail - 1.0 / classes) < 0.04);
    CHECK(*acc.head - *acc.tail >= 0.5);
  }
}

TEST_CASE("combining video and audio recovers the label exactly") {
  SyntheticSpec spec = small_spec(8, 0.9);
  spec.feature_dim = 16;
  spec.noise_std = 0.0;
  const ToyData data = generate_synthetic(spec);
  ToyModelParams p = zero_params(16, 8, 8);
  p.video_encoder.weight = transpose(data.video_projection);
  p.audio_encoder.weight = transpose(data.audio_projection);
  p.head.weight = scaled_identity(8, 1.0);
  const ToyAccuracy acc = evaluate_toy(p, data.head_test, data.tail_test);
  CHECK(*acc.head == 1.0);
  CHECK(*acc.tail == 1.0);
  CHECK(*acc.overall == 1.0);
}

TEST_CASE("untrained model is near chance") {
  SyntheticSpec spec = small_spec(4, 0.9);
  spec.head_test_size = spec.tail_test_size = 3000;
  const ToyData data = generate_synthetic(spec);
  const ToyAccuracy acc = evaluate_toy(init_params(8, 16, 4, 5), data.head_test, data.tail_test);
  CHECK(std::abs(*acc.head - 0.25) < 0.08);
  CHECK(std::abs(*acc.tail - 0.25) < 0.08);
}

TEST_CASE("empty test sets are reported absent") {
  const ToyData data = generate_synthetic(small_spec());
  const ToyAccuracy acc = evaluate_toy(zero_params(8, 4, 4), {}, data.tail_test);
  CHECK_FALSE(acc.head.has_value());
  CHECK(acc.tail.has_value());
  CHECK(acc.overall == acc.tail);
}

TEST_CASE("batch gradient matches finite differences of the mean loss") {
  const ToyData data = generate_synthetic(small_spec());
  const std::vector<Sample> samples(data.train.begin(), data.train.begin() + 12);
  std::vector<std::size_t> batch(samples.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
  ToyModelParams p = init_params(8, 6, 4, 7);
  p.fusion_instruction[0] = 0.3;
  p.audio_instruction[2] = -0.4;
  const mccd::MCCDConfig cfg{1e-2, 5e-2, 1e-5, 1e-12};
  const ToyModelParams g = batch_gradient(p, samples, batch, cfg);

  struct Probe {
    const char* name;
    double* param;
    double analytic;
  };
  const Probe probes[] = {
      {"question weight", &p.question_encoder.weight(1, 3), g.question_encoder.weight(1, 3)},
      {"video bias", &p.video_encoder.bias[4], g.video_encoder.bias[4]},
      {"audio weight", &p.audio_encoder.weight(5, 0), g.audio_encoder.weight(5, 0)},
      {"fusion instruction", &p.fusion_instruction[2], g.fusion_instruction[2]},
      {"question instruction", &p.question_instruction[1], g.question_instruction[1]},
      {"video instruction", &p.video_instruction[0], g.video_instruction[0]},
      {"audio instruction", &p.audio_instruction[2], g.audio_instruction[2]},
      {"head weight", &p.head.weight(2, 4), g.head.weight(2, 4)},
      {"head bias", &p.head.bias[3], g.head.bias[3]},
  };
  const double h = 1e-6;
  for (const Probe& probe : probes) {
    CAPTURE(probe.name);
    const double saved = *probe.param;
    *probe.param = saved + h;
    const double up = dataset_loss(p, samples, cfg).total;
    *probe.param = saved - h;
    const double down = dataset_loss(p, samples, cfg).total;
    *probe.param = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(probe.analytic), 1e-6});
    CHECK(std::abs(numeric - probe.analytic) / denom < 1e-4);
  }
}

TEST_CASE("the shared head accumulates gradient from the unimodal paths") {
  const ToyData data = generate_synthetic(small_spec());
  const ToyModelParams p = init_params(8, 6, 4, 8);
  const std::vector<std::size_t> batch{0, 1, 2, 3};
  mccd::MCCDConfig plain;
  plain.alpha = plain.beta = 0.0;
  mccd::MCCDConfig cycle_only = plain;
  cycle_only.beta = 1.0;
  const ToyModelParams g_plain = batch_gradient(p, data.train, batch, plain);
  const ToyModelParams g_cycle = batch_gradient(p, data.train, batch, cycle_only);
  // Without MCCD terms the unimodal paths contribute nothing.
  for (double x : g_plain.question_instruction) CHECK(x == 0.0);
  CHECK_FALSE(g_cycle.head.weight == g_plain.head.weight);
}

TEST_CASE("training lowers the answer loss on easy data") {
  SyntheticSpec spec = small_spec(4, 0.25);
  spec.distractor_std = 0.0;
  spec.signal_scale = 1.0;
  spec.noise_std = 0.1;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.mccd.alpha = cfg.mccd.beta = 0.0;
  const TrainResult r = train(spec, cfg);
  REQUIRE(r.trace.size() == 10);
  CHECK(r.trace.back().l_a < r.initial.l_a);
}

TEST_CASE("trace bookkeeping and determinism") {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 5;
  const SyntheticSpec spec = small_spec();
  const TrainResult a = train(spec, cfg);
  const TrainResult b = train(spec, cfg);
  CHECK(a.params == b.params);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t e = 0; e < a.trace.size(); ++e) {
    CHECK(a.trace[e].total == b.trace[e].total);
    CHECK(a.trace[e].total - (a.trace[e].l_a + a.trace[e].l_d + a.trace[e].l_c) == 0.0);
  }
  TrainConfig other = cfg;
  other.seed = 6;
  CHECK_FALSE(train(spec, other).params == a.params);
}

TEST_CASE("plain sgd also trains") {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.optimizer = Optimizer::sgd;
  const TrainResult r = train(small_spec(), cfg);
  CHECK(r.trace.size() == 3);
  CHECK(parse_optimizer("sgd") == Optimizer::sgd);
  CHECK(to_string(Optimizer::sgd_momentum) == "sgd_momentum");
  CHECK_THROWS_AS(parse_optimizer("adam"), Error);
}

TEST_CASE("divergence names the epoch") {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 1e6;
  try {
    train(small_spec(), cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("invalid training configs are rejected") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train(small_spec(), cfg), Error);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(small_spec(), cfg), Error);
}

TEST_CASE("paired experiment reports medians of both arms") {
  TrainConfig cfg;
  cfg.epochs = 2;
  const PairedSummary s = paired_experiment(small_spec(), cfg, {1, 2, 3});
  REQUIRE(s.debiased.size() == 3);
  REQUIRE(s.baseline.size() == 3);
  std::vector<double> tails;
  for (const RunResult& r : s.baseline) tails.push_back(*r.accuracy.tail);
  CHECK(s.median_tail_baseline == median(tails));
  CHECK(s.baseline[0].final_loss.l_d == 0.0);
  CHECK(median({3.0, 1.0, 2.0, 10.0}) == 2.5);
  CHECK_THROWS_AS(paired_experiment(small_spec(), cfg, {}), Error);
}

TEST_CASE("rng helpers are reproducible and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.index(7) < 7);
  }
}
