#include <gtest/gtest.h>

#include <cmath>

#include "bplab/model.hpp"
#include "bplab/synth.hpp"
#include "support/gradcheck.hpp"
#include "support/random_examples.hpp"

using namespace bplab;

namespace {

ErrorKind kind_of(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidIr;
}

ModelSpec small_spec(int hidden_layers = 2, int epochs = 3) {
  ModelSpec s;
  s.hidden_layers = hidden_layers;
  s.hidden_width = 16;
  s.epochs = epochs;
  s.batch_size = 50;
  return s;
}

const std::vector<LabeledExample> &corpus() {
  static const std::vector<LabeledExample> ex = [] {
    SynthConfig cfg;
    cfg.n_functions = 60;
    cfg.seed = 8;
    cfg.trials_per_function = 500;
    const SynthModule sm = generate_module(cfg);
    return dedup(generate_examples(sm.module, profile_module(sm.module, sm.truth, cfg.trials_per_function, 1)));
  }();
  return ex;
}

// Label 1 iff dense feature 0 is positive.
TrainingData separable_set(std::uint64_t seed, std::size_t n = 1000) {
  Rng rng(seed);
  TrainingData d;
  for (std::size_t i = 0; i < n; ++i) {
    EncodedExample x;
    x.dense_size = 4;
    for (std::uint32_t k = 0; k < 4; ++k) {
      x.index.push_back(k);
      x.value.push_back(rng.normal());
    }
    d.labels.push_back(x.value[0] > 0 ? 1.0 : 0.0);
    d.inputs.push_back(std::move(x));
  }
  return d;
}

Model bare_model(const ModelSpec &spec, std::size_t dense) {
  Model m;
  m.spec = spec;
  m.params = init_parameters(spec, dense, 1, 1);
  return m;
}

Parameters scalar_params(double theta) {
  Parameters p;
  p.weights.emplace_back(1, 1);
  p.weights[0](0, 0) = theta;
  p.biases.emplace_back();
  return p;
}

} // namespace

TEST(ModelSpec, Validation) {
  ModelSpec s;
  EXPECT_NO_THROW(s.validate());
  s.hidden_width = 0;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::InvalidSpec);
  s = {};
  s.hidden_layers = 6;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::InvalidSpec);
  s = {};
  s.batch_size = 0;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::InvalidSpec);
  EXPECT_EQ(parse_loss("mse"), LossKind::MSE);
  EXPECT_FALSE(parse_loss("hinge").has_value());
}

TEST(Init, DeterministicAndShaped) {
  const ModelSpec s = small_spec();
  const Parameters a = init_parameters(s, 10, 5, 4), b = init_parameters(s, 10, 5, 4);
  EXPECT_EQ(a, b);
  ModelSpec other = s;
  other.seed = 2;
  EXPECT_NE(a, init_parameters(other, 10, 5, 4));
  ASSERT_EQ(a.weights.size(), 3u);
  EXPECT_EQ(a.weights[0].rows, 10u + 2 * 8 + 8);
  EXPECT_EQ(a.weights[0].cols, 16u);
  EXPECT_EQ(a.weights[2].cols, 1u);
  const double limit = std::sqrt(6.0 / (34 + 16));
  for (double v : a.weights[0].data) EXPECT_LE(std::abs(v), limit);
  for (double v : a.embed_callee.data) EXPECT_LE(std::abs(v), 0.05);
  for (const auto &bias : a.biases)
    for (double v : bias) EXPECT_EQ(v, 0.0);
}

TEST(Init, DepthZeroIsSingleAffineLayer) {
  const Parameters p = init_parameters(small_spec(0), 10, 3, 3);
  ASSERT_EQ(p.weights.size(), 1u);
  EXPECT_EQ(p.weights[0].rows, 34u);
  EXPECT_EQ(p.weights[0].cols, 1u);
}

TEST(Forward, ZeroParametersGiveOneHalf) {
  auto t = oracle::tiny_problem(1);
  t.params = t.params.zeros_like();
  for (const auto &x : t.batch) EXPECT_EQ(forward(t.params, x), 0.5);
}

TEST(Forward, DepthZeroLogitTwo) {
  auto t = oracle::tiny_problem(2, 0, 1, 1);
  t.params = t.params.zeros_like();
  t.params.biases[0][0] = 2.0;
  EXPECT_NEAR(forward(t.params, t.batch[0]), 0.8808, 5e-5);
  EXPECT_DOUBLE_EQ(forward(t.params, t.batch[0]), 1.0 / (1.0 + std::exp(-2.0)));
}

TEST(Forward, OutputStrictlyInsideUnitInterval) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto t = oracle::tiny_problem(seed, 3, 8, 8);
    for (double &v : t.params.weights.back().data) v *= 100.0; // push toward saturation
    for (const auto &x : t.batch) {
      const double p = forward(t.params, x);
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
  }
  EXPECT_GT(sigmoid(-800.0), 0.0);
  EXPECT_LT(sigmoid(800.0), 1.0);
  EXPECT_EQ(sigmoid(0.0), 0.5);
}

TEST(Forward, LayoutMismatch) {
  auto t = oracle::tiny_problem(3);
  EncodedExample bad = t.batch[0];
  bad.dense_size = 11;
  EXPECT_EQ(kind_of([&] { forward(t.params, bad); }), ErrorKind::LayoutMismatch);
  bad = t.batch[0];
  bad.embed[2] = 99;
  EXPECT_EQ(kind_of([&] { forward(t.params, bad); }), ErrorKind::LayoutMismatch);
}

TEST(Loss, Examples) {
  EXPECT_NEAR(loss(LossKind::CrossEntropy, 0.5, 1.0), 0.693147, 5e-7);
  EXPECT_NEAR(loss(LossKind::MSE, 0.9, 0.5), 0.16, 1e-15);
  EXPECT_NEAR(loss(LossKind::MAE, 0.9, 0.5), 0.4, 1e-15);
  EXPECT_NEAR(loss(LossKind::CrossEntropy, 0.3, 0.3), 0.610864, 5e-7);
  // Clamp keeps CE finite at the ends.
  EXPECT_NEAR(loss(LossKind::CrossEntropy, 0.0, 1.0), -std::log(1e-7), 1e-9);
  EXPECT_TRUE(std::isfinite(loss(LossKind::CrossEntropy, 1.0, 0.0)));
}

TEST(Loss, CrossEntropyMinimizedAtLabel) {
  const double y = 0.3;
  double best = 1e9, arg = -1;
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    const double l = loss(LossKind::CrossEntropy, p, y);
    if (l < best) best = l, arg = p;
  }
  EXPECT_DOUBLE_EQ(arg, 0.3);
  EXPECT_NEAR(best, 0.610864, 5e-7);
}

TEST(Backward, MatchesFiniteDifferences) {
  for (LossKind kind : {LossKind::MAE, LossKind::MSE, LossKind::CrossEntropy})
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      EXPECT_LE(oracle::max_gradient_rel_error(oracle::tiny_problem(seed), kind), 1e-4)
          << to_string(kind) << " seed " << seed;
}

TEST(Backward, DepthZeroIsLogisticRegression) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) EXPECT_LE(oracle::logistic_gradient_max_diff(seed), 1e-12);
}

TEST(Backward, DuplicatedBatchGivesSameGradient) {
  const auto t = oracle::tiny_problem(4);
  auto xs = t.batch;
  auto ys = t.labels;
  xs.insert(xs.end(), t.batch.begin(), t.batch.end());
  ys.insert(ys.end(), t.labels.begin(), t.labels.end());
  const Parameters a = backward(t.params, LossKind::CrossEntropy, t.batch, t.labels);
  const Parameters b = backward(t.params, LossKind::CrossEntropy, xs, ys);
  std::vector<double> fa, fb;
  a.for_each_tensor([&](std::span<const double> s) { fa.insert(fa.end(), s.begin(), s.end()); });
  b.for_each_tensor([&](std::span<const double> s) { fb.insert(fb.end(), s.begin(), s.end()); });
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], fb[i], 1e-15 + 1e-12 * std::abs(fa[i]));
}

TEST(Backward, UnreferencedEmbeddingRowsHaveZeroGradient) {
  auto t = oracle::tiny_problem(5);
  for (auto &x : t.batch) x.embed = {1, 3, 2};
  const Parameters g = backward(t.params, LossKind::MSE, t.batch, t.labels);
  for (std::size_t r = 0; r < g.embed_callee.rows; ++r)
    for (std::size_t c = 0; c < g.embed_callee.cols; ++c)
      if (r != 1 && r != 3) {
        EXPECT_EQ(g.embed_callee(r, c), 0.0);
      }
  for (std::size_t r = 0; r < g.embed_file.rows; ++r)
    for (std::size_t c = 0; c < g.embed_file.cols; ++c)
      if (r != 2) {
        EXPECT_EQ(g.embed_file(r, c), 0.0);
      }
}

TEST(Backward, Errors) {
  const auto t = oracle::tiny_problem(6);
  EXPECT_EQ(kind_of([&] { backward(t.params, LossKind::MSE, {}, {}); }), ErrorKind::EmptyInput);
  const std::vector<double> short_labels(1, 0.5);
  EXPECT_EQ(kind_of([&] { backward(t.params, LossKind::MSE, t.batch, short_labels); }), ErrorKind::LengthMismatch);
}

TEST(Adagrad, OneStep) {
  Parameters p = scalar_params(0.0), acc = p.zeros_like(), g = scalar_params(1.0);
  adagrad_step(p, acc, g, 0.1, 1e-8);
  EXPECT_NEAR(p.weights[0](0, 0), -0.1, 1e-8);
  EXPECT_EQ(acc.weights[0](0, 0), 1.0);
}

TEST(Adagrad, ZeroGradientIsIdentity) {
  Parameters p = scalar_params(0.7), acc = scalar_params(2.0);
  const Parameters g = scalar_params(0.0);
  adagrad_step(p, acc, g, 0.1, 1e-8);
  EXPECT_EQ(p.weights[0](0, 0), 0.7);
  EXPECT_EQ(acc.weights[0](0, 0), 2.0);
}

TEST(Adagrad, SecondStepShrinks) {
  Parameters p = scalar_params(0.0), acc = p.zeros_like();
  const Parameters g = scalar_params(1.0);
  adagrad_step(p, acc, g, 0.1, 1e-8);
  const double after_one = p.weights[0](0, 0);
  adagrad_step(p, acc, g, 0.1, 1e-8);
  EXPECT_NEAR(after_one - p.weights[0](0, 0), 0.1 / std::sqrt(2.0), 1e-8);
}

TEST(Adagrad, ShapeMismatch) {
  Parameters p = scalar_params(0.0), acc = p.zeros_like();
  Parameters g = scalar_params(1.0);
  g.weights.emplace_back(1, 1);
  g.biases.emplace_back();
  EXPECT_EQ(kind_of([&] { adagrad_step(p, acc, g, 0.1, 1e-8); }), ErrorKind::LayoutMismatch);
}

TEST(Fit, ZeroEpochsReturnsInitialization) {
  ModelSpec s = small_spec(2, 0);
  const Model init = bare_model(s, 4);
  const TrainResult r = fit(init, separable_set(1, 100));
  EXPECT_EQ(r.model, init);
  EXPECT_TRUE(r.history.empty());
}

TEST(Fit, DeterministicHistory) {
  const ModelSpec s = small_spec(2, 5);
  const TrainingData d = separable_set(2, 333);
  const TrainingData v = separable_set(3, 50);
  const TrainResult a = fit(bare_model(s, 4), d, &v), b = fit(bare_model(s, 4), d, &v);
  ASSERT_EQ(a.history.size(), 5u);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.history.back().epoch, 5);
}

TEST(Fit, SeparableToySetIsLearned) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ModelSpec s;
    s.seed = seed;
    const Model init = bare_model(s, 4);
    const TrainingData d = separable_set(seed);
    const double initial = mean_loss(init, d);
    const TrainResult r = fit(init, d);
    const double final_loss = mean_loss(r.model, d);
    EXPECT_LT(final_loss, 0.1) << "seed " << seed;
    EXPECT_LT(final_loss, initial) << "seed " << seed;
  }
}

TEST(Fit, AccumulatorsNeverDecrease) {
  const ModelSpec s = small_spec(2, 4);
  std::vector<double> prev;
  std::size_t steps = 0;
  bool monotone = true;
  fit(bare_model(s, 4), separable_set(4, 230), nullptr, [&](const Parameters &acc) {
    std::vector<double> flat;
    acc.for_each_tensor([&](std::span<const double> t) { flat.insert(flat.end(), t.begin(), t.end()); });
    for (std::size_t i = 0; i < prev.size(); ++i) monotone &= flat[i] >= prev[i];
    for (double v : flat) monotone &= v >= 0.0;
    prev = std::move(flat);
    ++steps;
  });
  EXPECT_TRUE(monotone);
  EXPECT_EQ(steps, 4u * 5u); // 230 rows in batches of 50: 5 steps per epoch
}

TEST(Fit, Errors) {
  const ModelSpec s = small_spec();
  EXPECT_EQ(kind_of([&] { fit(bare_model(s, 4), TrainingData{}); }), ErrorKind::EmptyDataset);
  TrainingData d = separable_set(5, 10);
  d.labels.pop_back();
  EXPECT_EQ(kind_of([&] { fit(bare_model(s, 4), d); }), ErrorKind::LengthMismatch);
  EXPECT_EQ(kind_of([&] { train(s, {}, {}); }), ErrorKind::EmptyDataset);
}

TEST(Fit, SparseUpdateEqualsDenseAdagrad) {
  // One epoch with one full batch: fit() must match backward + adagrad_step.
  ModelSpec s = small_spec(2, 1);
  s.batch_size = 1000;
  auto t = oracle::tiny_problem(9, 2, 16, 7);
  Model m;
  m.spec = s;
  m.params = t.params;
  TrainingData d{t.batch, t.labels, {}};
  const TrainResult r = fit(m, d);
  Parameters p = t.params, acc = p.zeros_like();
  adagrad_step(p, acc, backward(t.params, s.loss, t.batch, t.labels), s.learning_rate, s.adagrad_epsilon);
  std::vector<double> a, b;
  r.model.params.for_each_tensor([&](std::span<const double> x) { a.insert(a.end(), x.begin(), x.end()); });
  p.for_each_tensor([&](std::span<const double> x) { b.insert(b.end(), x.begin(), x.end()); });
  ASSERT_EQ(a.size(), b.size());
  // Summation order differs (shuffled batch), so allow rounding.
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Train, CountWeightingChangesTheFit) {
  const auto &ex = corpus();
  ModelSpec s = small_spec(1, 2);
  const TrainResult plain = train(s, ex, {});
  s.count_weighted = true;
  const TrainResult weighted = train(s, ex, {});
  EXPECT_NE(plain.model.params, weighted.model.params);
}

TEST(Serialization, RoundTripIsExact) {
  const auto &ex = corpus();
  const TrainResult r = train(small_spec(2, 2), ex, {});
  const std::string text = serialize_model(r.model);
  EXPECT_TRUE(text.starts_with("BPMODEL v1\n"));
  const Model back = deserialize_model(text);
  EXPECT_EQ(back, r.model);
  EXPECT_EQ(serialize_model(back), text);

  std::vector<RawFeatures> raws;
  for (const auto &e : oracle::random_examples(100, 10)) raws.push_back(e.raw);
  EXPECT_EQ(predict_batch(back, raws), predict_batch(r.model, raws));

  const auto path = std::filesystem::temp_directory_path() / "bplab_model_roundtrip.bpm";
  save_model(r.model, path);
  EXPECT_EQ(load_model(path), r.model);
  std::filesystem::remove(path);
}

TEST(Serialization, WrongMagic) {
  std::string text = serialize_model(train(small_spec(0, 1), corpus(), {}).model);
  text.replace(0, 10, "BPMODEL v9");
  EXPECT_EQ(kind_of([&] { deserialize_model(text); }), ErrorKind::VersionMismatch);
  EXPECT_EQ(kind_of([&] { deserialize_model(""); }), ErrorKind::VersionMismatch);
}

TEST(Serialization, TruncatedOrDamagedFile) {
  const std::string text = serialize_model(train(small_spec(1, 1), corpus(), {}).model);
  for (double frac : {0.1, 0.5, 0.9, 0.999})
    EXPECT_EQ(kind_of([&] { deserialize_model(text.substr(0, static_cast<std::size_t>(frac * text.size()))); }),
              ErrorKind::CorruptModel)
        << frac;
  std::string damaged = text;
  const auto pos = damaged.find("[layer.0.b]");
  ASSERT_NE(pos, std::string::npos);
  damaged.replace(pos + 12, 1, "x");
  EXPECT_EQ(kind_of([&] { deserialize_model(damaged); }), ErrorKind::CorruptModel);
  EXPECT_EQ(kind_of([] { load_model("/nonexistent/model.bpm"); }), ErrorKind::IoError);
}

TEST(PredictBatch, OrderSingletonAndRange) {
  const Model m = train(small_spec(2, 2), corpus(), {}).model;
  std::vector<RawFeatures> raws;
  for (const auto &e : oracle::random_examples(64, 11)) raws.push_back(e.raw);
  const auto preds = predict_batch(m, raws);
  for (double p : preds) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  auto rev = raws;
  std::reverse(rev.begin(), rev.end());
  auto rev_preds = predict_batch(m, rev);
  std::reverse(rev_preds.begin(), rev_preds.end());
  EXPECT_EQ(rev_preds, preds);
  EXPECT_EQ(predict_batch(m, {raws[7]}), std::vector<double>{forward(m, m.encoder.encode(raws[7]))});
  EXPECT_TRUE(predict_batch(m, {}).empty());
}
