#pragma once

// Feed-forward network with embedding inputs: ReLU hidden layers, sigmoid
// output, analytic gradients, Adagrad, and a seeded mini-batch trainer.
//
// Layer k's weights are stored fan_in x fan_out, row-major, so the sparse
// first layer only touches the rows of its nonzero inputs. The first
// layer's input is the dense feature vector followed by the taken-callee,
// not-taken-callee and file embedding rows.

#include <charconv>
#include <cmath>
#include <functional>
#include <span>

#include "bplab/dataset.hpp"

namespace bplab {

enum class LossKind : std::uint8_t { MAE, MSE, CrossEntropy };

inline const char *to_string(LossKind k) {
  switch (k) {
  case LossKind::MAE: return "mae";
  case LossKind::MSE: return "mse";
  case LossKind::CrossEntropy: return "ce";
  }
  return "?";
}

inline std::optional<LossKind> parse_loss(std::string_view s) {
  if (s == "mae") return LossKind::MAE;
  if (s == "mse") return LossKind::MSE;
  if (s == "ce") return LossKind::CrossEntropy;
  return std::nullopt;
}

struct ModelSpec {
  int hidden_layers = 5;
  int hidden_width = 64;
  int embed_callee = 8;
  int embed_file = 8;
  LossKind loss = LossKind::CrossEntropy;
  int batch_size = 200;
  int epochs = 100;
  double learning_rate = 0.05;
  double adagrad_epsilon = 1e-8;
  std::uint64_t seed = 1;
  bool count_weighted = false;

  void validate() const {
    if (hidden_layers < 0 || hidden_layers > 5) fail(ErrorKind::InvalidSpec, "hidden_layers must be in 0..5");
    if (hidden_width <= 0) fail(ErrorKind::InvalidSpec, "hidden_width must be positive");
    if (embed_callee <= 0 || embed_file <= 0) fail(ErrorKind::InvalidSpec, "embedding dims must be positive");
    if (batch_size <= 0) fail(ErrorKind::InvalidSpec, "batch_size must be positive");
    if (epochs < 0) fail(ErrorKind::InvalidSpec, "epochs must be nonnegative");
    if (!(learning_rate > 0.0)) fail(ErrorKind::InvalidSpec, "learning_rate must be positive");
    if (!(adagrad_epsilon >= 0.0)) fail(ErrorKind::InvalidSpec, "adagrad_epsilon must be nonnegative");
  }
  bool operator==(const ModelSpec &) const = default;
};

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double *row(std::size_t r) { return data.data() + r * cols; }
  const double *row(std::size_t r) const { return data.data() + r * cols; }
  bool operator==(const Matrix &) const = default;
};

/// All learnable tensors. Also used, with identical shapes, for gradients
/// and Adagrad accumulators.
struct Parameters {
  Matrix embed_callee; // vocab x dim, row 0 = OOV / none
  Matrix embed_file;
  std::vector<Matrix> weights; // layer k: fan_in x fan_out
  std::vector<std::vector<double>> biases;

  Parameters zeros_like() const {
    Parameters p;
    p.embed_callee = Matrix(embed_callee.rows, embed_callee.cols);
    p.embed_file = Matrix(embed_file.rows, embed_file.cols);
    for (const auto &w : weights) p.weights.emplace_back(w.rows, w.cols);
    for (const auto &b : biases) p.biases.emplace_back(b.size(), 0.0);
    return p;
  }

  /// Calls fn(span) on every tensor in a fixed order.
  template <class Fn> void for_each_tensor(Fn &&fn) {
    fn(std::span<double>(embed_callee.data));
    fn(std::span<double>(embed_file.data));
    for (std::size_t k = 0; k < weights.size(); ++k) {
      fn(std::span<double>(weights[k].data));
      fn(std::span<double>(biases[k]));
    }
  }
  template <class Fn> void for_each_tensor(Fn &&fn) const {
    fn(std::span<const double>(embed_callee.data));
    fn(std::span<const double>(embed_file.data));
    for (std::size_t k = 0; k < weights.size(); ++k) {
      fn(std::span<const double>(weights[k].data));
      fn(std::span<const double>(biases[k]));
    }
  }

  std::size_t input_width() const { return weights.empty() ? 0 : weights.front().rows; }
  std::size_t embed_width() const { return 2 * embed_callee.cols + embed_file.cols; }
  std::size_t dense_size() const { return input_width() - embed_width(); }

  bool operator==(const Parameters &) const = default;
};

struct Model {
  ModelSpec spec;
  Encoder encoder;
  Parameters params;

  std::size_t dense_size() const { return params.dense_size(); }
  bool operator==(const Model &) const = default;
};

// ---------------------------------------------------------------------------
// Initialization

/// Glorot-uniform weights, zero biases, U(-0.05, 0.05) embeddings, drawn in
/// a fixed order from ModelSpec::seed.
inline Parameters init_parameters(const ModelSpec &spec, std::size_t dense_size, std::size_t callee_vocab,
                                  std::size_t file_vocab) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 1));
  Parameters p;
  p.embed_callee = Matrix(callee_vocab, static_cast<std::size_t>(spec.embed_callee));
  p.embed_file = Matrix(file_vocab, static_cast<std::size_t>(spec.embed_file));
  for (double &v : p.embed_callee.data) v = rng.uniform(-0.05, 0.05);
  for (double &v : p.embed_file.data) v = rng.uniform(-0.05, 0.05);

  std::size_t fan_in = dense_size + 2 * static_cast<std::size_t>(spec.embed_callee) + static_cast<std::size_t>(spec.embed_file);
  for (int k = 0; k <= spec.hidden_layers; ++k) {
    const std::size_t fan_out = k == spec.hidden_layers ? 1 : static_cast<std::size_t>(spec.hidden_width);
    Matrix w(fan_in, fan_out);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double &v : w.data) v = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
    fan_in = fan_out;
  }
  return p;
}

inline Model init_model(const ModelSpec &spec, Encoder encoder) {
  Model m;
  m.spec = spec;
  m.params = init_parameters(spec, encoder.dense_size(), encoder.callee_vocab().size(), encoder.file_vocab().size());
  m.encoder = std::move(encoder);
  return m;
}

// ---------------------------------------------------------------------------
// Forward / loss / backward

/// Logistic function, kept strictly inside (0,1) even when the logit
/// saturates double precision.
inline double sigmoid(double z) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  if (z >= 0) return std::min(1.0 / (1.0 + std::exp(-z)), hi);
  const double e = std::exp(z);
  return std::max(e / (1.0 + e), lo);
}

inline constexpr double kProbClamp = 1e-7;

inline double loss(LossKind kind, double pred, double label) {
  switch (kind) {
  case LossKind::MAE: return std::abs(pred - label);
  case LossKind::MSE: return (pred - label) * (pred - label);
  case LossKind::CrossEntropy: {
    const double p = std::clamp(pred, kProbClamp, 1.0 - kProbClamp);
    return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  }
  }
  return 0.0;
}

/// d loss / d logit, with pred = sigmoid(logit). For cross-entropy this is
/// the exact p - y of the unclamped loss.
inline double loss_grad_logit(LossKind kind, double pred, double label) {
  switch (kind) {
  case LossKind::MAE: {
    const double s = pred > label ? 1.0 : (pred < label ? -1.0 : 0.0);
    return s * pred * (1.0 - pred);
  }
  case LossKind::MSE: return 2.0 * (pred - label) * pred * (1.0 - pred);
  case LossKind::CrossEntropy: return pred - label;
  }
  return 0.0;
}

namespace detail {

inline void check_layout(const Parameters &p, const EncodedExample &x) {
  if (x.dense_size != p.dense_size() || x.index.size() != x.value.size())
    fail(ErrorKind::LayoutMismatch, "example has dense size " + std::to_string(x.dense_size) + ", model expects " +
                                        std::to_string(p.dense_size()));
  for (std::uint32_t i : x.index)
    if (i >= x.dense_size) fail(ErrorKind::LayoutMismatch, "dense index out of range");
  if (x.embed[0] >= p.embed_callee.rows || x.embed[1] >= p.embed_callee.rows || x.embed[2] >= p.embed_file.rows)
    fail(ErrorKind::LayoutMismatch, "embedding index out of range");
}

/// Activations of one example: layer outputs (post-ReLU) and the output.
struct Trace {
  std::vector<std::vector<double>> hidden; // hidden[k] = output of hidden layer k
  double logit = 0.0;
  double pred = 0.5;
};

/// Input rows of the first layer for the three embedding slots.
inline void for_each_embed_input(const Parameters &p, const EncodedExample &x, auto &&fn) {
  const std::size_t base = p.dense_size();
  const std::size_t dc = p.embed_callee.cols;
  const std::size_t df = p.embed_file.cols;
  const double *tc = p.embed_callee.row(x.embed[0]);
  const double *nc = p.embed_callee.row(x.embed[1]);
  const double *fl = p.embed_file.row(x.embed[2]);
  for (std::size_t j = 0; j < dc; ++j) fn(base + j, tc[j], 0, x.embed[0], j);
  for (std::size_t j = 0; j < dc; ++j) fn(base + dc + j, nc[j], 0, x.embed[1], j);
  for (std::size_t j = 0; j < df; ++j) fn(base + 2 * dc + j, fl[j], 1, x.embed[2], j);
}

inline void forward_trace(const Parameters &p, const EncodedExample &x, Trace &t) {
  const std::size_t layers = p.weights.size();
  t.hidden.resize(layers - 1);
  std::vector<double> z(p.biases[0]);
  const Matrix &w0 = p.weights[0];
  auto axpy = [&](std::size_t row, double v) {
    const double *wr = w0.row(row);
    for (std::size_t o = 0; o < z.size(); ++o) z[o] += v * wr[o];
  };
  for (std::size_t k = 0; k < x.index.size(); ++k) axpy(x.index[k], x.value[k]);
  for_each_embed_input(p, x, [&](std::size_t row, double v, int, std::uint32_t, std::size_t) { axpy(row, v); });

  for (std::size_t l = 1; l < layers; ++l) {
    auto &h = t.hidden[l - 1];
    h.resize(z.size());
    for (std::size_t o = 0; o < z.size(); ++o) h[o] = z[o] > 0.0 ? z[o] : 0.0;
    const Matrix &w = p.weights[l];
    z.assign(p.biases[l].begin(), p.biases[l].end());
    for (std::size_t i = 0; i < w.rows; ++i) {
      const double hi = h[i];
      if (hi == 0.0) continue;
      const double *wr = w.row(i);
      for (std::size_t o = 0; o < w.cols; ++o) z[o] += hi * wr[o];
    }
  }
  t.logit = z[0];
  t.pred = sigmoid(t.logit);
}

/// Gradient accumulator that remembers which first-layer and embedding
/// rows it touched, so training can update and clear only those.
struct GradientBuffer {
  Parameters grad;
  std::vector<char> w0_touched;
  std::vector<std::uint32_t> w0_rows;
  std::vector<char> callee_touched, file_touched;
  std::vector<std::uint32_t> callee_rows, file_rows;

  explicit GradientBuffer(const Parameters &shape)
      : grad(shape.zeros_like()), w0_touched(shape.input_width(), 0), callee_touched(shape.embed_callee.rows, 0),
        file_touched(shape.embed_file.rows, 0) {}

  void touch(std::vector<char> &flags, std::vector<std::uint32_t> &rows, std::uint32_t r) {
    if (!flags[r]) {
      flags[r] = 1;
      rows.push_back(r);
    }
  }

  void clear() {
    const std::size_t out0 = grad.weights[0].cols;
    for (std::uint32_t r : w0_rows) {
      std::fill_n(grad.weights[0].row(r), out0, 0.0);
      w0_touched[r] = 0;
    }
    for (std::uint32_t r : callee_rows) {
      std::fill_n(grad.embed_callee.row(r), grad.embed_callee.cols, 0.0);
      callee_touched[r] = 0;
    }
    for (std::uint32_t r : file_rows) {
      std::fill_n(grad.embed_file.row(r), grad.embed_file.cols, 0.0);
      file_touched[r] = 0;
    }
    w0_rows.clear();
    callee_rows.clear();
    file_rows.clear();
    for (std::size_t k = 1; k < grad.weights.size(); ++k) std::fill(grad.weights[k].data.begin(), grad.weights[k].data.end(), 0.0);
    for (auto &b : grad.biases) std::fill(b.begin(), b.end(), 0.0);
  }
};

/// Adds scale * d loss / d params for one example into `buf`; returns the
/// example's loss.
inline double accumulate_example(const Parameters &p, LossKind kind, const EncodedExample &x, double label,
                                 double scale, Trace &t, GradientBuffer &buf) {
  forward_trace(p, x, t);
  const std::size_t layers = p.weights.size();
  std::vector<double> delta{scale * loss_grad_logit(kind, t.pred, label)};

  for (std::size_t l = layers - 1; l >= 1; --l) {
    const auto &h = t.hidden[l - 1];
    Matrix &gw = buf.grad.weights[l];
    const Matrix &w = p.weights[l];
    auto &gb = buf.grad.biases[l];
    for (std::size_t o = 0; o < delta.size(); ++o) gb[o] += delta[o];
    std::vector<double> prev(w.rows, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
      if (h[i] == 0.0) continue; // ReLU inactive: no weight gradient, no back-propagated signal
      double *gr = gw.row(i);
      const double *wr = w.row(i);
      double acc = 0.0;
      for (std::size_t o = 0; o < delta.size(); ++o) {
        gr[o] += h[i] * delta[o];
        acc += wr[o] * delta[o];
      }
      prev[i] = acc;
    }
    delta = std::move(prev);
  }

  // First layer.
  auto &gb0 = buf.grad.biases[0];
  for (std::size_t o = 0; o < delta.size(); ++o) gb0[o] += delta[o];
  Matrix &gw0 = buf.grad.weights[0];
  const Matrix &w0 = p.weights[0];
  auto row_update = [&](std::size_t row, double v) {
    buf.touch(buf.w0_touched, buf.w0_rows, static_cast<std::uint32_t>(row));
    double *gr = gw0.row(row);
    for (std::size_t o = 0; o < delta.size(); ++o) gr[o] += v * delta[o];
  };
  for (std::size_t k = 0; k < x.index.size(); ++k) row_update(x.index[k], x.value[k]);
  for_each_embed_input(p, x, [&](std::size_t row, double v, int table, std::uint32_t erow, std::size_t j) {
    row_update(row, v);
    const double *wr = w0.row(row);
    double g = 0.0;
    for (std::size_t o = 0; o < delta.size(); ++o) g += wr[o] * delta[o];
    if (table == 0) {
      buf.touch(buf.callee_touched, buf.callee_rows, erow);
      buf.grad.embed_callee(erow, j) += g;
    } else {
      buf.touch(buf.file_touched, buf.file_rows, erow);
      buf.grad.embed_file(erow, j) += g;
    }
  });
  return loss(kind, t.pred, label);
}

} // namespace detail

inline double forward(const Parameters &p, const EncodedExample &x) {
  detail::check_layout(p, x);
  detail::Trace t;
  detail::forward_trace(p, x, t);
  return t.pred;
}

inline double forward(const Model &m, const EncodedExample &x) { return forward(m.params, x); }

/// Mean-over-batch gradient of the loss. `weights`, if non-empty,
/// multiplies each example's loss before the mean.
inline Parameters backward(const Parameters &p, LossKind kind, std::span<const EncodedExample> batch,
                           std::span<const double> labels, std::span<const double> weights = {}) {
  if (batch.empty()) fail(ErrorKind::EmptyInput, "backward needs a non-empty batch");
  if (labels.size() != batch.size() || (!weights.empty() && weights.size() != batch.size()))
    fail(ErrorKind::LengthMismatch, "labels/weights do not match the batch");
  detail::GradientBuffer buf(p);
  detail::Trace t;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::check_layout(p, batch[i]);
    detail::accumulate_example(p, kind, batch[i], labels[i], inv_n * (weights.empty() ? 1.0 : weights[i]), t, buf);
  }
  return std::move(buf.grad);
}

inline Parameters backward(const Model &m, std::span<const EncodedExample> batch, std::span<const double> labels) {
  return backward(m.params, m.spec.loss, batch, labels);
}

/// G += g^2; theta -= lr * g / (sqrt(G) + eps), elementwise.
inline void adagrad_step(Parameters &params, Parameters &accum, const Parameters &grads, double lr, double eps) {
  std::vector<std::span<double>> ps, as;
  std::vector<std::span<const double>> gs;
  params.for_each_tensor([&](std::span<double> s) { ps.push_back(s); });
  accum.for_each_tensor([&](std::span<double> s) { as.push_back(s); });
  grads.for_each_tensor([&](std::span<const double> s) { gs.push_back(s); });
  if (ps.size() != gs.size() || as.size() != gs.size()) fail(ErrorKind::LayoutMismatch, "parameter shapes differ");
  for (std::size_t t = 0; t < ps.size(); ++t) {
    if (ps[t].size() != gs[t].size() || as[t].size() != gs[t].size())
      fail(ErrorKind::LayoutMismatch, "parameter shapes differ");
    for (std::size_t i = 0; i < ps[t].size(); ++i) {
      const double g = gs[t][i];
      as[t][i] += g * g;
      ps[t][i] -= lr * g / (std::sqrt(as[t][i]) + eps);
    }
  }
}

namespace detail {

/// adagrad_step restricted to the rows the buffer touched; untouched rows
/// have zero gradient, for which the update is the identity.
inline void adagrad_step_sparse(Parameters &params, Parameters &accum, const GradientBuffer &buf, double lr,
                                double eps) {
  auto update = [&](double *theta, double *acc, const double *g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      acc[i] += g[i] * g[i];
      theta[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
    }
  };
  const std::size_t c0 = params.weights[0].cols;
  for (std::uint32_t r : buf.w0_rows)
    update(params.weights[0].row(r), accum.weights[0].row(r), buf.grad.weights[0].row(r), c0);
  for (std::uint32_t r : buf.callee_rows)
    update(params.embed_callee.row(r), accum.embed_callee.row(r), buf.grad.embed_callee.row(r), params.embed_callee.cols);
  for (std::uint32_t r : buf.file_rows)
    update(params.embed_file.row(r), accum.embed_file.row(r), buf.grad.embed_file.row(r), params.embed_file.cols);
  for (std::size_t k = 1; k < params.weights.size(); ++k)
    update(params.weights[k].data.data(), accum.weights[k].data.data(), buf.grad.weights[k].data.data(),
           params.weights[k].data.size());
  for (std::size_t k = 0; k < params.biases.size(); ++k)
    update(params.biases[k].data(), accum.biases[k].data(), buf.grad.biases[k].data(), params.biases[k].size());
}

} // namespace detail

// ---------------------------------------------------------------------------
// Training

struct TrainingData {
  std::vector<EncodedExample> inputs;
  std::vector<double> labels;
  std::vector<double> weights; // empty = unweighted
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0; // mean over the epoch's batches, as they were trained
  double valid_loss = 0.0; // after the epoch; NaN without a validation set
  bool operator==(const EpochStats &) const = default;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  Parameters accumulators;
};

/// Observer invoked after every optimizer step with the accumulators.
using StepObserver = std::function<void(const Parameters &accumulators)>;

/// Mean loss over `data`, weighted by sample count only when ModelSpec::count_weighted is set.
inline double mean_loss(const Model &m, const TrainingData &data) {
  if (data.inputs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    const double w = (m.spec.count_weighted && !data.weights.empty()) ? data.weights[i] : 1.0;
    s += w * loss(m.spec.loss, forward(m, data.inputs[i]), data.labels[i]);
  }
  return s / static_cast<double>(data.inputs.size());
}

/// Runs exactly spec.epochs epochs of seeded-shuffle mini-batch Adagrad
/// from `initial`. The last batch of an epoch may be smaller.
inline TrainResult fit(Model initial, const TrainingData &train_set, const TrainingData *valid_set = nullptr,
                       const StepObserver &observer = {}) {
  const ModelSpec &spec = initial.spec;
  spec.validate();
  if (train_set.inputs.empty()) fail(ErrorKind::EmptyDataset, "training set is empty");
  if (train_set.labels.size() != train_set.inputs.size())
    fail(ErrorKind::LengthMismatch, "labels do not match training inputs");
  for (const auto &x : train_set.inputs) detail::check_layout(initial.params, x);
  if (valid_set)
    for (const auto &x : valid_set->inputs) detail::check_layout(initial.params, x);

  TrainResult result;
  result.model = std::move(initial);
  result.accumulators = result.model.params.zeros_like();
  Parameters &params = result.model.params;

  const std::size_t n = train_set.inputs.size();
  const std::size_t bs = static_cast<std::size_t>(spec.batch_size);
  std::vector<std::size_t> order(n);
  Rng rng(derive_seed(spec.seed, 2));
  detail::GradientBuffer buf(params);
  detail::Trace trace;

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const double w = (spec.count_weighted && !train_set.weights.empty()) ? train_set.weights[i] : 1.0;
        loss_sum += w * detail::accumulate_example(params, spec.loss, train_set.inputs[i], train_set.labels[i],
                                                   inv * w, trace, buf);
      }
      detail::adagrad_step_sparse(params, result.accumulators, buf, spec.learning_rate, spec.adagrad_epsilon);
      buf.clear();
      if (observer) observer(result.accumulators);
    }
    EpochStats st;
    st.epoch = epoch + 1;
    st.train_loss = loss_sum / static_cast<double>(n);
    st.valid_loss = valid_set ? mean_loss(result.model, *valid_set) : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(st);
  }
  return result;
}

inline TrainingData make_training_data(const Encoder &enc, const std::vector<LabeledExample> &examples) {
  TrainingData d;
  d.inputs.reserve(examples.size());
  for (const auto &e : examples) {
    d.inputs.push_back(enc.encode(e.raw));
    d.labels.push_back(e.label);
    d.weights.push_back(static_cast<double>(e.sample_count));
  }
  return d;
}

/// Fits the encoder on `train_set`, initializes from the spec, trains, and
/// reports validation loss on `valid_set` (may be empty).
inline TrainResult train(const ModelSpec &spec, const std::vector<LabeledExample> &train_set,
                         const std::vector<LabeledExample> &valid_set, const EmbedSpec &embed = {}) {
  spec.validate();
  if (train_set.empty()) fail(ErrorKind::EmptyDataset, "training set is empty");
  std::vector<RawFeatures> raws;
  raws.reserve(train_set.size());
  for (const auto &e : train_set) raws.push_back(e.raw);
  Model m = init_model(spec, fit_encoder(raws, embed));
  const TrainingData tr = make_training_data(m.encoder, train_set);
  const TrainingData va = make_training_data(m.encoder, valid_set);
  return fit(std::move(m), tr, valid_set.empty() ? nullptr : &va);
}

inline std::vector<double> predict_batch(const Model &m, const std::vector<RawFeatures> &examples) {
  std::vector<double> out(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) { out[i] = forward(m, m.encoder.encode(examples[i])); });
  return out;
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr std::string_view kModelMagic = "BPMODEL v1";

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, p) : std::string("nan");
}

inline void write_matrix(std::string &out, const std::string &section, std::size_t rows, std::size_t cols,
                         const double *data) {
  out += "[" + section + "]\n" + std::to_string(rows) + " " + std::to_string(cols) + "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ' ';
      out += format_double(data[r * cols + c]);
    }
    out += '\n';
  }
}

} // namespace detail

inline std::string serialize_model(const Model &m) {
  std::string out(kModelMagic);
  out += "\n[spec]\n";
  const auto &s = m.spec;
  out += "hidden_layers=" + std::to_string(s.hidden_layers) + "\n";
  out += "hidden_width=" + std::to_string(s.hidden_width) + "\n";
  out += "embed_callee=" + std::to_string(s.embed_callee) + "\n";
  out += "embed_file=" + std::to_string(s.embed_file) + "\n";
  out += std::string("loss=") + to_string(s.loss) + "\n";
  out += "batch_size=" + std::to_string(s.batch_size) + "\n";
  out += "epochs=" + std::to_string(s.epochs) + "\n";
  out += "learning_rate=" + detail::format_double(s.learning_rate) + "\n";
  out += "adagrad_epsilon=" + detail::format_double(s.adagrad_epsilon) + "\n";
  out += "seed=" + std::to_string(s.seed) + "\n";
  out += std::string("count_weighted=") + (s.count_weighted ? "1" : "0") + "\n";

  const auto &e = m.encoder;
  out += "[encoder.config]\n";
  out += "const_threshold=" + std::to_string(e.embed_spec().const_threshold) + "\n";
  out += "min_count=" + std::to_string(e.embed_spec().min_count) + "\n";
  out += "dense_size=" + std::to_string(m.params.dense_size()) + "\n";
  out += "[encoder.numeric]\n";
  for (const auto &st : e.numeric_stats())
    out += st.name + "," + detail::format_double(st.mean) + "," + detail::format_double(st.std) + "\n";
  out += "[encoder.dropped]\n";
  for (const auto &d : e.dropped_numeric()) out += d + "\n";
  out += "[encoder.vocab.callee]\n";
  for (std::size_t i = 0; i < e.callee_vocab().words().size(); ++i)
    out += std::to_string(i + 1) + " " + e.callee_vocab().words()[i] + "\n";
  out += "[encoder.vocab.file]\n";
  for (std::size_t i = 0; i < e.file_vocab().words().size(); ++i)
    out += std::to_string(i + 1) + " " + e.file_vocab().words()[i] + "\n";

  const auto &p = m.params;
  detail::write_matrix(out, "embed.callee", p.embed_callee.rows, p.embed_callee.cols, p.embed_callee.data.data());
  detail::write_matrix(out, "embed.file", p.embed_file.rows, p.embed_file.cols, p.embed_file.data.data());
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    detail::write_matrix(out, "layer." + std::to_string(k) + ".W", p.weights[k].rows, p.weights[k].cols,
                         p.weights[k].data.data());
    detail::write_matrix(out, "layer." + std::to_string(k) + ".b", 1, p.biases[k].size(), p.biases[k].data());
  }
  out += "[end]\n";
  return out;
}

inline void save_model(const Model &m, const std::filesystem::path &path) { write_text_file(path, serialize_model(m)); }

inline Model deserialize_model(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty() || lines[0] != kModelMagic)
    fail(ErrorKind::VersionMismatch, "expected '" + std::string(kModelMagic) + "' header");

  std::map<std::string, std::vector<std::string_view>, std::less<>> sections;
  std::vector<std::string> order;
  std::string current;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto l = lines[i];
    if (l.starts_with('[') && l.ends_with(']')) {
      current = std::string(l.substr(1, l.size() - 2));
      if (sections.count(current)) fail(ErrorKind::CorruptModel, "duplicate section [" + current + "]");
      sections[current];
      order.push_back(current);
    } else if (current.empty()) {
      fail(ErrorKind::CorruptModel, "data before the first section");
    } else {
      sections[current].push_back(l);
    }
  }
  if (order.empty() || order.back() != "end") fail(ErrorKind::CorruptModel, "[end] (file truncated)");

  auto section = [&](const std::string &name) -> const std::vector<std::string_view> & {
    auto it = sections.find(name);
    if (it == sections.end()) fail(ErrorKind::CorruptModel, "[" + name + "] missing");
    return it->second;
  };
  auto kv = [&](const std::string &name) {
    std::map<std::string, std::string, std::less<>> out;
    for (auto l : section(name)) {
      const auto eq = l.find('=');
      if (eq == std::string_view::npos) fail(ErrorKind::CorruptModel, "[" + name + "] bad line");
      out[std::string(l.substr(0, eq))] = std::string(l.substr(eq + 1));
    }
    return out;
  };
  auto num = [&]<class T>(const std::string &sec, std::string_view s, T &out) {
    if (!csv::parse_number(s, out)) fail(ErrorKind::CorruptModel, "[" + sec + "] bad number '" + std::string(s) + "'");
  };

  Model m;
  {
    auto spec = kv("spec");
    auto get = [&](const char *key) -> std::string & {
      auto it = spec.find(key);
      if (it == spec.end()) fail(ErrorKind::CorruptModel, std::string("[spec] missing ") + key);
      return it->second;
    };
    num("spec", get("hidden_layers"), m.spec.hidden_layers);
    num("spec", get("hidden_width"), m.spec.hidden_width);
    num("spec", get("embed_callee"), m.spec.embed_callee);
    num("spec", get("embed_file"), m.spec.embed_file);
    auto loss_kind = parse_loss(get("loss"));
    if (!loss_kind) fail(ErrorKind::CorruptModel, "[spec] bad loss");
    m.spec.loss = *loss_kind;
    num("spec", get("batch_size"), m.spec.batch_size);
    num("spec", get("epochs"), m.spec.epochs);
    num("spec", get("learning_rate"), m.spec.learning_rate);
    num("spec", get("adagrad_epsilon"), m.spec.adagrad_epsilon);
    num("spec", get("seed"), m.spec.seed);
    int cw = 0;
    num("spec", get("count_weighted"), cw);
    m.spec.count_weighted = cw != 0;
    try {
      m.spec.validate();
    } catch (const Error &err) {
      fail(ErrorKind::CorruptModel, std::string("[spec] ") + err.what());
    }
  }

  EmbedSpec es;
  std::size_t dense_size = 0;
  {
    auto cfg = kv("encoder.config");
    if (!cfg.count("const_threshold") || !cfg.count("min_count") || !cfg.count("dense_size"))
      fail(ErrorKind::CorruptModel, "[encoder.config] incomplete");
    num("encoder.config", cfg["const_threshold"], es.const_threshold);
    num("encoder.config", cfg["min_count"], es.min_count);
    num("encoder.config", cfg["dense_size"], dense_size);
  }
  std::vector<NumericStat> numeric;
  for (auto l : section("encoder.numeric")) {
    const auto c1 = l.find(',');
    const auto c2 = l.find(',', c1 == std::string_view::npos ? c1 : c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos)
      fail(ErrorKind::CorruptModel, "[encoder.numeric] bad line");
    NumericStat st;
    st.name = std::string(l.substr(0, c1));
    num("encoder.numeric", l.substr(c1 + 1, c2 - c1 - 1), st.mean);
    num("encoder.numeric", l.substr(c2 + 1), st.std);
    if (!(st.std > 0.0)) fail(ErrorKind::CorruptModel, "[encoder.numeric] nonpositive std");
    numeric.push_back(std::move(st));
  }
  std::vector<std::string> dropped;
  for (auto l : section("encoder.dropped")) dropped.emplace_back(l);
  auto vocab = [&](const std::string &name) {
    std::vector<std::string> words;
    for (auto l : section(name)) {
      const auto sp = l.find(' ');
      std::size_t idx = 0;
      if (sp == std::string_view::npos || !csv::parse_number(l.substr(0, sp), idx) || idx != words.size() + 1)
        fail(ErrorKind::CorruptModel, "[" + name + "] bad line");
      words.emplace_back(l.substr(sp + 1));
    }
    return Vocabulary(std::move(words));
  };
  try {
    m.encoder = Encoder::from_parts(es, std::move(numeric), std::move(dropped), vocab("encoder.vocab.callee"),
                                    vocab("encoder.vocab.file"));
  } catch (const Error &err) {
    if (err.kind() == ErrorKind::CorruptModel) throw;
    fail(ErrorKind::CorruptModel, std::string("[encoder.numeric] ") + err.what());
  }
  if (m.encoder.dense_size() != dense_size) fail(ErrorKind::CorruptModel, "[encoder.config] dense_size mismatch");

  auto matrix = [&](const std::string &name, std::size_t rows, std::size_t cols) {
    const auto &ls = section(name);
    if (ls.empty()) fail(ErrorKind::CorruptModel, "[" + name + "] empty");
    const auto dims = detail::split_ws(ls[0]);
    std::size_t r = 0, c = 0;
    if (dims.size() != 2 || !csv::parse_number(dims[0], r) || !csv::parse_number(dims[1], c) || r != rows || c != cols)
      fail(ErrorKind::CorruptModel, "[" + name + "] unexpected shape");
    if (ls.size() != rows + 1) fail(ErrorKind::CorruptModel, "[" + name + "] wrong row count");
    Matrix mat(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto vals = detail::split_ws(ls[i + 1]);
      if (vals.size() != cols) fail(ErrorKind::CorruptModel, "[" + name + "] wrong column count");
      for (std::size_t j = 0; j < cols; ++j) num(name, vals[j], mat(i, j));
    }
    return mat;
  };

  const auto &s = m.spec;
  m.params.embed_callee = matrix("embed.callee", m.encoder.callee_vocab().size(), static_cast<std::size_t>(s.embed_callee));
  m.params.embed_file = matrix("embed.file", m.encoder.file_vocab().size(), static_cast<std::size_t>(s.embed_file));
  std::size_t fan_in = dense_size + 2 * static_cast<std::size_t>(s.embed_callee) + static_cast<std::size_t>(s.embed_file);
  for (int k = 0; k <= s.hidden_layers; ++k) {
    const std::size_t fan_out = k == s.hidden_layers ? 1 : static_cast<std::size_t>(s.hidden_width);
    m.params.weights.push_back(matrix("layer." + std::to_string(k) + ".W", fan_in, fan_out));
    m.params.biases.push_back(matrix("layer." + std::to_string(k) + ".b", 1, fan_out).data);
    fan_in = fan_out;
  }
  return m;
}

inline Model load_model(const std::filesystem::path &path) { return deserialize_model(read_text_file(path)); }

} // namespace bplab
