#pragma once

// Small dense stack for the homograph classifiers: a one-hidden-layer MLP, a
// single-layer bidirectional LSTM, Adam, and finite-difference checking.
// Everything is batched: a batch of B sequences of length T is T matrices
// of shape B x d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rabbinic/common.hpp"
#include "rabbinic/matrix.hpp"

namespace rabbinic::neural {

inline constexpr int kNumLabels = 2;

/// Contiguous parameter storage paired with its gradient.
struct ParamView {
  std::span<double> value;
  std::span<const double> grad;
};

inline std::span<double> as_span(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<double> as_span(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<const double> as_span(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

namespace detail {
inline void init_uniform(Matrix& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

// Both via exp, which Eigen vectorizes for doubles; exp overflow to inf
// still yields the correct limits.
template <class Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& a) {
  return 1.0 / (1.0 + (-a).exp());
}

template <class Derived>
auto tanh(const Eigen::ArrayBase<Derived>& a) {
  return 2.0 / (1.0 + (-2.0 * a).exp()) - 1.0;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// MLP: logits = W2 relu(W1 x + b1) + b2

struct Mlp2 {
  Matrix W1;  // h x d
  Vector b1;  // h
  Matrix W2;  // 2 x h
  Vector b2;  // 2

  std::size_t input_dim() const { return static_cast<std::size_t>(W1.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(W1.rows()); }

  static Mlp2 zeros(std::size_t d, std::size_t h) {
    const auto di = static_cast<Eigen::Index>(d), hi = static_cast<Eigen::Index>(h);
    return {Matrix::Zero(hi, di), Vector::Zero(hi), Matrix::Zero(kNumLabels, hi), Vector::Zero(kNumLabels)};
  }

  static Mlp2 init(std::size_t d, std::size_t h, Rng& rng) {
    if (d == 0 || h == 0) throw Error("mlp: dimensions must be positive");
    Mlp2 m = zeros(d, h);
    detail::init_uniform(m.W1, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    detail::init_uniform(m.W2, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    return m;
  }

  void append_params(std::vector<std::span<double>>& out) {
    out.insert(out.end(), {as_span(W1), as_span(b1), as_span(W2), as_span(b2)});
  }
  void append_params(std::vector<std::span<const double>>& out) const {
    out.insert(out.end(), {as_span(W1), as_span(b1), as_span(W2), as_span(b2)});
  }

  bool operator==(const Mlp2&) const = default;
};

struct MlpCache {
  Matrix x;    // B x d
  Matrix pre;  // B x h
  Matrix act;  // B x h
};

/// Batched forward; rows of `x` are examples. Returns B x 2 logits.
inline Matrix mlp_forward(const Mlp2& m, const Matrix& x, MlpCache* cache = nullptr) {
  if (static_cast<std::size_t>(x.cols()) != m.input_dim()) {
    throw ContractError("mlp_forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                        std::to_string(m.input_dim()));
  }
  Matrix pre = x * m.W1.transpose();
  pre.rowwise() += m.b1.transpose();
  Matrix act = pre.cwiseMax(0.0);
  Matrix logits = act * m.W2.transpose();
  logits.rowwise() += m.b2.transpose();
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return logits;
}

/// Single-example convenience.
inline Vector mlp_forward(const Mlp2& m, const Vector& x) {
  return mlp_forward(m, Matrix(x.transpose())).row(0).transpose();
}

/// Accumulates parameter gradients into `g`; returns dL/dx (B x d).
inline Matrix mlp_backward(const Mlp2& m, const MlpCache& c, const Matrix& d_logits, Mlp2& g) {
  g.W2 += d_logits.transpose() * c.act;
  g.b2 += d_logits.colwise().sum().transpose();
  Matrix d_act = d_logits * m.W2;
  Matrix d_pre = (d_act.array() * (c.pre.array() > 0.0).cast<double>()).matrix();
  g.W1 += d_pre.transpose() * c.x;
  g.b1 += d_pre.colwise().sum().transpose();
  return d_pre * m.W1;
}

// ---------------------------------------------------------------------------
// LSTM. Gate blocks are stacked in the order input, forget, output, candidate.

struct LstmDirection {
  Matrix Wx;  // 4h x d
  Matrix Wh;  // 4h x h
  Vector b;   // 4h

  std::size_t hidden() const { return static_cast<std::size_t>(Wh.cols()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(Wx.cols()); }

  static LstmDirection zeros(std::size_t d, std::size_t h) {
    const auto di = static_cast<Eigen::Index>(d), hi = static_cast<Eigen::Index>(h);
    return {Matrix::Zero(4 * hi, di), Matrix::Zero(4 * hi, hi), Vector::Zero(4 * hi)};
  }

  static LstmDirection init(std::size_t d, std::size_t h, Rng& rng) {
    LstmDirection l = zeros(d, h);
    detail::init_uniform(l.Wx, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    detail::init_uniform(l.Wh, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    const auto hi = static_cast<Eigen::Index>(h);
    l.b.segment(hi, hi).setOnes();
    return l;
  }

  bool operator==(const LstmDirection&) const = default;
};

struct BiLstm {
  LstmDirection fwd;
  LstmDirection bwd;

  std::size_t hidden() const { return fwd.hidden(); }
  std::size_t input_dim() const { return fwd.input_dim(); }
  std::size_t output_dim() const { return 2 * hidden(); }

  static BiLstm zeros(std::size_t d, std::size_t h) { return {LstmDirection::zeros(d, h), LstmDirection::zeros(d, h)}; }

  static BiLstm init(std::size_t d, std::size_t h, Rng& rng) {
    if (d == 0 || h == 0) throw Error("bilstm: dimensions must be positive");
    BiLstm m;
    m.fwd = LstmDirection::init(d, h, rng);
    m.bwd = LstmDirection::init(d, h, rng);
    return m;
  }

  void append_params(std::vector<std::span<double>>& out) {
    for (auto* l : {&fwd, &bwd}) out.insert(out.end(), {as_span(l->Wx), as_span(l->Wh), as_span(l->b)});
  }
  void append_params(std::vector<std::span<const double>>& out) const {
    for (const auto* l : {&fwd, &bwd}) out.insert(out.end(), {as_span(l->Wx), as_span(l->Wh), as_span(l->b)});
  }

  bool operator==(const BiLstm&) const = default;
};

/// Per-step activations in processing order.
struct LstmDirCache {
  std::vector<Matrix> gates;   // activated gates, B x 4h
  std::vector<Matrix> c;       // cell states, c[0] = 0, c[s+1] after step s
  std::vector<Matrix> h;       // hidden states, same indexing
  std::vector<Matrix> tanh_c;  // tanh(c[s+1])
};

struct BiLstmCache {
  Matrix x;  // all steps stacked time-major, (T*B) x d
  Eigen::Index batch = 0;
  LstmDirCache fwd;
  LstmDirCache bwd;
};

namespace detail {

/// Stacks T step matrices (B x d each) time-major.
inline Matrix stack_steps(const std::vector<Matrix>& steps) {
  const Eigen::Index B = steps.front().rows();
  Matrix x(B * static_cast<Eigen::Index>(steps.size()), steps.front().cols());
  for (std::size_t t = 0; t < steps.size(); ++t) x.middleRows(static_cast<Eigen::Index>(t) * B, B) = steps[t];
  return x;
}

// The input projection of every step is one product; only the recurrent
// term runs step by step.
inline Matrix lstm_run(const LstmDirection& l, const Matrix& x, Eigen::Index batch, bool reverse, LstmDirCache* cache) {
  const auto hi = static_cast<Eigen::Index>(l.hidden());
  const Eigen::Index T = x.rows() / batch;
  Matrix proj = x * l.Wx.transpose();
  proj.rowwise() += l.b.transpose();
  Matrix h = Matrix::Zero(batch, hi);
  Matrix c = Matrix::Zero(batch, hi);
  if (cache) {
    *cache = LstmDirCache{};
    cache->c.push_back(c);
    cache->h.push_back(h);
  }
  for (Eigen::Index s = 0; s < T; ++s) {
    const Eigen::Index t = reverse ? T - 1 - s : s;
    Matrix a = proj.middleRows(t * batch, batch);
    a.noalias() += h * l.Wh.transpose();
    a.leftCols(3 * hi) = sigmoid(a.leftCols(3 * hi).array()).matrix();
    a.rightCols(hi) = detail::tanh(a.rightCols(hi).array()).matrix();
    c = a.middleCols(hi, hi).cwiseProduct(c) + a.leftCols(hi).cwiseProduct(a.rightCols(hi));
    Matrix tc = detail::tanh(c.array()).matrix();
    h = a.middleCols(2 * hi, hi).cwiseProduct(tc);
    if (cache) {
      cache->gates.push_back(std::move(a));
      cache->c.push_back(c);
      cache->h.push_back(h);
      cache->tanh_c.push_back(std::move(tc));
    }
  }
  return h;
}

/// Backpropagates dL/d(final h) through one direction; accumulates into g.
inline void lstm_backprop(const LstmDirection& l, const LstmDirCache& cache, const Matrix& x, Eigen::Index batch,
                          bool reverse, const Matrix& d_final, LstmDirection& g) {
  const auto hi = static_cast<Eigen::Index>(l.hidden());
  const auto T = static_cast<Eigen::Index>(cache.gates.size());
  Matrix dh = d_final;
  Matrix dc = Matrix::Zero(batch, hi);
  Matrix d_gates(T * batch, 4 * hi);  // time-major, aligned with x
  Matrix h_prev(T * batch, hi);
  for (Eigen::Index s = T; s-- > 0;) {
    const Eigen::Index t = reverse ? T - 1 - s : s;
    const auto us = static_cast<std::size_t>(s);
    const Matrix& a = cache.gates[us];
    const auto i = a.leftCols(hi).array();
    const auto f = a.middleCols(hi, hi).array();
    const auto o = a.middleCols(2 * hi, hi).array();
    const auto gg = a.rightCols(hi).array();
    const auto tc = cache.tanh_c[us].array();
    const auto c_prev = cache.c[us].array();
    const Eigen::ArrayXXd dca = dc.array() + dh.array() * o * (1.0 - tc.square());
    auto da = d_gates.middleRows(t * batch, batch);
    da.leftCols(hi) = (dca * gg * i * (1.0 - i)).matrix();
    da.middleCols(hi, hi) = (dca * c_prev * f * (1.0 - f)).matrix();
    da.middleCols(2 * hi, hi) = (dh.array() * tc * o * (1.0 - o)).matrix();
    da.rightCols(hi) = (dca * i * (1.0 - gg.square())).matrix();
    h_prev.middleRows(t * batch, batch) = cache.h[us];
    dh.noalias() = da * l.Wh;
    dc = (dca * f).matrix();
  }
  g.Wx.noalias() += d_gates.transpose() * x;
  g.Wh.noalias() += d_gates.transpose() * h_prev;
  g.b += d_gates.colwise().sum().transpose();
}

}  // namespace detail

/// Encodes a batch: returns B x 2h, [final forward h | final backward h].
inline Matrix bilstm_encode(const BiLstm& m, const std::vector<Matrix>& steps, BiLstmCache* cache = nullptr) {
  if (steps.empty()) throw ContractError("bilstm_encode: empty sequence");
  for (const auto& x : steps) {
    if (static_cast<std::size_t>(x.cols()) != m.input_dim() || x.rows() != steps.front().rows()) {
      throw ContractError("bilstm_encode: step has shape " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + ", model expects d=" + std::to_string(m.input_dim()));
    }
  }
  const Eigen::Index batch = steps.front().rows();
  Matrix stacked = detail::stack_steps(steps);
  Matrix out(batch, static_cast<Eigen::Index>(m.output_dim()));
  const auto hi = static_cast<Eigen::Index>(m.hidden());
  out.leftCols(hi) = detail::lstm_run(m.fwd, stacked, batch, false, cache ? &cache->fwd : nullptr);
  out.rightCols(hi) = detail::lstm_run(m.bwd, stacked, batch, true, cache ? &cache->bwd : nullptr);
  if (cache) {
    cache->x = std::move(stacked);
    cache->batch = batch;
  }
  return out;
}

/// Single sequence (T x d, one step per row) convenience.
inline Vector bilstm_encode(const BiLstm& m, const Matrix& sequence) {
  std::vector<Matrix> steps;
  for (Eigen::Index t = 0; t < sequence.rows(); ++t) steps.emplace_back(sequence.row(t));
  return bilstm_encode(m, steps).row(0).transpose();
}

inline void bilstm_backward(const BiLstm& m, const BiLstmCache& cache, const Matrix& d_out, BiLstm& g) {
  const auto hi = static_cast<Eigen::Index>(m.hidden());
  detail::lstm_backprop(m.fwd, cache.fwd, cache.x, cache.batch, false, d_out.leftCols(hi), g.fwd);
  detail::lstm_backprop(m.bwd, cache.bwd, cache.x, cache.batch, true, d_out.rightCols(hi), g.bwd);
}

// ---------------------------------------------------------------------------
// Classifier: optional BiLSTM encoder feeding the MLP.

struct Classifier {
  std::optional<BiLstm> encoder;
  Mlp2 mlp;

  /// Same shapes, all zeros (gradient accumulator).
  Classifier zeros_like() const {
    Classifier z;
    if (encoder) z.encoder = BiLstm::zeros(encoder->input_dim(), encoder->hidden());
    z.mlp = Mlp2::zeros(mlp.input_dim(), mlp.hidden());
    return z;
  }

  void set_zero() {
    for (auto p : params()) std::fill(p.begin(), p.end(), 0.0);
  }

  std::vector<std::span<double>> params() {
    std::vector<std::span<double>> out;
    if (encoder) encoder->append_params(out);
    mlp.append_params(out);
    return out;
  }
  std::vector<std::span<const double>> params() const {
    std::vector<std::span<const double>> out;
    if (encoder) encoder->append_params(out);
    mlp.append_params(out);
    return out;
  }

  bool operator==(const Classifier&) const = default;
};

/// MLP over a fixed-length feature vector.
inline Classifier make_mlp_classifier(std::size_t input_dim, std::size_t mlp_hidden, std::uint64_t seed) {
  Rng rng(seed);
  return Classifier{std::nullopt, Mlp2::init(input_dim, mlp_hidden, rng)};
}

/// BiLSTM over a sequence of input_dim vectors, then the MLP.
inline Classifier make_bilstm_classifier(std::size_t input_dim, std::size_t lstm_hidden, std::size_t mlp_hidden,
                                         std::uint64_t seed) {
  Rng rng(seed);
  Classifier c;
  c.encoder = BiLstm::init(input_dim, lstm_hidden, rng);
  c.mlp = Mlp2::init(2 * lstm_hidden, mlp_hidden, rng);
  return c;
}

/// Labelled examples. Each input is T x d; an MLP-only model takes T = 1.
struct Dataset {
  std::vector<Matrix> inputs;
  std::vector<int> labels;  // 1 or 2
};

/// Gathers examples `idx` into per-step batch matrices.
inline std::vector<Matrix> gather_steps(const std::vector<Matrix>& inputs, std::span<const std::size_t> idx) {
  const Eigen::Index T = inputs[idx.front()].rows();
  const Eigen::Index d = inputs[idx.front()].cols();
  std::vector<Matrix> steps(static_cast<std::size_t>(T), Matrix(static_cast<Eigen::Index>(idx.size()), d));
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Matrix& x = inputs[idx[b]];
    for (Eigen::Index t = 0; t < T; ++t) steps[static_cast<std::size_t>(t)].row(static_cast<Eigen::Index>(b)) = x.row(t);
  }
  return steps;
}

/// Batched logits, B x 2.
inline Matrix forward(const Classifier& model, const std::vector<Matrix>& steps) {
  if (model.encoder) return mlp_forward(model.mlp, bilstm_encode(*model.encoder, steps));
  if (steps.size() != 1) throw ContractError("forward: MLP-only classifier takes a single step");
  return mlp_forward(model.mlp, steps.front());
}

/// log softmax, stable for large logits.
inline Matrix log_softmax(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    const double lse = mx + std::log((out.row(r).array() - mx).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

/// Per-example cross-entropy of B x 2 logits against labels in {1,2}.
inline Vector cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const Matrix ls = log_softmax(logits);
  Vector out(ls.rows());
  for (Eigen::Index r = 0; r < ls.rows(); ++r) out(r) = -ls(r, labels[static_cast<std::size_t>(r)] - 1);
  return out;
}

/// Mean cross-entropy over the batch; accumulates its gradient into `grad`.
/// Per-example losses are written to `per_example` when given.
inline double loss_and_grad(const Classifier& model, const std::vector<Matrix>& steps, std::span<const int> labels,
                            Classifier& grad, Vector* per_example = nullptr) {
  BiLstmCache enc_cache;
  MlpCache mlp_cache;
  Matrix features = model.encoder ? bilstm_encode(*model.encoder, steps, &enc_cache) : steps.front();
  if (!model.encoder && steps.size() != 1) throw ContractError("loss_and_grad: MLP-only classifier takes a single step");
  const Matrix logits = mlp_forward(model.mlp, features, &mlp_cache);
  const Matrix ls = log_softmax(logits);
  const auto batch = static_cast<double>(ls.rows());
  Vector losses(ls.rows());
  Matrix d_logits = ls.array().exp().matrix();
  for (Eigen::Index r = 0; r < ls.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)] - 1;
    losses(r) = -ls(r, y);
    d_logits(r, y) -= 1.0;
  }
  d_logits /= batch;
  const Matrix d_features = mlp_backward(model.mlp, mlp_cache, d_logits, grad.mlp);
  if (model.encoder) bilstm_backward(*model.encoder, enc_cache, d_features, *grad.encoder);
  if (per_example) *per_example = losses;
  return losses.sum() / batch;
}

/// Ties go to label 1.
inline int predict_label(double logit1, double logit2) { return logit2 > logit1 ? 2 : 1; }

inline std::vector<int> predict(const Classifier& model, const std::vector<Matrix>& inputs) {
  std::vector<int> out;
  if (inputs.empty()) return out;
  std::vector<std::size_t> idx(inputs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Matrix logits = forward(model, gather_steps(inputs, idx));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) out.push_back(predict_label(logits(r, 0), logits(r, 1)));
  return out;
}

inline int predict(const Classifier& model, const Matrix& input) { return predict(model, std::vector<Matrix>{input}).front(); }

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
};

class Adam {
 public:
  Adam(const TrainConfig& c, const std::vector<std::span<double>>& params) : c_(c) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        const double g = grads[k][i];
        m[i] = c_.beta1 * m[i] + (1.0 - c_.beta1) * g;
        v[i] = c_.beta2 * v[i] + (1.0 - c_.beta2) * g * g;
        params[k][i] -= c_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c_.epsilon);
      }
    }
  }

 private:
  TrainConfig c_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
  std::vector<double> epoch_losses;  // mean per-example loss seen during each epoch
};

inline void validate_dataset(const Classifier& model, const Dataset& data) {
  if (data.inputs.empty()) throw Error("train_classifier: empty dataset");
  if (data.inputs.size() != data.labels.size()) throw Error("train_classifier: inputs and labels differ in length");
  const auto rows = data.inputs.front().rows(), cols = data.inputs.front().cols();
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    if (data.inputs[i].rows() != rows || data.inputs[i].cols() != cols) {
      throw Error("train_classifier: example " + std::to_string(i) + " has a different shape");
    }
    if (data.labels[i] != 1 && data.labels[i] != 2) {
      throw Error("train_classifier: example " + std::to_string(i) + " has label " + std::to_string(data.labels[i]));
    }
  }
  const auto expected = model.encoder ? model.encoder->input_dim() : model.mlp.input_dim();
  if (static_cast<std::size_t>(cols) != expected) {
    throw Error("train_classifier: inputs have dim " + std::to_string(cols) + ", model expects " +
                std::to_string(expected));
  }
  if (!model.encoder && rows != 1) throw Error("train_classifier: MLP-only model takes one feature row per example");
}

/// Minibatch Adam on mean cross-entropy; mutates `model` only.
inline TrainResult train_classifier(Classifier& model, const Dataset& data, const TrainConfig& config) {
  if (config.epochs == 0 || config.batch_size == 0 || config.learning_rate < 0 || !(config.epsilon > 0)) {
    throw Error("train_classifier: invalid training configuration");
  }
  validate_dataset(model, data);
  if (std::all_of(data.labels.begin(), data.labels.end(), [&](int l) { return l == data.labels.front(); })) {
    warn("train_classifier: all examples have label " + std::to_string(data.labels.front()));
  }
  Rng rng(config.seed);
  const auto params = model.params();
  Adam adam(config, params);
  Classifier grad = model.zeros_like();
  const auto grads = std::as_const(grad).params();
  std::vector<std::size_t> order(data.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> example_loss(order.size());
  std::vector<int> labels;
  Vector batch_losses;
  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      labels.clear();
      for (auto i : idx) labels.push_back(data.labels[i]);
      grad.set_zero();
      loss_and_grad(model, gather_steps(data.inputs, idx), labels, grad, &batch_losses);
      for (std::size_t b = 0; b < idx.size(); ++b) example_loss[idx[b]] = batch_losses(static_cast<Eigen::Index>(b));
      adam.step(params, grads);
    }
    double sum = 0;
    for (double l : example_loss) sum += l;
    const double mean = sum / static_cast<double>(example_loss.size());
    if (!std::isfinite(mean)) throw Error("train_classifier: loss became non-finite");
    result.epoch_losses.push_back(mean);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Finite differences

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Largest relative error between each ParamView's grad and the central
/// difference of `loss` at that coordinate. Parameters are restored.
inline double gradient_check(const std::function<double()>& loss, const std::vector<ParamView>& params,
                             double eps = 1e-5) {
  auto eval = [&] {
    const double l = loss();
    if (!std::isfinite(l)) throw Error("gradient_check: loss is not finite");
    return l;
  };
  eval();
  double worst = 0;
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size()) throw ContractError("gradient_check: value and gradient sizes differ");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double plus = eval();
      p.value[i] = saved - eps;
      const double minus = eval();
      p.value[i] = saved;
      worst = std::max(worst, relative_error(p.grad[i], (plus - minus) / (2 * eps)));
    }
  }
  return worst;
}

/// Pairs a model's parameters with a same-shaped gradient model.
inline std::vector<ParamView> param_views(Classifier& model, const Classifier& grad) {
  const auto v = model.params();
  const auto g = grad.params();
  std::vector<ParamView> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back({v[i], g[i]});
  return out;
}

}  // namespace rabbinic::neural
