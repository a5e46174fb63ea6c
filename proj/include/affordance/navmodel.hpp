// Per-pixel navigability classifier: handcrafted features, a 2x32 tanh MLP with sigmoid output,
// masked inverse-distance-weighted binary cross-entropy, SGD with momentum, entropy maps.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "affordance/common.hpp"
#include "affordance/selfsup.hpp"
#include "affordance/sensor.hpp"

namespace affordance {

// ---------------------------------------------------------------------------
// Features

struct FeatureSpec {
  int texture_count = textures::kCount;
  double depth_scale = 1024.0;
  int neighbor_stride = 4;  // pixel spacing of the 3x3 "same texture" probe

  int dim() const { return texture_count + 12; }
};

template <typename Scalar>
using FeatureMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;  // dim x pixels

namespace detail {

inline std::uint16_t neighborhood_mode(const Observation& o, int u, int v) {
  std::array<std::uint16_t, 9> ids{};
  int n = 0;
  for (int dv = -1; dv <= 1; ++dv)
    for (int du = -1; du <= 1; ++du) {
      const int uu = u + du, vv = v + dv;
      if (uu < 0 || vv < 0 || uu >= o.width || vv >= o.height) continue;
      ids[static_cast<std::size_t>(n++)] = o.texture[o.index(uu, vv)];
    }
  std::sort(ids.begin(), ids.begin() + n);
  std::uint16_t best = ids[0];
  int best_run = 0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && ids[static_cast<std::size_t>(j)] == ids[static_cast<std::size_t>(i)]) ++j;
    if (j - i > best_run) {
      best_run = j - i;
      best = ids[static_cast<std::size_t>(i)];
    }
    i = j;
  }
  return best;
}

}  // namespace detail

/// Writes the feature vector of pixel (u, v) into `out` (length spec.dim()).
///
/// Layout: [0, K) texture one-hot plus 0.5 x one-hot of the 3x3 neighborhood's modal texture;
/// K depth/scale clamped to [0,1]; K+1 (v - v0)/H; K+2 |u - W/2|/W; K+3..K+11 a 3x3 probe at
/// `neighbor_stride` spacing, 1 where the probed pixel has the center pixel's texture.
template <typename Scalar>
void extract_features(const Observation& o, int u, int v, std::span<Scalar> out, const FeatureSpec& spec = {}) {
  const int K = spec.texture_count;
  std::fill(out.begin(), out.end(), Scalar(0));
  const auto tex = o.texture[o.index(u, v)];
  if (tex >= K) throw Error("texture id " + std::to_string(tex) + " outside feature vocabulary");
  out[tex] += Scalar(1);
  const auto mode = detail::neighborhood_mode(o, u, v);
  if (mode < K) out[mode] += Scalar(0.5);
  const double d = o.depth[o.index(u, v)];
  out[static_cast<std::size_t>(K)] = static_cast<Scalar>(std::clamp(d / spec.depth_scale, 0.0, 1.0));
  out[static_cast<std::size_t>(K + 1)] = static_cast<Scalar>((v - o.height / 2.0) / o.height);
  out[static_cast<std::size_t>(K + 2)] = static_cast<Scalar>(std::abs(u - o.width / 2.0) / o.width);
  int k = K + 3;
  for (int dv = -1; dv <= 1; ++dv)
    for (int du = -1; du <= 1; ++du, ++k) {
      const int uu = u + du * spec.neighbor_stride, vv = v + dv * spec.neighbor_stride;
      const bool same = uu >= 0 && vv >= 0 && uu < o.width && vv < o.height && o.texture[o.index(uu, vv)] == tex;
      out[static_cast<std::size_t>(k)] = same ? Scalar(1) : Scalar(0);
    }
}

template <typename Scalar>
std::vector<Scalar> extract_features(const Observation& o, int u, int v, const FeatureSpec& spec = {}) {
  std::vector<Scalar> f(static_cast<std::size_t>(spec.dim()));
  extract_features<Scalar>(o, u, v, std::span<Scalar>(f), spec);
  return f;
}

/// Feature columns for the given pixel indices.
template <typename Scalar>
FeatureMatrix<Scalar> feature_matrix(const Observation& o, std::span<const std::size_t> pixels, const FeatureSpec& spec = {}) {
  FeatureMatrix<Scalar> X(spec.dim(), static_cast<Eigen::Index>(pixels.size()));
  for (std::size_t c = 0; c < pixels.size(); ++c) {
    const int u = static_cast<int>(pixels[c] % static_cast<std::size_t>(o.width));
    const int v = static_cast<int>(pixels[c] / static_cast<std::size_t>(o.width));
    extract_features<Scalar>(o, u, v, std::span<Scalar>(X.col(static_cast<Eigen::Index>(c)).data(), static_cast<std::size_t>(spec.dim())), spec);
  }
  return X;
}

// ---------------------------------------------------------------------------
// Parameters

/// Flat parameter vector in file/declaration order: W1 (h1 x F, row-major), b1, W2 (h2 x h1), b2,
/// W3 (1 x h2), b3.
template <typename Scalar>
struct ModelParams {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int feature_dim = 0;
  int hidden1 = 32;
  int hidden2 = 32;
  std::uint64_t init_seed = 0;
  Vector theta;

  static std::size_t count(int f, int h1, int h2) {
    return static_cast<std::size_t>(h1) * f + h1 + static_cast<std::size_t>(h2) * h1 + h2 + h2 + 1;
  }
  std::size_t parameter_count() const { return count(feature_dim, hidden1, hidden2); }

  static ModelParams zeros(int f, int h1 = 32, int h2 = 32) {
    ModelParams p;
    p.feature_dim = f;
    p.hidden1 = h1;
    p.hidden2 = h2;
    p.theta = Vector::Zero(static_cast<Eigen::Index>(count(f, h1, h2)));
    return p;
  }

  /// Xavier-uniform weights, zero biases.
  static ModelParams init(int f, std::uint64_t seed, int h1 = 32, int h2 = 32) {
    ModelParams p = zeros(f, h1, h2);
    p.init_seed = seed;
    Rng rng(seed);
    auto fill = [&](Eigen::Index offset, int rows, int cols) {
      const double a = std::sqrt(6.0 / (rows + cols));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rows) * cols; ++i)
        p.theta[offset + i] = static_cast<Scalar>(rng.uniform(-a, a));
    };
    fill(p.off_w1(), h1, f);
    fill(p.off_w2(), h2, h1);
    fill(p.off_w3(), 1, h2);
    return p;
  }

  Eigen::Index off_w1() const { return 0; }
  Eigen::Index off_b1() const { return off_w1() + static_cast<Eigen::Index>(hidden1) * feature_dim; }
  Eigen::Index off_w2() const { return off_b1() + hidden1; }
  Eigen::Index off_b2() const { return off_w2() + static_cast<Eigen::Index>(hidden2) * hidden1; }
  Eigen::Index off_w3() const { return off_b2() + hidden2; }
  Eigen::Index off_b3() const { return off_w3() + hidden2; }

  template <typename V>
  static auto mat(V& v, Eigen::Index off, int rows, int cols) {
    using M = std::conditional_t<std::is_const_v<std::remove_reference_t<decltype(*v.data())>>, const RowMat, RowMat>;
    return Eigen::Map<M>(v.data() + off, rows, cols);
  }
  template <typename V>
  static auto vec(V& v, Eigen::Index off, int n) {
    using M = std::conditional_t<std::is_const_v<std::remove_reference_t<decltype(*v.data())>>, const Vector, Vector>;
    return Eigen::Map<M>(v.data() + off, n);
  }

  auto w1() const { return mat(theta, off_w1(), hidden1, feature_dim); }
  auto b1() const { return vec(theta, off_b1(), hidden1); }
  auto w2() const { return mat(theta, off_w2(), hidden2, hidden1); }
  auto b2() const { return vec(theta, off_b2(), hidden2); }
  auto w3() const { return mat(theta, off_w3(), 1, hidden2); }
  Scalar b3() const { return theta[off_b3()]; }
  Scalar& b3_mut() { return theta[off_b3()]; }

  template <typename T>
  ModelParams<T> cast() const {
    ModelParams<T> p;
    p.feature_dim = feature_dim;
    p.hidden1 = hidden1;
    p.hidden2 = hidden2;
    p.init_seed = init_seed;
    p.theta = theta.template cast<T>();
    return p;
  }

  bool operator==(const ModelParams& o) const {
    return feature_dim == o.feature_dim && hidden1 == o.hidden1 && hidden2 == o.hidden2 && theta.size() == o.theta.size() &&
           theta == o.theta;
  }
};

using Model = ModelParams<float>;

// ---------------------------------------------------------------------------
// Forward / loss

template <typename Scalar>
struct ForwardCache {
  FeatureMatrix<Scalar> a1, a2;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> logit;
};

template <typename Scalar>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> forward_logits(const ModelParams<Scalar>& p, const FeatureMatrix<Scalar>& X,
                                                        ForwardCache<Scalar>* cache = nullptr) {
  FeatureMatrix<Scalar> a1 = ((p.w1() * X).colwise() + p.b1()).array().tanh().matrix();
  FeatureMatrix<Scalar> a2 = ((p.w2() * a1).colwise() + p.b2()).array().tanh().matrix();
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> z = (p.w3() * a2).array() + p.b3();
  if (cache) {
    cache->a1 = std::move(a1);
    cache->a2 = std::move(a2);
    cache->logit = z;
  }
  return z;
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return z >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-z)) : std::exp(z) / (Scalar(1) + std::exp(z));
}

template <typename Scalar>
Scalar softplus(Scalar z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// Navigability probability of one feature vector. Throws on non-finite input.
template <typename Scalar>
Scalar forward(const ModelParams<Scalar>& p, std::span<const Scalar> x) {
  if (static_cast<int>(x.size()) != p.feature_dim) throw Error("feature dimension mismatch");
  for (Scalar v : x)
    if (!std::isfinite(v)) throw Error("non-finite feature value");
  FeatureMatrix<Scalar> X = Eigen::Map<const FeatureMatrix<Scalar>>(x.data(), p.feature_dim, 1);
  return sigmoid(forward_logits(p, X)(0));
}

template <typename Scalar>
struct LossGrad {
  double loss = 0.0;
  typename ModelParams<Scalar>::Vector grad;
};

/// sum_i w_i * BCE(sigmoid(f(x_i)), y_i) / sum_i w_i, with its gradient. y is 1 for navigable.
/// Zero total weight gives loss 0 and a zero gradient.
template <typename Scalar>
LossGrad<Scalar> weighted_bce(const ModelParams<Scalar>& p, const FeatureMatrix<Scalar>& X,
                              const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& y,
                              const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& w, bool want_grad = true) {
  LossGrad<Scalar> out;
  if (want_grad) out.grad = ModelParams<Scalar>::Vector::Zero(p.theta.size());
  const double wsum = w.template cast<double>().sum();
  if (X.cols() == 0 || wsum <= 0.0) return out;
  ForwardCache<Scalar> c;
  const auto z = forward_logits(p, X, &c);
  double loss = 0.0;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dz(z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    loss += static_cast<double>(w(i)) * (static_cast<double>(softplus(z(i))) - static_cast<double>(y(i)) * z(i));
    dz(i) = static_cast<Scalar>(w(i) * (sigmoid(z(i)) - y(i)) / wsum);
  }
  out.loss = loss / wsum;
  if (!want_grad) return out;

  auto& g = out.grad;
  ModelParams<Scalar>::mat(g, p.off_w3(), 1, p.hidden2).noalias() = dz * c.a2.transpose();
  g[p.off_b3()] = dz.sum();
  FeatureMatrix<Scalar> d2 = (p.w3().transpose() * dz).cwiseProduct((Scalar(1) - c.a2.array().square()).matrix());
  ModelParams<Scalar>::mat(g, p.off_w2(), p.hidden2, p.hidden1).noalias() = d2 * c.a1.transpose();
  ModelParams<Scalar>::vec(g, p.off_b2(), p.hidden2) = d2.rowwise().sum();
  FeatureMatrix<Scalar> d1 = (p.w2().transpose() * d2).cwiseProduct((Scalar(1) - c.a1.array().square()).matrix());
  ModelParams<Scalar>::mat(g, p.off_w1(), p.hidden1, p.feature_dim).noalias() = d1 * X.transpose();
  ModelParams<Scalar>::vec(g, p.off_b1(), p.hidden1) = d1.rowwise().sum();
  return out;
}

/// Labeled pixels of one sample, as training columns.
template <typename Scalar>
struct PreparedSample {
  FeatureMatrix<Scalar> X;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> y;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> w;
};

template <typename Scalar>
PreparedSample<Scalar> prepare_sample(const LabeledSample& s, const FeatureSpec& spec = {}) {
  std::vector<std::size_t> px;
  for (std::size_t i = 0; i < s.label.size(); ++i)
    if (s.label[i] != pixel_label::kUnknown) px.push_back(i);
  PreparedSample<Scalar> out;
  out.X = feature_matrix<Scalar>(s.observation, px, spec);
  out.y.resize(static_cast<Eigen::Index>(px.size()));
  out.w.resize(static_cast<Eigen::Index>(px.size()));
  for (std::size_t c = 0; c < px.size(); ++c) {
    out.y(static_cast<Eigen::Index>(c)) = s.label[px[c]] == pixel_label::kNavigable ? Scalar(1) : Scalar(0);
    out.w(static_cast<Eigen::Index>(c)) = static_cast<Scalar>(s.weight[px[c]]);
  }
  return out;
}

template <typename Scalar>
LossGrad<Scalar> masked_loss(const ModelParams<Scalar>& p, const LabeledSample& s, const FeatureSpec& spec = {}) {
  const auto ps = prepare_sample<Scalar>(s, spec);
  return weighted_bce(p, ps.X, ps.y, ps.w);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 50;
  int minibatch = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int hidden1 = 32;
  int hidden2 = 32;
};

struct TrainResult {
  Model params;
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

inline TrainResult train_prepared(const std::vector<PreparedSample<float>>& data, const TrainConfig& cfg,
                                  const FeatureSpec& spec = {}) {
  if (data.empty()) throw Error("cannot train on an empty dataset");
  if (cfg.minibatch < 1 || cfg.epochs < 0) throw Error("invalid training configuration");
  TrainResult r;
  r.params = Model::init(spec.dim(), derive_seed(cfg.seed, stream_id("init")), cfg.hidden1, cfg.hidden2);
  Model::Vector velocity = Model::Vector::Zero(r.params.theta.size());
  Rng rng(derive_seed(cfg.seed, stream_id("shuffle")));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      Eigen::Index cols = 0;
      for (std::size_t k = start; k < end; ++k) cols += data[order[k]].X.cols();
      if (cols == 0) continue;
      FeatureMatrix<float> X(spec.dim(), cols);
      Eigen::Matrix<float, 1, Eigen::Dynamic> y(cols), w(cols);
      Eigen::Index at = 0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& d = data[order[k]];
        const auto n = d.X.cols();
        X.middleCols(at, n) = d.X;
        y.segment(at, n) = d.y;
        w.segment(at, n) = d.w;
        at += n;
      }
      const auto lg = weighted_bce(r.params, X, y, w);
      velocity = static_cast<float>(cfg.momentum) * velocity - static_cast<float>(cfg.learning_rate) * lg.grad;
      r.params.theta += velocity;
      loss_sum += lg.loss;
      ++batches;
    }
    r.epoch_loss.push_back(batches ? loss_sum / batches : 0.0);
  }
  return r;
}

inline TrainResult train(const std::vector<LabeledSample>& dataset, const TrainConfig& cfg, const FeatureSpec& spec = {}) {
  if (dataset.empty()) throw Error("cannot train on an empty dataset");
  std::vector<PreparedSample<float>> data;
  data.reserve(dataset.size());
  for (const auto& s : dataset) data.push_back(prepare_sample<float>(s, spec));
  return train_prepared(data, cfg, spec);
}

// ---------------------------------------------------------------------------
// Prediction maps

struct PredictionMap {
  int width = 0;
  int height = 0;
  std::vector<float> prob;
  std::vector<float> entropy;  // nats
};

inline double bernoulli_entropy(double p) {
  auto xlogx = [](double x) { return x <= 0.0 ? 0.0 : x * std::log(x); };
  return -xlogx(p) - xlogx(1.0 - p);
}

/// Per-pixel predictor; lets agents swap in constant or alternative models.
using Predictor = std::function<PredictionMap(const Observation&)>;

inline PredictionMap constant_prediction(const Observation& o, double p) {
  PredictionMap m;
  m.width = o.width;
  m.height = o.height;
  m.prob.assign(o.size(), static_cast<float>(p));
  m.entropy.assign(o.size(), static_cast<float>(bernoulli_entropy(p)));
  return m;
}

template <typename Scalar>
PredictionMap predict_map(const ModelParams<Scalar>& p, const Observation& o, const FeatureSpec& spec = {}) {
  std::vector<std::size_t> px(o.size());
  std::iota(px.begin(), px.end(), 0);
  const auto X = feature_matrix<Scalar>(o, px, spec);
  const auto z = forward_logits(p, X);
  PredictionMap m;
  m.width = o.width;
  m.height = o.height;
  m.prob.resize(o.size());
  m.entropy.resize(o.size());
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double pr = sigmoid(static_cast<double>(z(static_cast<Eigen::Index>(i))));
    m.prob[i] = static_cast<float>(pr);
    m.entropy[i] = static_cast<float>(bernoulli_entropy(pr));
  }
  return m;
}

inline Predictor model_predictor(Model m, FeatureSpec spec = {}) {
  return [m = std::move(m), spec](const Observation& o) { return predict_map(m, o, spec); };
}

// ---------------------------------------------------------------------------
// AMLP model files

inline std::vector<std::uint8_t> encode_model(const Model& m) {
  ByteWriter out;
  out.tag("AMLP");
  out.u16(1);
  out.u16(static_cast<std::uint16_t>(m.feature_dim));
  out.u16(static_cast<std::uint16_t>(m.hidden1));
  out.u16(static_cast<std::uint16_t>(m.hidden2));
  out.u16(1);
  for (Eigen::Index i = 0; i < m.theta.size(); ++i) out.f32(m.theta[i]);
  return out.take();
}

inline Model decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_tag("AMLP");
  const std::size_t version_at = in.offset();
  if (in.u16() != 1) throw FormatError("unsupported model version", version_at);
  const int f = in.u16(), h1 = in.u16(), h2 = in.u16();
  const std::size_t out_at = in.offset();
  if (in.u16() != 1) throw FormatError("model output width must be 1", out_at);
  if (f == 0 || h1 == 0 || h2 == 0) throw FormatError("zero layer width", version_at + 2);
  Model m = Model::zeros(f, h1, h2);
  for (Eigen::Index i = 0; i < m.theta.size(); ++i) m.theta[i] = in.f32();
  if (!in.at_end()) throw FormatError("trailing bytes after model weights", in.offset());
  return m;
}

inline void write_model(const Model& m, const std::string& path) { write_file_bytes(path, encode_model(m)); }
inline Model read_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

}  // namespace affordance
