#pragma once

// Input-injected equilibrium layers f(z, x), linear output heads h(z) and the
// inner losses ℓ(h(z), y), each with the analytic first- and second-order
// contractions the augmented system and its backward pass consume.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/linalg.hpp"
#include "jiio/core/rng.hpp"
#include "jiio/core/tensor.hpp"

namespace jiio {

/// Layer evaluations performed by a solver; the unit of cost for every
/// efficiency comparison in this library.
struct EvalCounters {
  std::uint64_t f_evals = 0;
  std::uint64_t vjp_evals = 0;

  std::uint64_t total() const noexcept { return f_evals + vjp_evals; }
  bool operator==(const EvalCounters&) const = default;
};

enum class Activation { kLinear, kTanh };

struct LayerParams {
  Matrix W;  // n × n state weight
  Matrix U;  // n × d input injection
  Vector b;  // n
};

struct LayerGradient {
  Matrix W;
  Matrix U;
  Vector b;
};

/// ∂/∂z[(∂f/∂z)ᵀμ], ∂/∂x[(∂f/∂z)ᵀμ], ∂/∂z[(∂f/∂x)ᵀμ], ∂/∂x[(∂f/∂x)ᵀμ].
struct SecondOrderBlocks {
  Matrix zz;  // n × n
  Matrix zx;  // n × d
  Matrix xz;  // d × n
  Matrix xx;  // d × d
};

class EquilibriumLayer {
 public:
  EquilibriumLayer() = default;
  EquilibriumLayer(Activation kind, LayerParams params) : kind_(kind), params_(std::move(params)) {
    require(params_.W.rows() == params_.W.cols(), ErrorCode::kDimensionMismatch, "W must be square");
    require(params_.U.rows() == params_.W.rows(), ErrorCode::kDimensionMismatch, "U rows must equal n");
    require(params_.b.size() == params_.W.rows(), ErrorCode::kDimensionMismatch, "b length must equal n");
  }

  Activation kind() const noexcept { return kind_; }
  const LayerParams& params() const noexcept { return params_; }
  LayerParams& params() noexcept { return params_; }
  std::size_t state_dim() const noexcept { return params_.W.rows(); }
  std::size_t input_dim() const noexcept { return params_.U.cols(); }

  /// a = Wz + Ux + b
  Vector preactivation(std::span<const double> z, std::span<const double> x) const {
    check_dims(z, x);
    Vector a = matvec(params_.W, z);
    const Vector ux = matvec(params_.U, x);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += ux[i] + params_.b[i];
    return a;
  }

  Vector eval(std::span<const double> z, std::span<const double> x, EvalCounters* counters = nullptr) const {
    Vector a = preactivation(z, x);
    if (kind_ == Activation::kTanh)
      for (double& v : a) v = std::tanh(v);
    if (counters) ++counters->f_evals;
    return a;
  }

  /// σ'(a) elementwise.
  Vector slope(std::span<const double> a) const {
    Vector d(a.size(), 1.0);
    if (kind_ == Activation::kTanh) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = std::tanh(a[i]);
        d[i] = 1.0 - t * t;
      }
    }
    return d;
  }

  /// σ''(a) elementwise; zero for the linear layer.
  Vector curvature(std::span<const double> a) const {
    Vector d(a.size(), 0.0);
    if (kind_ == Activation::kTanh) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = std::tanh(a[i]);
        d[i] = -2.0 * t * (1.0 - t * t);
      }
    }
    return d;
  }

  /// (∂f/∂z)ᵀ w
  Vector vjp_z(std::span<const double> z, std::span<const double> x, std::span<const double> w,
               EvalCounters* counters = nullptr) const {
    const Vector dw = scaled_cotangent(z, x, w);
    if (counters) ++counters->vjp_evals;
    return matvec_t(params_.W, dw);
  }

  /// (∂f/∂x)ᵀ w
  Vector vjp_x(std::span<const double> z, std::span<const double> x, std::span<const double> w,
               EvalCounters* counters = nullptr) const {
    const Vector dw = scaled_cotangent(z, x, w);
    if (counters) ++counters->vjp_evals;
    return matvec_t(params_.U, dw);
  }

  /// Gradient of wᵀf(z, x) over (W, U, b).
  LayerGradient vjp_theta(std::span<const double> z, std::span<const double> x, std::span<const double> w) const {
    const Vector dw = scaled_cotangent(z, x, w);
    LayerGradient g{Matrix(state_dim(), state_dim()), Matrix(state_dim(), input_dim()), dw};
    add_outer(g.W, 1.0, dw, z);
    add_outer(g.U, 1.0, dw, x);
    return g;
  }

  /// (∂f/∂z) v
  Vector jvp_z(std::span<const double> z, std::span<const double> x, std::span<const double> v) const {
    check_same_size(v.size(), state_dim(), "jvp_z");
    const Vector d = slope(preactivation(z, x));
    Vector out = matvec(params_.W, v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= d[i];
    return out;
  }

  Matrix jacobian_z(std::span<const double> z, std::span<const double> x) const {
    return row_scaled(params_.W, slope(preactivation(z, x)));
  }

  Matrix jacobian_x(std::span<const double> z, std::span<const double> x) const {
    return row_scaled(params_.U, slope(preactivation(z, x)));
  }

  SecondOrderBlocks second_vjp(std::span<const double> z, std::span<const double> x, std::span<const double> mu) const {
    check_same_size(mu.size(), state_dim(), "second_vjp");
    const Vector weight = hadamard(mu, curvature(preactivation(z, x)));
    const auto& W = params_.W;
    const auto& U = params_.U;
    return {weighted_gram(W, weight, W), weighted_gram(W, weight, U), weighted_gram(U, weight, W),
            weighted_gram(U, weight, U)};
  }

 private:
  void check_dims(std::span<const double> z, std::span<const double> x) const {
    check_same_size(z.size(), state_dim(), "layer state");
    check_same_size(x.size(), input_dim(), "layer input");
  }

  /// D w with D = diag(σ'(a)).
  Vector scaled_cotangent(std::span<const double> z, std::span<const double> x, std::span<const double> w) const {
    check_same_size(w.size(), state_dim(), "layer cotangent");
    const Vector d = slope(preactivation(z, x));
    return hadamard(d, w);
  }

  static Matrix row_scaled(const Matrix& m, std::span<const double> d) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (double& v : out.row(i)) v *= d[i];
    return out;
  }

  Activation kind_ = Activation::kTanh;
  LayerParams params_;
};

/// W' = (γ / ‖W‖₂) W; U and b are untouched.
inline LayerParams contraction_rescale(LayerParams params, double gamma) {
  require(gamma > 0.0 && gamma < 1.0, ErrorCode::kInvalidArgument, "contraction target must lie in (0,1)");
  require(frobenius_norm(params.W) > 0.0, ErrorCode::kZeroWeight, "cannot rescale a zero state weight");
  params.W *= gamma / spectral_norm(params.W);
  return params;
}

/// Rescales only when ‖W‖₂ exceeds γ; used after every training update.
inline bool enforce_contraction(LayerParams& params, double gamma) {
  if (frobenius_norm(params.W) == 0.0) return false;
  const double s = spectral_norm(params.W);
  if (s <= gamma) return false;
  params.W *= gamma / s;
  return true;
}

struct OutputHead {
  Matrix C;  // p × n
  Vector d;  // p

  std::size_t output_dim() const noexcept { return C.rows(); }

  Vector apply(std::span<const double> z) const {
    Vector o = matvec(C, z);
    check_same_size(o.size(), d.size(), "head bias");
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += d[i];
    return o;
  }
};

// ---------------------------------------------------------------------------
// Measurement operators. All supported operators are diagonal 0/1 masks over
// the output, so they are stored by their diagonal.
// ---------------------------------------------------------------------------

class MeasurementOperator {
 public:
  enum class Kind { kIdentity, kMask, kNoisyIdentity };

  static MeasurementOperator identity(std::size_t dim) { return MeasurementOperator(Kind::kIdentity, Vector(dim, 1.0)); }

  /// Zeroes a size × size window at (row, col) of a height × width image.
  static MeasurementOperator mask(std::size_t height, std::size_t width, std::size_t row, std::size_t col,
                                  std::size_t size) {
    require(row + size <= height && col + size <= width, ErrorCode::kInvalidArgument, "mask window outside image");
    Vector w(height * width, 1.0);
    for (std::size_t r = row; r < row + size; ++r)
      for (std::size_t c = col; c < col + size; ++c) w[r * width + c] = 0.0;
    MeasurementOperator op(Kind::kMask, std::move(w));
    op.height_ = height;
    op.width_ = width;
    op.row_ = row;
    op.col_ = col;
    op.size_ = size;
    return op;
  }

  /// Identity operator whose noise only enters data generation via corrupt().
  static MeasurementOperator noisy_identity(std::size_t dim, double sigma) {
    MeasurementOperator op(Kind::kNoisyIdentity, Vector(dim, 1.0));
    op.sigma_ = sigma;
    return op;
  }

  Kind kind() const noexcept { return kind_; }
  double sigma() const noexcept { return sigma_; }
  std::size_t dim() const noexcept { return weights_.size(); }
  const Vector& weights() const noexcept { return weights_; }

  Vector apply(std::span<const double> y) const { return hadamard(weights_, y); }

  Matrix as_matrix() const { return Matrix::diagonal(weights_); }

  /// Observed measurement of a clean signal: masked pixels zeroed, or Gaussian
  /// noise of the configured σ added.
  Vector corrupt(std::span<const double> y, SeededRng& rng) const {
    check_same_size(y.size(), dim(), "corrupt");
    Vector out = apply(y);
    if (kind_ == Kind::kNoisyIdentity)
      for (double& v : out) v += sigma_ * rng.normal();
    return out;
  }

  /// Indices hidden by the operator (empty for identity kinds).
  std::vector<std::size_t> hidden_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < weights_.size(); ++i)
      if (weights_[i] == 0.0) idx.push_back(i);
    return idx;
  }

 private:
  MeasurementOperator(Kind kind, Vector weights) : kind_(kind), weights_(std::move(weights)) {}

  Kind kind_;
  Vector weights_;
  double sigma_ = 0.0;
  std::size_t height_ = 0, width_ = 0, row_ = 0, col_ = 0, size_ = 0;
};

// ---------------------------------------------------------------------------
// Inner losses on the head output o = h(z).
// ---------------------------------------------------------------------------

enum class LossKind { kSquaredError, kNegSquaredError, kCrossEntropy, kNegCrossEntropy };

inline bool is_negated(LossKind k) { return k == LossKind::kNegSquaredError || k == LossKind::kNegCrossEntropy; }

inline LossKind base_kind(LossKind k) {
  switch (k) {
    case LossKind::kNegSquaredError: return LossKind::kSquaredError;
    case LossKind::kNegCrossEntropy: return LossKind::kCrossEntropy;
    default: return k;
  }
}

inline LossKind negate(LossKind k) {
  switch (k) {
    case LossKind::kSquaredError: return LossKind::kNegSquaredError;
    case LossKind::kNegSquaredError: return LossKind::kSquaredError;
    case LossKind::kCrossEntropy: return LossKind::kNegCrossEntropy;
    case LossKind::kNegCrossEntropy: return LossKind::kCrossEntropy;
  }
  return k;
}

inline Vector one_hot(std::size_t label, std::size_t classes) {
  require(label < classes, ErrorCode::kInvalidArgument, "label out of range");
  Vector v(classes, 0.0);
  v[label] = 1.0;
  return v;
}

struct InnerLoss {
  LossKind kind = LossKind::kSquaredError;
  Vector target;  // y; a probability vector for the cross-entropy kinds
  std::optional<MeasurementOperator> op;

  double sign() const { return is_negated(kind) ? -1.0 : 1.0; }
};

namespace detail {

inline Vector softmax(std::span<const double> o, double& log_sum_exp) {
  double m = o.empty() ? 0.0 : o[0];
  for (double v : o) m = std::max(m, v);
  Vector s(o.size());
  double total = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    s[i] = std::exp(o[i] - m);
    total += s[i];
  }
  for (double& v : s) v /= total;
  log_sum_exp = m + std::log(total);
  return s;
}

inline void check_loss(const InnerLoss& loss, std::size_t p) {
  check_same_size(loss.target.size(), p, "loss target");
  if (loss.op) {
    require(base_kind(loss.kind) == LossKind::kSquaredError, ErrorCode::kInvalidArgument,
            "measurement operators apply to squared-error losses only");
    check_same_size(loss.op->dim(), p, "measurement operator");
  }
}

}  // namespace detail

/// ℓ as a function of the head output.
inline double loss_value_output(const InnerLoss& loss, std::span<const double> o) {
  detail::check_loss(loss, o.size());
  double v = 0.0;
  if (base_kind(loss.kind) == LossKind::kSquaredError) {
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double m = loss.op ? loss.op->weights()[i] : 1.0;
      const double r = m * (loss.target[i] - o[i]);
      v += r * r;
    }
  } else {
    double lse = 0.0;
    detail::softmax(o, lse);
    double mass = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      mass += loss.target[i];
      v -= loss.target[i] * o[i];
    }
    v += mass * lse;
  }
  return loss.sign() * v;
}

inline Vector loss_grad_output(const InnerLoss& loss, std::span<const double> o) {
  detail::check_loss(loss, o.size());
  Vector g(o.size());
  if (base_kind(loss.kind) == LossKind::kSquaredError) {
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double m = loss.op ? loss.op->weights()[i] : 1.0;
      g[i] = -2.0 * m * m * (loss.target[i] - o[i]);
    }
  } else {
    double lse = 0.0;
    const Vector s = detail::softmax(o, lse);
    double mass = 0.0;
    for (double t : loss.target) mass += t;
    for (std::size_t i = 0; i < o.size(); ++i) g[i] = mass * s[i] - loss.target[i];
  }
  if (is_negated(loss.kind))
    for (double& v : g) v = -v;
  return g;
}

inline Matrix loss_hess_output(const InnerLoss& loss, std::span<const double> o) {
  detail::check_loss(loss, o.size());
  const std::size_t p = o.size();
  Matrix h(p, p);
  if (base_kind(loss.kind) == LossKind::kSquaredError) {
    for (std::size_t i = 0; i < p; ++i) {
      const double m = loss.op ? loss.op->weights()[i] : 1.0;
      h(i, i) = 2.0 * m * m;
    }
  } else {
    double lse = 0.0;
    const Vector s = detail::softmax(o, lse);
    double mass = 0.0;
    for (double t : loss.target) mass += t;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) h(i, j) = -mass * s[i] * s[j];
      h(i, i) += mass * s[i];
    }
  }
  if (is_negated(loss.kind)) h *= -1.0;
  return h;
}

inline double loss_eval(const InnerLoss& loss, const OutputHead& head, std::span<const double> z) {
  return loss_value_output(loss, head.apply(z));
}

/// (∂ℓ/∂z)ᵀ = Cᵀ ∇ₒℓ
inline Vector loss_grad_z(const InnerLoss& loss, const OutputHead& head, std::span<const double> z) {
  return matvec_t(head.C, loss_grad_output(loss, head.apply(z)));
}

/// Cᵀ ∇²ₒℓ C; exact because h is affine in z.
inline Matrix loss_hess_z(const InnerLoss& loss, const OutputHead& head, std::span<const double> z) {
  const Matrix ho = loss_hess_output(loss, head.apply(z));
  return matmul(transpose(head.C), matmul(ho, head.C));
}

// ---------------------------------------------------------------------------
// Model parameters θ = (W, U, b, C, d) and gradients of the same shape.
// ---------------------------------------------------------------------------

struct ThetaGradient {
  Matrix W, U;
  Vector b;
  Matrix C;
  Vector d;

  void add_layer(const LayerGradient& g, double scale = 1.0) {
    axpy(scale, g.W.data(), W.data());
    axpy(scale, g.U.data(), U.data());
    axpy(scale, g.b, b);
  }

  ThetaGradient& operator+=(const ThetaGradient& o) {
    axpy(1.0, o.W.data(), W.data());
    axpy(1.0, o.U.data(), U.data());
    axpy(1.0, o.b, b);
    axpy(1.0, o.C.data(), C.data());
    axpy(1.0, o.d, d);
    return *this;
  }

  ThetaGradient& operator*=(double s) {
    W *= s;
    U *= s;
    C *= s;
    for (double& v : b) v *= s;
    for (double& v : d) v *= s;
    return *this;
  }

  Vector flatten() const {
    return concat({W.data(), U.data(), std::span<const double>(b), C.data(), std::span<const double>(d)});
  }
};

struct Model {
  EquilibriumLayer layer;
  OutputHead head;

  std::size_t state_dim() const { return layer.state_dim(); }
  std::size_t input_dim() const { return layer.input_dim(); }
  std::size_t output_dim() const { return head.output_dim(); }

  std::size_t parameter_count() const {
    const auto& p = layer.params();
    return p.W.size() + p.U.size() + p.b.size() + head.C.size() + head.d.size();
  }

  ThetaGradient zero_gradient() const {
    const auto& p = layer.params();
    return {Matrix(p.W.rows(), p.W.cols()), Matrix(p.U.rows(), p.U.cols()), Vector(p.b.size(), 0.0),
            Matrix(head.C.rows(), head.C.cols()), Vector(head.d.size(), 0.0)};
  }

  /// Flattened in the order W, U, b, C, d; matches ThetaGradient::flatten().
  Vector flatten() const {
    const auto& p = layer.params();
    return concat({p.W.data(), p.U.data(), std::span<const double>(p.b), head.C.data(), std::span<const double>(head.d)});
  }

  void assign(std::span<const double> theta) {
    check_same_size(theta.size(), parameter_count(), "Model::assign");
    auto& p = layer.params();
    auto it = theta.begin();
    auto fill = [&it](std::span<double> dst) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
      it += static_cast<std::ptrdiff_t>(dst.size());
    };
    fill(p.W.data());
    fill(p.U.data());
    fill(p.b);
    fill(head.C.data());
    fill(head.d);
  }

  static Model with_params(Model m, std::span<const double> theta) {
    m.assign(theta);
    return m;
  }

  /// Gaussian initialization with W rescaled to spectral norm γ.
  static Model random(Activation kind, std::size_t n, std::size_t d, std::size_t p, double gamma, SeededRng& rng,
                      double input_scale = 1.0, double bias_scale = 0.1) {
    LayerParams lp{gaussian_matrix(rng, n, n, 1.0 / std::sqrt(static_cast<double>(n))),
                   gaussian_matrix(rng, n, d, input_scale / std::sqrt(static_cast<double>(std::max<std::size_t>(d, 1)))),
                   rng.normal_vector(n)};
    for (double& v : lp.b) v *= bias_scale;
    lp = contraction_rescale(std::move(lp), gamma);
    OutputHead head{gaussian_matrix(rng, p, n, 1.0 / std::sqrt(static_cast<double>(n))), Vector(p, 0.0)};
    return {EquilibriumLayer(kind, std::move(lp)), std::move(head)};
  }
};

/// Direct dependence of ℓ(h(z), y) on the head parameters at fixed z.
inline void add_head_gradient(const InnerLoss& loss, const OutputHead& head, std::span<const double> z,
                              ThetaGradient& g, double scale = 1.0) {
  const Vector go = loss_grad_output(loss, head.apply(z));
  add_outer(g.C, scale, go, z);
  axpy(scale, go, g.d);
}

}  // namespace jiio
