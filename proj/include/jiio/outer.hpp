#pragma once

// Outer-loop gradients with respect to θ = (W, U, b, C, d) at a solved
// augmented state: the μ-reuse shortcut, the general backward through the KKT
// linear system, the Jacobian regularizer and a finite-difference checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/linalg.hpp"
#include "jiio/core/rng.hpp"
#include "jiio/jiio.hpp"
#include "jiio/layer.hpp"

namespace jiio {

struct OuterLoss {
  enum class Kind { kSameAsInner, kNegOfInner, kCustom };

  Kind kind = Kind::kSameAsInner;
  /// Used for kCustom; evaluated on the problem's own head.
  InnerLoss custom;

  static OuterLoss same_as_inner() { return {}; }
  static OuterLoss neg_of_inner() { return {Kind::kNegOfInner, {}}; }
  static OuterLoss custom_loss(InnerLoss loss) { return {Kind::kCustom, std::move(loss)}; }

  InnerLoss resolve(const InnerLoss& inner) const {
    switch (kind) {
      case Kind::kSameAsInner: return inner;
      case Kind::kNegOfInner: {
        InnerLoss l = inner;
        l.kind = negate(l.kind);
        return l;
      }
      case Kind::kCustom: return custom;
    }
    return inner;
  }
};

inline ThetaGradient zero_gradient(const InputOptProblem& p) { return Model{p.layer, p.head}.zero_gradient(); }

/// ∂ℓ/∂θ at a KKT point re-using the converged adjoint:
///   layer part μ*ᵀ ∂f(z*, x*)/∂θ,  head part ∂ℓ(h(z*), y)/∂(C, d).
/// The negated variant flips the sign of the whole result. Accuracy tracks the
/// KKT residual of `v`; nothing here checks it.
inline ThetaGradient grad_theta_reuse(const InputOptProblem& p, std::span<const double> v,
                                      OuterLoss::Kind kind = OuterLoss::Kind::kSameAsInner) {
  require(kind != OuterLoss::Kind::kCustom, ErrorCode::kInvalidArgument, "the reuse shortcut needs ±inner loss");
  const auto ref = detail::make_ref(p);
  check_same_size(v.size(), ref.packed_dim(), "grad_theta_reuse state");
  const auto z = ref.z(v, 0);
  const auto mu = ref.mu(v, 0);
  const Vector in = ref.total_input(0, ref.x(v));
  ThetaGradient g = zero_gradient(p);
  g.add_layer(p.layer.vjp_theta(z, in, mu));
  add_head_gradient(p.loss, p.head, z, g);
  if (kind == OuterLoss::Kind::kNegOfInner) g *= -1.0;
  return g;
}

inline constexpr std::size_t kMaxDenseKkt = 600;

/// ∂K/∂v for K = (f − z, ∇ℓ + J_zᵀμ − μ, J_xᵀμ), rows (r_z, r_μ, r_x) and
/// columns (z, μ, x). The constraint set is ignored: this is the Jacobian of
/// the unconstrained KKT map.
inline Matrix assemble_kkt_jacobian(const InputOptProblem& p, std::span<const double> v) {
  const auto ref = detail::make_ref(p);
  const std::size_t n = ref.n();
  const std::size_t d = ref.var_dim;
  const std::size_t N = 2 * n + d;
  require(N <= kMaxDenseKkt, ErrorCode::kDimensionTooLarge,
          "dense KKT Jacobian of size " + std::to_string(N) + " exceeds " + std::to_string(kMaxDenseKkt));
  check_same_size(v.size(), N, "assemble_kkt_jacobian state");
  const auto z = ref.z(v, 0);
  const auto mu = ref.mu(v, 0);
  const Vector in = ref.total_input(0, ref.x(v));
  const std::size_t off = ref.var_offset;

  const Matrix jz = p.layer.jacobian_z(z, in);
  const Matrix jx = p.layer.jacobian_x(z, in);
  const SecondOrderBlocks so = p.layer.second_vjp(z, in, mu);
  const Matrix hess = loss_hess_z(p.loss, p.head, z);

  Matrix J(N, N);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      J(i, j) = jz(i, j) - (i == j ? 1.0 : 0.0);                  // ∂r_z/∂z
      J(n + i, j) = hess(i, j) + so.zz(i, j);                     // ∂r_μ/∂z
      J(n + i, n + j) = jz(j, i) - (i == j ? 1.0 : 0.0);          // ∂r_μ/∂μ
    }
    for (std::size_t j = 0; j < d; ++j) {
      J(i, 2 * n + j) = jx(i, off + j);                           // ∂r_z/∂x
      J(n + i, 2 * n + j) = so.zx(i, off + j);                    // ∂r_μ/∂x
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      J(2 * n + i, j) = so.xz(off + i, j);                        // ∂r_x/∂z
      J(2 * n + i, n + j) = jx(j, off + i);                       // ∂r_x/∂μ
    }
    for (std::size_t j = 0; j < d; ++j) J(2 * n + i, 2 * n + j) = so.xx(off + i, off + j);  // ∂r_x/∂x
  }
  return J;
}

namespace detail {

/// uᵀ ∂K/∂θ for u = (u_z, u_μ, u_x), accumulated into g.
inline void contract_kkt_theta(const InputOptProblem& p, const SystemRef& ref, std::span<const double> v,
                               std::span<const double> u, ThetaGradient& g) {
  const std::size_t n = ref.n();
  const std::size_t d = ref.var_dim;
  const auto z = ref.z(v, 0);
  const auto mu = ref.mu(v, 0);
  const Vector in = ref.total_input(0, ref.x(v));
  const auto uz = u.subspan(0, n);
  const auto um = u.subspan(n, n);
  Vector ux_full(p.layer.input_dim(), 0.0);
  for (std::size_t i = 0; i < d; ++i) ux_full[ref.var_offset + i] = u[2 * n + i];

  const auto& W = p.layer.params().W;
  const auto& U = p.layer.params().U;
  const Vector a = p.layer.preactivation(z, in);
  const Vector slope = p.layer.slope(a);
  const Vector curv = p.layer.curvature(a);
  const Vector d_mu = hadamard(slope, mu);

  // r_z = f − z
  g.add_layer(p.layer.vjp_theta(z, in, uz));

  // u_μᵀ Wᵀ D μ  and  u_xᵀ Pᵀ Uᵀ D μ
  add_outer(g.W, 1.0, d_mu, um);
  add_outer(g.U, 1.0, d_mu, ux_full);
  Vector q = hadamard(add(matvec(W, um), matvec(U, ux_full)), hadamard(mu, curv));
  add_outer(g.W, 1.0, q, z);
  add_outer(g.U, 1.0, q, in);
  axpy(1.0, q, g.b);

  // u_μᵀ Cᵀ ∇ₒℓ(Cz + d)
  const Vector o = p.head.apply(z);
  const Vector go = loss_grad_output(p.loss, o);
  const Matrix ho = loss_hess_output(p.loss, o);
  const Vector hcu = matvec(ho, matvec(p.head.C, um));
  add_outer(g.C, 1.0, go, um);
  add_outer(g.C, 1.0, hcu, z);
  axpy(1.0, hcu, g.d);
}

}  // namespace detail

/// General backward: solves (∂K/∂v)ᵀ u = −(∂ℓ_outer/∂v)ᵀ densely, then returns
/// ∂ℓ_outer/∂θ|direct + uᵀ ∂K/∂θ. The outer loss acts on z* through the
/// problem's head.
inline ThetaGradient grad_theta_general(const InputOptProblem& p, std::span<const double> v, const OuterLoss& outer) {
  const auto ref = detail::make_ref(p);
  const std::size_t n = ref.n();
  const InnerLoss outer_loss = outer.resolve(p.loss);
  const auto z = ref.z(v, 0);

  Vector rhs(ref.packed_dim(), 0.0);
  const Vector gz = loss_grad_z(outer_loss, p.head, z);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = -gz[i];

  const LuFactorization lu(assemble_kkt_jacobian(p, v));
  const Vector u = lu.solve_transposed(rhs);

  ThetaGradient g = zero_gradient(p);
  add_head_gradient(outer_loss, p.head, z, g);
  detail::contract_kkt_theta(p, ref, v, u, g);
  return g;
}

struct HutchinsonResult {
  double estimate = 0.0;
  LayerGradient grad;  // the head receives no gradient from this term
};

/// (1/S) Σ ‖J_z εᵢ‖² for the supplied probes, with its analytic gradient over
/// (W, U, b) at fixed (z, x).
inline HutchinsonResult hutchinson_reg(const EquilibriumLayer& layer, std::span<const double> z,
                                       std::span<const double> x, std::span<const Vector> probes) {
  require(!probes.empty(), ErrorCode::kInvalidArgument, "hutchinson_reg needs at least one probe");
  const std::size_t n = layer.state_dim();
  const auto& W = layer.params().W;
  const Vector a = layer.preactivation(z, x);
  const Vector slope = layer.slope(a);
  const Vector curv = layer.curvature(a);

  HutchinsonResult out{0.0, {Matrix(n, n), Matrix(n, layer.input_dim()), Vector(n, 0.0)}};
  const double inv = 1.0 / static_cast<double>(probes.size());
  for (const Vector& eps : probes) {
    const Vector q = matvec(W, eps);
    Vector explicit_w(n), through_a(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double jv = slope[i] * q[i];
      out.estimate += inv * jv * jv;
      explicit_w[i] = 2.0 * slope[i] * slope[i] * q[i];
      through_a[i] = 2.0 * slope[i] * curv[i] * q[i] * q[i];
    }
    add_outer(out.grad.W, inv, explicit_w, eps);
    add_outer(out.grad.W, inv, through_a, z);
    add_outer(out.grad.U, inv, through_a, x);
    axpy(inv, through_a, out.grad.b);
  }
  return out;
}

/// Draws S standard-normal probes from `rng`.
inline HutchinsonResult hutchinson_reg(const EquilibriumLayer& layer, std::span<const double> z,
                                       std::span<const double> x, SeededRng& rng, int samples = 2) {
  require(samples >= 1, ErrorCode::kInvalidArgument, "hutchinson_reg needs S >= 1");
  std::vector<Vector> probes;
  for (int s = 0; s < samples; ++s) probes.push_back(rng.normal_vector(layer.state_dim()));
  return hutchinson_reg(layer, z, x, probes);
}

/// Central-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(std::span<const double>)>& fn, std::span<const double> theta,
                          double h) {
  require(h > 0.0, ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
  Vector t(theta.begin(), theta.end());
  Vector g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double keep = t[i];
    t[i] = keep + h;
    const double fp = fn(t);
    t[i] = keep - h;
    const double fm = fn(t);
    t[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Largest per-coordinate relative error |a − fd| / max(|a|, |fd|, 1e-8).
inline double relative_error(std::span<const double> analytic, std::span<const double> reference) {
  check_same_size(analytic.size(), reference.size(), "relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(reference[i]), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - reference[i]) / denom);
  }
  return worst;
}

inline double fd_gradcheck(const std::function<double(std::span<const double>)>& fn, std::span<const double> theta,
                           std::span<const double> analytic, double h) {
  return relative_error(analytic, fd_gradient(fn, theta, h));
}

}  // namespace jiio
