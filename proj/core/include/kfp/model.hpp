#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "kfp/linalg.hpp"

namespace kfp {

/// Phase-space point z = (x, v); both blocks have length d.
struct PhasePoint {
  Vec x;
  Vec v;

  PhasePoint() = default;
  PhasePoint(Vec x_, Vec v_);
  /// d = 1 convenience constructor.
  PhasePoint(double x_, double v_);

  int dim() const { return static_cast<int>(x.size()); }
  /// (x, v) stacked into one vector of length 2d.
  Vec stacked() const;
  static PhasePoint from_stacked(const Vec& z);
};

/// Standard Jacobians at one point: dxb(i,k) = ∂b_i/∂x_k, dvb(i,k) = ∂b_i/∂v_k.
struct DriftJacobian {
  Mat dxb;
  Mat dvb;

  /// Jacobian of the full vector field (v, b): [[0, Id], [dxb, dvb]].
  Mat full() const;
  /// The block matrix J = [[0, dxbᵀ], [Id, dvbᵀ]] that satisfies ∇(Lg) = L∇g + J∇g.
  /// Equal to full()ᵀ.
  Mat commutator_block() const;
};

/// Separable potential U(x) = Σ_i [ k x_i²/2 + a cos(ω x_i) ].
struct Potential {
  enum class Family { quadratic, tilted_cosine };
  Family family = Family::quadratic;
  double stiffness = 1.0;  // k
  double amplitude = 0.0;  // a (tilted_cosine only)
  double freq = 1.0;       // ω (tilted_cosine only)
};

/// Closed-form perturbation F of the damped harmonic drift.
///   trig: F_i(x, v) = δ sin(a x_i + c v_i), (a, c) = (freq_x, freq_v)
///   bump: F_i(x, v) = δ (1 - |z|²/r²)² for |z| < r, zero outside (C¹, compact support)
struct Perturbation {
  enum class Family { none, trig, bump };
  Family family = Family::none;
  double delta = 0.0;
  double freq_x = 1.0;
  double freq_v = 1.0;
  double radius = 1.0;
};

/// b = -∇U(x) - γ v.
struct Equilibrium {
  Potential potential;
  double gamma = 1.0;
};

/// b = -x - γ v + F(x, v).
struct PerturbedHarmonic {
  double gamma = 1.0;
  Perturbation perturbation;
};

/// User-supplied drift. The Jacobian is optional; operations needing it throw
/// UnsupportedOperation when it is absent.
struct CustomDrift {
  std::function<Vec(const PhasePoint&)> drift;
  std::function<DriftJacobian(const PhasePoint&)> jacobian;
};

using Drift = std::variant<Equilibrium, PerturbedHarmonic, CustomDrift>;

/// Kinetic Langevin model dX = V dt, dV = b(X, V) dt + √2 σ dW in dimension d.
/// Generator convention: L = v·∇_x + b·∇_v + σ²Δ_v.
struct ModelSpec {
  int d = 1;
  double sigma = 1.0;
  Drift drift = PerturbedHarmonic{};

  static ModelSpec equilibrium(double gamma, double sigma = 1.0, Potential potential = {},
                               int d = 1);
  static ModelSpec perturbed_harmonic(double gamma, Perturbation perturbation = {},
                                      double sigma = 1.0, int d = 1);

  /// Throws ContractViolation on σ ≤ 0, γ ≤ 0, d < 1, or malformed families.
  void validate() const;

  bool is_builtin() const { return !std::holds_alternative<CustomDrift>(drift); }
  bool is_equilibrium() const { return std::holds_alternative<Equilibrium>(drift); }
  /// Friction γ of built-in families.
  double gamma() const;
  std::string describe() const;
};

Vec eval_drift(const ModelSpec& model, const PhasePoint& z);
DriftJacobian eval_jacobian(const ModelSpec& model, const PhasePoint& z);

/// Sup-norm facts about F used by the perturbed certificate.
///   grad_F_sup:  sup_z |∇F(z)| (spectral norm of the d × 2d Jacobian)
///   kappa_prime: bound on |∇F(z)| for |z| ≥ M_rad
///   F_sup:       sup_z |F(z)|
struct PerturbationBounds {
  double grad_F_sup = 0.0;
  double kappa_prime = 0.0;
  double M_rad = 0.0;
  double F_sup = 0.0;
};

/// Bounds on the remainder F = b - b_lin relative to linear_part(model). For
/// tilted-cosine potentials the remainder is a ω sin(ω x_i).
PerturbationBounds perturbation_bounds(const ModelSpec& model);

struct DriftBounds {
  double grad_b_sup = 0.0;  // sup |[∇_x b, ∇_v b]|
  double dxb_sup = 0.0;     // sup |∇_x b|
  double dvb_sup = 0.0;     // sup |∇_v b|
  double one_sided_K = 0.0;
  double K_sampled = 0.0;  // max of λ_max(sym J) over the sample set, before the margin
  double K_margin = 0.0;
  std::string K_method;  // "block-grid" or "weyl"
};

/// Closed-form gradient bounds and the one-sided Lipschitz constant of the
/// full field (v, b). σ is constant, so the Hilbert-Schmidt term vanishes.
DriftBounds drift_bounds(const ModelSpec& model);

/// Drift matrix M of the linear part: (v, b_lin) = M z.
Mat linear_part(const ModelSpec& model);

/// b(z) - b_lin(z).
Vec nonlinear_remainder(const ModelSpec& model, const PhasePoint& z);

/// Covariance Σ of the Gaussian invariant law of dz = M z dt + √2σ dW_v,
/// if M is Hurwitz.
std::optional<Mat> linear_stationary_covariance(const ModelSpec& model);

/// Unnormalized Gibbs log-density -γ/σ² (U(x) + |v|²/2) of an Equilibrium model.
double gibbs_log_density(const ModelSpec& model, const PhasePoint& z);

}  // namespace kfp
