#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kfp/linalg.hpp"
#include "kfp/model.hpp"
#include "kfp/pde.hpp"

namespace kfp {

/// α(t) = 1 - e^{-t/3}.
double alpha(double t);
double alpha_prime(double t);
/// ∫₀ᵗ α(s)² ds in closed form (series near 0 to avoid cancellation).
double alpha_sq_integral(double t);

/// D_t² = ε [[α³ Id, -α² Id], [-α² Id, α Id]] (2d × 2d).
Mat d_sq(double t, double eps_norm, int d = 1);
/// ∂_t D_t² = ε α' [[3α² Id, -2α Id], [-2α Id, Id]].
Mat d_sq_dt(double t, double eps_norm, int d = 1);

/// N_t = ‖g̃‖² + ε α ‖(∇_v - α ∇_x) g̃‖² in L²(μ), g̃ = g - μ(g).
double modified_norm(const PhaseGrid& grid, const Vec& g, const Vec& mu, double t, double eps_norm);
/// Same quantity as ‖g̃‖² + ∫ ∇g̃ · D_t² ∇g̃ dμ.
double modified_norm_quadratic(const PhaseGrid& grid, const Vec& g, const Vec& mu, double t,
                               double eps_norm);

struct EpsSelection {
  double B = 0.0;        // ‖∇_x b‖∞ + ‖∇_v b‖∞ + 1
  double M_coeff = 0.0;  // 2B + 2B²
  double eps_norm = 0.0; // 2σ² / (M_coeff + 1/2)
};

/// Choice of ε for the modified norm. In the quadratic form of R_t the cross term
/// 2εαB|x||v| ≤ (εα²/2)|x|² + 2εB²|v|² after completing the square, and the
/// velocity-velocity block contributes at most 2εB|v|². With M = 2B + 2B² the |v|²
/// coefficient is ≤ εM - 2σ² ≤ -ε/2 ≤ -εα²/2, which is what ε = 2σ²/(M + 1/2) gives.
EpsSelection select_eps(const ModelSpec& model);
EpsSelection select_eps_from_bound(double B, double sigma);

/// R_t = -2σ² E_v + ∂_t D_t² + 2 D_t² J with J = [[0, ∇_x bᵀ], [Id, ∇_v bᵀ]], so that
/// ∂_t N_t ≤ ∫ ∇g · R_t ∇g dμ. E_v projects on the velocity block. Not symmetrized.
Mat rt_matrix(double t, double eps_norm, const DriftJacobian& jac, double sigma);

struct RtBoundReport {
  long long samples = 0;
  long long violations = 0;
  /// max of w·sym(R_t)w / |w|² + εα²/2 over the samples.
  double worst = 0.0;
  double worst_t = 0.0;
};

/// Samples (t, w, z) with t uniform in [0, t_max], w uniform on the sphere and
/// z ~ N(0, 9 Id); checks w·sym(R_t)w + (εα²/2)|w|² ≤ tol·ε.
RtBoundReport sample_rt_bound(const ModelSpec& model, double eps_norm, long long n_samples,
                              std::uint64_t seed, double t_max = 20.0, double tol = 1e-12);

/// Time series along an observable evolution g_t = P_t g_0 (g_0 mean-subtracted).
struct ModifiedNormTrace {
  std::vector<double> t;
  std::vector<double> N;
  std::vector<double> norm_sq;
  std::vector<double> gradx_sq;
  std::vector<double> gradv_sq;
  std::vector<double> rate_certified;
  /// |Δ‖g‖²/Δt + 2σ²‖∇_v g_mid‖²| per step (gradient at the step midpoint); one
  /// entry fewer than t.
  std::vector<double> dissipation_residual;
  double eps_norm = 0.0;
  double C = 0.0;
  double sigma = 1.0;
  double dt = 0.0;
  double h = 0.0;  // max(hx, hv)
  /// Largest |μ(g_{n+1}) - μ(g_n)|.
  double mean_drift = 0.0;
};

/// r(t) = ε α(t)² / (2C + 4ε).
double certified_rate(double t, double eps_norm, double C);

ModifiedNormTrace build_trace(const DiscreteGenerator& gen, const Vec& mu, const Vec& g0, double T,
                              double dt, double eps_norm, double C);

struct DecayReport {
  long long steps_checked = 0;
  long long violations = 0;
  long long first_violation = -1;  // step index n (checks N_{n+1} vs N_n)
  double worst_margin = 0.0;       // max of lhs - rhs, in units of N_0
  long long envelope_violations = 0;
  long long first_envelope_violation = -1;
  bool passes() const { return violations == 0 && envelope_violations == 0; }
};

/// (N_{n+1} - N_n)/dt ≤ -r(t_n) N_n + slack N_0 (dt + h) at every step and
/// N_t ≤ exp(-∫₀ᵗ r) N_0 (1 + slack).
DecayReport verify_decay(const ModifiedNormTrace& trace, double C, double eps_norm, double slack);

struct AlphaIntegralReport {
  long long points = 0;
  long long violations = 0;
  /// min over the grid of ∫α² / (min(t, t³)/40), t > 0.
  double min_ratio = 0.0;
  bool passes() const { return violations == 0 && points > 0; }
};

/// ∫₀ᵗ α² ≥ min(t, t³)/40 on `points` uniformly spaced t in (0, t_max].
AlphaIntegralReport verify_alpha_integral_bound(long long points = 10000, double t_max = 100.0);

struct EnvelopeReport {
  double c = 0.0;      // ε / (40 (2C + 4ε))
  double c_emp = 0.0;  // fitted decay rate of ‖g_t‖² over the last third of the run
  long long violations = 0;
  long long first_violation = -1;
  AlphaIntegralReport integral;
  bool passes = false;
};

/// Checks ‖g_t‖² ≤ e^{-c min(t, t³)} ‖g_0‖² pointwise (the proof's bound is on squared
/// norms) and c_emp ≥ c. Throws DataQualityError when ‖g_t‖² increases by more than
/// 1e-10 ‖g_0‖² between samples.
EnvelopeReport envelope_check(const ModifiedNormTrace& trace, double eps_norm, double C);

struct RayleighOptions {
  double shift = 0.5;
  double tol = 1e-12;
  int max_iter = 500;
  std::uint64_t seed = 0;
};

struct RayleighResult {
  double lambda1 = 0.0;
  double C_rayleigh = 0.0;
  Vec eigenvector;
  std::vector<double> history;
  int iterations = 0;
};

/// Smallest nonzero eigenvalue of the μ-weighted Dirichlet form
/// Σ_faces μ_face (Δg)²/h² against Σ g² μ, by shifted inverse iteration with
/// mean-zero deflation. Throws SolverError on stagnation.
RayleighResult poincare_rayleigh(const PhaseGrid& grid, const Vec& mu, const RayleighOptions& options = {});

/// Full-gradient Rayleigh quotient of g (after mean subtraction), face-based.
double full_rayleigh(const PhaseGrid& grid, const Vec& mu, const Vec& g);
/// Velocity-only Rayleigh quotient: the carré du champ |∇_v g|² against Var_μ(g).
double velocity_only_rayleigh(const PhaseGrid& grid, const Vec& mu, const Vec& g);

struct OpNormOptions {
  double tol = 1e-9;
  int max_iter = 200;
  std::uint64_t seed = 0;
};

struct OpNormResult {
  double opnorm = 0.0;
  bool contraction = false;  // opnorm < 1
  int iterations = 0;
  int steps = 0;
  double dt = 0.0;
  std::vector<double> history;
};

/// ‖P_{t0} - μ‖ in L²(μ_h): power iteration on Π P* Π P Π, with P* g = μ⁻¹ P_densityᵀ(μ g).
OpNormResult operator_norm_Pt(const DiscreteGenerator& gen, const Vec& mu, double t0, double dt,
                              const OpNormOptions& options = {});

/// C = σ∞² (e^{2K t0} - 1) / (2K (1 - opnorm²)); (e^{2K t0} - 1)/(2K) → t0 for |K| < 1e-10.
/// Throws Inapplicable when opnorm ≥ 1.
double poincare_prop2(double K, double sigma_sup, double t0, double opnorm);

struct PoincareEstimate {
  double lambda1 = 0.0;
  double C_rayleigh = 0.0;
  double K = 0.0;
  double t0 = 0.0;
  double opnorm_Pt0 = 0.0;
  std::optional<double> C_prop2;  // empty when opnorm_Pt0 ≥ 1
  bool ordering_holds() const { return !C_prop2 || C_rayleigh <= *C_prop2; }
};

}  // namespace kfp
