#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kfp/certify.hpp"
#include "kfp/cli/config.hpp"
#include "kfp/hypo.hpp"
#include "kfp/mc.hpp"
#include "kfp/pde.hpp"

namespace kfp::cli {

/// Grid from the config: configured or default half-widths, nx × nv cells.
PhaseGrid make_grid(const RunConfig& cfg, int nx, int nv);
DiscreteGenerator make_generator(const RunConfig& cfg, const PhaseGrid& grid);

/// Default smooth initial datum h₀ = 1 + a·sin(x)·exp(-v²/8) (relative density).
Vec initial_ratio(const PhaseGrid& grid, double amplitude);

/// ‖σ‖∞ of the diffusion matrix √2σ acting on velocities.
double diffusion_sup(const ModelSpec& model);

struct SteadyOutcome {
  DiscreteGenerator gen;
  SteadyState ss;
  GridMoments moments;
  /// L¹ distance to the Gibbs density (equilibrium models only).
  std::optional<double> gibbs_l1;
};

SteadyOutcome run_steady(const RunConfig& cfg, int nx, int nv);
SteadyOutcome run_steady(const RunConfig& cfg);

struct PoincareOutcome {
  PoincareEstimate estimate;
  RayleighResult rayleigh;
  std::optional<OpNormResult> opnorm;
  int opnorm_n = 0;
  /// Rayleigh quotients of g = x: velocity-only (must vanish) and full gradient.
  double velocity_only_x = 0.0;
  double full_x = 0.0;
  std::string prop2_note;
};

/// Rayleigh constant on the steady-state grid; with_prop2 adds the operator norm of
/// P_{t0} on a poincare.opnorm_n grid and the operator-norm Poincare constant built from it.
PoincareOutcome run_poincare(const RunConfig& cfg, const SteadyOutcome& steady, bool with_prop2);

struct DensityRun {
  std::vector<double> t;
  std::vector<double> mass;
  std::vector<double> boundary_mass;
  /// ‖h_t - 1‖ in L²(μ_h), h_t = f_t/μ_h.
  std::vector<double> h_dist;
  double max_h_increase = 0.0;
  EvolveResult result;
};

/// Forward evolution of f₀ = μ_h·h₀ (renormalized) with per-step diagnostics.
DensityRun run_density(const SteadyOutcome& steady, const Vec& h0, double T, double dt,
                       std::vector<double> snapshots = {});

struct VerifyOutcome {
  SteadyOutcome steady;
  PoincareOutcome poincare;
  double C = 0.0;
  EpsSelection eps;
  ModifiedNormTrace trace;
  DecayReport decay;
  EnvelopeReport envelope;
  /// max_n |Δ‖g‖²/Δt + 2σ²‖∇_v g‖²| / ‖g₀‖².
  double dissipation_worst = 0.0;
  bool dissipation_ok = false;
  DensityRun density;
  bool h_monotone = false;
  /// The verdict covers decay, the envelope and monotonicity of ‖h_t - 1‖; the
  /// dissipation residual and the Poincaré ordering are reported only.
  bool passes() const { return decay.passes() && envelope.passes && h_monotone; }
};

/// Steady state → Poincaré constant → ε → observable trace → decay and envelope
/// checks, plus the density-side monotonicity of ‖h_t - 1‖.
VerifyOutcome run_verify(const RunConfig& cfg);

struct CertifyOutcome {
  ContractionCertificate cert;
  double lyapunov_residual = 0.0;
  FalsifierReport falsifier;
  bool passes() const { return falsifier.violations == 0; }
};

/// Throws CertificationInfeasible when the selected route cannot certify the model.
CertifyOutcome run_certify(const RunConfig& cfg);

struct CoupleOutcome {
  ContractionCertificate cert;
  DriftBounds bounds;
  CouplingResult result;
  double initial_gap = 0.0;
  bool passes() const { return result.verdict1 && result.verdict2; }
};

CoupleOutcome run_couple(const RunConfig& cfg);

struct MomentsOutcome {
  ErgodicMoments mc;
  GridMoments grid;         // grid.nx × grid.nv
  GridMoments grid_coarse;  // half resolution
  /// First-order Richardson value 2 s_N - s_{N/2} and error bar |s_N - s_{N/2}|.
  double grid_cov = 0.0;
  double grid_cov_err = 0.0;
  double joint_halfwidth = 0.0;
  bool agree = false;
  /// |Cov(x, v)| > 3 standard errors of the Monte Carlo estimate.
  bool cov_nonzero = false;
  /// Same test on Cov(x², v²).
  bool cov_x2v2_nonzero = false;
};

MomentsOutcome run_moments(const RunConfig& cfg);

}  // namespace kfp::cli
