#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kfp/linalg.hpp"
#include "kfp/model.hpp"

namespace kfp {

/// Cell-centered tensor grid on [x_min, x_max] × [v_min, v_max]. Cell (i, j) has
/// center (x_min + (i + 1/2) hx, v_min + (j + 1/2) hv) and flat index i·nv + j.
struct PhaseGrid {
  double x_min = -6.0;
  double x_max = 6.0;
  double v_min = -6.0;
  double v_max = 6.0;
  int nx = 128;
  int nv = 128;
  double hx = 12.0 / 128;
  double hv = 12.0 / 128;

  static constexpr long long kDefaultMaxCells = 1LL << 22;

  static PhaseGrid make(double x_min, double x_max, double v_min, double v_max, int nx, int nv,
                        long long max_cells = kDefaultMaxCells);
  static PhaseGrid symmetric(double halfwidth_x, double halfwidth_v, int nx, int nv);

  int size() const { return nx * nv; }
  int index(int i, int j) const { return i * nv + j; }
  double x(int i) const { return x_min + (i + 0.5) * hx; }
  double v(int j) const { return v_min + (j + 0.5) * hv; }
  double cell_area() const { return hx * hv; }
};

/// Half-widths covering 6 standard deviations of the linear part's stationary
/// law (σ/√(γk) in x, σ/√γ in v), widened by 1.5 for non-equilibrium drifts.
std::pair<double, double> default_halfwidths(const ModelSpec& model);
PhaseGrid default_grid(const ModelSpec& model, int nx = 128, int nv = 128);

enum class FieldKind { density, observable, gradient_component };

struct GridField {
  Vec values;
  FieldKind kind = FieldKind::observable;
};

GridField sample_field(const PhaseGrid& grid, FieldKind kind,
                       const std::function<double(double, double)>& f);

struct GeneratorOptions {
  /// Weight the upwind x-jumps by sqrt(ν(x', v)/ν(x, v)) for the Gaussian
  /// stationary law ν of the drift's linear part (when it exists).
  bool reference_weighting = true;
};

/// Markov-chain discretization of L = v·∇_x + b·∇_v + σ²Δ_v with reflecting
/// boundaries. `observable` is L_h (rows sum to zero); `density` is its transpose,
/// the Lebesgue adjoint acting on densities.
struct DiscreteGenerator {
  PhaseGrid grid;
  double sigma = 1.0;
  SpMat observable;
  SpMat density;
  double vmax = 0.0;
  double bmax = 0.0;
  std::string x_scheme;
  std::string v_scheme;
  std::string boundary = "reflecting";
  /// Cells where centered v-drift would give a negative rate and upwinding was used.
  long long upwind_fallback_cells = 0;
};

DiscreteGenerator assemble_generator(const ModelSpec& model, const PhaseGrid& grid,
                                     const GeneratorOptions& options = {});

struct SteadyStateOptions {
  double tol = 1e-8;
  int max_iter = 50;
  /// Largest admissible mass in the outermost ring of cells.
  double boundary_ring_threshold = 1e-6;
  /// Cells below floor·max(μ) are round-off (the LU solve cannot resolve values
  /// that far below the peak) and are lifted to that floor before renormalizing.
  double positivity_floor = 1e-16;
  /// Cells below -negativity_threshold·max(μ) mean the grid is inadequate.
  double negativity_threshold = 1e-9;
};

struct SteadyState {
  GridField mu;  // density, Σ μ hx hv = 1
  /// ‖L_hᵀ μ‖₂ / ‖μ‖₂ after each iteration.
  std::vector<double> residual_history;
  double residual = 0.0;
  int iterations = 0;
  double boundary_ring_mass = 0.0;
  /// Smallest cell before flooring.
  double min_cell = 0.0;
  long long floored_cells = 0;
};

/// Null vector of the density operator by shifted inverse power iteration.
/// Throws SolverError if the residual does not reach tol, GridTooSmall if μ has
/// clearly negative cells or too much mass on the boundary ring.
SteadyState steady_state(const DiscreteGenerator& gen, const SteadyStateOptions& options = {});

/// Mass in the outermost ring of cells.
double boundary_ring_mass(const PhaseGrid& grid, const Vec& density);
double total_mass(const PhaseGrid& grid, const Vec& density);

/// dt bound of the transport part: min(0.25 hx/vmax, 0.25 hv/bmax).
double cfl_dt(const DiscreteGenerator& gen);

/// θ = 1/2 step (I - dt/2 L)^{-1}(I + dt/2 L) for a fixed sparse operator L.
class CrankNicolson {
 public:
  CrankNicolson(const SpMat& op, double dt);
  Vec step(const Vec& u) const;
  double dt() const { return dt_; }

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  double dt_;
};

enum class Side { density, observable };

struct EvolveOptions {
  double T = 0.0;
  double dt = 0.0;
  /// Snapshot times in [0, T]; each is rounded to the nearest step. Empty → {0, T}.
  std::vector<double> snapshot_times;
  /// Called after every step with (step index n ≥ 1, time, u_{n-1}, u_n).
  std::function<void(int, double, const Vec&, const Vec&)> on_step;
};

struct Snapshot {
  double t = 0.0;
  GridField field;
};

struct EvolveResult {
  std::vector<Snapshot> snapshots;
  double dt = 0.0;
  int steps = 0;
  std::string scheme = "crank-nicolson (theta = 1/2, transport and diffusion implicit)";
  /// Largest |mass_n+1 - mass_n| (density side) or |mean_n+1 - mean_n| under the
  /// reference weights supplied (observable side).
  double max_conservation_drift = 0.0;
  /// Largest boundary-ring mass seen (density side only).
  double max_boundary_mass = 0.0;
};

/// Forward Kolmogorov evolution of a density. Throws CflViolation with a
/// suggested dt if dt exceeds cfl_dt(gen).
EvolveResult evolve_density(const DiscreteGenerator& gen, const GridField& f0,
                            const EvolveOptions& options);
/// Backward evolution g_t = P_t g of an observable; `mu`, if nonempty, is used to
/// monitor conservation of ∫ g μ.
EvolveResult evolve_observable(const DiscreteGenerator& gen, const GridField& g0,
                               const EvolveOptions& options, const Vec& mu = Vec());

/// Step count and effective step for a horizon; throws CflViolation if dt is too large.
std::pair<int, double> plan_steps(const DiscreteGenerator& gen, double T, double dt);

/// ∫ g μ.
double mu_mean(const PhaseGrid& grid, const Vec& g, const Vec& mu);
/// sqrt(∫ g² μ); throws ContractViolation if μ has a nonpositive cell.
double mu_norm(const PhaseGrid& grid, const Vec& g, const Vec& mu);
/// ∫ g² μ without the positivity check (hot loops).
double mu_norm_sq_unchecked(const PhaseGrid& grid, const Vec& g, const Vec& mu);
GridField relative_density(const GridField& f, const Vec& mu);
void require_positive(const Vec& mu);

/// Centered differences, one-sided in the boundary cells.
std::pair<Vec, Vec> gradient(const PhaseGrid& grid, const Vec& g);

/// Gibbs density of an equilibrium model sampled at cell centers, normalized to
/// unit mass on the grid.
Vec gibbs_on_grid(const ModelSpec& model, const PhaseGrid& grid);
double l1_distance(const PhaseGrid& grid, const Vec& f, const Vec& g);

struct GridMoments {
  double mean_x = 0.0;
  double mean_v = 0.0;
  double var_x = 0.0;
  double var_v = 0.0;
  double cov_xv = 0.0;
  /// Cov(x², v²): zero for product measures, the non-equilibrium signature.
  double cov_x2v2 = 0.0;
};

GridMoments grid_moments(const PhaseGrid& grid, const Vec& density);

}  // namespace kfp
