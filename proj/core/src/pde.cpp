#include "kfp/pde.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <optional>

#include "kfp/errors.hpp"

namespace kfp {

PhaseGrid PhaseGrid::make(double x_min, double x_max, double v_min, double v_max, int nx, int nv,
                          long long max_cells) {
  if (!(x_max > x_min) || !(v_max > v_min))
    throw ContractViolation("grid bounds must satisfy x_max > x_min and v_max > v_min");
  if (nx < 1 || nv < 1) throw ContractViolation("grid cell counts must be positive");
  if (static_cast<long long>(nx) * nv > max_cells)
    throw ContractViolation(
        fmt::format("grid has {} cells, above the maximum {}", static_cast<long long>(nx) * nv,
                    max_cells));
  PhaseGrid g;
  g.x_min = x_min;
  g.x_max = x_max;
  g.v_min = v_min;
  g.v_max = v_max;
  g.nx = nx;
  g.nv = nv;
  g.hx = (x_max - x_min) / nx;
  g.hv = (v_max - v_min) / nv;
  return g;
}

PhaseGrid PhaseGrid::symmetric(double halfwidth_x, double halfwidth_v, int nx, int nv) {
  return make(-halfwidth_x, halfwidth_x, -halfwidth_v, halfwidth_v, nx, nv);
}

std::pair<double, double> default_halfwidths(const ModelSpec& model) {
  const double gamma = model.gamma();
  double k = 1.0;
  if (const auto* eq = std::get_if<Equilibrium>(&model.drift)) k = eq->potential.stiffness;
  const double widen = model.is_equilibrium() ? 1.0 : 1.5;
  const double sx = model.sigma / std::sqrt(gamma * k);
  const double sv = model.sigma / std::sqrt(gamma);
  return {6.0 * sx * widen, 6.0 * sv * widen};
}

PhaseGrid default_grid(const ModelSpec& model, int nx, int nv) {
  const auto [hx, hv] = default_halfwidths(model);
  return PhaseGrid::symmetric(hx, hv, nx, nv);
}

GridField sample_field(const PhaseGrid& grid, FieldKind kind,
                       const std::function<double(double, double)>& f) {
  GridField out{Vec(grid.size()), kind};
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j) out.values(grid.index(i, j)) = f(grid.x(i), grid.v(j));
  return out;
}

DiscreteGenerator assemble_generator(const ModelSpec& model, const PhaseGrid& grid,
                                     const GeneratorOptions& options) {
  model.validate();
  if (model.d != 1) throw ContractViolation("the grid solver supports d = 1 only");

  DiscreteGenerator gen;
  gen.grid = grid;
  gen.sigma = model.sigma;

  // Precision matrix of the reference Gaussian, if there is one.
  std::optional<Mat> precision;
  if (options.reference_weighting && model.is_builtin()) {
    if (auto cov = linear_stationary_covariance(model)) precision = cov->inverse();
  }
  auto log_ref = [&](double x, double v) {
    const Mat& p = *precision;
    return -0.5 * (p(0, 0) * x * x + 2.0 * p(0, 1) * x * v + p(1, 1) * v * v);
  };
  gen.x_scheme = precision ? "upwind, reference-weighted" : "upwind";
  gen.v_scheme = "centered drift with per-cell upwind fallback, centered diffusion";

  const int n = grid.size();
  const double diff = model.sigma * model.sigma / (grid.hv * grid.hv);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 4);
  Vec diag = Vec::Zero(n);
  auto add = [&](int from, int to, double rate) {
    if (rate == 0.0) return;
    trip.emplace_back(from, to, rate);
    diag(from) -= rate;
  };

  for (int i = 0; i < grid.nx; ++i) {
    const double x = grid.x(i);
    for (int j = 0; j < grid.nv; ++j) {
      const double v = grid.v(j);
      const int k = grid.index(i, j);
      gen.vmax = std::max(gen.vmax, std::abs(v));

      const int s = v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
      if (s != 0 && i + s >= 0 && i + s < grid.nx) {
        double w = 1.0;
        if (precision) w = std::exp(0.5 * (log_ref(grid.x(i + s), v) - log_ref(x, v)));
        add(k, grid.index(i + s, j), std::abs(v) / grid.hx * w);
      }

      const double b = eval_drift(model, PhasePoint(x, v))(0);
      gen.bmax = std::max(gen.bmax, std::abs(b));
      double up = diff + b / (2.0 * grid.hv);
      double dn = diff - b / (2.0 * grid.hv);
      if (up < 0.0 || dn < 0.0) {
        up = diff + std::max(b, 0.0) / grid.hv;
        dn = diff + std::max(-b, 0.0) / grid.hv;
        ++gen.upwind_fallback_cells;
      }
      if (j + 1 < grid.nv) add(k, grid.index(i, j + 1), up);
      if (j >= 1) add(k, grid.index(i, j - 1), dn);
    }
  }
  for (int k = 0; k < n; ++k) trip.emplace_back(k, k, diag(k));

  gen.observable.resize(n, n);
  gen.observable.setFromTriplets(trip.begin(), trip.end());
  gen.observable.makeCompressed();
  gen.density = gen.observable.transpose();
  gen.density.makeCompressed();
  return gen;
}

double total_mass(const PhaseGrid& grid, const Vec& density) {
  return density.sum() * grid.cell_area();
}

double boundary_ring_mass(const PhaseGrid& grid, const Vec& density) {
  double m = 0.0;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j)
      if (i == 0 || j == 0 || i == grid.nx - 1 || j == grid.nv - 1)
        m += std::abs(density(grid.index(i, j)));
  return m * grid.cell_area();
}

SteadyState steady_state(const DiscreteGenerator& gen, const SteadyStateOptions& options) {
  const PhaseGrid& grid = gen.grid;
  const int n = grid.size();
  const SpMat& op = gen.density;

  double op_norm = 0.0;  // max absolute column sum bounds the 2-norm scale
  for (int k = 0; k < op.outerSize(); ++k) {
    double s = 0.0;
    for (SpMat::InnerIterator it(op, k); it; ++it) s += std::abs(it.value());
    op_norm = std::max(op_norm, s);
  }
  const double rho = 1e-12 * std::max(op_norm, 1.0);
  SpMat shifted = op;
  for (int k = 0; k < n; ++k) shifted.coeffRef(k, k) += rho;
  shifted.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(shifted);
  if (lu.info() != Eigen::Success)
    throw SolverError("sparse LU of the shifted density operator failed", {});

  SteadyState out;
  Vec mu = Vec::Constant(n, 1.0);
  for (int it = 1; it <= options.max_iter; ++it) {
    mu = lu.solve(mu);
    if (lu.info() != Eigen::Success) throw SolverError("sparse LU solve failed", out.residual_history);
    const double s = mu.sum();
    if (!std::isfinite(s) || s == 0.0)
      throw SolverError("inverse iteration produced a non-finite iterate", out.residual_history);
    mu /= s * grid.cell_area();
    out.residual = (op * mu).norm() / mu.norm();
    out.residual_history.push_back(out.residual);
    out.iterations = it;
    if (out.residual <= options.tol) break;
  }
  if (!(out.residual <= options.tol))
    throw SolverError(fmt::format("steady state did not converge: residual {:.3e} > tol {:.3e}",
                                  out.residual, options.tol),
                      out.residual_history);

  // Refinement against the unshifted operator; the LU error floor sits well above round-off.
  for (int pass = 0; pass < 8; ++pass) {
    Vec candidate = mu - lu.solve(op * mu);
    candidate /= total_mass(grid, candidate);
    const double res = (op * candidate).norm() / candidate.norm();
    if (!(res < 0.5 * out.residual)) break;
    mu = std::move(candidate);
    out.residual = res;
    out.residual_history.push_back(res);
  }

  out.min_cell = mu.minCoeff();
  out.boundary_ring_mass = boundary_ring_mass(grid, mu);
  const double peak = mu.maxCoeff();
  if (out.min_cell < -options.negativity_threshold * peak)
    throw GridTooSmall(fmt::format("steady state has a negative cell ({:.3e} against peak {:.3e}); "
                                   "the grid does not resolve the model",
                                   out.min_cell, peak));
  if (out.boundary_ring_mass > options.boundary_ring_threshold)
    throw GridTooSmall(fmt::format(
        "steady state puts mass {:.3e} on the boundary ring (threshold {:.1e}); enlarge the domain",
        out.boundary_ring_mass, options.boundary_ring_threshold));
  const double floor = options.positivity_floor * peak;
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    if (mu(k) < floor) {
      mu(k) = floor;
      ++out.floored_cells;
    }
  }
  if (out.floored_cells > 0) {
    mu /= total_mass(grid, mu);
    out.residual = (op * mu).norm() / mu.norm();
    out.residual_history.push_back(out.residual);
  }
  out.mu = GridField{std::move(mu), FieldKind::density};
  return out;
}

double cfl_dt(const DiscreteGenerator& gen) {
  double dt = std::numeric_limits<double>::infinity();
  if (gen.vmax > 0.0) dt = std::min(dt, 0.25 * gen.grid.hx / gen.vmax);
  if (gen.bmax > 0.0) dt = std::min(dt, 0.25 * gen.grid.hv / gen.bmax);
  return dt;
}

struct CrankNicolson::Impl {
  SpMat explicit_part;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
};

CrankNicolson::CrankNicolson(const SpMat& op, double dt) : dt_(dt) {
  if (!(dt > 0.0)) throw ContractViolation("time step must be positive");
  auto impl = std::make_shared<Impl>();
  SpMat id(op.rows(), op.cols());
  id.setIdentity();
  impl->explicit_part = id + (0.5 * dt) * op;
  SpMat implicit_part = id - (0.5 * dt) * op;
  implicit_part.makeCompressed();
  impl->lu.compute(implicit_part);
  if (impl->lu.info() != Eigen::Success)
    throw SolverError("sparse LU of the implicit Crank-Nicolson matrix failed", {});
  impl_ = std::move(impl);
}

Vec CrankNicolson::step(const Vec& u) const {
  Vec rhs = impl_->explicit_part * u;
  return impl_->lu.solve(rhs);
}

std::pair<int, double> plan_steps(const DiscreteGenerator& gen, double T, double dt) {
  if (!(T >= 0.0)) throw ContractViolation("horizon T must be nonnegative");
  if (!(dt > 0.0)) throw ContractViolation("time step must be positive");
  if (T == 0.0) return {0, dt};
  const double limit = cfl_dt(gen);
  if (dt > limit * (1.0 + 1e-12))
    throw CflViolation(fmt::format("dt = {:.6g} exceeds the transport CFL bound {:.6g} "
                                   "(0.25 hx/vmax, 0.25 hv/max|b|); use dt <= {:.6g}",
                                   dt, limit, limit),
                       limit);
  const int steps = static_cast<int>(std::ceil(T / dt - 1e-9));
  return {steps, T / steps};
}

namespace {

std::vector<int> snapshot_steps(const std::vector<double>& times, double T, int steps, double dt) {
  std::vector<int> out;
  if (times.empty()) {
    out = {0, steps};
  } else {
    for (double t : times) {
      if (t < 0.0 || t > T * (1.0 + 1e-12))
        throw ContractViolation(fmt::format("snapshot time {} outside [0, {}]", t, T));
      out.push_back(steps == 0 ? 0 : static_cast<int>(std::lround(t / dt)));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

EvolveResult run(const DiscreteGenerator& gen, const SpMat& op, const Vec& u0, FieldKind kind,
                 const EvolveOptions& options, const std::function<double(const Vec&)>& conserved) {
  const auto [steps, dt] = plan_steps(gen, options.T, options.dt);
  EvolveResult res;
  res.steps = steps;
  res.dt = dt;
  const std::vector<int> snaps = snapshot_steps(options.snapshot_times, options.T, steps, dt);
  std::size_t next = 0;
  auto record = [&](int n, const Vec& u) {
    while (next < snaps.size() && snaps[next] == n) {
      res.snapshots.push_back({n * dt, GridField{u, kind}});
      ++next;
    }
  };
  const bool density = kind == FieldKind::density;
  Vec u = u0;
  if (density) res.max_boundary_mass = boundary_ring_mass(gen.grid, u);
  record(0, u);
  if (steps == 0) return res;

  const CrankNicolson cn(op, dt);
  double c_prev = conserved ? conserved(u) : 0.0;
  for (int n = 1; n <= steps; ++n) {
    Vec un = cn.step(u);
    if (!un.allFinite()) throw Divergence(fmt::format("non-finite values after step {}", n));
    if (conserved) {
      const double c = conserved(un);
      res.max_conservation_drift = std::max(res.max_conservation_drift, std::abs(c - c_prev));
      c_prev = c;
    }
    if (density)
      res.max_boundary_mass = std::max(res.max_boundary_mass, boundary_ring_mass(gen.grid, un));
    if (options.on_step) options.on_step(n, n * dt, u, un);
    u = std::move(un);
    record(n, u);
  }
  return res;
}

}  // namespace

EvolveResult evolve_density(const DiscreteGenerator& gen, const GridField& f0,
                            const EvolveOptions& options) {
  if (f0.values.size() != gen.grid.size()) throw ContractViolation("density size does not match grid");
  if (f0.values.minCoeff() < 0.0) throw ContractViolation("initial density must be nonnegative");
  const double m = total_mass(gen.grid, f0.values);
  if (std::abs(m - 1.0) > 1e-9)
    throw ContractViolation(fmt::format("initial density must have unit mass, got {}", m));
  const PhaseGrid& grid = gen.grid;
  return run(gen, gen.density, f0.values, FieldKind::density, options,
             [&](const Vec& f) { return total_mass(grid, f); });
}

EvolveResult evolve_observable(const DiscreteGenerator& gen, const GridField& g0,
                               const EvolveOptions& options, const Vec& mu) {
  if (g0.values.size() != gen.grid.size())
    throw ContractViolation("observable size does not match grid");
  std::function<double(const Vec&)> conserved;
  if (mu.size() > 0) {
    if (mu.size() != gen.grid.size()) throw ContractViolation("mu size does not match grid");
    conserved = [&](const Vec& g) { return mu_mean(gen.grid, g, mu); };
  }
  return run(gen, gen.observable, g0.values, FieldKind::observable, options, conserved);
}

void require_positive(const Vec& mu) {
  if (mu.size() == 0 || !(mu.minCoeff() > 0.0))
    throw ContractViolation("reference density must be positive in every cell");
}

double mu_mean(const PhaseGrid& grid, const Vec& g, const Vec& mu) {
  return g.dot(mu) * grid.cell_area();
}

double mu_norm_sq_unchecked(const PhaseGrid& grid, const Vec& g, const Vec& mu) {
  return g.cwiseProduct(g).dot(mu) * grid.cell_area();
}

double mu_norm(const PhaseGrid& grid, const Vec& g, const Vec& mu) {
  require_positive(mu);
  if (g.size() != mu.size()) throw ContractViolation("field and density sizes differ");
  return std::sqrt(mu_norm_sq_unchecked(grid, g, mu));
}

GridField relative_density(const GridField& f, const Vec& mu) {
  require_positive(mu);
  if (f.values.size() != mu.size()) throw ContractViolation("field and density sizes differ");
  return GridField{f.values.cwiseQuotient(mu), FieldKind::observable};
}

std::pair<Vec, Vec> gradient(const PhaseGrid& grid, const Vec& g) {
  if (g.size() != grid.size()) throw ContractViolation("field size does not match grid");
  Vec gx(g.size()), gv(g.size());
  const int nx = grid.nx, nv = grid.nv;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < nv; ++j) {
      const int k = grid.index(i, j);
      if (nx == 1) {
        gx(k) = 0.0;
      } else if (i == 0) {
        gx(k) = (g(grid.index(1, j)) - g(k)) / grid.hx;
      } else if (i == nx - 1) {
        gx(k) = (g(k) - g(grid.index(i - 1, j))) / grid.hx;
      } else {
        gx(k) = (g(grid.index(i + 1, j)) - g(grid.index(i - 1, j))) / (2.0 * grid.hx);
      }
      if (nv == 1) {
        gv(k) = 0.0;
      } else if (j == 0) {
        gv(k) = (g(k + 1) - g(k)) / grid.hv;
      } else if (j == nv - 1) {
        gv(k) = (g(k) - g(k - 1)) / grid.hv;
      } else {
        gv(k) = (g(k + 1) - g(k - 1)) / (2.0 * grid.hv);
      }
    }
  }
  return {std::move(gx), std::move(gv)};
}

Vec gibbs_on_grid(const ModelSpec& model, const PhaseGrid& grid) {
  if (model.d != 1) throw ContractViolation("the grid solver supports d = 1 only");
  Vec logp(grid.size());
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j)
      logp(grid.index(i, j)) = gibbs_log_density(model, PhasePoint(grid.x(i), grid.v(j)));
  Vec p = (logp.array() - logp.maxCoeff()).exp();
  p /= total_mass(grid, p);
  return p;
}

double l1_distance(const PhaseGrid& grid, const Vec& f, const Vec& g) {
  if (f.size() != g.size()) throw ContractViolation("field sizes differ");
  return (f - g).cwiseAbs().sum() * grid.cell_area();
}

GridMoments grid_moments(const PhaseGrid& grid, const Vec& density) {
  const double mass = total_mass(grid, density);
  auto expect = [&](auto&& f) {
    double s = 0.0;
    for (int i = 0; i < grid.nx; ++i)
      for (int j = 0; j < grid.nv; ++j) s += f(grid.x(i), grid.v(j)) * density(grid.index(i, j));
    return s * grid.cell_area() / mass;
  };
  GridMoments m;
  m.mean_x = expect([](double x, double) { return x; });
  m.mean_v = expect([](double, double v) { return v; });
  m.var_x = expect([&](double x, double) { return (x - m.mean_x) * (x - m.mean_x); });
  m.var_v = expect([&](double, double v) { return (v - m.mean_v) * (v - m.mean_v); });
  m.cov_xv = expect([&](double x, double v) { return (x - m.mean_x) * (v - m.mean_v); });
  const double ex2 = expect([](double x, double) { return x * x; });
  const double ev2 = expect([](double, double v) { return v * v; });
  m.cov_x2v2 = expect([&](double x, double v) { return (x * x - ex2) * (v * v - ev2); });
  return m;
}

}  // namespace kfp
