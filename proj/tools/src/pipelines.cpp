#include "kfp/cli/pipelines.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace kfp::cli {

PhaseGrid make_grid(const RunConfig& cfg, int nx, int nv) {
  const auto [hx, hv] = default_halfwidths(cfg.model);
  return PhaseGrid::symmetric(cfg.grid.halfwidth_x.value_or(hx), cfg.grid.halfwidth_v.value_or(hv), nx, nv);
}

DiscreteGenerator make_generator(const RunConfig& cfg, const PhaseGrid& grid) {
  GeneratorOptions opts;
  opts.reference_weighting = cfg.grid.reference_weighting;
  return assemble_generator(cfg.model, grid, opts);
}

Vec initial_ratio(const PhaseGrid& grid, double amplitude) {
  return sample_field(grid, FieldKind::observable, [amplitude](double x, double v) {
           return 1.0 + amplitude * std::sin(x) * std::exp(-v * v / 8.0);
         }).values;
}

double diffusion_sup(const ModelSpec& model) { return std::sqrt(2.0) * model.sigma; }

SteadyOutcome run_steady(const RunConfig& cfg, int nx, int nv) {
  if (cfg.model.d != 1) throw UsageError("grid commands support d = 1 only");
  const PhaseGrid grid = make_grid(cfg, nx, nv);
  SteadyOutcome out{make_generator(cfg, grid), {}, {}, std::nullopt};
  out.ss = steady_state(out.gen);
  out.moments = grid_moments(grid, out.ss.mu.values);
  if (cfg.model.is_equilibrium())
    out.gibbs_l1 = l1_distance(grid, out.ss.mu.values, gibbs_on_grid(cfg.model, grid));
  return out;
}

SteadyOutcome run_steady(const RunConfig& cfg) { return run_steady(cfg, cfg.grid.nx, cfg.grid.nv); }

PoincareOutcome run_poincare(const RunConfig& cfg, const SteadyOutcome& steady, bool with_prop2) {
  const PhaseGrid& grid = steady.gen.grid;
  const Vec& mu = steady.ss.mu.values;
  PoincareOutcome out;
  RayleighOptions ropts;
  ropts.seed = cfg.seed;
  out.rayleigh = poincare_rayleigh(grid, mu, ropts);
  const Vec x = sample_field(grid, FieldKind::observable, [](double x, double) { return x; }).values;
  out.velocity_only_x = velocity_only_rayleigh(grid, mu, x);
  out.full_x = full_rayleigh(grid, mu, x);

  PoincareEstimate& est = out.estimate;
  est.lambda1 = out.rayleigh.lambda1;
  est.C_rayleigh = out.rayleigh.C_rayleigh;
  est.K = drift_bounds(cfg.model).one_sided_K;
  est.t0 = cfg.poincare.t0;
  if (!with_prop2) return out;

  const int n = cfg.poincare.opnorm_n;
  const bool reuse = n == grid.nx && n == grid.nv;
  const SteadyOutcome coarse = reuse ? steady : run_steady(cfg, n, n);
  out.opnorm_n = n;
  OpNormOptions oopts;
  oopts.seed = cfg.seed;
  const double dt = cfg.poincare.dt.value_or(cfl_dt(coarse.gen));
  out.opnorm = operator_norm_Pt(coarse.gen, coarse.ss.mu.values, est.t0, dt, oopts);
  est.opnorm_Pt0 = out.opnorm->opnorm;
  try {
    est.C_prop2 = poincare_prop2(est.K, diffusion_sup(cfg.model), est.t0, est.opnorm_Pt0);
  } catch (const Inapplicable& e) {
    out.prop2_note = e.what();
  }
  return out;
}

DensityRun run_density(const SteadyOutcome& steady, const Vec& h0, double T, double dt,
                       std::vector<double> snapshots) {
  const PhaseGrid& grid = steady.gen.grid;
  const Vec& mu = steady.ss.mu.values;
  Vec f0 = mu.cwiseProduct(h0);
  f0 /= total_mass(grid, f0);

  DensityRun run;
  auto record = [&](double t, const Vec& f) {
    run.t.push_back(t);
    run.mass.push_back(total_mass(grid, f));
    run.boundary_mass.push_back(boundary_ring_mass(grid, f));
    const Vec h = f.cwiseQuotient(mu).array() - 1.0;
    run.h_dist.push_back(std::sqrt(mu_norm_sq_unchecked(grid, h, mu)));
    if (run.h_dist.size() > 1)
      run.max_h_increase = std::max(run.max_h_increase, run.h_dist.back() - run.h_dist[run.h_dist.size() - 2]);
  };
  record(0.0, f0);
  EvolveOptions opts;
  opts.T = T;
  opts.dt = dt;
  opts.snapshot_times = std::move(snapshots);
  opts.on_step = [&](int, double t, const Vec&, const Vec& next) { record(t, next); };
  run.result = evolve_density(steady.gen, GridField{f0, FieldKind::density}, opts);
  return run;
}

VerifyOutcome run_verify(const RunConfig& cfg) {
  VerifyOutcome out;
  out.steady = run_steady(cfg);
  const bool prop2 = cfg.poincare.constant == PoincareConstant::prop2;
  out.poincare = run_poincare(cfg, out.steady, prop2);
  if (prop2) {
    if (!out.poincare.estimate.C_prop2)
      throw Inapplicable(fmt::format("poincare.constant = prop2 but {}", out.poincare.prop2_note));
    out.C = *out.poincare.estimate.C_prop2;
  } else {
    out.C = out.poincare.estimate.C_rayleigh;
  }
  out.eps = select_eps(cfg.model);

  const PhaseGrid& grid = out.steady.gen.grid;
  const Vec& mu = out.steady.ss.mu.values;
  const double dt = cfg.evolve.dt.value_or(cfl_dt(out.steady.gen));
  const Vec h0 = initial_ratio(grid, cfg.evolve.amplitude);

  out.trace = build_trace(out.steady.gen, mu, h0, cfg.evolve.T, dt, out.eps.eps_norm, out.C);
  out.decay = verify_decay(out.trace, out.C, out.eps.eps_norm, cfg.evolve.slack);
  out.envelope = envelope_check(out.trace, out.eps.eps_norm, out.C);

  const double n0 = out.trace.norm_sq.front();
  for (double r : out.trace.dissipation_residual)
    out.dissipation_worst = std::max(out.dissipation_worst, n0 > 0.0 ? r / n0 : 0.0);
  out.dissipation_ok = out.dissipation_worst <= cfg.evolve.dissipation_tol;

  out.density = run_density(out.steady, h0, cfg.evolve.T, dt);
  out.h_monotone = out.density.max_h_increase <= 1e-10;
  return out;
}

CertifyOutcome run_certify(const RunConfig& cfg) {
  CertifyOutcome out;
  out.lyapunov_residual = certify_linear_matrix(linear_part(cfg.model)).residual;
  out.cert = certify_model(cfg.model, cfg.certify.route, cfg.certify.target_fraction);
  out.falsifier = falsify_condition(out.cert, cfg.model, cfg.certify.n_pairs, cfg.seed, cfg.workers);
  return out;
}

namespace {

SdeRunConfig sde_config(const RunConfig& cfg, double T, long long n_traj, Integrator integrator,
                        std::vector<double> snapshots) {
  SdeRunConfig s;
  s.dt = cfg.mc.dt;
  s.T = T;
  s.n_traj = n_traj;
  s.seed = cfg.seed;
  s.integrator = integrator;
  s.snapshot_times = std::move(snapshots);
  s.workers = cfg.workers;
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(fmt::format("mc: {}", e.what()));
  }
  return s;
}

}  // namespace

CoupleOutcome run_couple(const RunConfig& cfg) {
  CoupleOutcome out;
  out.cert = certify_model(cfg.model, cfg.certify.route, cfg.certify.target_fraction);
  out.bounds = drift_bounds(cfg.model);
  const PhasePoint z0 = to_phase_point(cfg.mc.z0, cfg.model.d);
  const PhasePoint z0p = to_phase_point(cfg.mc.z0p, cfg.model.d);
  out.initial_gap = (z0.stacked() - z0p.stacked()).norm();
  const SdeRunConfig s = sde_config(cfg, cfg.mc.T, cfg.mc.n_traj, cfg.mc.integrator, cfg.mc.snapshots);
  out.result = couple_synchronous(cfg.model, z0, z0p, s, out.cert, out.bounds.one_sided_K);
  return out;
}

MomentsOutcome run_moments(const RunConfig& cfg) {
  MomentsOutcome out;
  const SteadyOutcome fine = run_steady(cfg);
  const SteadyOutcome coarse = run_steady(cfg, std::max(3, cfg.grid.nx / 2), std::max(3, cfg.grid.nv / 2));
  out.grid = fine.moments;
  out.grid_coarse = coarse.moments;
  out.grid_cov = 2.0 * out.grid.cov_xv - out.grid_coarse.cov_xv;
  out.grid_cov_err = std::abs(out.grid.cov_xv - out.grid_coarse.cov_xv);

  const SdeRunConfig s = sde_config(cfg, cfg.mc.ergodic_T, cfg.mc.ergodic_traj, cfg.mc.ergodic_integrator, {});
  out.mc = ergodic_moments(cfg.model, to_phase_point(std::vector<double>(2 * cfg.model.d, 0.0), cfg.model.d), s,
                           cfg.mc.burn_in);
  out.joint_halfwidth = std::hypot(out.mc.cov_xv.ci, out.grid_cov_err);
  out.agree = std::abs(out.mc.cov_xv.value - out.grid_cov) <= out.joint_halfwidth;
  // ci is a 95% half-width, so one standard error is ci / 1.96.
  out.cov_nonzero = std::abs(out.mc.cov_xv.value) > 3.0 * out.mc.cov_xv.ci / 1.96;
  out.cov_x2v2_nonzero = std::abs(out.mc.cov_x2v2.value) > 3.0 * out.mc.cov_x2v2.ci / 1.96;
  return out;
}

}  // namespace kfp::cli
