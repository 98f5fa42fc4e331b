#include "kfp/cli/commands.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "kfp/cli/pipelines.hpp"
#include "kfp/parallel.hpp"

namespace kfp::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ContractViolation*>(&e) ||
      dynamic_cast<const CflViolation*>(&e) || dynamic_cast<const UnsupportedOperation*>(&e))
    return kUsage;
  if (dynamic_cast<const CertificationInfeasible*>(&e) || dynamic_cast<const Inapplicable*>(&e))
    return kInfeasible;
  if (dynamic_cast<const GridTooSmall*>(&e) || dynamic_cast<const SolverError*>(&e) ||
      dynamic_cast<const Divergence*>(&e) || dynamic_cast<const DataQualityError*>(&e))
    return kCheckFailed;
  return kInternal;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const ContractViolation*>(&e)) return "contract-violation";
  if (dynamic_cast<const CflViolation*>(&e)) return "cfl-violation";
  if (dynamic_cast<const UnsupportedOperation*>(&e)) return "unsupported";
  if (dynamic_cast<const CertificationInfeasible*>(&e)) return "certification-infeasible";
  if (dynamic_cast<const Inapplicable*>(&e)) return "inapplicable";
  if (dynamic_cast<const GridTooSmall*>(&e)) return "grid-too-small";
  if (dynamic_cast<const SolverError*>(&e)) return "solver-error";
  if (dynamic_cast<const Divergence*>(&e)) return "divergence";
  if (dynamic_cast<const DataQualityError*>(&e)) return "data-quality";
  return "internal";
}

void Report::value(const std::string& key, double v) { value(key, format_double(v)); }

std::string Report::text() const {
  std::string s;
  for (const auto& l : body_) s += l + "\n";
  s += "\n";
  for (const auto& [k, v] : tail_) s += k + ": " + v + "\n";
  return s;
}

void Report::write(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text();
}

namespace {

std::string grid_text(const PhaseGrid& g) {
  return fmt::format("{}x{} on [{:g}, {:g}] x [{:g}, {:g}]", g.nx, g.nv, g.x_min, g.x_max, g.v_min, g.v_max);
}

int finish(Report& r, bool ok) {
  const int code = ok ? kOk : kCheckFailed;
  r.value("STATUS", std::string(ok ? "pass" : "fail"));
  r.value("EXIT_CODE", code);
  return code;
}

int cmd_certify(const RunConfig& cfg, const fs::path& dir, Report& r) {
  const CertifyOutcome o = run_certify(cfg);
  write_certificate(dir / "certificate.txt", o.cert);
  const auto& c = o.cert;
  r.line(fmt::format("contraction certificate ({} route) for {}", c.route, cfg.model.describe()));
  for (Eigen::Index i = 0; i < c.A.rows(); ++i) {
    std::string row;
    for (Eigen::Index j = 0; j < c.A.cols(); ++j) row += fmt::format(" {:12.6f}", c.A(i, j));
    r.line("  A =" + row);
  }
  r.line(fmt::format("kappa = {:.6g}, |A| = {:.6g}, R = {:.6g}, eps = {:.6g}", c.kappa, c.A_opnorm, c.R,
                     c.eps_contract));
  r.line(fmt::format("falsifier: {} of {} seeded pairs violate the condition (tolerance {:.1e})",
                     o.falsifier.violations, o.falsifier.n_pairs, o.falsifier.tolerance));
  r.value("COMMAND", std::string("certify"));
  r.value("MODEL", cfg.model.describe());
  r.value("ROUTE", c.route);
  r.value("KAPPA", c.kappa);
  r.value("A_OPNORM", c.A_opnorm);
  r.value("R", c.R);
  r.value("EPS_CONTRACT", c.eps_contract);
  r.value("LYAPUNOV_RESIDUAL", o.lyapunov_residual);
  r.value("FALSIFIER_PAIRS", o.falsifier.n_pairs);
  r.value("FALSIFIER_VIOLATIONS", o.falsifier.violations);
  r.value("FALSIFIER_WORST_RELATIVE_MARGIN", o.falsifier.worst_relative_margin);
  return finish(r, o.passes());
}

void poincare_lines(const PoincareOutcome& p, Report& r) {
  const auto& e = p.estimate;
  r.line(fmt::format("Rayleigh: lambda1 = {:.6g}, C = {:.6g} after {} iterations", e.lambda1, e.C_rayleigh,
                     p.rayleigh.iterations));
  r.line(fmt::format("control g = x: velocity-only quotient {:.3e}, full-gradient quotient {:.6g}",
                     p.velocity_only_x, p.full_x));
  if (p.opnorm)
    r.line(fmt::format("||P_t0 - mu|| = {:.6g} at t0 = {:g} on {}x{} ({} steps of {:.4g}, {} iterations)",
                       e.opnorm_Pt0, e.t0, p.opnorm_n, p.opnorm_n, p.opnorm->steps, p.opnorm->dt,
                       p.opnorm->iterations));
  if (e.C_prop2) r.line(fmt::format("operator-norm constant with K = {:.6g}: {:.6g}", e.K, *e.C_prop2));
  if (!p.prop2_note.empty()) r.line("operator-norm constant not available: " + p.prop2_note);
}

void poincare_values(const PoincareOutcome& p, Report& r) {
  const auto& e = p.estimate;
  r.value("LAMBDA1", e.lambda1);
  r.value("C_RAYLEIGH", e.C_rayleigh);
  r.value("VELOCITY_ONLY_RAYLEIGH_X", p.velocity_only_x);
  r.value("K", e.K);
  r.value("T0", e.t0);
  if (p.opnorm) r.value("OPNORM_PT0", e.opnorm_Pt0);
  r.value("C_PROP2", e.C_prop2 ? format_double(*e.C_prop2) : std::string("inapplicable"));
  r.value("ORDERING_HOLDS", e.ordering_holds());
}

int cmd_poincare(const RunConfig& cfg, const fs::path& dir, Report& r) {
  const SteadyOutcome s = run_steady(cfg);
  const PoincareOutcome p = run_poincare(cfg, s, true);
  {
    CsvWriter csv(dir / "rayleigh.csv", {"iteration", "lambda"});
    for (std::size_t k = 0; k < p.rayleigh.history.size(); ++k)
      csv.row({static_cast<double>(k + 1), p.rayleigh.history[k]});
  }
  if (p.opnorm) {
    CsvWriter csv(dir / "opnorm.csv", {"iteration", "opnorm"});
    for (std::size_t k = 0; k < p.opnorm->history.size(); ++k)
      csv.row({static_cast<double>(k + 1), p.opnorm->history[k]});
  }
  r.line(fmt::format("Poincare constants for {} on {}", cfg.model.describe(), grid_text(s.gen.grid)));
  poincare_lines(p, r);
  r.value("COMMAND", std::string("poincare"));
  r.value("MODEL", cfg.model.describe());
  poincare_values(p, r);
  return finish(r, p.estimate.ordering_holds());
}

int cmd_verify(const RunConfig& cfg, const fs::path& dir, Report& r) {
  const VerifyOutcome v = run_verify(cfg);
  const auto& tr = v.trace;
  {
    CsvWriter csv(dir / "trace.csv",
                  {"t", "N", "norm_sq", "gradx_sq", "gradv_sq", "rate_certified", "dissipation_residual"});
    for (std::size_t k = 0; k < tr.t.size(); ++k)
      csv.row({tr.t[k], tr.N[k], tr.norm_sq[k], tr.gradx_sq[k], tr.gradv_sq[k], tr.rate_certified[k],
               k < tr.dissipation_residual.size() ? tr.dissipation_residual[k] : 0.0});
  }
  {
    CsvWriter csv(dir / "density.csv", {"t", "mass", "boundary_mass", "h_dist"});
    const auto& d = v.density;
    for (std::size_t k = 0; k < d.t.size(); ++k) csv.row({d.t[k], d.mass[k], d.boundary_mass[k], d.h_dist[k]});
  }
  const auto& ss = v.steady.ss;
  r.line(fmt::format("decay to equilibrium for {} on {}", cfg.model.describe(), grid_text(v.steady.gen.grid)));
  r.line(fmt::format("steady state: residual {:.3e} after {} iterations, boundary ring mass {:.3e}", ss.residual,
                     ss.iterations, ss.boundary_ring_mass));
  poincare_lines(v.poincare, r);
  r.line(fmt::format("modified norm: eps = {:.6g} (B = {:.6g}, M = {:.6g}), C = {:.6g}, dt = {:.4g}, T = {:g}",
                     v.eps.eps_norm, v.eps.B, v.eps.M_coeff, v.C, tr.dt, cfg.evolve.T));
  r.line(fmt::format("decay inequality: {} violations in {} steps, worst margin {:.3e} N0", v.decay.violations,
                     v.decay.steps_checked, v.decay.worst_margin));
  r.line(fmt::format("envelope: c = {:.6g}, fitted c_emp = {:.6g}, {} violations", v.envelope.c,
                     v.envelope.c_emp, v.envelope.violations));
  r.line(fmt::format("dissipation identity: worst residual {:.3e} ||g0||^2 per time unit (budget {:g})",
                     v.dissipation_worst, cfg.evolve.dissipation_tol));
  r.line(fmt::format("||h_t - 1|| from {:.6g} to {:.6g}, largest step increase {:.3e}", v.density.h_dist.front(),
                     v.density.h_dist.back(), v.density.max_h_increase));

  r.value("COMMAND", std::string("verify"));
  r.value("MODEL", cfg.model.describe());
  r.value("GRID", grid_text(v.steady.gen.grid));
  r.value("DT", tr.dt);
  r.value("T", cfg.evolve.T);
  r.value("STEADY_RESIDUAL", ss.residual);
  r.value("BOUNDARY_RING_MASS", ss.boundary_ring_mass);
  poincare_values(v.poincare, r);
  r.value("POINCARE_CONSTANT",
          std::string(cfg.poincare.constant == PoincareConstant::rayleigh ? "rayleigh" : "prop2"));
  r.value("C", v.C);
  r.value("EPS_NORM", v.eps.eps_norm);
  r.value("M_COEFF", v.eps.M_coeff);
  r.value("DECAY_STEPS", v.decay.steps_checked);
  r.value("DECAY_VIOLATIONS", v.decay.violations);
  r.value("DECAY_ENVELOPE_VIOLATIONS", v.decay.envelope_violations);
  r.value("DECAY_WORST_MARGIN", v.decay.worst_margin);
  r.value("ALPHA_INTEGRAL_POINTS", v.envelope.integral.points);
  r.value("ALPHA_INTEGRAL_VIOLATIONS", v.envelope.integral.violations);
  r.value("ALPHA_INTEGRAL_MIN_RATIO", v.envelope.integral.min_ratio);
  r.value("ENVELOPE_C", v.envelope.c);
  r.value("ENVELOPE_C_EMP", v.envelope.c_emp);
  r.value("ENVELOPE_VIOLATIONS", v.envelope.violations);
  r.value("ENVELOPE_PASSES", v.envelope.passes);
  r.value("DISSIPATION_WORST", v.dissipation_worst);
  r.value("H_MAX_INCREASE", v.density.max_h_increase);
  r.value("MAX_BOUNDARY_MASS", v.density.result.max_boundary_mass);
  r.value("MEAN_DRIFT", tr.mean_drift);
  return finish(r, v.passes());
}

int cmd_couple(const RunConfig& cfg, const fs::path& dir, Report& r) {
  const CoupleOutcome o = run_couple(cfg);
  const auto& st = o.result.stats;
  {
    CsvWriter csv(dir / "coupling.csv", {"t", "mean_sq_dist", "mean_A_dist", "ci_sq_dist", "ci_A_dist", "bound"});
    for (std::size_t k = 0; k < st.times.size(); ++k)
      csv.row({st.times[k], st.mean_sq_dist[k], st.mean_A_dist[k], st.ci_sq_dist[k], st.ci_A_dist[k],
               o.result.bound[k]});
  }
  r.line(fmt::format("synchronous coupling of {} pairs for {}, {} dt = {:g}", cfg.mc.n_traj, cfg.model.describe(),
                     to_string(cfg.mc.integrator), cfg.mc.dt));
  r.line(fmt::format("initial gap {:.6g}, certificate R = {:.6g} ({} route)", o.initial_gap, o.cert.R,
                     o.cert.route));
  r.line(fmt::format("growth bound: exp({:.6g} t) |dz0|^2; {} snapshot(s) above it at 95%", o.result.growth_rate,
                     o.result.verdict1_violations));
  r.line(fmt::format("A-form decay: {} of {} steps with |gap| >= R violate it (worst excess {:.3e})",
                     o.result.verdict2_violations, o.result.verdict2_checks, o.result.verdict2_worst));
  r.value("COMMAND", std::string("couple"));
  r.value("MODEL", cfg.model.describe());
  r.value("PAIRS", cfg.mc.n_traj);
  r.value("INITIAL_GAP", o.initial_gap);
  r.value("K", o.bounds.one_sided_K);
  r.value("R", o.cert.R);
  r.value("GROWTH_RATE", o.result.growth_rate);
  r.value("FINAL_MEAN_SQ_DIST", st.mean_sq_dist.back());
  r.value("VERDICT1_VIOLATIONS", o.result.verdict1_violations);
  r.value("VERDICT2_CHECKS", o.result.verdict2_checks);
  r.value("VERDICT2_VIOLATIONS", o.result.verdict2_violations);
  r.value("VERDICT2_BIAS_COEFF", o.result.bias_coeff);
  return finish(r, o.passes());
}

int cmd_steady(const RunConfig& cfg, const fs::path& dir, Report& r) {
  const SteadyOutcome s = run_steady(cfg);
  const PhaseGrid& g = s.gen.grid;
  {
    CsvWriter csv(dir / "steady.csv", {"x", "v", "mu"});
    for (int i = 0; i < g.nx; ++i)
      for (int j = 0; j < g.nv; ++j) csv.row({g.x(i), g.v(j), s.ss.mu.values(g.index(i, j))});
  }
  {
    CsvWriter csv(dir / "residuals.csv", {"iteration", "residual"});
    for (std::size_t k = 0; k < s.ss.residual_history.size(); ++k)
      csv.row({static_cast<double>(k + 1), s.ss.residual_history[k]});
  }
  const auto& m = s.moments;
  r.line(fmt::format("steady state of {} on {}", cfg.model.describe(), grid_text(g)));
  r.line(fmt::format("schemes: x {}, v {} ({} upwind fallback cells), {} boundaries", s.gen.x_scheme,
                     s.gen.v_scheme, s.gen.upwind_fallback_cells, s.gen.boundary));
  r.line(fmt::format("residual {:.3e} after {} iterations, boundary ring mass {:.3e}", s.ss.residual,
                     s.ss.iterations, s.ss.boundary_ring_mass));
  r.line(fmt::format("Var(x) = {:.6g}, Var(v) = {:.6g}, Cov(x,v) = {:.3e}, Cov(x^2,v^2) = {:.6g}", m.var_x,
                     m.var_v, m.cov_xv, m.cov_x2v2));
  if (s.gibbs_l1) r.line(fmt::format("L1 distance to the Gibbs density: {:.3e}", *s.gibbs_l1));
  r.value("COMMAND", std::string("steady"));
  r.value("MODEL", cfg.model.describe());
  r.value("GRID", grid_text(g));
  r.value("RESIDUAL", s.ss.residual);
  r.value("ITERATIONS", s.ss.iterations);
  r.value("MIN_CELL", s.ss.min_cell);
  r.value("FLOORED_CELLS", s.ss.floored_cells);
  r.value("BOUNDARY_RING_MASS", s.ss.boundary_ring_mass);
  r.value("MEAN_X", m.mean_x);
  r.value("MEAN_V", m.mean_v);
  r.value("VAR_X", m.var_x);
  r.value("VAR_V", m.var_v);
  r.value("COV_XV", m.cov_xv);
  r.value("COV_X2V2", m.cov_x2v2);
  bool ok = true;
  if (s.gibbs_l1) {
    r.value("GIBBS_L1", *s.gibbs_l1);
    ok = *s.gibbs_l1 <= 1e-3;
  }
  return finish(r, ok);
}

int cmd_evolve(const RunConfig& cfg, const fs::path& dir, Report& r) {
  const SteadyOutcome s = run_steady(cfg);
  const double dt = cfg.evolve.dt.value_or(cfl_dt(s.gen));
  const DensityRun d =
      run_density(s, initial_ratio(s.gen.grid, cfg.evolve.amplitude), cfg.evolve.T, dt, cfg.evolve.snapshots);
  {
    CsvWriter csv(dir / "density.csv", {"t", "mass", "boundary_mass", "h_dist"});
    for (std::size_t k = 0; k < d.t.size(); ++k) csv.row({d.t[k], d.mass[k], d.boundary_mass[k], d.h_dist[k]});
  }
  {
    const PhaseGrid& g = s.gen.grid;
    const Vec& mu = s.ss.mu.values;
    CsvWriter manifest(dir / "snapshots.csv", {"index", "t", "mass", "h_dist"});
    for (std::size_t k = 0; k < d.result.snapshots.size(); ++k) {
      const auto& snap = d.result.snapshots[k];
      const Vec& f = snap.field.values;
      const Vec h = f.cwiseQuotient(mu);
      CsvWriter csv(dir / fmt::format("snapshot_{:03d}.csv", k), {"x", "v", "f", "h"});
      for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.nv; ++j) csv.row({g.x(i), g.v(j), f(g.index(i, j)), h(g.index(i, j))});
      const Vec dev = h.array() - 1.0;
      manifest.row({static_cast<double>(k), snap.t, total_mass(g, f), std::sqrt(mu_norm_sq_unchecked(g, dev, mu))});
    }
  }
  const bool mass_ok = d.result.max_conservation_drift <= 1e-12;
  const bool monotone = d.max_h_increase <= 1e-10;
  r.line(fmt::format("density evolution of {} on {}: {} steps of {:.4g} ({})", cfg.model.describe(),
                     grid_text(s.gen.grid), d.result.steps, d.result.dt, d.result.scheme));
  r.line(fmt::format("mass drift per step {:.3e}, largest boundary-ring mass {:.3e}", d.result.max_conservation_drift,
                     d.result.max_boundary_mass));
  r.line(fmt::format("||h_t - 1|| from {:.6g} to {:.6g}, largest step increase {:.3e}", d.h_dist.front(),
                     d.h_dist.back(), d.max_h_increase));
  r.value("COMMAND", std::string("evolve"));
  r.value("MODEL", cfg.model.describe());
  r.value("GRID", grid_text(s.gen.grid));
  r.value("DT", d.result.dt);
  r.value("STEPS", d.result.steps);
  r.value("MASS_DRIFT", d.result.max_conservation_drift);
  r.value("MAX_BOUNDARY_MASS", d.result.max_boundary_mass);
  r.value("H_DIST_INITIAL", d.h_dist.front());
  r.value("H_DIST_FINAL", d.h_dist.back());
  r.value("H_MAX_INCREASE", d.max_h_increase);
  return finish(r, mass_ok && monotone);
}

int cmd_moments(const RunConfig& cfg, const fs::path& dir, Report& r) {
  const MomentsOutcome o = run_moments(cfg);
  {
    CsvWriter csv(dir / "moments.csv", {"source", "n", "var_x", "var_v", "cov_xv", "cov_x2v2"});
    csv.row({0.0, static_cast<double>(cfg.grid.nx), o.grid.var_x, o.grid.var_v, o.grid.cov_xv, o.grid.cov_x2v2});
    csv.row({0.0, static_cast<double>(cfg.grid.nx / 2), o.grid_coarse.var_x, o.grid_coarse.var_v,
             o.grid_coarse.cov_xv, o.grid_coarse.cov_x2v2});
    csv.row({1.0, static_cast<double>(o.mc.samples), o.mc.var_x.value, o.mc.var_v.value, o.mc.cov_xv.value,
             o.mc.cov_x2v2.value});
  }
  r.line(fmt::format("stationary moments of {}: grid {}x{} against {} trajectories of length {:g} ({})",
                     cfg.model.describe(), cfg.grid.nx, cfg.grid.nv, cfg.mc.ergodic_traj, cfg.mc.ergodic_T,
                     to_string(cfg.mc.ergodic_integrator)));
  r.line(fmt::format("Cov(x,v): grid {:.3e} +- {:.1e}, Monte Carlo {:.3e} +- {:.1e} (95%)", o.grid_cov,
                     o.grid_cov_err, o.mc.cov_xv.value, o.mc.cov_xv.ci));
  r.line(fmt::format("Cov(x^2,v^2): grid {:.4g}, Monte Carlo {:.4g} +- {:.1e}", o.grid.cov_x2v2,
                     o.mc.cov_x2v2.value, o.mc.cov_x2v2.ci));
  r.value("COMMAND", std::string("moments"));
  r.value("MODEL", cfg.model.describe());
  r.value("GRID_COV_XV", o.grid_cov);
  r.value("GRID_COV_XV_ERR", o.grid_cov_err);
  r.value("MC_COV_XV", o.mc.cov_xv.value);
  r.value("MC_COV_XV_CI", o.mc.cov_xv.ci);
  r.value("MC_VAR_X", o.mc.var_x.value);
  r.value("MC_VAR_V", o.mc.var_v.value);
  r.value("GRID_COV_X2V2", o.grid.cov_x2v2);
  r.value("MC_COV_X2V2", o.mc.cov_x2v2.value);
  r.value("MC_COV_X2V2_CI", o.mc.cov_x2v2.ci);
  r.value("COV_XV_AGREE", o.agree);
  r.value("COV_XV_NONZERO_3SE", o.cov_nonzero);
  r.value("COV_X2V2_NONZERO_3SE", o.cov_x2v2_nonzero);
  return finish(r, o.agree);
}

using Command = std::function<int(const RunConfig&, const fs::path&, Report&)>;

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> m = {
      {"certify", cmd_certify}, {"verify", cmd_verify}, {"poincare", cmd_poincare}, {"couple", cmd_couple},
      {"steady", cmd_steady},   {"evolve", cmd_evolve}, {"moments", cmd_moments},
  };
  return m;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, _] : commands()) n.push_back(k);
    return n;
  }();
  return names;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& out) {
  const auto it = commands().find(name);
  if (it == commands().end()) throw UsageError(fmt::format("unknown command '{}'", name));
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  write_config_echo(cfg, dir);
  Report r;
  int code = kOk;
  try {
    code = it->second(cfg, dir, r);
  } catch (const std::exception& e) {
    code = exit_code_for(e);
    r = Report();
    r.line(fmt::format("{} failed ({}): {}", name, error_kind(e), e.what()));
    r.value("COMMAND", name);
    r.value("MODEL", cfg.model.describe());
    r.value("ERROR_KIND", error_kind(e));
    r.value("ERROR", std::string(e.what()));
    r.value("STATUS", std::string("error"));
    r.value("EXIT_CODE", code);
  }
  r.write(dir / "report.txt");
  out << r.text();
  return code;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"kfp: contraction certificates and hypocoercive decay checks for kinetic Langevin models"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::string> sweep;
  std::string out_dir;
  long long seed = -1;
  int workers = -1;
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " pipeline");
    sub->add_option("-c,--config", config, "configuration file");
    sub->add_option("--set", sets, "override, section.key=value (repeatable)");
    sub->add_option("--sweep", sweep, "run every listed configuration file, each into <out>/<file stem>");
    sub->add_option("-o,--out", out_dir, "output directory (overrides run.output_dir)");
    sub->add_option("--seed", seed, "global seed (overrides run.seed)")->check(CLI::NonNegativeNumber);
    sub->add_option("--workers", workers, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "kfp: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  std::vector<std::string> overrides = sets;
  if (!out_dir.empty()) overrides.push_back("run.output_dir=" + out_dir);
  if (seed >= 0) overrides.push_back("run.seed=" + std::to_string(seed));
  if (workers >= 0) overrides.push_back("run.workers=" + std::to_string(workers));

  try {
    if (sweep.empty()) {
      if (config.empty()) throw UsageError("--config is required");
      return run_command(name, load_config(config, overrides), out);
    }
    if (!config.empty()) sweep.insert(sweep.begin(), config);
    std::vector<RunConfig> cfgs;
    for (const auto& path : sweep) {
      RunConfig c = load_config(path, overrides);
      c.output_dir /= fs::path(path).stem();
      cfgs.push_back(std::move(c));
    }
    std::vector<int> codes(cfgs.size(), kOk);
    std::vector<std::string> texts(cfgs.size());
    const int sweep_workers = resolve_workers(workers > 0 ? workers : 0);
    parallel_chunks(static_cast<long long>(cfgs.size()), static_cast<int>(cfgs.size()), sweep_workers,
                    [&](int, long long b, long long e) {
                      for (long long k = b; k < e; ++k) {
                        std::ostringstream s;
                        codes[k] = run_command(name, cfgs[k], s);
                        texts[k] = s.str();
                      }
                    });
    int worst = kOk;
    for (std::size_t k = 0; k < cfgs.size(); ++k) {
      out << "== " << sweep[k] << " -> " << cfgs[k].output_dir.string() << "\n" << texts[k];
      worst = std::max(worst, codes[k]);
    }
    return worst;
  } catch (const std::exception& e) {
    err << "kfp: " << error_kind(e) << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace kfp::cli
