#include "kfp/hypo.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <random>

#include "kfp/errors.hpp"
#include "kfp/rng.hpp"

namespace kfp {

namespace {

void check_time(double t) {
  if (!(t >= 0.0)) throw ContractViolation(fmt::format("time must be nonnegative, got {}", t));
}

void check_eps(double eps) {
  if (!(eps > 0.0)) throw ContractViolation("eps_norm must be positive");
}

Vec centered(const PhaseGrid& grid, const Vec& g, const Vec& mu) {
  return g.array() - mu_mean(grid, g, mu);
}

}  // namespace

double alpha(double t) {
  check_time(t);
  return -std::expm1(-t / 3.0);
}

double alpha_prime(double t) {
  check_time(t);
  return std::exp(-t / 3.0) / 3.0;
}

double alpha_sq_integral(double t) {
  check_time(t);
  if (t < 1e-3) {
    // With s = t/3: α² = s² - s³ + 7s⁴/12 + O(s⁵), and dt = 3 ds.
    const double s = t / 3.0;
    return 3.0 * (s * s * s / 3.0 - s * s * s * s / 4.0 + 7.0 * s * s * s * s * s / 60.0);
  }
  return t + 6.0 * std::expm1(-t / 3.0) - 1.5 * std::expm1(-2.0 * t / 3.0);
}

Mat d_sq(double t, double eps_norm, int d) {
  check_eps(eps_norm);
  const double a = alpha(t);
  const Mat id = Mat::Identity(d, d);
  Mat m(2 * d, 2 * d);
  m << a * a * a * id, -a * a * id, -a * a * id, a * id;
  return eps_norm * m;
}

Mat d_sq_dt(double t, double eps_norm, int d) {
  check_eps(eps_norm);
  const double a = alpha(t);
  const double ap = alpha_prime(t);
  const Mat id = Mat::Identity(d, d);
  Mat m(2 * d, 2 * d);
  m << 3.0 * a * a * id, -2.0 * a * id, -2.0 * a * id, id;
  return eps_norm * ap * m;
}

double modified_norm(const PhaseGrid& grid, const Vec& g, const Vec& mu, double t, double eps_norm) {
  require_positive(mu);
  check_eps(eps_norm);
  const double a = alpha(t);
  const Vec gc = centered(grid, g, mu);
  const double base = mu_norm_sq_unchecked(grid, gc, mu);
  if (a == 0.0) return base;
  const auto [gx, gv] = gradient(grid, gc);
  return base + eps_norm * a * mu_norm_sq_unchecked(grid, gv - a * gx, mu);
}

double modified_norm_quadratic(const PhaseGrid& grid, const Vec& g, const Vec& mu, double t,
                               double eps_norm) {
  require_positive(mu);
  const Mat dsq = d_sq(t, eps_norm, 1);
  const Vec gc = centered(grid, g, mu);
  const auto [gx, gv] = gradient(grid, gc);
  const Vec form = dsq(0, 0) * gx.cwiseProduct(gx) + 2.0 * dsq(0, 1) * gx.cwiseProduct(gv) +
                   dsq(1, 1) * gv.cwiseProduct(gv);
  return mu_norm_sq_unchecked(grid, gc, mu) + form.dot(mu) * grid.cell_area();
}

EpsSelection select_eps_from_bound(double B, double sigma) {
  if (!(B >= 1.0) || !std::isfinite(B)) throw ContractViolation("B must be finite and >= 1");
  if (!(sigma > 0.0)) throw ContractViolation("sigma must be positive");
  EpsSelection e;
  e.B = B;
  e.M_coeff = 2.0 * B + 2.0 * B * B;
  e.eps_norm = 2.0 * sigma * sigma / (e.M_coeff + 0.5);
  return e;
}

EpsSelection select_eps(const ModelSpec& model) {
  const DriftBounds db = drift_bounds(model);
  return select_eps_from_bound(db.dxb_sup + db.dvb_sup + 1.0, model.sigma);
}

Mat rt_matrix(double t, double eps_norm, const DriftJacobian& jac, double sigma) {
  const int d = static_cast<int>(jac.dxb.rows());
  Mat r = d_sq_dt(t, eps_norm, d) + 2.0 * d_sq(t, eps_norm, d) * jac.commutator_block();
  r.bottomRightCorner(d, d) -= 2.0 * sigma * sigma * Mat::Identity(d, d);
  return r;
}

RtBoundReport sample_rt_bound(const ModelSpec& model, double eps_norm, long long n_samples,
                              std::uint64_t seed, double t_max, double tol) {
  const int d = model.d;
  RtBoundReport rep;
  rep.samples = n_samples;
  rep.worst = -std::numeric_limits<double>::infinity();
  Vec w(2 * d), z(2 * d);
  for (long long i = 0; i < n_samples; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    const double t = t_max * rng.uniform();
    for (int k = 0; k < 2 * d; ++k) z(k) = 3.0 * normal(rng);
    for (int k = 0; k < 2 * d; ++k) w(k) = normal(rng);
    w /= w.norm();
    const Mat r = rt_matrix(t, eps_norm, eval_jacobian(model, PhasePoint::from_stacked(z)), model.sigma);
    const double a = alpha(t);
    const double q = w.dot(r * w) + 0.5 * eps_norm * a * a;
    if (q > tol * eps_norm) ++rep.violations;
    if (q > rep.worst) {
      rep.worst = q;
      rep.worst_t = t;
    }
  }
  return rep;
}

double certified_rate(double t, double eps_norm, double C) {
  const double a = alpha(t);
  return eps_norm * a * a / (2.0 * C + 4.0 * eps_norm);
}

ModifiedNormTrace build_trace(const DiscreteGenerator& gen, const Vec& mu, const Vec& g0, double T,
                              double dt, double eps_norm, double C) {
  require_positive(mu);
  check_eps(eps_norm);
  if (!(C > 0.0)) throw ContractViolation("Poincare constant must be positive");
  const PhaseGrid& grid = gen.grid;
  ModifiedNormTrace tr;
  tr.eps_norm = eps_norm;
  tr.C = C;
  tr.sigma = gen.sigma;
  tr.h = std::max(grid.hx, grid.hv);
  const double s2 = gen.sigma * gen.sigma;

  auto push = [&](double t, const Vec& g) {
    const auto [gx, gv] = gradient(grid, g);
    const double a = alpha(t);
    const double nsq = mu_norm_sq_unchecked(grid, g, mu);
    tr.t.push_back(t);
    tr.norm_sq.push_back(nsq);
    tr.gradx_sq.push_back(mu_norm_sq_unchecked(grid, gx, mu));
    tr.gradv_sq.push_back(mu_norm_sq_unchecked(grid, gv, mu));
    tr.N.push_back(nsq + eps_norm * a * mu_norm_sq_unchecked(grid, gv - a * gx, mu));
    tr.rate_certified.push_back(certified_rate(t, eps_norm, C));
  };

  const Vec gc = centered(grid, g0, mu);
  push(0.0, gc);
  EvolveOptions opt;
  opt.T = T;
  opt.dt = dt;
  opt.snapshot_times = {0.0};
  double step_dt = dt;
  opt.on_step = [&](int n, double t, const Vec& prev, const Vec& next) {
    step_dt = t / n;
    const Vec mid = 0.5 * (prev + next);
    const Vec gv = gradient(grid, mid).second;
    const double d_norm = (mu_norm_sq_unchecked(grid, next, mu) - tr.norm_sq.back()) / step_dt;
    tr.dissipation_residual.push_back(std::abs(d_norm + 2.0 * s2 * mu_norm_sq_unchecked(grid, gv, mu)));
    push(t, next);
  };
  const EvolveResult res = evolve_observable(gen, GridField{gc, FieldKind::observable}, opt, mu);
  tr.dt = res.dt;
  tr.mean_drift = res.max_conservation_drift;
  return tr;
}

DecayReport verify_decay(const ModifiedNormTrace& trace, double C, double eps_norm, double slack) {
  DecayReport rep;
  const std::size_t n = trace.N.size();
  if (n == 0) return rep;
  const double n0 = trace.N[0];
  if (n0 == 0.0) {
    rep.steps_checked = static_cast<long long>(n) - 1;
    return rep;
  }
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  const double denom = 2.0 * C + 4.0 * eps_norm;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double dt = trace.t[k + 1] - trace.t[k];
    const double lhs = (trace.N[k + 1] - trace.N[k]) / dt;
    const double rhs = -certified_rate(trace.t[k], eps_norm, C) * trace.N[k] +
                       slack * n0 * (dt + trace.h);
    ++rep.steps_checked;
    rep.worst_margin = std::max(rep.worst_margin, (lhs - rhs) / n0);
    if (lhs > rhs) {
      if (rep.first_violation < 0) rep.first_violation = static_cast<long long>(k);
      ++rep.violations;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double bound = std::exp(-eps_norm * alpha_sq_integral(trace.t[k]) / denom) * n0 * (1.0 + slack);
    if (trace.N[k] > bound) {
      if (rep.first_envelope_violation < 0) rep.first_envelope_violation = static_cast<long long>(k);
      ++rep.envelope_violations;
    }
  }
  return rep;
}

AlphaIntegralReport verify_alpha_integral_bound(long long points, double t_max) {
  AlphaIntegralReport rep;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  for (long long i = 1; i <= points; ++i) {
    const double t = t_max * static_cast<double>(i) / static_cast<double>(points);
    const double bound = std::min(t, t * t * t) / 40.0;
    const double value = alpha_sq_integral(t);
    ++rep.points;
    rep.min_ratio = std::min(rep.min_ratio, value / bound);
    if (value < bound) ++rep.violations;
  }
  return rep;
}

EnvelopeReport envelope_check(const ModifiedNormTrace& trace, double eps_norm, double C) {
  EnvelopeReport rep;
  rep.integral = verify_alpha_integral_bound();
  rep.c = eps_norm / (40.0 * (2.0 * C + 4.0 * eps_norm));
  const std::size_t n = trace.norm_sq.size();
  if (n == 0) return rep;
  const double n0 = trace.norm_sq[0];
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (trace.norm_sq[k + 1] - trace.norm_sq[k] > 1e-10 * n0)
      throw DataQualityError(fmt::format(
          "norm increases between t = {} and t = {} ({:.3e} -> {:.3e}), contradicting dissipation",
          trace.t[k], trace.t[k + 1], trace.norm_sq[k], trace.norm_sq[k + 1]));
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double t = trace.t[k];
    const double bound = std::exp(-rep.c * std::min(t, t * t * t)) * n0;
    if (trace.norm_sq[k] > bound * (1.0 + 1e-12)) {
      if (rep.first_violation < 0) rep.first_violation = static_cast<long long>(k);
      ++rep.violations;
    }
  }
  if (n0 == 0.0) {
    rep.c_emp = std::numeric_limits<double>::infinity();
    rep.passes = rep.integral.passes();
    return rep;
  }
  // Least-squares slope of log ‖g_t‖² over the last third of the run.
  const double t_end = trace.t.back();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (trace.t[k] < 2.0 * t_end / 3.0 || !(trace.norm_sq[k] > 0.0)) continue;
    const double x = trace.t[k], y = std::log(trace.norm_sq[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    m += 1;
  }
  const double det = m * sxx - sx * sx;
  rep.c_emp = (m >= 2 && det > 0.0) ? -(m * sxy - sx * sy) / det : std::numeric_limits<double>::quiet_NaN();
  rep.passes = rep.integral.passes() && rep.violations == 0 && rep.c > 0.0 && rep.c_emp >= rep.c;
  return rep;
}

namespace {

/// Face-based Dirichlet form with μ face weights (mean of the two cells).
SpMat dirichlet_form(const PhaseGrid& grid, const Vec& w, bool include_x) {
  std::vector<Eigen::Triplet<double>> trip;
  auto face = [&](int a, int b, double h) {
    const double c = 0.5 * (w(a) + w(b)) / (h * h);
    trip.emplace_back(a, a, c);
    trip.emplace_back(b, b, c);
    trip.emplace_back(a, b, -c);
    trip.emplace_back(b, a, -c);
  };
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      if (include_x && i + 1 < grid.nx) face(grid.index(i, j), grid.index(i + 1, j), grid.hx);
      if (j + 1 < grid.nv) face(grid.index(i, j), grid.index(i, j + 1), grid.hv);
    }
  }
  SpMat s(grid.size(), grid.size());
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

double rayleigh(const PhaseGrid& grid, const Vec& mu, const Vec& g, bool include_x) {
  require_positive(mu);
  const Vec w = mu * grid.cell_area();
  const Vec gc = g.array() - g.dot(w) / w.sum();
  const double den = gc.cwiseProduct(gc).dot(w);
  if (den == 0.0) throw ContractViolation("Rayleigh quotient of a constant function");
  const SpMat s = dirichlet_form(grid, w, include_x);
  return gc.dot(s * gc) / den;
}

}  // namespace

double full_rayleigh(const PhaseGrid& grid, const Vec& mu, const Vec& g) {
  return rayleigh(grid, mu, g, true);
}

double velocity_only_rayleigh(const PhaseGrid& grid, const Vec& mu, const Vec& g) {
  return rayleigh(grid, mu, g, false);
}

RayleighResult poincare_rayleigh(const PhaseGrid& grid, const Vec& mu, const RayleighOptions& options) {
  require_positive(mu);
  const Vec w = mu * grid.cell_area() / (mu.sum() * grid.cell_area());
  const SpMat s = dirichlet_form(grid, w, true);
  SpMat shifted = s;
  for (int k = 0; k < grid.size(); ++k) shifted.coeffRef(k, k) += options.shift * w(k);
  Eigen::SimplicialLDLT<SpMat> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw SolverError("factorization of the Dirichlet form failed", {});

  // Block inverse iteration with Rayleigh-Ritz: the x and v modes are nearly degenerate.
  constexpr int block = 4;
  CounterRng rng(options.seed, 0);
  std::normal_distribution<double> normal;
  Mat y(grid.size(), block);
  for (Eigen::Index c = 0; c < block; ++c)
    for (Eigen::Index k = 0; k < y.rows(); ++k) y(k, c) = normal(rng);

  RayleighResult res;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iter; ++it) {
    for (Eigen::Index c = 0; c < block; ++c) y.col(c).array() -= y.col(c).dot(w);
    const Mat gram = y.transpose() * w.asDiagonal() * y;
    const Mat stiff = y.transpose() * (s * y);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ritz(stiff, gram);
    if (ritz.info() != Eigen::Success) throw SolverError("Rayleigh-Ritz step failed", res.history);
    y = y * ritz.eigenvectors();
    const double lambda = ritz.eigenvalues()(0);
    res.history.push_back(lambda);
    res.iterations = it;
    if (std::abs(lambda - prev) <= options.tol * std::abs(lambda)) {
      if (!(lambda > 0.0)) throw SolverError("Rayleigh quotient converged to a nonpositive value", res.history);
      res.lambda1 = lambda;
      res.C_rayleigh = 1.0 / lambda;
      res.eigenvector = y.col(0);
      return res;
    }
    prev = lambda;
    const Mat rhs = w.asDiagonal() * y;
    y = ldlt.solve(rhs);
  }
  throw SolverError(fmt::format("Rayleigh iteration stagnated after {} iterations", options.max_iter),
                    res.history);
}

OpNormResult operator_norm_Pt(const DiscreteGenerator& gen, const Vec& mu, double t0, double dt,
                              const OpNormOptions& options) {
  require_positive(mu);
  if (!(t0 > 0.0)) throw ContractViolation("t0 must be positive");
  const PhaseGrid& grid = gen.grid;
  const auto [steps, step] = plan_steps(gen, t0, std::min(dt, t0));
  const CrankNicolson fwd(gen.observable, step);
  const CrankNicolson adj(gen.density, step);
  const Vec w = mu / mu.sum();

  auto project = [&](Vec& g) { g.array() -= g.dot(w); };
  auto apply = [&](const CrankNicolson& cn, Vec g) {
    for (int k = 0; k < steps; ++k) g = cn.step(g);
    return g;
  };

  CounterRng rng(options.seed, 0);
  std::normal_distribution<double> normal;
  Vec y(grid.size());
  for (int k = 0; k < y.size(); ++k) y(k) = normal(rng);
  project(y);

  OpNormResult res;
  res.steps = steps;
  res.dt = step;
  double prev = -1.0;
  for (int it = 1; it <= options.max_iter; ++it) {
    y /= std::sqrt(y.cwiseProduct(y).dot(w));
    Vec z = apply(fwd, y);
    project(z);
    // μ-adjoint of P: step the density side on μ·z, then divide by μ.
    z = apply(adj, Vec(w.cwiseProduct(z))).cwiseQuotient(w);
    project(z);
    const double lambda = y.cwiseProduct(z).dot(w);
    res.history.push_back(std::sqrt(std::max(lambda, 0.0)));
    res.iterations = it;
    y = std::move(z);
    if (std::abs(lambda - prev) <= options.tol * std::max(lambda, 1e-300)) break;
    prev = lambda;
  }
  res.opnorm = res.history.back();
  res.contraction = res.opnorm < 1.0;
  return res;
}

double poincare_prop2(double K, double sigma_sup, double t0, double opnorm) {
  if (!(t0 > 0.0)) throw ContractViolation("t0 must be positive");
  if (!(opnorm >= 0.0)) throw ContractViolation("operator norm must be nonnegative");
  if (!(opnorm < 1.0))
    throw Inapplicable(fmt::format(
        "no contraction certified at t0 = {}: ||P_t0 - mu|| = {:.6g} >= 1", t0, opnorm));
  const double growth = std::abs(K) < 1e-10 ? t0 : std::expm1(2.0 * K * t0) / (2.0 * K);
  return sigma_sup * sigma_sup * growth / (1.0 - opnorm * opnorm);
}

}  // namespace kfp
