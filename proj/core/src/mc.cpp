#include "kfp/mc.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <random>

#include "kfp/errors.hpp"
#include "kfp/parallel.hpp"
#include "kfp/rng.hpp"

namespace kfp {

namespace {

constexpr double kBlowUp = 1e8;
constexpr int kChunks = 64;

/// One step of the chosen integrator on the stacked state z = (x, v). The noise
/// vector is an input so that coupled copies can share it.
class Stepper {
 public:
  Stepper(const ModelSpec& model, double dt, Integrator integrator)
      : model_(model), dt_(dt), integrator_(integrator), d_(model.d) {
    if (integrator_ == Integrator::splitting_oab) {
      const Mat m = linear_part(model_);
      const int n = 2 * d_;
      Mat q = Mat::Zero(n, n);
      q.bottomRightCorner(d_, d_) = 2.0 * model.sigma * model.sigma * Mat::Identity(d_, d_);
      // Van Loan: exp([[-M, Q], [0, Mᵀ]] dt) = [[·, G], [0, Φᵀ]], covariance Φ G.
      Mat c = Mat::Zero(2 * n, 2 * n);
      c.topLeftCorner(n, n) = -m;
      c.topRightCorner(n, n) = q;
      c.bottomRightCorner(n, n) = m.transpose();
      const Mat e = (c * dt).exp();
      phi_ = e.bottomRightCorner(n, n).transpose();
      Mat cov = phi_ * e.topRightCorner(n, n);
      cov = 0.5 * (cov + cov.transpose());
      Eigen::SelfAdjointEigenSolver<Mat> es(cov);
      chol_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
  }

  int noise_dim() const { return integrator_ == Integrator::euler_maruyama ? d_ : 2 * d_; }

  void step(Vec& z, const Vec& xi) const {
    if (integrator_ == Integrator::euler_maruyama) {
      const PhasePoint p = PhasePoint::from_stacked(z);
      const Vec b = eval_drift(model_, p);
      z.head(d_) += dt_ * p.v;
      z.tail(d_) += dt_ * b + std::sqrt(2.0 * model_.sigma * model_.sigma * dt_) * xi;
      return;
    }
    kick(z);
    z = phi_ * z + chol_ * xi;
    kick(z);
  }

 private:
  void kick(Vec& z) const {
    z.tail(d_) += 0.5 * dt_ * nonlinear_remainder(model_, PhasePoint::from_stacked(z));
  }

  const ModelSpec& model_;
  double dt_;
  Integrator integrator_;
  int d_;
  Mat phi_;
  Mat chol_;
};

struct Plan {
  int steps = 0;
  double dt = 0.0;
  std::vector<int> snapshots;
};

Plan make_plan(const SdeRunConfig& cfg) {
  Plan p;
  p.steps = cfg.T == 0.0 ? 0 : static_cast<int>(std::ceil(cfg.T / cfg.dt - 1e-9));
  p.dt = p.steps == 0 ? cfg.dt : cfg.T / p.steps;
  if (cfg.snapshot_times.empty()) {
    p.snapshots = {0, p.steps};
  } else {
    for (double t : cfg.snapshot_times) {
      if (t < 0.0 || t > cfg.T * (1.0 + 1e-12))
        throw ContractViolation(fmt::format("snapshot time {} outside [0, {}]", t, cfg.T));
      p.snapshots.push_back(p.steps == 0 ? 0 : static_cast<int>(std::lround(t / p.dt)));
    }
  }
  std::sort(p.snapshots.begin(), p.snapshots.end());
  p.snapshots.erase(std::unique(p.snapshots.begin(), p.snapshots.end()), p.snapshots.end());
  return p;
}

void fill_normal(Vec& xi, CounterRng& rng, std::normal_distribution<double>& normal) {
  for (Eigen::Index k = 0; k < xi.size(); ++k) xi(k) = normal(rng);
}

void check_finite(const Vec& z, double dt, int step) {
  if (!(z.squaredNorm() <= kBlowUp * kBlowUp))
    throw Divergence(fmt::format("trajectory left |z| <= 1e8 at step {} with dt = {}; reduce dt",
                                 step, dt));
}

void check_dims(const ModelSpec& model, const PhasePoint& z) {
  if (z.dim() != model.d || z.v.size() != model.d)
    throw ContractViolation(fmt::format("phase point has dimension {}, model has {}", z.dim(), model.d));
}

}  // namespace

Integrator parse_integrator(const std::string& name) {
  if (name == "euler_maruyama") return Integrator::euler_maruyama;
  if (name == "splitting_oab") return Integrator::splitting_oab;
  throw ContractViolation(fmt::format("unknown integrator '{}' (euler_maruyama|splitting_oab)", name));
}

std::string to_string(Integrator integrator) {
  return integrator == Integrator::euler_maruyama ? "euler_maruyama" : "splitting_oab";
}

void SdeRunConfig::validate() const {
  if (!(dt > 0.0)) throw ContractViolation("mc dt must be positive");
  if (!(T >= 0.0)) throw ContractViolation("mc T must be nonnegative");
  if (n_traj < 1) throw ContractViolation("mc n_traj must be >= 1");
}

std::vector<Trajectory> integrate(const ModelSpec& model, const PhasePoint& z0,
                                  const SdeRunConfig& cfg) {
  cfg.validate();
  model.validate();
  check_dims(model, z0);
  const Plan plan = make_plan(cfg);
  const Stepper stepper(model, plan.dt, cfg.integrator);
  std::vector<Trajectory> out(static_cast<std::size_t>(cfg.n_traj));

  parallel_chunks(cfg.n_traj, kChunks, cfg.workers, [&](int, long long begin, long long end) {
    Vec xi(stepper.noise_dim());
    for (long long i = begin; i < end; ++i) {
      CounterRng rng(cfg.seed, static_cast<std::uint64_t>(i));
      std::normal_distribution<double> normal;
      Trajectory& tr = out[static_cast<std::size_t>(i)];
      Vec z = z0.stacked();
      std::size_t next = 0;
      auto record = [&](int n) {
        while (next < plan.snapshots.size() && plan.snapshots[next] == n) {
          tr.t.push_back(n * plan.dt);
          tr.z.push_back(PhasePoint::from_stacked(z));
          ++next;
        }
      };
      record(0);
      for (int n = 1; n <= plan.steps; ++n) {
        fill_normal(xi, rng, normal);
        stepper.step(z, xi);
        check_finite(z, plan.dt, n);
        record(n);
      }
    }
  });
  return out;
}

CouplingResult couple_synchronous(const ModelSpec& model, const PhasePoint& z0,
                                  const PhasePoint& z0p, const SdeRunConfig& cfg,
                                  const ContractionCertificate& cert, double K) {
  cfg.validate();
  model.validate();
  check_dims(model, z0);
  check_dims(model, z0p);
  if (cert.dim() != model.d) throw ContractViolation("certificate dimension does not match model");
  const Plan plan = make_plan(cfg);
  const Stepper stepper(model, plan.dt, cfg.integrator);
  const std::size_t ns = plan.snapshots.size();
  const Mat& A = cert.A;

  CouplingResult res;
  const double G = 1.0 + drift_bounds(model).grad_b_sup;
  const double gdt = G * plan.dt;
  if (cfg.integrator == Integrator::euler_maruyama) {
    // Q_{n+1} - Q_n = 2 dt f·AΔ + dt² f·Af with f = (Δv, Δb), |f| ≤ G|Δ|.
    res.growth_rate = 2.0 * K + plan.dt * G * G;
    res.bias_coeff = cert.A_opnorm * G * gdt;
  } else {
    // One step deviates from the Euler update by at most c (G dt)² |Δ|, c = 2e^{G dt}.
    const double c = 2.0 * std::exp(gdt);
    // |Δ + dt f + r|² ≤ (1 + 2K dt + (G dt)²)|Δ|² + 2(1 + G dt)|r||Δ| + |r|².
    res.growth_rate = 2.0 * K + plan.dt * G * G * (1.0 + 2.0 * c * (1.0 + gdt) + c * c * gdt * gdt);
    res.bias_coeff = cert.A_opnorm * (2.0 * c * gdt * gdt + gdt * gdt * (1.0 + c * gdt) * (1.0 + c * gdt)) / plan.dt;
  }

  struct Partial {
    std::vector<double> s_sq, s_sq2, s_a, s_a2;
    long long checks = 0, violations = 0;
    double worst = -std::numeric_limits<double>::infinity();
  };
  std::vector<Partial> partial(kChunks);

  parallel_chunks(cfg.n_traj, kChunks, cfg.workers, [&](int chunk, long long begin, long long end) {
    Partial& p = partial[static_cast<std::size_t>(chunk)];
    p.s_sq.assign(ns, 0.0);
    p.s_sq2.assign(ns, 0.0);
    p.s_a.assign(ns, 0.0);
    p.s_a2.assign(ns, 0.0);
    Vec xi(stepper.noise_dim());
    for (long long i = begin; i < end; ++i) {
      CounterRng rng(cfg.seed, static_cast<std::uint64_t>(i));
      std::normal_distribution<double> normal;
      Vec z = z0.stacked(), zp = z0p.stacked();
      std::size_t next = 0;
      auto record = [&](int n) {
        while (next < ns && plan.snapshots[next] == n) {
          const Vec gap = z - zp;
          const double sq = gap.squaredNorm();
          const double qa = gap.dot(A * gap);
          p.s_sq[next] += sq;
          p.s_sq2[next] += sq * sq;
          p.s_a[next] += qa;
          p.s_a2[next] += qa * qa;
          ++next;
        }
      };
      record(0);
      for (int n = 1; n <= plan.steps; ++n) {
        const Vec gap0 = z - zp;
        const double sq0 = gap0.squaredNorm();
        const double q0 = gap0.dot(A * gap0);
        fill_normal(xi, rng, normal);
        stepper.step(z, xi);
        stepper.step(zp, xi);
        check_finite(z, plan.dt, n);
        check_finite(zp, plan.dt, n);
        if (sq0 > 0.0 && std::sqrt(sq0) >= cert.R) {
          const Vec gap1 = z - zp;
          const double q1 = gap1.dot(A * gap1);
          const double rel = ((q1 - q0) / plan.dt + 2.0 * cert.eps_contract * sq0) / sq0 - res.bias_coeff;
          const double tol = 1e-12 * (std::abs(q0) + std::abs(q1)) / (plan.dt * sq0);
          ++p.checks;
          if (rel > tol) ++p.violations;
          p.worst = std::max(p.worst, rel);
        }
        record(n);
      }
    }
  });

  CouplingStats& st = res.stats;
  const double n = static_cast<double>(cfg.n_traj);
  const double z2 = 1.959963984540054;
  std::vector<double> s_sq(ns, 0.0), s_sq2(ns, 0.0), s_a(ns, 0.0), s_a2(ns, 0.0);
  res.verdict2_worst = -std::numeric_limits<double>::infinity();
  for (const Partial& p : partial) {
    if (p.s_sq.empty()) continue;
    for (std::size_t k = 0; k < ns; ++k) {
      s_sq[k] += p.s_sq[k];
      s_sq2[k] += p.s_sq2[k];
      s_a[k] += p.s_a[k];
      s_a2[k] += p.s_a2[k];
    }
    res.verdict2_checks += p.checks;
    res.verdict2_violations += p.violations;
    res.verdict2_worst = std::max(res.verdict2_worst, p.worst);
  }
  auto half_width = [&](double s, double s2) {
    if (cfg.n_traj < 2) return 0.0;
    const double var = std::max(0.0, (s2 - s * s / n) / (n - 1.0));
    return z2 * std::sqrt(var / n);
  };
  const double d0 = (z0.stacked() - z0p.stacked()).squaredNorm();
  for (std::size_t k = 0; k < ns; ++k) {
    const double t = plan.snapshots[k] * plan.dt;
    st.times.push_back(t);
    st.mean_sq_dist.push_back(s_sq[k] / n);
    st.mean_A_dist.push_back(s_a[k] / n);
    st.ci_sq_dist.push_back(half_width(s_sq[k], s_sq2[k]));
    st.ci_A_dist.push_back(half_width(s_a[k], s_a2[k]));
    const double bound = std::exp(res.growth_rate * t) * d0;
    res.bound.push_back(bound);
    if (st.mean_sq_dist[k] - st.ci_sq_dist[k] > bound * (1.0 + 1e-12)) ++res.verdict1_violations;
  }
  res.verdict1 = res.verdict1_violations == 0;
  res.verdict2 = res.verdict2_violations == 0;
  return res;
}

ErgodicMoments ergodic_moments(const ModelSpec& model, const PhasePoint& z0,
                               const SdeRunConfig& cfg, double burn_in, int batches_per_traj) {
  cfg.validate();
  model.validate();
  check_dims(model, z0);
  if (!(burn_in >= 0.0) || !(burn_in < cfg.T))
    throw ContractViolation("burn_in must lie in [0, T)");
  if (batches_per_traj < 1) throw ContractViolation("need at least one batch per trajectory");
  const Plan plan = make_plan(cfg);
  const Stepper stepper(model, plan.dt, cfg.integrator);
  const int first = static_cast<int>(std::ceil(burn_in / plan.dt - 1e-9)) + 1;
  const int kept = plan.steps - first + 1;
  if (kept < batches_per_traj) throw ContractViolation("too few steps after burn-in for the batches");
  const int d = model.d;

  // Per (trajectory, batch): means of x, v, x², v², xv, x²v².
  constexpr int kQ = 6;
  const long long nb = cfg.n_traj * batches_per_traj;
  std::vector<double> batch(static_cast<std::size_t>(nb * kQ), 0.0);

  parallel_chunks(cfg.n_traj, kChunks, cfg.workers, [&](int, long long begin, long long end) {
    Vec xi(stepper.noise_dim());
    for (long long i = begin; i < end; ++i) {
      CounterRng rng(cfg.seed, static_cast<std::uint64_t>(i));
      std::normal_distribution<double> normal;
      Vec z = z0.stacked();
      std::vector<long long> counts(static_cast<std::size_t>(batches_per_traj), 0);
      double* out = &batch[static_cast<std::size_t>(i * batches_per_traj * kQ)];
      for (int n = 1; n <= plan.steps; ++n) {
        fill_normal(xi, rng, normal);
        stepper.step(z, xi);
        check_finite(z, plan.dt, n);
        if (n < first) continue;
        const int b = static_cast<int>(static_cast<long long>(n - first) * batches_per_traj / kept);
        const double x = z(0), v = z(d);
        double* q = out + b * kQ;
        q[0] += x;
        q[1] += v;
        q[2] += x * x;
        q[3] += v * v;
        q[4] += x * v;
        q[5] += x * x * v * v;
        ++counts[static_cast<std::size_t>(b)];
      }
      for (int b = 0; b < batches_per_traj; ++b)
        for (int k = 0; k < kQ; ++k) out[b * kQ + k] /= static_cast<double>(counts[static_cast<std::size_t>(b)]);
    }
  });

  std::array<double, kQ> m{};
  for (long long b = 0; b < nb; ++b)
    for (int k = 0; k < kQ; ++k) m[k] += batch[static_cast<std::size_t>(b * kQ + k)];
  for (double& v : m) v /= static_cast<double>(nb);

  // Delta method: the CI of a smooth functional uses its influence per batch.
  auto estimate = [&](double value, auto&& influence) {
    MomentEstimate e;
    e.value = value;
    if (nb < 2) return e;
    double s = 0.0, s2 = 0.0;
    for (long long b = 0; b < nb; ++b) {
      const double psi = influence(&batch[static_cast<std::size_t>(b * kQ)]);
      s += psi;
      s2 += psi * psi;
    }
    const double n = static_cast<double>(nb);
    const double var = std::max(0.0, (s2 - s * s / n) / (n - 1.0));
    e.ci = 1.959963984540054 * std::sqrt(var / n);
    return e;
  };

  ErgodicMoments r;
  r.batches = nb;
  r.samples = static_cast<long long>(kept) * cfg.n_traj;
  r.mean_x = estimate(m[0], [](const double* q) { return q[0]; });
  r.mean_v = estimate(m[1], [](const double* q) { return q[1]; });
  r.var_x = estimate(m[2] - m[0] * m[0], [&](const double* q) { return q[2] - 2.0 * m[0] * q[0]; });
  r.var_v = estimate(m[3] - m[1] * m[1], [&](const double* q) { return q[3] - 2.0 * m[1] * q[1]; });
  r.cov_xv = estimate(m[4] - m[0] * m[1],
                      [&](const double* q) { return q[4] - m[1] * q[0] - m[0] * q[1]; });
  r.cov_x2v2 = estimate(m[5] - m[2] * m[3],
                        [&](const double* q) { return q[5] - m[3] * q[2] - m[2] * q[3]; });
  return r;
}

}  // namespace kfp
