#include "kfp/cli/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <utility>

namespace kfp::cli {

namespace {

// Key, default ("" = required).
const std::vector<std::pair<std::string, std::string>>& table() {
  static const std::vector<std::pair<std::string, std::string>> t = {
      {"run.output_dir", "kfp-out"},
      {"run.seed", "0"},
      {"run.workers", "0"},
      {"model.family", ""},
      {"model.gamma", ""},
      {"model.d", "1"},
      {"model.sigma", "1"},
      {"model.potential", "quadratic"},
      {"model.stiffness", "1"},
      {"model.amplitude", "0"},
      {"model.freq", "1"},
      {"model.perturbation", "none"},
      {"model.delta", "0"},
      {"model.freq_x", "1"},
      {"model.freq_v", "1"},
      {"model.radius", "1"},
      {"grid.nx", "128"},
      {"grid.nv", "128"},
      {"grid.halfwidth_x", "auto"},
      {"grid.halfwidth_v", "auto"},
      {"grid.reference", "gaussian"},
      {"evolve.T", "10"},
      {"evolve.dt", "auto"},
      {"evolve.amplitude", "0.5"},
      {"evolve.slack", "0.05"},
      {"evolve.dissipation_tol", "0.05"},
      {"evolve.snapshots", "0 1 2 5 10"},
      {"poincare.constant", "rayleigh"},
      {"poincare.t0", "5"},
      {"poincare.dt", "auto"},
      {"poincare.opnorm_n", "64"},
      {"certify.route", "gradient"},
      {"certify.target_fraction", "0.5"},
      {"certify.n_pairs", "100000"},
      {"mc.dt", "0.01"},
      {"mc.T", "5"},
      {"mc.n_traj", "10000"},
      {"mc.integrator", "euler_maruyama"},
      {"mc.snapshots", "0 0.5 1 1.5 2 2.5 3 3.5 4 4.5 5"},
      {"mc.z0", "3 0"},
      {"mc.z0p", "-3 0"},
      {"mc.ergodic_traj", "200"},
      {"mc.ergodic_T", "500"},
      {"mc.burn_in", "20"},
      {"mc.ergodic_integrator", "splitting_oab"},
  };
  return t;
}

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  const std::string& raw(const std::string& key) const { return kv_.at(key); }

  double real(const std::string& key) const {
    return wrap(key, [&] { return parse_double(raw(key)); });
  }
  double positive(const std::string& key) const {
    const double v = real(key);
    if (!(v > 0.0)) throw UsageError(fmt::format("{} must be positive, got {}", key, raw(key)));
    return v;
  }
  std::optional<double> positive_or_auto(const std::string& key) const {
    if (raw(key) == "auto") return std::nullopt;
    return positive(key);
  }
  long long integer(const std::string& key, long long min) const {
    const long long v = wrap(key, [&] { return parse_integer(raw(key)); });
    if (v < min) throw UsageError(fmt::format("{} must be at least {}, got {}", key, min, v));
    return v;
  }
  std::vector<double> reals(const std::string& key) const {
    return wrap(key, [&] { return parse_doubles(raw(key)); });
  }
  template <class T>
  T choice(const std::string& key, const std::vector<std::pair<std::string, T>>& options) const {
    for (const auto& [name, value] : options)
      if (raw(key) == name) return value;
    std::string names;
    for (const auto& o : options) names += (names.empty() ? "" : ", ") + o.first;
    throw UsageError(fmt::format("{} = '{}' is not one of: {}", key, raw(key), names));
  }

 private:
  template <class F>
  static auto wrap(const std::string& key, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const ContractViolation& e) {
      throw UsageError(fmt::format("{}: {}", key, e.what()));
    }
  }

  const KeyValues& kv_;
};

ModelSpec parse_model(const Reader& r) {
  const int d = static_cast<int>(r.integer("model.d", 1));
  const double sigma = r.positive("model.sigma");
  const double gamma = r.positive("model.gamma");
  const auto family = r.choice<int>("model.family", {{"equilibrium", 0}, {"perturbed_harmonic", 1}});
  ModelSpec model;
  if (family == 0) {
    Potential p;
    p.family = r.choice<Potential::Family>(
        "model.potential",
        {{"quadratic", Potential::Family::quadratic}, {"tilted_cosine", Potential::Family::tilted_cosine}});
    p.stiffness = r.positive("model.stiffness");
    p.amplitude = r.real("model.amplitude");
    p.freq = r.positive("model.freq");
    model = ModelSpec::equilibrium(gamma, sigma, p, d);
  } else {
    Perturbation p;
    p.family = r.choice<Perturbation::Family>(
        "model.perturbation",
        {{"none", Perturbation::Family::none}, {"trig", Perturbation::Family::trig}, {"bump", Perturbation::Family::bump}});
    p.delta = r.real("model.delta");
    p.freq_x = r.real("model.freq_x");
    p.freq_v = r.real("model.freq_v");
    p.radius = r.positive("model.radius");
    model = ModelSpec::perturbed_harmonic(gamma, p, sigma, d);
  }
  try {
    model.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(fmt::format("model: {}", e.what()));
  }
  return model;
}

Integrator parse_integrator_key(const Reader& r, const std::string& key) {
  return r.choice<Integrator>(key, {{"euler_maruyama", Integrator::euler_maruyama},
                                    {"splitting_oab", Integrator::splitting_oab}});
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, _] : table()) k.push_back(key);
    return k;
  }();
  return keys;
}

RunConfig parse_config(const KeyValues& given) {
  KeyValues kv;
  for (const auto& [key, value] : given) {
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end())
      throw UsageError(fmt::format("unknown config key '{}'", key));
    kv[key] = value;
  }
  for (const auto& [key, def] : table()) {
    if (kv.count(key)) continue;
    if (def.empty()) throw UsageError(fmt::format("missing required config key '{}'", key));
    kv[key] = def;
  }
  const Reader r(kv);

  RunConfig cfg;
  cfg.model = parse_model(r);
  cfg.output_dir = r.raw("run.output_dir");
  if (cfg.output_dir.empty()) throw UsageError("run.output_dir must not be empty");
  cfg.seed = static_cast<std::uint64_t>(r.integer("run.seed", 0));
  cfg.workers = static_cast<int>(r.integer("run.workers", 0));

  cfg.grid.nx = static_cast<int>(r.integer("grid.nx", 3));
  cfg.grid.nv = static_cast<int>(r.integer("grid.nv", 3));
  cfg.grid.halfwidth_x = r.positive_or_auto("grid.halfwidth_x");
  cfg.grid.halfwidth_v = r.positive_or_auto("grid.halfwidth_v");
  cfg.grid.reference_weighting = r.choice<bool>("grid.reference", {{"gaussian", true}, {"none", false}});

  cfg.evolve.T = r.positive("evolve.T");
  cfg.evolve.dt = r.positive_or_auto("evolve.dt");
  cfg.evolve.amplitude = r.real("evolve.amplitude");
  if (!(std::abs(cfg.evolve.amplitude) < 1.0))
    throw UsageError("evolve.amplitude must lie in (-1, 1) so that the initial density stays positive");
  cfg.evolve.slack = r.real("evolve.slack");
  if (!(cfg.evolve.slack >= 0.0)) throw UsageError("evolve.slack must be nonnegative");
  cfg.evolve.dissipation_tol = r.positive("evolve.dissipation_tol");
  cfg.evolve.snapshots = r.reals("evolve.snapshots");
  for (double t : cfg.evolve.snapshots)
    if (!(t >= 0.0 && t <= cfg.evolve.T)) throw UsageError("evolve.snapshots must lie in [0, evolve.T]");

  cfg.poincare.constant = r.choice<PoincareConstant>(
      "poincare.constant", {{"rayleigh", PoincareConstant::rayleigh}, {"prop2", PoincareConstant::prop2}});
  cfg.poincare.t0 = r.positive("poincare.t0");
  cfg.poincare.dt = r.positive_or_auto("poincare.dt");
  cfg.poincare.opnorm_n = static_cast<int>(r.integer("poincare.opnorm_n", 8));

  cfg.certify.route = r.choice<CertifyRoute>(
      "certify.route", {{"gradient", CertifyRoute::gradient}, {"bounded", CertifyRoute::bounded}});
  cfg.certify.target_fraction = r.positive("certify.target_fraction");
  if (!(cfg.certify.target_fraction < 1.0)) throw UsageError("certify.target_fraction must be below 1");
  cfg.certify.n_pairs = r.integer("certify.n_pairs", 0);

  cfg.mc.dt = r.positive("mc.dt");
  cfg.mc.T = r.positive("mc.T");
  cfg.mc.n_traj = r.integer("mc.n_traj", 1);
  cfg.mc.integrator = parse_integrator_key(r, "mc.integrator");
  cfg.mc.snapshots = r.reals("mc.snapshots");
  cfg.mc.z0 = r.reals("mc.z0");
  cfg.mc.z0p = r.reals("mc.z0p");
  for (const auto* key : {"mc.z0", "mc.z0p"}) {
    const auto& z = std::string(key) == "mc.z0" ? cfg.mc.z0 : cfg.mc.z0p;
    if (static_cast<int>(z.size()) != 2 * cfg.model.d)
      throw UsageError(fmt::format("{} needs {} numbers (x then v), got {}", key, 2 * cfg.model.d, z.size()));
  }
  cfg.mc.ergodic_traj = r.integer("mc.ergodic_traj", 1);
  cfg.mc.ergodic_T = r.positive("mc.ergodic_T");
  cfg.mc.burn_in = r.real("mc.burn_in");
  if (!(cfg.mc.burn_in >= 0.0 && cfg.mc.burn_in < cfg.mc.ergodic_T))
    throw UsageError("mc.burn_in must lie in [0, mc.ergodic_T)");
  cfg.mc.ergodic_integrator = parse_integrator_key(r, "mc.ergodic_integrator");

  for (const auto& [key, _] : table()) cfg.echo.emplace_back(key, kv.at(key));
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  KeyValues kv;
  try {
    kv = read_key_values(path);
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError(fmt::format("override '{}' is not of the form section.key=value", o));
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  return parse_config(kv);
}

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::ofstream out(dir / "config.echo.ini");
  if (!out) throw Error(fmt::format("cannot write '{}'", (dir / "config.echo.ini").string()));
  std::string section;
  for (const auto& [key, value] : cfg.echo) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
}

PhasePoint to_phase_point(const std::vector<double>& z, int d) {
  if (static_cast<int>(z.size()) != 2 * d)
    throw UsageError(fmt::format("phase point needs {} numbers, got {}", 2 * d, z.size()));
  Vec x(d), v(d);
  for (int i = 0; i < d; ++i) {
    x(i) = z[i];
    v(i) = z[d + i];
  }
  return PhasePoint(x, v);
}

}  // namespace kfp::cli
