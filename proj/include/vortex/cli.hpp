#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <set>
#include <string>

#include "json.hpp"

#include "vortex/io.hpp"
#include "vortex/regularize.hpp"
#include "vortex/solve.hpp"
#include "vortex/verify.hpp"

namespace vortex {

enum class Mode { solve_min, solve_mp, verify, radial_oracle };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::solve_min: return "solve-min";
    case Mode::solve_mp: return "solve-mp";
    case Mode::verify: return "verify";
    case Mode::radial_oracle: return "radial-oracle";
  }
  return "unknown";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "solve-min") return Mode::solve_min;
  if (s == "solve-mp") return Mode::solve_mp;
  if (s == "verify") return Mode::verify;
  if (s == "radial-oracle") return Mode::radial_oracle;
  throw error(errc::validation, "mode must be one of solve-min, solve-mp, verify, radial-oracle (got \"" + s + "\")");
}

struct ExportFlags {
  bool fields = true;
  bool trace = true;
  bool diagnostics = true;
  bool ray_profiles = true;
};

struct RunConfig {
  ModelParams model;
  SolverConfig solver;
  Mode mode = Mode::solve_min;
  std::filesystem::path output_dir = "out";
  std::filesystem::path solution_dir;  // verify mode input; defaults to output_dir
  ExportFlags exports;
  std::vector<double> energy_radii{3.0, 4.0, 5.0};
  double radial_r_max = 0.0;  // 0: R
  std::string param_hash;
};

namespace detail {
using json = nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw error(errc::validation, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw error(errc::validation, "unknown key \"" + it.key() + "\" in " + where);
}

// Numbers, or strings of the form "<a>pi/<b>", "<a>*pi", "pi/<b>".
inline double read_real(const json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    static const std::regex re(R"(^\s*([0-9]*\.?[0-9]*)\s*\*?\s*pi\s*(?:/\s*([0-9]*\.?[0-9]+))?\s*$)");
    const std::string s = j.get<std::string>();
    std::smatch m;
    if (std::regex_match(s, m, re)) {
      const double a = m[1].length() ? std::stod(m[1].str()) : 1.0;
      const double b = m[2].matched ? std::stod(m[2].str()) : 1.0;
      return a * std::numbers::pi / b;
    }
  }
  throw error(errc::validation, key + " must be a number or a multiple of pi such as \"2pi/5\"");
}

inline std::vector<Point> read_points(const json& j, const std::string& key) {
  if (!j.is_array()) throw error(errc::validation, key + " must be an array of [x, y] pairs");
  std::vector<Point> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw error(errc::validation, key + " entries must be [x, y] number pairs");
    out.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

template <class T>
T read(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw error(errc::validation, key + " has the wrong type");
  }
}

inline std::string canonical_params(const ModelParams& m) {
  std::ostringstream os;
  os << "p=" << format_double(m.p) << ";q=" << format_double(m.q) << ";alpha0=" << format_double(m.alpha0)
     << ";beta0=" << format_double(m.beta0) << ";kappa=" << format_double(m.kappa)
     << ";delta=" << format_double(m.delta) << ";rho_bar=" << format_double(m.rho_bar)
     << ";R=" << format_double(m.R) << ";n=" << m.n << ";up=";
  for (const auto& p : m.vortices_up) os << format_double(p.x) << ',' << format_double(p.y) << ';';
  os << "down=";
  for (const auto& p : m.vortices_down) os << format_double(p.x) << ',' << format_double(p.y) << ';';
  return os.str();
}
}  // namespace detail

// Mode-specific requirements; called after any command-line override.
inline void validate_mode(const RunConfig& c) {
  const CouplingMatrix K = coupling_from(c.model.p, c.model.q);
  const double a = derived_alpha(c.model, K), b = derived_beta(c.model, K);
  const RegimeInfo info = validate_regime(K, a, b);
  if (c.mode == Mode::solve_mp && !info.mountain_pass_eligible)
    throw error(errc::validation,
                "solve-mp requires k12 > 0, beta > (alpha/4)(p/q + q/p - 2) and alpha < 8|K|/(k11 k12)");
  if (c.mode == Mode::radial_oracle) {
    const Point o{};
    if (c.model.N1() != 1 || c.model.N2() != 1 || !(c.model.vortices_up[0] == o) || !(c.model.vortices_down[0] == o))
      throw error(errc::validation, "radial-oracle requires exactly one vortex of each kind at the origin");
  }
}

inline RunConfig parse_config(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw error(errc::parse, std::string("malformed JSON: ") + e.what());
  }
  detail::check_keys(j, {"model", "solver", "mode", "output_dir", "solution_dir", "export", "verify"}, "config");
  if (!j.contains("model")) throw error(errc::validation, "config requires a \"model\" block");
  RunConfig c;
  const json& m = j["model"];
  detail::check_keys(m, {"p", "q", "vortices_up", "vortices_down", "alpha0", "beta0", "kappa", "delta", "rho_bar", "R", "n"},
                     "model");
  for (const char* req : {"p", "q", "alpha0", "beta0"})
    if (!m.contains(req)) throw error(errc::validation, std::string("model requires \"") + req + "\"");
  c.model.p = detail::read_real(m["p"], "p");
  c.model.q = detail::read_real(m["q"], "q");
  c.model.alpha0 = detail::read_real(m["alpha0"], "alpha0");
  c.model.beta0 = detail::read_real(m["beta0"], "beta0");
  if (m.contains("vortices_up")) c.model.vortices_up = detail::read_points(m["vortices_up"], "vortices_up");
  if (m.contains("vortices_down")) c.model.vortices_down = detail::read_points(m["vortices_down"], "vortices_down");
  if (m.contains("kappa")) c.model.kappa = detail::read_real(m["kappa"], "kappa");
  if (m.contains("rho_bar")) c.model.rho_bar = detail::read_real(m["rho_bar"], "rho_bar");
  if (m.contains("R")) c.model.R = detail::read_real(m["R"], "R");
  if (m.contains("n")) c.model.n = detail::read<int>(m["n"], "n");
  c.model.delta = m.contains("delta") ? detail::read_real(m["delta"], "delta")
                                      : default_delta(c.model.vortices_up, c.model.vortices_down);
  validate(c.model);

  if (j.contains("solver")) {
    const json& s = j["solver"];
    detail::check_keys(s, {"max_iters", "grad_tol", "memory", "line_search", "path_points", "deform_steps", "c_endpoint", "method"},
                       "solver");
    if (s.contains("max_iters")) c.solver.max_iters = detail::read<int>(s["max_iters"], "max_iters");
    if (s.contains("grad_tol")) c.solver.grad_tol = detail::read<double>(s["grad_tol"], "grad_tol");
    if (s.contains("memory")) c.solver.memory = detail::read<int>(s["memory"], "memory");
    if (s.contains("path_points")) c.solver.path_points = detail::read<int>(s["path_points"], "path_points");
    if (s.contains("deform_steps")) c.solver.deform_steps = detail::read<int>(s["deform_steps"], "deform_steps");
    if (s.contains("c_endpoint")) c.solver.c_endpoint = detail::read<double>(s["c_endpoint"], "c_endpoint");
    if (s.contains("method")) c.solver.method = detail::read<std::string>(s["method"], "method");
    if (s.contains("line_search")) {
      const json& l = s["line_search"];
      detail::check_keys(l, {"shrink", "c1"}, "solver.line_search");
      if (l.contains("shrink")) c.solver.line_search.shrink = detail::read<double>(l["shrink"], "shrink");
      if (l.contains("c1")) c.solver.line_search.c1 = detail::read<double>(l["c1"], "c1");
    }
  }
  c.solver.validate();
  if (j.contains("mode")) c.mode = parse_mode(detail::read<std::string>(j["mode"], "mode"));
  if (j.contains("output_dir")) c.output_dir = detail::read<std::string>(j["output_dir"], "output_dir");
  if (j.contains("solution_dir")) c.solution_dir = detail::read<std::string>(j["solution_dir"], "solution_dir");
  if (j.contains("export")) {
    const json& e = j["export"];
    detail::check_keys(e, {"fields", "trace", "diagnostics", "ray_profiles"}, "export");
    if (e.contains("fields")) c.exports.fields = detail::read<bool>(e["fields"], "fields");
    if (e.contains("trace")) c.exports.trace = detail::read<bool>(e["trace"], "trace");
    if (e.contains("diagnostics")) c.exports.diagnostics = detail::read<bool>(e["diagnostics"], "diagnostics");
    if (e.contains("ray_profiles")) c.exports.ray_profiles = detail::read<bool>(e["ray_profiles"], "ray_profiles");
  }
  if (j.contains("verify")) {
    const json& v = j["verify"];
    detail::check_keys(v, {"energy_radii", "radial_r_max"}, "verify");
    if (v.contains("energy_radii")) c.energy_radii = detail::read<std::vector<double>>(v["energy_radii"], "energy_radii");
    if (v.contains("radial_r_max")) c.radial_r_max = detail::read<double>(v["radial_r_max"], "radial_r_max");
  }
  validate_mode(c);
  c.param_hash = hex64(fnv1a(detail::canonical_params(c.model)));
  return c;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw error(errc::io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Pipeline

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 1;
inline constexpr int exit_nonconvergence = 2;
inline constexpr int exit_verification = 3;

namespace detail {
inline json norms_json(const Norms& n) { return {{"l2", n.l2}, {"max", n.max}}; }

inline json trace_json_summary(const SolutionBundle& b) {
  return {{"converged", b.converged},
          {"iterations", b.iterations},
          {"grad_norm", b.grad_norm},
          {"stop_reason", b.stop_reason},
          {"regime", std::string(to_string(b.regime))},
          {"xi_bar", b.xi_bar},
          {"zeta_bar", b.zeta_bar}};
}

// Runs the checks on a finished bundle; returns the list of failed invariants.
inline std::vector<std::string> verify_bundle(const RunConfig& c, const SolutionBundle& b, const RegularizedData& d,
                                              const CouplingMatrix& K, json& diag) {
  std::vector<std::string> failed;
  const ModelParams& m = c.model;
  const double alpha = derived_alpha(m, K), beta = derived_beta(m, K);
  const ConstraintTargets t = constraint_targets(K, alpha, beta);
  const ConstraintValues cv = constraint_integrals(b.xi, b.zeta, d.U, d.V, K);
  const double e1 = std::abs(cv.J1 / t.J1_target - 1.0), e2 = std::abs(cv.J2 / t.J2_target - 1.0);
  diag["J1"] = cv.J1;
  diag["J2"] = cv.J2;
  diag["J1_target"] = t.J1_target;
  diag["J2_target"] = t.J2_target;
  diag["constraint_rel_error"] = {e1, e2};
  if (!(e1 <= 1e-8 && e2 <= 1e-8)) failed.push_back("constraint identities (relative error > 1e-8)");

  const ResidualPair rm = residual_main(b, d, K);
  diag["residual_main"] = {{"xi", norms_json(rm.first)}, {"zeta", norms_json(rm.second)}};
  const ResidualPair rv = residual_vortex(b, d, m, K);
  diag["residual_vortex"] = {{"u", norms_json(rv.first)}, {"v", norms_json(rv.second)}};
  for (double v : {rm.first.max, rm.second.max, rv.first.max, rv.second.max})
    if (!std::isfinite(v)) failed.push_back("nonfinite PDE residual");

  const FluxReport fx = flux_check(b, d, m, K);
  diag["flux"] = {{"flux_up", fx.flux_up},       {"flux_down", fx.flux_down}, {"target_up", fx.target_up},
                  {"target_down", fx.target_down}, {"bps1_up", fx.bps1_up},     {"bps2_down_reported", fx.bps2_down}};
  if (!(std::abs(fx.flux_up - fx.target_up) <= 1e-6 * std::abs(fx.target_up) &&
        std::abs(fx.flux_down - fx.target_down) <= 1e-6 * std::abs(fx.target_down)))
    failed.push_back("flux identities (relative error > 1e-6)");

  const KktReport kk = kkt_check(b, d, K);
  diag["kkt"] = {{"lambda", kk.lambda}, {"mu", kk.mu}, {"lambda_chi1", kk.lambda_int}, {"mu_chi1", kk.mu_int},
                 {"sigma", K.sigma()}};
  if (!(std::abs(kk.lambda + 2.0) <= 1e-3 && std::abs(kk.mu / K.sigma() - 1.0) <= 1e-3))
    failed.push_back("KKT multipliers (lambda = -2, mu = |K|/k12^2 within 1e-3)");

  const DecayFit df = decay_fit(b);
  diag["xi_const_fit"] = {{"constant", df.xi.constant}, {"max_deviation", df.xi.max_deviation}};
  diag["zeta_const_fit"] = {{"constant", df.zeta.constant}, {"max_deviation", df.zeta.max_deviation}};
  const GaussianSlope gs = gaussian_slope(b, m, K);
  diag["gaussian_slope"] = {{"fitted", gs.fitted}, {"raw", gs.raw}};
  json vs = json::array();
  for (const auto& p : m.vortices_up) vs.push_back(vortex_log_slope(b, m, K, p));
  diag["vortex_log_slopes"] = vs;

  std::vector<double> radii;
  for (double r : c.energy_radii)
    if (r <= m.R - 1.0) radii.push_back(r);
  if (radii.size() >= 2) {
    const EnergyReport er = energy_divergence(b, d, m, K, radii);
    diag["energy"] = {{"radii", er.radii}, {"E_R", er.E_R}, {"ratio", er.ratio}, {"slope", er.slope}};
  }
  return failed;
}

inline void write_json(const json& j, const std::filesystem::path& p) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

inline void export_solution(const RunConfig& c, const SolutionBundle& b, const RegularizedData& d,
                            const CouplingMatrix& K) {
  const auto& out = c.output_dir;
  if (c.exports.fields) {
    export_field(b.xi, out / "xi.csv", c.param_hash);
    export_field(b.zeta, out / "zeta.csv", c.param_hash);
    const Reconstruction rc = reconstruct(b, d, c.model, K);
    export_field(rc.u, out / "u.csv", c.param_hash);
    export_field(rc.v, out / "v.csv", c.param_hash);
    export_field(rc.psi_up_sq, out / "psi_up_sq.csv", c.param_hash);
    export_field(rc.psi_down_sq, out / "psi_down_sq.csv", c.param_hash);
  }
  if (c.exports.ray_profiles) {
    const Reconstruction rc = reconstruct(b, d, c.model, K);
    export_ray({&b.xi, &b.zeta, &rc.psi_up_sq, &rc.psi_down_sq}, {"xi", "zeta", "psi_up_sq", "psi_down_sq"},
               out / "ray_profiles.csv");
  }
  if (c.exports.trace) export_trace(b.trace, out / "trace.csv");
}
}  // namespace detail

inline int run(const RunConfig& c, std::ostream& log = std::cerr) {
  using detail::json;
  json diag;
  diag["mode"] = std::string(to_string(c.mode));
  diag["param_hash"] = c.param_hash;
  int code = exit_ok;
  auto finish = [&](int rc) {
    diag["exit_code"] = rc;
    if (c.exports.diagnostics) {
      try {
        detail::write_json(diag, c.output_dir / "diagnostics.json");
      } catch (const error& e) {
        log << "error: " << e.what() << '\n';
        return exit_config;
      }
    }
    return rc;
  };
  try {
    std::filesystem::create_directories(c.output_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error: output_dir not writable: " << e.what() << '\n';
    return exit_config;
  }
  try {
    const ModelParams& m = c.model;
    const CouplingMatrix K = coupling_from(m.p, m.q);
    const double alpha = derived_alpha(m, K), beta = derived_beta(m, K);
    diag["derived"] = {{"k11", K.k11}, {"k12", K.k12}, {"det", K.det}, {"sigma", K.sigma()},
                       {"alpha", alpha}, {"beta", beta}, {"delta", m.delta}};
    const RegimeInfo info = validate_regime(K, alpha, beta);
    diag["regime"] = std::string(to_string(info.regime));
    diag["mountain_pass_eligible"] = info.mountain_pass_eligible;
    const Grid g(m.R, m.n);
    const RegularizedData d = regularize(m, K, g);

    if (c.mode == Mode::radial_oracle) {
      const double rmax = c.radial_r_max > 0.0 ? c.radial_r_max : m.R;
      const RadialSolution s = radial_oracle(m, K, alpha, beta, rmax);
      diag["radial"] = {{"xi0", s.xi0}, {"zeta0", s.zeta0}, {"boundary_residual", s.boundary_residual},
                        {"ode_defect", s.ode_defect}, {"flux_down", s.flux_down}, {"flux_up", s.flux_up},
                        {"r_max", rmax}};
      auto os = detail::open_out(c.output_dir / "radial_profile.csv");
      os << "r,xi,zeta,dxi,dzeta\n";
      for (std::size_t k = 0; k < s.r_nodes.size(); ++k)
        os << format_double(s.r_nodes[k]) << ',' << format_double(s.xi_r[k]) << ',' << format_double(s.zeta_r[k])
           << ',' << format_double(s.dxi_r[k]) << ',' << format_double(s.dzeta_r[k]) << '\n';
      const bool ok = s.boundary_residual < 1e-8 && s.ode_defect < 1e-8;
      if (!ok) diag["failed"] = {"radial oracle residual >= 1e-8"};
      return finish(ok ? exit_ok : exit_verification);
    }

    SolutionBundle b;
    if (c.mode == Mode::verify) {
      const auto dir = c.solution_dir.empty() ? c.output_dir : c.solution_dir;
      b.xi = import_field(dir / "xi.csv");
      b.zeta = import_field(dir / "zeta.csv");
      if (!(b.xi.grid == g) || !(b.zeta.grid == g))
        throw error(errc::validation, "stored solution grid does not match the config (R, n)");
      b.xi_bar = dmu_decompose(b.xi, d.h0, d.mu_mass).mean;
      b.zeta_bar = dmu_decompose(b.zeta, d.h0, d.mu_mass).mean;
      b.regime = info.regime;
      b.converged = true;
      b.stop_reason = "loaded";
    } else if (c.mode == Mode::solve_mp) {
      MountainPassReport rep;
      try {
        b = mountain_pass(m, d, K, c.solver, &rep);
      } catch (const error& e) {
        diag["mountain_pass"] = {{"c", rep.c}, {"E_end", rep.E_end}, {"ray", rep.ray}, {"path_profile", rep.profile},
                                 {"steps", rep.steps}, {"outcome", rep.outcome}};
        diag["error"] = {{"kind", std::string(to_string(e.code()))}, {"message", e.what()}};
        log << "solve-mp: " << e.what() << '\n';
        return finish(exit_nonconvergence);
      }
      diag["mountain_pass"] = {{"c", rep.c}, {"E_end", rep.E_end}, {"steps", rep.steps}, {"outcome", rep.outcome}};
    } else {
      b = minimize(m, d, K, c.solver);
    }
    diag["solve"] = detail::trace_json_summary(b);
    if (c.mode != Mode::verify) detail::export_solution(c, b, d, K);
    if (!b.converged) {
      log << "not converged: " << b.stop_reason << '\n';
      return finish(exit_nonconvergence);
    }
    const auto failed = detail::verify_bundle(c, b, d, K, diag);
    diag["failed"] = failed;
    for (const auto& f : failed) log << "verification failed: " << f << '\n';
    code = failed.empty() ? exit_ok : exit_verification;
  } catch (const error& e) {
    diag["error"] = {{"kind", std::string(to_string(e.code()))}, {"message", e.what()}};
    log << "error: " << e.what() << '\n';
    switch (e.code()) {
      case errc::validation:
      case errc::parse:
      case errc::io:
      case errc::invalid_argument: code = exit_config; break;
      case errc::shooting_failure: code = exit_verification; break;
      default: code = exit_nonconvergence; break;
    }
  }
  return finish(code);
}

}  // namespace vortex
