#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/functional.hpp"
#include "vortex/lbfgs.hpp"
#include "vortex/poisson.hpp"

namespace vortex {

// ---------------------------------------------------------------------------
// Field pairs as optimization vectors

struct FieldPair {
  ScalarField xi, zeta;
};

inline double dot(const ScalarField& a, const ScalarField& b) {
  const int n = a.grid.n();
  return sum_rows(n, [&](std::size_t j) {
    const std::size_t o = j * n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a.values[o + i] * b.values[o + i];
    return s;
  });
}

inline double dot(const FieldPair& a, const FieldPair& b) { return dot(a.xi, b.xi) + dot(a.zeta, b.zeta); }

inline void axpy(double a, const ScalarField& x, ScalarField& y) {
  for (std::size_t k = 0; k < y.values.size(); ++k) y.values[k] += a * x.values[k];
}

inline void axpy(double a, const FieldPair& x, FieldPair& y) {
  axpy(a, x.xi, y.xi);
  axpy(a, x.zeta, y.zeta);
}

inline void scale(FieldPair& x, double a) {
  for (auto& v : x.xi.values) v *= a;
  for (auto& v : x.zeta.values) v *= a;
}

inline double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (double v : f.values) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// Configuration and results

struct LineSearchConfig {
  double shrink = 0.5;
  double c1 = 1e-4;
};

struct SolverConfig {
  int max_iters = 500;
  double grad_tol = 1e-8;
  int memory = 10;
  LineSearchConfig line_search;
  int path_points = 21;
  int deform_steps = 200;
  double c_endpoint = 0.0;  // 0: search by doubling from 1
  std::string method = "lbfgs";

  void validate() const {
    if (!(grad_tol > 0.0)) throw error(errc::validation, "solver grad_tol > 0 required");
    if (max_iters < 0) throw error(errc::validation, "solver max_iters >= 0 required");
    if (memory < 0) throw error(errc::validation, "solver memory >= 0 required");
    if (path_points < 11) throw error(errc::validation, "solver path_points >= 11 required");
    if (!(line_search.shrink > 0.0 && line_search.shrink < 1.0))
      throw error(errc::validation, "line search shrink must lie in (0, 1)");
    if (!(line_search.c1 > 0.0 && line_search.c1 < 0.5))
      throw error(errc::validation, "line search c1 must lie in (0, 1/2)");
    if (method != "lbfgs" && method != "gradient")
      throw error(errc::validation, "solver method must be \"lbfgs\" or \"gradient\"");
    if (c_endpoint < 0.0) throw error(errc::validation, "c_endpoint >= 0 required");
  }

  LbfgsOptions lbfgs() const {
    LbfgsOptions o;
    o.max_iters = max_iters;
    o.grad_tol = grad_tol;
    o.memory = method == "gradient" ? 0 : memory;
    o.shrink = line_search.shrink;
    o.c1 = line_search.c1;
    return o;
  }
};

enum class Regime { min_neg_k12, min_pos_k12, mountain_pass, energy_critical };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::min_neg_k12: return "min-neg-k12";
    case Regime::min_pos_k12: return "min-pos-k12";
    case Regime::mountain_pass: return "mountain-pass";
    case Regime::energy_critical: return "energy-critical-point";
  }
  return "unknown";
}

struct RegimeInfo {
  Regime regime = Regime::min_neg_k12;
  bool mountain_pass_eligible = false;
};

// Admissible (alpha, beta) regions for positive-definite K.
inline RegimeInfo validate_regime(const CouplingMatrix& K, double alpha, double beta) {
  if (!K.positive_definite()) throw error(errc::validation, "coupling matrix must be positive definite (q > 0)");
  if (!(alpha > 0.0)) throw error(errc::validation, "alpha > 0 required");
  if (!(beta > 0.0)) throw error(errc::validation, "beta > 0 required");
  const double crit = alpha * K.k12 * K.k12 / K.det;  // = (alpha/4)(p/q + q/p - 2)
  RegimeInfo info;
  if (K.k12 < 0.0) {
    if (!(beta < crit))
      throw error(errc::validation, "for k12 < 0 a minimizer requires 0 < beta < (alpha/4)(p/q + q/p - 2)");
    info.regime = Regime::min_neg_k12;
  } else {
    if (!(beta > crit))
      throw error(errc::validation, "for k12 > 0 a minimizer requires beta > (alpha/4)(p/q + q/p - 2)");
    info.regime = Regime::min_pos_k12;
    info.mountain_pass_eligible = alpha < 8.0 * K.det / (K.k11 * K.k12);
  }
  return info;
}

struct SolutionBundle {
  ScalarField xi, zeta;
  double xi_bar = 0.0;
  double zeta_bar = 0.0;
  Regime regime = Regime::min_pos_k12;
  std::vector<TraceEntry> trace;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  double sigma = 0.0;
  std::string stop_reason;
};

// ---------------------------------------------------------------------------
// Preconditioner: block inverse of (s (-L) + e) W per component.

class BlockPreconditioner {
 public:
  BlockPreconditioner(const Grid& g, double s1, double e1, double s2, double e2)
      : poisson_(std::make_unique<NeumannPoisson>(g)), s1_(s1), e1_(e1), s2_(s2), e2_(e2) {}

  FieldPair apply(const FieldPair& r) const {
    const Grid& g = r.xi.grid;
    FieldPair z{ScalarField(g), ScalarField(g)};
    apply_one(r.xi, z.xi, s1_, e1_);
    apply_one(r.zeta, z.zeta, s2_, e2_);
    return z;
  }

 private:
  void apply_one(const ScalarField& r, ScalarField& z, double s, double e) const {
    const Grid& g = r.grid;
    std::vector<double> tmp(g.size());
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) tmp[g.index(i, j)] = r(i, j) / g.weight(i, j);
    poisson_->solve(tmp.data(), z.values.data(), s, e);
  }

  std::unique_ptr<NeumannPoisson> poisson_;
  double s1_, e1_, s2_, e2_;
};

// ---------------------------------------------------------------------------
// Reduced constrained minimization

namespace detail {
class ReducedObjective {
 public:
  ReducedObjective(const ReducedProblem& P)
      : P_(P), prec_(P.data->grid(), 1.0, 0.0, P.sigma, 0.0) {}

  Evaluation<FieldPair> evaluate(const FieldPair& x) {
    ReducedEval e = reduced_eval(P_, x.xi, x.zeta, true);
    Evaluation<FieldPair> out;
    out.value = e.value;
    const ScalarField Gx = tangent_representative(e.gxi, P_.data->h0);
    const ScalarField Gz = tangent_representative(e.gzeta, P_.data->h0);
    out.stationarity = std::max(max_abs(Gx), max_abs(Gz));
    out.grad = FieldPair{std::move(e.gxi), std::move(e.gzeta)};
    transpose_project(out.grad.xi);
    transpose_project(out.grad.zeta);
    last_means = e.means;
    return out;
  }

  FieldPair precondition(const FieldPair& g) const { return prec_.apply(g); }

  void project(FieldPair& d) const {
    project_zero_mean(d.xi, P_.data->h0, P_.data->mu_mass);
    project_zero_mean(d.zeta, P_.data->h0, P_.data->mu_mass);
  }

  Means last_means;

 private:
  // g <- g - (sum g / mu_mass) W h0, the adjoint of the dmu projection.
  void transpose_project(ScalarField& g) const {
    double s = 0.0;
    for (double v : g.values) s += v;
    const double c = s / P_.data->mu_mass;
    const Grid& gr = g.grid;
    for (int j = 0; j < gr.n(); ++j)
      for (int i = 0; i < gr.n(); ++i) g(i, j) -= c * gr.weight(i, j) * P_.data->h0(i, j);
  }

  const ReducedProblem& P_;
  BlockPreconditioner prec_;
};
}  // namespace detail

struct MinimizeOptions {
  double sigma = 0.0;  // 0: |K|/k12^2
  // Called on every accepted iterate with the primes and their closed-form means.
  std::function<void(int, const ScalarField&, const ScalarField&, const Means&)> on_iterate;
};

inline SolutionBundle minimize(const ModelParams& params, const RegularizedData& data, const CouplingMatrix& K,
                               const SolverConfig& config, const MinimizeOptions& mopt = {}) {
  config.validate();
  const double alpha = derived_alpha(params, K);
  const double beta = derived_beta(params, K);
  const RegimeInfo info = validate_regime(K, alpha, beta);
  const ReducedProblem P = make_reduced(data, K, alpha, beta, mopt.sigma);
  detail::ReducedObjective obj(P);

  const Grid& g = data.grid();
  FieldPair x{ScalarField(g), ScalarField(g)};
  SolutionBundle b;
  b.regime = info.regime;
  b.sigma = P.sigma;

  std::vector<TraceEntry> trace;
  LbfgsResult<FieldPair> res;
  FieldPair last = x;
  auto cb = [&](int it, const FieldPair& xx, const Evaluation<FieldPair>& ev) {
    trace.push_back({it, ev.value, ev.stationarity});
    if (mopt.on_iterate) mopt.on_iterate(it, xx.xi, xx.zeta, obj.last_means);
    last = xx;
  };
  try {
    res = lbfgs_minimize(obj, x, config.lbfgs(),
                         std::function<void(int, const FieldPair&, const Evaluation<FieldPair>&)>(cb));
    b.converged = res.converged;
    b.stop_reason = res.stop_reason;
    b.iterations = res.iters;
  } catch (const error& e) {
    if (e.code() != errc::line_search_failure && e.code() != errc::overflow) throw;
    res.x = last;
    b.converged = false;
    b.stop_reason = std::string(to_string(e.code())) + ": " + e.what();
    b.iterations = trace.empty() ? 0 : trace.back().iter;
  }
  b.trace = trace;
  b.grad_norm = trace.empty() ? INFINITY : trace.back().grad_norm;

  const Means m = closed_form_means(res.x.xi, res.x.zeta, P.targets, data.U, data.V, K);
  b.xi_bar = m.xi_bar;
  b.zeta_bar = m.zeta_bar;
  b.xi = std::move(res.x.xi);
  b.zeta = std::move(res.x.zeta);
  for (auto& v : b.xi.values) v += m.xi_bar;
  for (auto& v : b.zeta.values) v += m.zeta_bar;
  return b;
}

// ---------------------------------------------------------------------------
// Direct minimization of E (strictly convex for positive-definite K).

namespace detail {
inline BlockPreconditioner energy_preconditioner(const RegularizedData& data, const CouplingMatrix& K, double alpha,
                                                 double beta) {
  const ConstraintTargets t = constraint_targets(K, alpha, beta);
  const double c = 4.0 * K.det / K.k11;
  const double a = K.k11 / (2.0 * K.k12);
  const double area = data.grid().area();
  const double e1 = 0.25 * c * t.J1_target / area;
  const double e2 = (0.25 * c * t.J1_target + c * a * a * t.J2_target) / area;
  return BlockPreconditioner(data.grid(), 1.0, e1, K.sigma(), e2);
}

class EnergyObjective {
 public:
  EnergyObjective(const RegularizedData& d, const CouplingMatrix& K, double alpha, double beta)
      : d_(d), K_(K), prec_(energy_preconditioner(d, K, alpha, beta)) {}

  Evaluation<FieldPair> evaluate(const FieldPair& x) {
    EnergyEval e = energy_eval(d_, K_, x.xi, x.zeta, true);
    Evaluation<FieldPair> out;
    out.value = e.value;
    out.stationarity = stationarity(e);
    out.grad = FieldPair{std::move(e.gxi), std::move(e.gzeta)};
    return out;
  }
  FieldPair precondition(const FieldPair& g) const { return prec_.apply(g); }
  void project(FieldPair&) const {}

  static double stationarity(const EnergyEval& e) {
    const Grid& g = e.gxi.grid;
    double m = 0.0;
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) {
        const double w = g.weight(i, j);
        m = std::max({m, std::abs(e.gxi(i, j)) / w, std::abs(e.gzeta(i, j)) / w});
      }
    return m;
  }

 private:
  const RegularizedData& d_;
  CouplingMatrix K_;
  BlockPreconditioner prec_;
};
}  // namespace detail

inline SolutionBundle minimize_energy(const ModelParams& params, const RegularizedData& data, const CouplingMatrix& K,
                                      const SolverConfig& config) {
  config.validate();
  const double alpha = derived_alpha(params, K);
  const double beta = derived_beta(params, K);
  validate_regime(K, alpha, beta);
  detail::EnergyObjective obj(data, K, alpha, beta);
  const Grid& g = data.grid();
  SolutionBundle b;
  b.regime = Regime::energy_critical;
  b.sigma = K.sigma();
  FieldPair last{ScalarField(g), ScalarField(g)};
  std::vector<TraceEntry> trace;
  auto cb = [&](int it, const FieldPair& xx, const Evaluation<FieldPair>& ev) {
    trace.push_back({it, ev.value, ev.stationarity});
    last = xx;
  };
  try {
    auto res = lbfgs_minimize(obj, last, config.lbfgs(),
                              std::function<void(int, const FieldPair&, const Evaluation<FieldPair>&)>(cb));
    b.converged = res.converged;
    b.stop_reason = res.stop_reason;
    b.iterations = res.iters;
  } catch (const error& e) {
    if (e.code() != errc::line_search_failure && e.code() != errc::overflow) throw;
    b.converged = false;
    b.stop_reason = std::string(to_string(e.code())) + ": " + e.what();
    b.iterations = trace.empty() ? 0 : trace.back().iter;
  }
  b.trace = trace;
  b.grad_norm = trace.empty() ? INFINITY : trace.back().grad_norm;
  b.xi = std::move(last.xi);
  b.zeta = std::move(last.zeta);
  b.xi_bar = dmu_decompose(b.xi, data.h0, data.mu_mass).mean;
  b.zeta_bar = dmu_decompose(b.zeta, data.h0, data.mu_mass).mean;
  return b;
}

// ---------------------------------------------------------------------------
// Mountain pass by path deformation

struct MountainPassReport {
  double c = 0.0;               // endpoint (c, c)
  double E_end = 0.0;           // E(c, c)
  std::vector<double> ray;      // E(c_k, c_k) values tried while searching for the endpoint
  std::vector<double> profile;  // E along the current path when the run stopped
  int steps = 0;
  std::string outcome;
};

namespace detail {
inline FieldPair constant_pair(const Grid& g, double a, double b) { return {ScalarField(g, a), ScalarField(g, b)}; }

inline double path_distance(const FieldPair& a, const FieldPair& b) {
  const Grid& g = a.xi.grid;
  double s = 0.0;
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) {
      const double dx = a.xi(i, j) - b.xi(i, j);
      const double dz = a.zeta(i, j) - b.zeta(i, j);
      s += g.weight(i, j) * (dx * dx + dz * dz);
    }
  return std::sqrt(s);
}

// Re-space interior points uniformly in arclength; endpoints stay fixed.
inline void respace(std::vector<FieldPair>& path) {
  const std::size_t m = path.size();
  std::vector<double> arc(m, 0.0);
  for (std::size_t k = 1; k < m; ++k) arc[k] = arc[k - 1] + path_distance(path[k - 1], path[k]);
  const double total = arc.back();
  if (!(total > 0.0)) return;
  std::vector<FieldPair> out(path.begin(), path.end());
  std::size_t seg = 0;
  for (std::size_t k = 1; k + 1 < m; ++k) {
    const double target = total * k / (m - 1);
    while (seg + 1 < m - 1 && arc[seg + 1] < target) ++seg;
    const double len = arc[seg + 1] - arc[seg];
    const double t = len > 0.0 ? (target - arc[seg]) / len : 0.0;
    FieldPair p = path[seg];
    scale(p, 1.0 - t);
    axpy(t, path[seg + 1], p);
    out[k] = std::move(p);
  }
  path = std::move(out);
}
}  // namespace detail

inline SolutionBundle mountain_pass(const ModelParams& params, const RegularizedData& data, const CouplingMatrix& K,
                                    const SolverConfig& config, MountainPassReport* report = nullptr) {
  config.validate();
  const double alpha = derived_alpha(params, K);
  const double beta = derived_beta(params, K);
  const RegimeInfo info = validate_regime(K, alpha, beta);
  if (!info.mountain_pass_eligible)
    throw error(errc::validation, "mountain pass requires k12 > 0, beta > alpha k12^2/|K| and alpha < 8|K|/(k11 k12)");
  MountainPassReport local;
  MountainPassReport& rep = report ? *report : local;
  const Grid& g = data.grid();
  auto E = [&](const FieldPair& z) { return eval_E(z.xi, z.zeta, data, K); };

  // Endpoint (c, c) with E(c, c) < -1.
  double c = config.c_endpoint > 0.0 ? config.c_endpoint : 1.0;
  double Ec = 0.0;
  bool found = false;
  for (int k = 0; k < 40; ++k) {
    try {
      Ec = E(detail::constant_pair(g, c, c));
    } catch (const error& e) {
      if (e.code() != errc::overflow) throw;
      rep.outcome = "E(c,c) overflowed before turning negative";
      break;
    }
    rep.ray.push_back(Ec);
    if (Ec < -1.0) {
      found = true;
      break;
    }
    if (config.c_endpoint > 0.0) break;
    c *= 2.0;
  }
  rep.c = c;
  rep.E_end = Ec;
  if (!found) {
    std::ostringstream os;
    os << "no endpoint with E(c,c) < -1 along the diagonal ray (last c = " << c << ", E = " << Ec << ")";
    if (rep.outcome.empty()) rep.outcome = os.str();
    throw error(errc::endpoint_not_negative, os.str());
  }

  const int m = config.path_points;
  std::vector<FieldPair> path;
  for (int k = 0; k < m; ++k) {
    const double t = static_cast<double>(k) / (m - 1);
    path.push_back(detail::constant_pair(g, t * c, t * c));
  }
  detail::EnergyObjective obj(data, K, alpha, beta);
  std::vector<double> vals(m);
  std::vector<TraceEntry> trace;
  for (int step = 0; step <= config.deform_steps; ++step) {
    for (int k = 0; k < m; ++k) vals[k] = E(path[k]);
    rep.profile = vals;
    rep.steps = step;
    int kmax = 0;
    for (int k = 1; k < m; ++k)
      if (vals[k] > vals[kmax]) kmax = k;
    if (kmax == 0 || kmax == m - 1) {
      std::ostringstream os;
      os << "path maximum sits at the fixed endpoint " << (kmax == 0 ? "(0,0)" : "(c,c)") << " after " << step
         << " deformation steps (E = " << vals[kmax] << "): no mountain-pass barrier along the path";
      rep.outcome = os.str();
      throw error(errc::barrier_absent, os.str());
    }
    Evaluation<FieldPair> ev = obj.evaluate(path[kmax]);
    trace.push_back({step, vals[kmax], ev.stationarity});
    if (ev.stationarity <= config.grad_tol) {
      SolutionBundle b;
      b.regime = Regime::mountain_pass;
      b.sigma = K.sigma();
      b.converged = true;
      b.iterations = step;
      b.grad_norm = ev.stationarity;
      b.trace = trace;
      b.stop_reason = "converged";
      b.xi = path[kmax].xi;
      b.zeta = path[kmax].zeta;
      b.xi_bar = dmu_decompose(b.xi, data.h0, data.mu_mass).mean;
      b.zeta_bar = dmu_decompose(b.zeta, data.h0, data.mu_mass).mean;
      rep.outcome = "converged";
      return b;
    }
    FieldPair d = obj.precondition(ev.grad);
    scale(d, -1.0);
    double t = 1.0;
    for (;;) {
      FieldPair trial = path[kmax];
      axpy(t, d, trial);
      double Et = INFINITY;
      try {
        Et = E(trial);
      } catch (const error& e) {
        if (e.code() != errc::overflow) throw;
      }
      if (Et < vals[kmax]) {
        path[kmax] = std::move(trial);
        break;
      }
      t *= config.line_search.shrink;
      if (t < 1e-14) throw error(errc::line_search_failure, "mountain-pass deformation step underflow");
    }
    detail::respace(path);
  }
  rep.outcome = "deformation budget exhausted";
  throw error(errc::max_iters_exceeded, "mountain pass did not reach grad_tol within deform_steps");
}

// ---------------------------------------------------------------------------
// Smallest Rayleigh quotient of the discrete Hessian of E over random smooth
// directions, from central differences of grad_E.

inline ScalarField random_bumps(const Grid& g, std::mt19937_64& rng, int bumps) {
  std::uniform_real_distribution<double> pos(-0.6 * g.R(), 0.6 * g.R());
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_real_distribution<double> wid(0.5, 2.0);
  std::vector<std::array<double, 4>> b(bumps);
  for (auto& e : b) e = {pos(rng), pos(rng), amp(rng), wid(rng)};
  return sample(g, [&](double x, double y) {
    double s = 0.0;
    for (const auto& e : b) s += e[2] * std::exp(-((x - e[0]) * (x - e[0]) + (y - e[1]) * (y - e[1])) / (e[3] * e[3]));
    return s;
  });
}

inline double curvature_probe(const RegularizedData& data, const CouplingMatrix& K, const ScalarField& xi,
                              const ScalarField& zeta, int directions = 20, double eps = 1e-4,
                              std::uint64_t seed = 12345) {
  std::mt19937_64 rng(seed);
  const Grid& g = data.grid();
  double best = INFINITY;
  for (int k = 0; k < directions; ++k) {
    FieldPair d{random_bumps(g, rng, 6), random_bumps(g, rng, 6)};
    FieldPair zp{xi, zeta}, zm{xi, zeta};
    axpy(eps, d, zp);
    axpy(-eps, d, zm);
    const EnergyEval ep = energy_eval(data, K, zp.xi, zp.zeta, true);
    const EnergyEval em = energy_eval(data, K, zm.xi, zm.zeta, true);
    double num = 0.0, den = 0.0;
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) {
        const std::size_t q = g.index(i, j);
        num += (ep.gxi.values[q] - em.gxi.values[q]) * d.xi.values[q] +
               (ep.gzeta.values[q] - em.gzeta.values[q]) * d.zeta.values[q];
        den += g.weight(i, j) * (d.xi.values[q] * d.xi.values[q] + d.zeta.values[q] * d.zeta.values[q]);
      }
    best = std::min(best, num / (2.0 * eps * den));
  }
  return best;
}

}  // namespace vortex
