#pragma once

#include <atomic>
#include <cmath>
#include <numbers>
#include <utility>

#include "vortex/model.hpp"
#include "vortex/regularize.hpp"

namespace vortex {

inline constexpr double max_exponent = 700.0;

// ---------------------------------------------------------------------------
// dmu decomposition u = mean + prime with int prime h0 dx = 0

struct Decomposition {
  double mean = 0.0;
  ScalarField prime;
};

inline Decomposition dmu_decompose(const ScalarField& u, const ScalarField& h0, double mu_mass) {
  if (!(mu_mass > 0.0)) throw error(errc::invalid_argument, "dmu decomposition requires mu_mass > 0");
  Decomposition d;
  d.mean = trapezoid_inner(u, h0) / mu_mass;
  d.prime = u;
  for (auto& v : d.prime.values) v -= d.mean;
  return d;
}

// Removes the dmu-mean in place.
inline void project_zero_mean(ScalarField& u, const ScalarField& h0, double mu_mass) {
  const double m = trapezoid_inner(u, h0) / mu_mass;
  for (auto& v : u.values) v -= m;
}

// ---------------------------------------------------------------------------
// Constraints

struct ConstraintTargets {
  double J1_target = 0.0;  // pi alpha k11 / |K|
  double J2_target = 0.0;  // (pi / k12) (beta - alpha k12^2 / |K|)
};

inline ConstraintTargets constraint_targets(const CouplingMatrix& K, double alpha, double beta) {
  ConstraintTargets t;
  t.J1_target = std::numbers::pi * alpha * K.k11 / K.det;
  t.J2_target = std::numbers::pi / K.k12 * (beta - alpha * K.k12 * K.k12 / K.det);
  if (!(t.J1_target > 0.0))
    throw error(errc::inadmissible_regime, "constraint target pi alpha k11/|K| must be positive");
  if (!(t.J2_target > 0.0))
    throw error(errc::inadmissible_regime,
                K.k12 > 0.0 ? "k12 > 0 requires beta > alpha k12^2/|K|" : "k12 < 0 requires beta < alpha k12^2/|K|");
  return t;
}

struct ConstraintValues {
  double J1 = 0.0;
  double J2 = 0.0;
};

namespace detail {
struct OverflowFlag {
  std::atomic<bool> hit{false};
  void check(double e) {
    if (e > max_exponent) hit.store(true, std::memory_order_relaxed);
  }
  void raise(const char* where) const {
    if (hit.load()) throw error(errc::overflow, std::string("nodal exponent exceeds 700 in ") + where);
  }
};
}  // namespace detail

inline ConstraintValues constraint_integrals(const ScalarField& xi, const ScalarField& zeta, const ScalarField& U,
                                             const ScalarField& V, const CouplingMatrix& K) {
  require_same_grid(xi, zeta);
  require_same_grid(xi, U);
  const Grid& g = xi.grid;
  const int n = g.n();
  const double a = K.k11 / (2.0 * K.k12);
  detail::OverflowFlag of;
  std::vector<double> p1(n), p2(n);
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      const double e1 = 0.5 * (xi.values[k] - zeta.values[k]);
      const double e2 = -a * zeta.values[k];
      of.check(e1);
      of.check(e2);
      s1 += g.weight1(i) * V.values[k] * std::exp(e1);
      s2 += g.weight1(i) * U.values[k] * std::exp(e2);
    }
    p1[j] = g.weight1(j) * s1;
    p2[j] = g.weight1(j) * s2;
  });
  of.raise("constraint_integrals");
  ConstraintValues c;
  for (int j = 0; j < n; ++j) {
    c.J1 += p1[j];
    c.J2 += p2[j];
  }
  return c;
}

struct Means {
  double xi_bar = 0.0;
  double zeta_bar = 0.0;
};

namespace detail {
inline Means means_from(double J1p, double J2p, const ConstraintTargets& t, const CouplingMatrix& K) {
  Means m;
  m.zeta_bar = 2.0 * K.k12 / K.k11 * (std::log(J2p) - std::log(t.J2_target));
  m.xi_bar = m.zeta_bar + 2.0 * std::log(t.J1_target) - 2.0 * std::log(J1p);
  return m;
}
}  // namespace detail

// Means that put (xi_bar + xi', zeta_bar + zeta') exactly on both constraints.
inline Means closed_form_means(const ScalarField& xi_p, const ScalarField& zeta_p, const ConstraintTargets& t,
                               const ScalarField& U, const ScalarField& V, const CouplingMatrix& K) {
  if (!(t.J1_target > 0.0) || !(t.J2_target > 0.0))
    throw error(errc::inadmissible_regime, "constraint targets must be positive");
  const ConstraintValues c = constraint_integrals(xi_p, zeta_p, U, V, K);
  return detail::means_from(c.J1, c.J2, t, K);
}

inline Means closed_form_means(const ScalarField& xi_p, const ScalarField& zeta_p, const ScalarField& U,
                               const ScalarField& V, const CouplingMatrix& K, double alpha, double beta) {
  return closed_form_means(xi_p, zeta_p, constraint_targets(K, alpha, beta), U, V, K);
}

// ---------------------------------------------------------------------------
// Reduced functional I(xi', zeta') with closed-form means.

struct ReducedProblem {
  const RegularizedData* data = nullptr;
  CouplingMatrix K;
  double alpha = 0.0;
  double beta = 0.0;
  double sigma = 0.0;
  ConstraintTargets targets;
};

inline ReducedProblem make_reduced(const RegularizedData& data, const CouplingMatrix& K, double alpha, double beta,
                                   double sigma = 0.0) {
  ReducedProblem p;
  p.data = &data;
  p.K = K;
  p.alpha = alpha;
  p.beta = beta;
  p.sigma = sigma > 0.0 ? sigma : K.sigma();
  p.targets = constraint_targets(K, alpha, beta);
  return p;
}

struct ReducedEval {
  double value = 0.0;
  Means means;
  ConstraintValues primes;  // J1, J2 evaluated at the primes
  ScalarField gxi, gzeta;   // Euclidean partial derivatives (nodal, weights included)
};

inline ReducedEval reduced_eval(const ReducedProblem& P, const ScalarField& xi_p, const ScalarField& zeta_p,
                                bool with_grad) {
  const RegularizedData& d = *P.data;
  const Grid& g = d.grid();
  require_same_grid(xi_p, d.U);
  require_same_grid(zeta_p, d.U);
  const int n = g.n();
  const double a = P.K.k11 / (2.0 * P.K.k12);
  const double pi = std::numbers::pi;

  // Pass 1: exponentials, constraint integrals, linear terms.
  ScalarField e1, e2;
  if (with_grad) {
    e1 = ScalarField(g);
    e2 = ScalarField(g);
  }
  detail::OverflowFlag of;
  std::vector<double> pJ1(n), pJ2(n), pLin(n);
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    double s1 = 0.0, s2 = 0.0, sl = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      const double x1 = 0.5 * (xi_p.values[k] - zeta_p.values[k]);
      const double x2 = -a * zeta_p.values[k];
      of.check(x1);
      of.check(x2);
      const double v1 = d.V.values[k] * std::exp(x1);
      const double v2 = d.U.values[k] * std::exp(x2);
      if (with_grad) {
        e1.values[k] = v1;
        e2.values[k] = v2;
      }
      const double w = g.weight1(i);
      s1 += w * v1;
      s2 += w * v2;
      sl += w * (d.f.values[k] * xi_p.values[k] + P.sigma * d.h.values[k] * zeta_p.values[k]);
    }
    const double wj = g.weight1(j);
    pJ1[j] = wj * s1;
    pJ2[j] = wj * s2;
    pLin[j] = wj * sl;
  });
  of.raise("reduced functional");
  ReducedEval out;
  double lin = 0.0;
  for (int j = 0; j < n; ++j) {
    out.primes.J1 += pJ1[j];
    out.primes.J2 += pJ2[j];
    lin += pLin[j];
  }
  out.means = detail::means_from(out.primes.J1, out.primes.J2, P.targets, P.K);
  out.value = 0.5 * gradient_sq_integral(xi_p) + 0.5 * P.sigma * gradient_sq_integral(zeta_p) + lin -
              2.0 * pi * P.alpha * out.means.xi_bar + 2.0 * pi * P.beta * P.sigma * out.means.zeta_bar;
  if (!with_grad) return out;

  const ScalarField Lx = neumann_laplacian(xi_p);
  const ScalarField Lz = neumann_laplacian(zeta_p);
  const double c1 = 2.0 * pi * P.alpha / out.primes.J1;
  const double c2 = (2.0 * pi * P.beta * P.sigma - 2.0 * pi * P.alpha) / out.primes.J2;
  out.gxi = ScalarField(g);
  out.gzeta = ScalarField(g);
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      const double w = g.weight(i, j);
      out.gxi.values[k] = w * (-Lx.values[k] + d.f.values[k] + c1 * e1.values[k]);
      out.gzeta.values[k] =
          w * (P.sigma * (-Lz.values[k] + d.h.values[k]) - c1 * e1.values[k] - c2 * e2.values[k]);
    }
  });
  return out;
}

// L^2(dx) representative of a Euclidean partial, projected to zero dmu-mean:
// G = W^{-1} g - c h0 with c chosen so that int G h0 dx = 0.
inline ScalarField tangent_representative(const ScalarField& g_euclid, const ScalarField& h0) {
  const Grid& g = h0.grid;
  const int n = g.n();
  ScalarField G(g);
  double num = 0.0, den = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      num += h0.values[k] * g_euclid.values[k];
      den += g.weight(i, j) * h0.values[k] * h0.values[k];
    }
  const double c = num / den;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      G.values[k] = g_euclid.values[k] / g.weight(i, j) - c * h0.values[k];
    }
  return G;
}

inline double eval_I(const ScalarField& xi_p, const ScalarField& zeta_p, const RegularizedData& data,
                     const CouplingMatrix& K, double alpha, double beta) {
  return reduced_eval(make_reduced(data, K, alpha, beta), xi_p, zeta_p, false).value;
}

inline std::pair<ScalarField, ScalarField> grad_I(const ScalarField& xi_p, const ScalarField& zeta_p,
                                                  const RegularizedData& data, const CouplingMatrix& K, double alpha,
                                                  double beta) {
  ReducedEval e = reduced_eval(make_reduced(data, K, alpha, beta), xi_p, zeta_p, true);
  return {tangent_representative(e.gxi, data.h0), tangent_representative(e.gzeta, data.h0)};
}

// ---------------------------------------------------------------------------
// Unconstrained functional E(xi, zeta); E(0, 0) = 0 exactly (expm1 form).

struct EnergyEval {
  double value = 0.0;
  ScalarField gxi, gzeta;  // Euclidean partials
};

inline EnergyEval energy_eval(const RegularizedData& d, const CouplingMatrix& K, const ScalarField& xi,
                              const ScalarField& zeta, bool with_grad) {
  const Grid& g = d.grid();
  require_same_grid(xi, d.U);
  require_same_grid(zeta, d.U);
  const int n = g.n();
  const double a = K.k11 / (2.0 * K.k12);
  const double c = 4.0 * K.det / K.k11;
  const double sigma = K.sigma();
  detail::OverflowFlag of;
  EnergyEval out;
  if (with_grad) {
    out.gxi = ScalarField(g);
    out.gzeta = ScalarField(g);
  }
  std::vector<double> part(n);
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      const double x1 = 0.5 * (xi.values[k] - zeta.values[k]);
      const double x2 = -a * zeta.values[k];
      of.check(x1);
      of.check(x2);
      const double V = d.V.values[k], U = d.U.values[k];
      s += g.weight1(i) * (c * V * std::expm1(x1) + c * U * std::expm1(x2) + d.f.values[k] * xi.values[k] +
                           sigma * d.h.values[k] * zeta.values[k]);
      if (with_grad) {
        const double w = g.weight(i, j);
        const double t1 = 0.5 * c * V * std::exp(x1);
        const double t2 = c * a * U * std::exp(x2);
        out.gxi.values[k] = w * (t1 + d.f.values[k]);
        out.gzeta.values[k] = w * (-t1 - t2 + sigma * d.h.values[k]);
      }
    }
    part[j] = g.weight1(j) * s;
  });
  of.raise("energy functional");
  double lin = 0.0;
  for (double v : part) lin += v;
  out.value = 0.5 * gradient_sq_integral(xi) + 0.5 * sigma * gradient_sq_integral(zeta) + lin;
  if (!with_grad) return out;
  const ScalarField Lx = neumann_laplacian(xi);
  const ScalarField Lz = neumann_laplacian(zeta);
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      const double w = g.weight(i, j);
      out.gxi.values[k] -= w * Lx.values[k];
      out.gzeta.values[k] -= w * sigma * Lz.values[k];
    }
  });
  return out;
}

inline double eval_E(const ScalarField& xi, const ScalarField& zeta, const RegularizedData& data,
                     const CouplingMatrix& K) {
  return energy_eval(data, K, xi, zeta, false).value;
}

// Nodal L^2(dx) representatives W^{-1} dE.
inline std::pair<ScalarField, ScalarField> grad_E(const ScalarField& xi, const ScalarField& zeta,
                                                  const RegularizedData& data, const CouplingMatrix& K) {
  EnergyEval e = energy_eval(data, K, xi, zeta, true);
  const Grid& g = data.grid();
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) {
      const std::size_t k = g.index(i, j);
      e.gxi.values[k] /= g.weight(i, j);
      e.gzeta.values[k] /= g.weight(i, j);
    }
  return {std::move(e.gxi), std::move(e.gzeta)};
}

}  // namespace vortex
