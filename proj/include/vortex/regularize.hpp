#pragma once

#include <cmath>
#include <vector>

#include "vortex/model.hpp"

namespace vortex {

// ---------------------------------------------------------------------------
// Cutoff rho(t) = w(t) ln t with w = 1 - S(2t - 1) on [1/2, 1] and S the
// degree-9 smoothstep (C^4 at both seams).

namespace detail {
inline double smoothstep(double x) {
  const double x2 = x * x;
  return x2 * x2 * x * (126.0 + x * (-420.0 + x * (540.0 + x * (-315.0 + 70.0 * x))));
}
inline double smoothstep_d1(double x) {
  const double a = x * (1.0 - x);
  return 630.0 * a * a * a * a;
}
inline double smoothstep_d2(double x) {
  const double a = x * (1.0 - x);
  return 2520.0 * a * a * a * (1.0 - 2.0 * x);
}
}  // namespace detail

inline double rho(double t) {
  if (!(t > 0.0)) throw error(errc::invalid_argument, "rho requires t > 0");
  if (t <= 0.5) return std::log(t);
  if (t >= 1.0) return 0.0;
  // 1 - S(x) == S(1 - x); the symmetric form stays nonnegative in rounding
  return detail::smoothstep(2.0 - 2.0 * t) * std::log(t);
}

inline double rho_d1(double t) {
  if (!(t > 0.0)) throw error(errc::invalid_argument, "rho requires t > 0");
  if (t <= 0.5) return 1.0 / t;
  if (t >= 1.0) return 0.0;
  const double x = 2.0 * t - 1.0;
  const double w = detail::smoothstep(1.0 - x);
  const double w1 = -2.0 * detail::smoothstep_d1(x);
  return w1 * std::log(t) + w / t;
}

inline double rho_d2(double t) {
  if (!(t > 0.0)) throw error(errc::invalid_argument, "rho requires t > 0");
  if (t <= 0.5) return -1.0 / (t * t);
  if (t >= 1.0) return 0.0;
  const double x = 2.0 * t - 1.0;
  const double w = detail::smoothstep(1.0 - x);
  const double w1 = -2.0 * detail::smoothstep_d1(x);
  const double w2 = -4.0 * detail::smoothstep_d2(x);
  return w2 * std::log(t) + 2.0 * w1 / t - w / (t * t);
}

// ---------------------------------------------------------------------------
// Radial building blocks (analytic; shared with the radial oracle).

// 2 rho(r/delta); the log singularity at r = 0 is clamped far below anything
// that survives exponentiation.
inline double background_value(double r, double delta) {
  return 2.0 * rho(std::max(r / delta, 1e-150));
}

// exp(2 rho(r/delta)), exactly (r/delta)^2 inside delta/2.
inline double background_exp(double r, double delta) {
  const double t = r / delta;
  if (t <= 0.5) return t * t;
  return std::exp(2.0 * rho(t));
}

// -(phi'' + phi'/r) for phi = 2 rho(r/delta); supported on delta/2 < r < delta,
// integrates to 4 pi over the plane.
inline double background_source(double r, double delta) {
  const double t = r / delta;
  if (t <= 0.5 || t >= 1.0) return 0.0;
  return -2.0 / (delta * delta) * (rho_d2(t) + rho_d1(t) / t);
}

// Log profile: ln r for r >= 1, (1/2) S5(r^2 - 1) inside, S5 the degree-5
// truncated series of ln(1 + s).
inline double log_profile(double r) {
  if (r >= 1.0) return std::log(r);
  const double s = r * r - 1.0;
  return 0.5 * s * (1.0 + s * (-0.5 + s * (1.0 / 3.0 + s * (-0.25 + s * 0.2))));
}

// Laplacian of log_profile: 10 (r^2 - 1)^4 inside the unit disk, 0 outside.
inline double log_profile_laplacian(double r) {
  if (r >= 1.0) return 0.0;
  const double s = r * r - 1.0;
  const double s2 = s * s;
  return 10.0 * s2 * s2;
}

inline double weight_profile(double r2, double kappa) { return std::pow(1.0 + r2, -0.5 * kappa); }

// ---------------------------------------------------------------------------

struct Backgrounds {
  ScalarField u0, g1, v0, g2;
  ScalarField U0, V0;  // e^{u0}, e^{v0}, exactly zero at vortex centers
};

struct Profiles {
  ScalarField u3, v3;
};

struct Sources {
  ScalarField f, h;
};

struct Coefficients {
  ScalarField U, V;
};

struct Weight {
  ScalarField h0;
  double mu_mass = 0.0;
};

struct RegularizedData {
  ScalarField u0, v0, g1, g2, u3, v3, f, h, U, V, h0;
  double mu_mass = 0.0;
  const Grid& grid() const { return u0.grid; }
};

namespace detail {
inline void check_balls(const std::vector<Point>& pts, double delta, double R) {
  auto d = distinct(pts);
  for (std::size_t a = 0; a < d.size(); ++a) {
    if (!(std::abs(d[a].x) + delta < R && std::abs(d[a].y) + delta < R))
      throw error(errc::validation, "vortex ball B_delta must lie inside the grid");
    for (std::size_t b = a + 1; b < d.size(); ++b)
      if (distance(d[a], d[b]) < 2.0 * delta)
        throw error(errc::validation, "vortex balls B_delta must be pairwise disjoint");
  }
}

inline void family(const std::vector<Point>& pts, double delta, const Grid& g, ScalarField& u, ScalarField& src,
                   ScalarField& expu) {
  u = ScalarField(g);
  src = ScalarField(g);
  expu = ScalarField(g, 1.0);
  const int n = g.n();
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const double y = g.coord(j);
    for (int i = 0; i < n; ++i) {
      const double x = g.coord(i);
      double a = 0.0, s = 0.0, e = 1.0;
      for (const auto& p : pts) {
        const double r = std::hypot(x - p.x, y - p.y);
        if (r >= delta) continue;
        a += background_value(r, delta);
        s += background_source(r, delta);
        e *= background_exp(r, delta);
      }
      u(i, j) = a;
      src(i, j) = s;
      expu(i, j) = e;
    }
  });
}
}  // namespace detail

inline Backgrounds build_backgrounds(const ModelParams& m, const Grid& g) {
  detail::check_balls(m.vortices_up, m.delta, g.R());
  detail::check_balls(m.vortices_down, m.delta, g.R());
  Backgrounds b;
  detail::family(m.vortices_up, m.delta, g, b.u0, b.g1, b.U0);
  detail::family(m.vortices_down, m.delta, g, b.v0, b.g2, b.V0);
  return b;
}

inline Profiles build_profiles(const ModelParams& m, const CouplingMatrix& K, const Grid& g) {
  const double ratio = K.k12 / K.k11;
  if (!(m.alpha0 > -4.0 * ratio * m.N1() + 4.0 * m.N2()))
    throw error(errc::validation, "alpha0 > -(4 k12/k11) N1 + 4 N2 required (alpha > 0)");
  if (!(m.beta0 > 4.0 * ratio * m.N1()))
    throw error(errc::validation, "beta0 > (4 k12/k11) N1 required (beta > 0)");
  Profiles pr;
  pr.u3 = sample(g, [&](double x, double y) { return m.alpha0 * log_profile(std::hypot(x, y)); });
  pr.v3 = sample(g, [&](double x, double y) { return -m.beta0 * log_profile(std::hypot(x, y)); });
  return pr;
}

inline Sources build_sources(const ModelParams& m, const CouplingMatrix& K, const Grid& g, const Backgrounds& b,
                             const Profiles&) {
  const double c = 2.0 * K.k12 / K.k11;
  Sources s{ScalarField(g), ScalarField(g)};
  const int n = g.n();
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const double y = g.coord(j);
    for (int i = 0; i < n; ++i) {
      const double lap = log_profile_laplacian(std::hypot(g.coord(i), y));
      s.f(i, j) = -m.alpha0 * lap - c * b.g1(i, j) + 2.0 * b.g2(i, j);
      s.h(i, j) = m.beta0 * lap - c * b.g1(i, j);
    }
  });
  return s;
}

inline Coefficients build_coefficients(const ModelParams&, const CouplingMatrix& K, const Grid& g,
                                       const Backgrounds& b, const Profiles& pr) {
  if (K.k12 == 0.0) throw error(errc::invalid_argument, "coefficients require k12 != 0");
  const double a = K.k11 / (2.0 * K.k12);
  Coefficients c{ScalarField(g), ScalarField(g)};
  const int n = g.n();
  for_rows(n, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const double y = g.coord(j);
    for (int i = 0; i < n; ++i) {
      const double x = g.coord(i);
      const double r2 = x * x + y * y;
      c.U(i, j) = b.U0(i, j) * std::exp(-r2 - a * pr.v3(i, j));
      c.V(i, j) = b.V0(i, j) * std::exp(-r2 + 0.5 * (pr.u3(i, j) - pr.v3(i, j)));
    }
  });
  return c;
}

inline Weight build_weight(const ModelParams& m, const Grid& g) {
  if (!(m.kappa > 4.0)) throw error(errc::validation, "kappa > 4 required");
  Weight w;
  w.h0 = sample(g, [&](double x, double y) { return weight_profile(x * x + y * y, m.kappa); });
  w.mu_mass = trapezoid_integral(w.h0);
  return w;
}

inline RegularizedData regularize(const ModelParams& m, const CouplingMatrix& K, const Grid& g) {
  Backgrounds b = build_backgrounds(m, g);
  Profiles pr = build_profiles(m, K, g);
  Sources s = build_sources(m, K, g, b, pr);
  Coefficients c = build_coefficients(m, K, g, b, pr);
  Weight w = build_weight(m, g);
  RegularizedData d;
  d.u0 = std::move(b.u0);
  d.v0 = std::move(b.v0);
  d.g1 = std::move(b.g1);
  d.g2 = std::move(b.g2);
  d.u3 = std::move(pr.u3);
  d.v3 = std::move(pr.v3);
  d.f = std::move(s.f);
  d.h = std::move(s.h);
  d.U = std::move(c.U);
  d.V = std::move(c.V);
  d.h0 = std::move(w.h0);
  d.mu_mass = w.mu_mass;
  return d;
}

inline RegularizedData regularize(const ModelParams& m) {
  return regularize(m, coupling_from(m.p, m.q), Grid(m.R, m.n));
}

}  // namespace vortex
