#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "vortex/functional.hpp"
#include "vortex/regularize.hpp"
#include "vortex/solve.hpp"

namespace vortex {

struct Norms {
  double l2 = 0.0;
  double max = 0.0;
};

struct ResidualPair {
  Norms first;   // xi-equation (or u-equation)
  Norms second;  // zeta-equation (or v-equation)
};

inline constexpr int residual_margin = 3;

namespace detail {
template <class Mask>
Norms norms(const ScalarField& r, Mask&& keep) {
  const Grid& g = r.grid;
  const int n = g.n();
  Norms out;
  double s = 0.0;
  for (int j = residual_margin; j < n - residual_margin; ++j)
    for (int i = residual_margin; i < n - residual_margin; ++i) {
      if (!keep(i, j)) continue;
      const double v = r(i, j);
      s += g.weight(i, j) * v * v;
      out.max = std::max(out.max, std::abs(v));
    }
  out.l2 = std::sqrt(s);
  return out;
}
}  // namespace detail

// Residuals of
//   Delta xi  - (2|K|/k11) V e^{(xi-zeta)/2} - f = 0
//   Delta zeta + 2 k12 U e^{-(k11/2k12) zeta} + (2 k12^2/k11) V e^{(xi-zeta)/2} - h = 0
// with the fourth-order Laplacian, or the 5-point one the solver uses.
inline std::pair<ScalarField, ScalarField> residual_fields(const ScalarField& xi, const ScalarField& zeta,
                                                           const RegularizedData& d, const CouplingMatrix& K,
                                                           bool five_point = false) {
  const Grid& g = d.grid();
  const ScalarField Lx = five_point ? neumann_laplacian(xi) : laplacian4(xi);
  const ScalarField Lz = five_point ? neumann_laplacian(zeta) : laplacian4(zeta);
  const double a = K.k11 / (2.0 * K.k12);
  ScalarField r1(g), r2(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double e1 = d.V.values[k] * std::exp(0.5 * (xi.values[k] - zeta.values[k]));
    const double e2 = d.U.values[k] * std::exp(-a * zeta.values[k]);
    r1.values[k] = Lx.values[k] - 2.0 * K.det / K.k11 * e1 - d.f.values[k];
    r2.values[k] = Lz.values[k] + 2.0 * K.k12 * e2 + 2.0 * K.k12 * K.k12 / K.k11 * e1 - d.h.values[k];
  }
  return {std::move(r1), std::move(r2)};
}

inline ResidualPair residual_main(const SolutionBundle& b, const RegularizedData& d, const CouplingMatrix& K) {
  auto [r1, r2] = residual_fields(b.xi, b.zeta, d, K);
  auto all = [](int, int) { return true; };
  return {detail::norms(r1, all), detail::norms(r2, all)};
}

// ---------------------------------------------------------------------------
// Physical fields

struct Reconstruction {
  ScalarField u, v, psi_up_sq, psi_down_sq;
};

inline Reconstruction reconstruct(const SolutionBundle& b, const RegularizedData& d, const ModelParams& m,
                                  const CouplingMatrix& K) {
  if (K.k12 == 0.0) throw error(errc::invalid_argument, "reconstruction requires k12 != 0");
  const Grid& g = d.grid();
  const double a = K.k11 / (2.0 * K.k12);
  Reconstruction r{ScalarField(g), ScalarField(g), ScalarField(g), ScalarField(g)};
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) {
      const std::size_t k = g.index(i, j);
      const double x = g.coord(i), y = g.coord(j);
      const double r2 = x * x + y * y;
      r.u.values[k] = d.u0.values[k] - r2 - a * (b.zeta.values[k] + d.v3.values[k]);
      r.v.values[k] = d.v0.values[k] - r2 + 0.5 * (b.xi.values[k] + d.u3.values[k]) -
                      0.5 * (b.zeta.values[k] + d.v3.values[k]);
      r.psi_up_sq.values[k] = m.rho_bar * d.U.values[k] * std::exp(-a * b.zeta.values[k]);
      r.psi_down_sq.values[k] = m.rho_bar * d.V.values[k] * std::exp(0.5 * (b.xi.values[k] - b.zeta.values[k]));
    }
  return r;
}

namespace detail {
inline bool outside_balls(const ModelParams& m, double x, double y) {
  for (const auto* fam : {&m.vortices_up, &m.vortices_down})
    for (const auto& p : *fam)
      if (std::hypot(x - p.x, y - p.y) <= m.delta) return false;
  return true;
}
}  // namespace detail

// Delta u = k11 e^u + k12 e^v - 4 and Delta v = k12 e^u + k11 e^v - 4 away
// from the vortex balls (e^u = |psi_up|^2 / rho_bar).
inline ResidualPair residual_vortex(const SolutionBundle& b, const RegularizedData& d, const ModelParams& m,
                                    const CouplingMatrix& K) {
  const Reconstruction rc = reconstruct(b, d, m, K);
  const Grid& g = d.grid();
  const double a = K.k11 / (2.0 * K.k12);
  const ScalarField Lu = laplacian4(rc.u);
  const ScalarField Lv = laplacian4(rc.v);
  ScalarField r1(g), r2(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double eu = d.U.values[k] * std::exp(-a * b.zeta.values[k]);
    const double ev = d.V.values[k] * std::exp(0.5 * (b.xi.values[k] - b.zeta.values[k]));
    r1.values[k] = Lu.values[k] - (K.k11 * eu + K.k12 * ev - 4.0);
    r2.values[k] = Lv.values[k] - (K.k12 * eu + K.k11 * ev - 4.0);
  }
  auto keep = [&](int i, int j) { return detail::outside_balls(m, g.coord(i), g.coord(j)); };
  return {detail::norms(r1, keep), detail::norms(r2, keep)};
}

// B12 = 2(p+q)|psi_up|^2 + 2(p-q)|psi_down|^2 - eB
inline ScalarField b12_field(const Reconstruction& rc, const ModelParams& m, double eB) {
  ScalarField B(rc.psi_up_sq.grid);
  for (std::size_t k = 0; k < B.size(); ++k)
    B.values[k] = 2.0 * (m.p + m.q) * rc.psi_up_sq.values[k] + 2.0 * (m.p - m.q) * rc.psi_down_sq.values[k] - eB;
  return B;
}

// ---------------------------------------------------------------------------
// Flux identities

struct FluxReport {
  double flux_up = 0.0;    // int |psi_up|^2
  double flux_down = 0.0;  // int |psi_down|^2
  double target_up = 0.0;
  double target_down = 0.0;
  double bps1_up = 0.0;    // (p pi/(p-q)) [beta - (alpha/4)(p/q + q/p - 2)]
  double bps2_down = 0.0;  // alpha 16 pi q/(p+q), reported only
};

inline FluxReport flux_check(const SolutionBundle& b, const RegularizedData& d, const ModelParams& m,
                             const CouplingMatrix& K) {
  const double alpha = derived_alpha(m, K);
  const double beta = derived_beta(m, K);
  const ConstraintValues c = constraint_integrals(b.xi, b.zeta, d.U, d.V, K);
  const double pi = std::numbers::pi;
  FluxReport f;
  f.flux_up = m.rho_bar * c.J2;
  f.flux_down = m.rho_bar * c.J1;
  f.target_down = m.rho_bar * pi * alpha * K.k11 / K.det;
  f.target_up = m.rho_bar * pi / K.k12 * (beta - alpha * K.k12 * K.k12 / K.det);
  f.bps1_up = m.rho_bar * m.p * pi / (m.p - m.q) * (beta - alpha / 4.0 * (m.p / m.q + m.q / m.p - 2.0));
  f.bps2_down = m.rho_bar * alpha * 16.0 * pi * m.q / (m.p + m.q);
  return f;
}

// ---------------------------------------------------------------------------
// Far-field flatness and decay rates

struct ConstFit {
  double constant = 0.0;
  double max_deviation = 0.0;
};

struct DecayFit {
  ConstFit xi, zeta;
};

namespace detail {
inline ConstFit annulus_fit(const ScalarField& f) {
  const Grid& g = f.grid;
  const double R = g.R();
  auto in = [&](int i, int j) {
    const double m = std::max(std::abs(g.coord(i)), std::abs(g.coord(j)));
    return m >= R - 2.0 - 1e-12 && m <= R - 1.0 + 1e-12;
  };
  double s = 0.0, w = 0.0;
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i)
      if (in(i, j)) {
        s += g.weight(i, j) * f(i, j);
        w += g.weight(i, j);
      }
  ConstFit c;
  c.constant = s / w;
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i)
      if (in(i, j)) c.max_deviation = std::max(c.max_deviation, std::abs(f(i, j) - c.constant));
  return c;
}

inline double bilinear(const ScalarField& f, double x, double y) {
  const Grid& g = f.grid;
  const double h = g.spacing();
  const double sx = (x + g.R()) / h, sy = (y + g.R()) / h;
  int i = std::clamp(static_cast<int>(std::floor(sx)), 0, g.n() - 2);
  int j = std::clamp(static_cast<int>(std::floor(sy)), 0, g.n() - 2);
  const double tx = sx - i, ty = sy - j;
  return (1 - tx) * (1 - ty) * f(i, j) + tx * (1 - ty) * f(i + 1, j) + (1 - tx) * ty * f(i, j + 1) +
         tx * ty * f(i + 1, j + 1);
}

// Least squares fit of y on the given basis columns (normal equations, <= 3 columns).
template <std::size_t M>
std::array<double, M> lsq(const std::vector<std::array<double, M>>& X, const std::vector<double>& y) {
  std::array<std::array<double, M + 1>, M> A{};
  for (std::size_t r = 0; r < X.size(); ++r)
    for (std::size_t a = 0; a < M; ++a) {
      for (std::size_t b = 0; b < M; ++b) A[a][b] += X[r][a] * X[r][b];
      A[a][M] += X[r][a] * y[r];
    }
  for (std::size_t c = 0; c < M; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < M; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (std::size_t r = 0; r < M; ++r) {
      if (r == c) continue;
      const double fct = A[r][c] / A[c][c];
      for (std::size_t k = c; k <= M; ++k) A[r][k] -= fct * A[c][k];
    }
  }
  std::array<double, M> out{};
  for (std::size_t c = 0; c < M; ++c) out[c] = A[c][M] / A[c][c];
  return out;
}
}  // namespace detail

inline DecayFit decay_fit(const SolutionBundle& b) {
  return {detail::annulus_fit(b.xi), detail::annulus_fit(b.zeta)};
}

// |psi_up|^2 at an arbitrary point: analytic background and profile factors,
// bilinear interpolation of the smooth unknown zeta.
inline double density_up_at(const SolutionBundle& b, const ModelParams& m, const CouplingMatrix& K, double x,
                            double y) {
  const double a = K.k11 / (2.0 * K.k12);
  double bg = 1.0;
  for (const auto& p : m.vortices_up) {
    const double r = std::hypot(x - p.x, y - p.y);
    if (r < m.delta) bg *= background_exp(r, m.delta);
  }
  const double v3 = -m.beta0 * log_profile(std::hypot(x, y));
  return m.rho_bar * bg * std::exp(-(x * x + y * y) - a * (detail::bilinear(b.zeta, x, y) + v3));
}

// |psi_down|^2, same construction with the down family and both profiles.
inline double density_down_at(const SolutionBundle& b, const ModelParams& m, double x, double y) {
  double bg = 1.0;
  for (const auto& q : m.vortices_down) {
    const double r = std::hypot(x - q.x, y - q.y);
    if (r < m.delta) bg *= background_exp(r, m.delta);
  }
  const double lp = log_profile(std::hypot(x, y));
  const double u3 = m.alpha0 * lp, v3 = -m.beta0 * lp;
  return m.rho_bar * bg *
         std::exp(-(x * x + y * y) + 0.5 * (detail::bilinear(b.xi, x, y) + u3) -
                  0.5 * (detail::bilinear(b.zeta, x, y) + v3));
}

struct GaussianSlope {
  double fitted = 0.0;  // coefficient of r^2 in ln|psi_up|^2 ~ c + s r^2 + m ln r
  double raw = 0.0;     // plain d ln|psi_up|^2 / d(r^2) from a two-term fit
};

// Rays through the origin, sampled inside the outer square annulus.
inline GaussianSlope gaussian_slope(const SolutionBundle& b, const ModelParams& m, const CouplingMatrix& K,
                                    int rays = 8) {
  const double R = b.xi.grid.R();
  GaussianSlope out;
  for (int k = 0; k < rays; ++k) {
    const double th = 2.0 * std::numbers::pi * (k + 0.5) / rays;
    const double cm = std::max(std::abs(std::cos(th)), std::abs(std::sin(th)));
    const double r0 = (R - 2.0) / cm, r1 = (R - 1.0) / cm;
    std::vector<std::array<double, 3>> X3;
    std::vector<std::array<double, 2>> X2;
    std::vector<double> y;
    for (int s = 0; s <= 40; ++s) {
      const double r = r0 + (r1 - r0) * s / 40.0;
      const double v = density_up_at(b, m, K, r * std::cos(th), r * std::sin(th));
      X3.push_back({1.0, r * r, std::log(r)});
      X2.push_back({1.0, r * r});
      y.push_back(std::log(v));
    }
    out.fitted += detail::lsq(X3, y)[1] / rays;
    out.raw += detail::lsq(X2, y)[1] / rays;
  }
  return out;
}

// Log-slope of |psi_up|^2 (or |psi_down|^2) against ln|x - p| on rays from a
// vortex point, averaged over rays.
inline double vortex_log_slope(const SolutionBundle& b, const ModelParams& m, const CouplingMatrix& K, Point p,
                               int rays = 8, bool down = false) {
  double acc = 0.0;
  const double rmin = 0.004 * m.delta, rmax = 0.04 * m.delta;
  for (int k = 0; k < rays; ++k) {
    const double th = 2.0 * std::numbers::pi * (k + 0.5) / rays;
    std::vector<std::array<double, 2>> X;
    std::vector<double> y;
    for (int s = 0; s <= 20; ++s) {
      const double r = rmin * std::pow(rmax / rmin, s / 20.0);
      X.push_back({1.0, std::log(r)});
      const double x1 = p.x + r * std::cos(th), x2 = p.y + r * std::sin(th);
      y.push_back(std::log(down ? density_down_at(b, m, x1, x2) : density_up_at(b, m, K, x1, x2)));
    }
    acc += detail::lsq(X, y)[1];
  }
  return acc / rays;
}

// ---------------------------------------------------------------------------
// Divergent energy E_R = int_{B_R} (|psi_up|^2 + |psi_down|^2 - rho_bar)

struct EnergyReport {
  std::vector<double> radii, E_R, ratio;  // ratio = E_R / (pi R^2)
  double slope = 0.0;                     // least-squares coefficient of pi R^2
};

inline EnergyReport energy_divergence(const SolutionBundle& b, const RegularizedData& d, const ModelParams& m,
                                      const CouplingMatrix& K, const std::vector<double>& radii) {
  const Reconstruction rc = reconstruct(b, d, m, K);
  const Grid& g = d.grid();
  EnergyReport e;
  std::vector<std::array<double, 2>> X;
  for (double Rr : radii) {
    if (Rr > g.R() - 1.0) throw error(errc::invalid_argument, "energy radii must not exceed R - 1");
    double s = 0.0;
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) {
        const double x = g.coord(i), y = g.coord(j);
        if (x * x + y * y > Rr * Rr) continue;
        const std::size_t k = g.index(i, j);
        s += g.weight(i, j) * (rc.psi_up_sq.values[k] + rc.psi_down_sq.values[k]);
      }
    const double area = std::numbers::pi * Rr * Rr;
    const double ER = s - m.rho_bar * area;
    e.radii.push_back(Rr);
    e.E_R.push_back(ER);
    e.ratio.push_back(ER / area);
    X.push_back({1.0, area});
  }
  if (radii.size() >= 2) e.slope = detail::lsq(X, e.E_R)[1];
  return e;
}

// ---------------------------------------------------------------------------
// Lagrange multipliers from the discrete stationarity conditions

struct KktReport {
  double lambda = 0.0;      // nodal weighted least squares
  double mu = 0.0;
  double lambda_int = 0.0;  // tested against chi = 1
  double mu_int = 0.0;
};

// -Delta xi + f = lambda (|K|/k11) V e^{(xi-zeta)/2}
// sigma (-Delta zeta + h) + lambda (|K|/k11) V e^{(xi-zeta)/2} = mu 2 k12 U e^{-(k11/2k12) zeta}
inline KktReport kkt_check(const SolutionBundle& b, const RegularizedData& d, const CouplingMatrix& K) {
  const Grid& g = d.grid();
  const double a = K.k11 / (2.0 * K.k12);
  const double sigma = K.sigma();
  const ScalarField Lx = neumann_laplacian(b.xi);
  const ScalarField Lz = neumann_laplacian(b.zeta);
  std::vector<double> r1(g.size()), p1(g.size()), r2(g.size()), p2(g.size()), w(g.size());
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) {
      const std::size_t k = g.index(i, j);
      w[k] = g.weight(i, j);
      r1[k] = -Lx.values[k] + d.f.values[k];
      p1[k] = K.det / K.k11 * d.V.values[k] * std::exp(0.5 * (b.xi.values[k] - b.zeta.values[k]));
      r2[k] = sigma * (-Lz.values[k] + d.h.values[k]);
      p2[k] = 2.0 * K.k12 * d.U.values[k] * std::exp(-a * b.zeta.values[k]);
    }
  KktReport out;
  double num = 0.0, den = 0.0, in = 0.0, ip = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    num += w[k] * r1[k] * p1[k];
    den += w[k] * p1[k] * p1[k];
    in += w[k] * r1[k];
    ip += w[k] * p1[k];
  }
  out.lambda = num / den;
  out.lambda_int = in / ip;
  num = den = in = ip = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double lhs = r2[k] + out.lambda * p1[k];
    num += w[k] * lhs * p2[k];
    den += w[k] * p2[k] * p2[k];
    in += w[k] * (r2[k] + out.lambda_int * p1[k]);
    ip += w[k] * p2[k];
  }
  out.mu = num / den;
  out.mu_int = in / ip;
  return out;
}

struct SigmaScanEntry {
  double sigma = 0.0;
  double zeta_residual_max = 0.0;   // 5-point stencil: the discrete equation itself
  double zeta_residual_max4 = 0.0;  // fourth-order stencil, truncation error included
  bool converged = false;
};

// Re-solves with sigma' = factor * |K|/k12^2 and reports the zeta-equation
// residual of each minimizer; only the true sigma makes it vanish. The
// 5-point residual is free of the truncation error that would otherwise
// mask the difference on coarse grids.
inline std::vector<SigmaScanEntry> sigma_scan(const ModelParams& m, const RegularizedData& d, const CouplingMatrix& K,
                                              const SolverConfig& cfg, const std::vector<double>& factors) {
  std::vector<SigmaScanEntry> out;
  auto all = [](int, int) { return true; };
  for (double f : factors) {
    MinimizeOptions mo;
    mo.sigma = f * K.sigma();
    const SolutionBundle b = minimize(m, d, K, cfg, mo);
    const auto r5 = residual_fields(b.xi, b.zeta, d, K, true);
    out.push_back({mo.sigma, detail::norms(r5.second, all).max, residual_main(b, d, K).second.max, b.converged});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Independent radial oracle: both vortices at the origin, the reduced system
//   (r xi')'   = r [ (2|K|/k11) V e^{(xi-zeta)/2} + f ]
//   (r zeta')' = r [ -2 k12 U e^{-a zeta} - (2 k12^2/k11) V e^{(xi-zeta)/2} + h ]
// shot from r = 0 with Dormand-Prince 5(4) steps; nested bisection on the
// centre values enforces xi'(r_max) = zeta'(r_max) = 0.

struct RadialSolution {
  std::vector<double> r_nodes, xi_r, zeta_r, dxi_r, dzeta_r;
  double xi0 = 0.0, zeta0 = 0.0;  // shooting parameters
  double boundary_residual = 0.0;  // max(|xi'(r_max)|, |zeta'(r_max)|)
  double ode_defect = 0.0;         // node gap to an integration at 1e-3 x tolerance
  double flux_down = 0.0;          // 2 pi int V e^{(xi-zeta)/2} r dr
  double flux_up = 0.0;            // 2 pi int U e^{-a zeta} r dr
  double value_at(double r, bool zeta) const;
};

namespace detail {
struct RadialModel {
  double cV, cU, cVz;  // 2|K|/k11, -2 k12, -2 k12^2/k11
  double a, alpha0, beta0, delta, ratio;

  void sources(double r, double& V, double& U, double& f, double& h) const {
    const double bg = r < delta ? background_exp(r, delta) : 1.0;
    const double P = log_profile(r);
    V = bg * std::exp(-r * r + 0.5 * (alpha0 + beta0) * P);
    U = bg * std::exp(-r * r + a * beta0 * P);
    const double lap = log_profile_laplacian(r);
    const double g = background_source(r, delta);
    f = -alpha0 * lap - ratio * g + 2.0 * g;
    h = beta0 * lap - ratio * g;
  }

  // y = (xi, zeta, r xi', r zeta'); returns false on exponent overflow.
  bool rhs(double r, const std::array<double, 4>& y, std::array<double, 4>& dy) const {
    double V, U, f, h;
    sources(r, V, U, f, h);
    const double x1 = 0.5 * (y[0] - y[1]), x2 = -a * y[1];
    if (x1 > max_exponent || x2 > max_exponent) return false;
    const double e1 = V * std::exp(x1), e2 = U * std::exp(x2);
    dy[0] = y[2] / r;
    dy[1] = y[3] / r;
    dy[2] = r * (cV * e1 + f);
    dy[3] = r * (cU * e2 + cVz * e1 + h);
    return true;
  }

  std::array<double, 4> start(double r0, double xi0, double zeta0) const {
    double V, U, f, h;
    sources(0.0, V, U, f, h);
    const double F1 = cV * V * std::exp(0.5 * (xi0 - zeta0)) + f;
    const double F2 = cU * U * std::exp(-a * zeta0) + cVz * V * std::exp(0.5 * (xi0 - zeta0)) + h;
    return {xi0 + 0.25 * F1 * r0 * r0, zeta0 + 0.25 * F2 * r0 * r0, 0.5 * F1 * r0 * r0, 0.5 * F2 * r0 * r0};
  }
};

// Adaptive Dormand-Prince integration from r0 to r1; false on blow-up.
inline bool dopri(const RadialModel& M, double r0, double r1, std::array<double, 4>& y, double tol, double& hguess) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  using S = std::array<double, 4>;
  double r = r0;
  double h = std::min(hguess, r1 - r0);
  S k1, k2, k3, k4, k5, k6, k7, yt, yn;
  auto comb = [&](const S& base, std::initializer_list<std::pair<double, const S*>> terms, double hh) {
    S out = base;
    for (const auto& [c, k] : terms)
      for (int q = 0; q < 4; ++q) out[q] += hh * c * (*k)[q];
    return out;
  };
  if (!M.rhs(r, y, k1)) return false;
  int guard = 0;
  while (r < r1) {
    if (++guard > 2000000) return false;
    if (r + h > r1) h = r1 - r;
    yt = comb(y, {{a21, &k1}}, h);
    if (!M.rhs(r + c2 * h, yt, k2)) return false;
    yt = comb(y, {{a31, &k1}, {a32, &k2}}, h);
    if (!M.rhs(r + c3 * h, yt, k3)) return false;
    yt = comb(y, {{a41, &k1}, {a42, &k2}, {a43, &k3}}, h);
    if (!M.rhs(r + c4 * h, yt, k4)) return false;
    yt = comb(y, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}, h);
    if (!M.rhs(r + c5 * h, yt, k5)) return false;
    yt = comb(y, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}, h);
    if (!M.rhs(r + h, yt, k6)) return false;
    yn = comb(y, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}}, h);
    if (!M.rhs(r + h, yn, k7)) return false;
    double err = 0.0;
    for (int q = 0; q < 4; ++q) {
      const double est =
          h * (e1 * k1[q] + e3 * k3[q] + e4 * k4[q] + e5 * k5[q] + e6 * k6[q] + e7 * k7[q]);
      const double sc = tol * (1.0 + std::max(std::abs(y[q]), std::abs(yn[q])));
      err = std::max(err, std::abs(est) / sc);
    }
    if (!std::isfinite(err)) return false;
    if (err <= 1.0) {
      r += h;
      y = yn;
      k1 = k7;
      for (double v : y)
        if (!std::isfinite(v)) return false;
    }
    const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::clamp(fac, 0.2, 5.0);
    if (h < 1e-14) return false;
  }
  hguess = h;
  return true;
}

inline constexpr double radial_r0 = 1e-6;

// Terminal fluxes (r xi', r zeta') at r_max; +inf on blow-up.
inline std::array<double, 2> shoot(const RadialModel& M, double rmax, double xi0, double zeta0, double tol) {
  auto y = M.start(radial_r0, xi0, zeta0);
  double hg = 1e-3;
  if (!dopri(M, radial_r0, rmax, y, tol, hg)) return {INFINITY, INFINITY};
  return {y[2], y[3]};
}

// Bracket search followed by bisection for an increasing g. g may return NaN
// where it is undefined (shooting blew up); the search then backs off toward
// the last point where g was defined.
template <class G>
double bisect_increasing(G&& g, double guess, double xtol, bool& ok) {
  ok = false;
  const double g0 = g(guess);
  if (std::isnan(g0)) return guess;
  if (g0 == 0.0) {
    ok = true;
    return guess;
  }
  double lo = guess, hi = guess, glo = g0, ghi = g0;
  double step = 1.0;
  for (int k = 0; !(glo < 0.0 && ghi > 0.0); ++k) {
    if (k > 200) return guess;
    const bool down = !(glo < 0.0);
    double& end = down ? lo : hi;
    double& gend = down ? glo : ghi;
    double x = down ? end - step : end + step;
    double gx = g(x);
    for (int t = 0; t < 60 && std::isnan(gx); ++t) {
      x = 0.5 * (x + end);
      gx = g(x);
    }
    if (std::isnan(gx) || x == end) return guess;
    end = x;
    gend = gx;
    step *= 2.0;
  }
  while (hi - lo > xtol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double gm = g(mid);
    if (std::isnan(gm)) return guess;
    if (gm == 0.0) {
      ok = true;
      return mid;
    }
    (gm > 0.0 ? hi : lo) = mid;
  }
  ok = true;
  return 0.5 * (lo + hi);
}
}  // namespace detail

inline double RadialSolution::value_at(double r, bool zeta) const {
  // cubic Hermite on the uniform node grid
  const auto& v = zeta ? zeta_r : xi_r;
  const auto& dv = zeta ? dzeta_r : dxi_r;
  const double dr = r_nodes[1] - r_nodes[0];
  const std::size_t last = r_nodes.size() - 1;
  std::size_t k = std::min(static_cast<std::size_t>(r / dr), last - 1);
  const double t = (r - r_nodes[k]) / dr;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  return h00 * v[k] + h10 * dr * dv[k] + h01 * v[k + 1] + h11 * dr * dv[k + 1];
}

inline RadialSolution radial_oracle(const ModelParams& m, const CouplingMatrix& K, double alpha, double beta,
                                    double r_max, double tol = 1e-12, double node_spacing = 1e-3) {
  (void)alpha;
  (void)beta;
  const Point o{0.0, 0.0};
  if (m.N1() != 1 || m.N2() != 1 || !(m.vortices_up[0] == o) || !(m.vortices_down[0] == o))
    throw error(errc::invalid_argument, "radial oracle requires N1 = N2 = 1 with both vortices at the origin");
  detail::RadialModel M;
  M.cV = 2.0 * K.det / K.k11;
  M.cU = -2.0 * K.k12;
  M.cVz = -2.0 * K.k12 * K.k12 / K.k11;
  M.a = K.k11 / (2.0 * K.k12);
  M.alpha0 = m.alpha0;
  M.beta0 = m.beta0;
  M.delta = m.delta;
  M.ratio = 2.0 * K.k12 / K.k11;

  const double xtol = 1e-14;
  double xi_guess = 0.0;
  auto inner = [&](double zeta0, bool& ok) {
    auto g = [&](double xi0) { return detail::shoot(M, r_max, xi0, zeta0, tol)[0]; };
    const double x = detail::bisect_increasing(g, xi_guess, xtol, ok);
    if (ok) xi_guess = x;
    return x;
  };
  auto outer = [&](double zeta0) {
    bool ok = true;
    const double x = inner(zeta0, ok);
    if (!ok) return std::numeric_limits<double>::quiet_NaN();
    return detail::shoot(M, r_max, x, zeta0, tol)[1];
  };
  bool ok = true;
  const double zeta0 = detail::bisect_increasing(outer, 0.0, xtol, ok);
  if (!ok) throw error(errc::shooting_failure, "radial shooting: could not bracket the centre values");
  bool ok2 = true;
  const double xi0 = inner(zeta0, ok2);
  if (!ok2) throw error(errc::shooting_failure, "radial shooting: inner bracket lost at the final centre value");

  RadialSolution s;
  s.xi0 = xi0;
  s.zeta0 = zeta0;
  const int N = static_cast<int>(std::llround(r_max / node_spacing));
  const double dr = r_max / N;
  auto integrate_nodes = [&](double tl, std::vector<std::array<double, 4>>& states) {
    states.assign(N + 1, {});
    states[0] = {xi0, zeta0, 0.0, 0.0};
    auto y = M.start(detail::radial_r0, xi0, zeta0);
    double hg = 1e-4;
    if (!detail::dopri(M, detail::radial_r0, dr, y, tl, hg))
      throw error(errc::shooting_failure, "radial integration blew up");
    states[1] = y;
    for (int k = 1; k < N; ++k) {
      if (!detail::dopri(M, k * dr, (k + 1) * dr, y, tl, hg))
        throw error(errc::shooting_failure, "radial integration blew up");
      states[k + 1] = y;
    }
  };
  std::vector<std::array<double, 4>> st, fine;
  integrate_nodes(tol, st);
  integrate_nodes(tol * 1e-3, fine);
  for (int k = 0; k <= N; ++k) {
    const double r = k * dr;
    s.r_nodes.push_back(r);
    s.xi_r.push_back(st[k][0]);
    s.zeta_r.push_back(st[k][1]);
    s.dxi_r.push_back(k == 0 ? 0.0 : st[k][2] / r);
    s.dzeta_r.push_back(k == 0 ? 0.0 : st[k][3] / r);
    s.ode_defect = std::max({s.ode_defect, std::abs(st[k][0] - fine[k][0]), std::abs(st[k][1] - fine[k][1])});
  }
  s.boundary_residual = std::max(std::abs(s.dxi_r.back()), std::abs(s.dzeta_r.back()));

  // Composite Simpson on the node values (N even for the default spacing).
  double q1 = 0.0, q2 = 0.0;
  for (int k = 0; k <= N; ++k) {
    const double r = k * dr;
    double V, U, f, h;
    M.sources(r, V, U, f, h);
    const double w = (k == 0 || k == N) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    q1 += w * r * V * std::exp(0.5 * (s.xi_r[k] - s.zeta_r[k]));
    q2 += w * r * U * std::exp(-M.a * s.zeta_r[k]);
  }
  s.flux_down = 2.0 * std::numbers::pi * q1 * dr / 3.0;
  s.flux_up = 2.0 * std::numbers::pi * q2 * dr / 3.0;
  return s;
}

// Max gap between the 2D fields and the radial profiles along the positive
// x-axis and the diagonal, for radii up to r_limit.
inline double oracle_gap(const SolutionBundle& b, const RadialSolution& s, double r_limit) {
  const Grid& g = b.xi.grid;
  const int c = (g.n() - 1) / 2;
  double gap = 0.0;
  for (int i = c; i < g.n(); ++i) {
    const double x = g.coord(i);
    const double r1 = x;
    if (r1 <= r_limit) {
      gap = std::max(gap, std::abs(b.xi(i, c) - s.value_at(r1, false)));
      gap = std::max(gap, std::abs(b.zeta(i, c) - s.value_at(r1, true)));
    }
    const double r2 = std::sqrt(2.0) * x;
    if (r2 <= r_limit) {
      gap = std::max(gap, std::abs(b.xi(i, i) - s.value_at(r2, false)));
      gap = std::max(gap, std::abs(b.zeta(i, i) - s.value_at(r2, true)));
    }
  }
  return gap;
}

}  // namespace vortex
