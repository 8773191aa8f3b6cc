#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "vortex/functional.hpp"
#include "vortex/model.hpp"
#include "vortex/regularize.hpp"
#include "vortex/solve.hpp"

namespace vortex::testing {

inline constexpr double pi = std::numbers::pi;

// k12 > 0: K = (1/2)[[3, 1], [1, 3]], alpha = 4/3, beta = 1.
inline ModelParams case_pos(int n = 129, double R = 6.0) {
  ModelParams m;
  m.p = 2.0 * pi / 5.0;
  m.q = pi / 5.0;
  m.vortices_up = {{1.0, 0.0}};
  m.vortices_down = {{-1.0, 0.0}};
  m.alpha0 = 4.0;
  m.beta0 = 7.0 / 3.0;
  m.delta = 1.0;
  m.R = R;
  m.n = n;
  return m;
}

// k12 < 0: K = (1/2)[[5, -1], [-1, 5]], alpha = 3.2, beta = 0.1 (24 beta < alpha).
inline ModelParams case_neg(int n = 129, double R = 6.0) {
  ModelParams m = case_pos(n, R);
  m.q = 3.0 * pi / 5.0;
  m.alpha0 = 8.0;
  m.beta0 = -0.7;
  return m;
}

// Both vortices at the origin, k12 > 0 parameters.
inline ModelParams case_radial(int n = 129, double R = 6.0) {
  ModelParams m = case_pos(n, R);
  m.vortices_up = {{0.0, 0.0}};
  m.vortices_down = {{0.0, 0.0}};
  return m;
}

struct Case {
  ModelParams m;
  CouplingMatrix K;
  RegularizedData d;
  double alpha, beta;
  explicit Case(const ModelParams& mp)
      : m(mp),
        K(coupling_from(mp.p, mp.q)),
        d(regularize(mp, K, Grid(mp.R, mp.n))),
        alpha(derived_alpha(mp, K)),
        beta(derived_beta(mp, K)) {}
};

inline SolverConfig tight() {
  SolverConfig c;
  c.grad_tol = 1e-9;
  c.max_iters = 1000;
  return c;
}

// Sum of a few random Gaussian bumps; smooth test direction.
inline ScalarField smooth_random(const Grid& g, std::mt19937_64& rng, int bumps = 5) {
  std::uniform_real_distribution<double> pos(-0.5 * g.R(), 0.5 * g.R());
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_real_distribution<double> wid(0.6, 2.0);
  ScalarField f(g);
  for (int b = 0; b < bumps; ++b) {
    const double cx = pos(rng), cy = pos(rng), a = amp(rng), w = wid(rng);
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) {
        const double dx = g.coord(i) - cx, dy = g.coord(j) - cy;
        f(i, j) += a * std::exp(-(dx * dx + dy * dy) / (w * w));
      }
  }
  return f;
}

inline ScalarField white_noise(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarField f(g);
  for (auto& v : f.values) v = u(rng);
  return f;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace vortex::testing
