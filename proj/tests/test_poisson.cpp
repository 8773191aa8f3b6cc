#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "vortex/poisson.hpp"

using namespace vortex;

namespace {

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.values[k] - b.values[k]));
  return m;
}

// Subtract the trapezoid mean so the right-hand side is compatible.
void remove_mean(ScalarField& f) {
  const double c = trapezoid_integral(f) / f.grid.area();
  for (auto& v : f.values) v -= c;
}

}  // namespace

TEST(Poisson, InvertsNeumannLaplacianOnCompatibleData) {
  std::mt19937_64 rng(31);
  for (int n : {33, 65, 129}) {
    const Grid g(6.0, n);
    NeumannPoisson P(g);
    for (int t = 0; t < 3; ++t) {
      ScalarField r = vortex::testing::white_noise(g, rng);
      remove_mean(r);
      ScalarField z(g);
      P.solve(r.values.data(), z.values.data(), 1.0, 0.0);
      ScalarField back = neumann_laplacian(z);
      for (auto& v : back.values) v = -v;
      EXPECT_LT(max_abs_diff(back, r), 1e-9) << "n=" << n;
    }
  }
}

TEST(Poisson, ShiftedOperator) {
  std::mt19937_64 rng(32);
  const Grid g(6.0, 65);
  NeumannPoisson P(g);
  for (auto [s, e] : {std::pair{1.0, 0.3}, {8.0, 2.0}, {0.5, 1e-3}}) {
    const ScalarField r = vortex::testing::white_noise(g, rng);
    ScalarField z(g);
    P.solve(r.values.data(), z.values.data(), s, e);
    const ScalarField L = neumann_laplacian(z);
    ScalarField back(g);
    for (std::size_t k = 0; k < z.size(); ++k) back.values[k] = -s * L.values[k] + e * z.values[k];
    EXPECT_LT(max_abs_diff(back, r), 1e-9);
  }
}

TEST(Poisson, ConstantModeIsDiscarded) {
  const Grid g(6.0, 33);
  NeumannPoisson P(g);
  const ScalarField r(g, 3.0);
  ScalarField z(g, 1.0);
  P.solve(r.values.data(), z.values.data(), 1.0, 0.0);
  for (double v : z.values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Poisson, CosineModeIsAnEigenvector) {
  const Grid g(6.0, 65);
  NeumannPoisson P(g);
  const double k = std::numbers::pi / 12.0;  // one half-wave across [-6, 6]
  const auto r = sample(g, [&](double x, double) { return std::sin(k * x); });
  ScalarField z(g);
  P.solve(r.values.data(), z.values.data(), 1.0, 0.0);
  const double h = g.spacing();
  const double lam = (2.0 - 2.0 * std::cos(k * h)) / (h * h);
  for (std::size_t q = 0; q < z.size(); ++q) EXPECT_NEAR(z.values[q] * lam, r.values[q], 1e-10);
}
