#pragma once

// Inverse of the mirrored Neumann Laplacian via the 2D DCT-I, which
// diagonalizes it exactly.

#include <fftw3.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "vortex/model.hpp"

namespace vortex {

class NeumannPoisson {
 public:
  explicit NeumannPoisson(const Grid& g) : grid_(g), n_(g.n()) {
    const std::size_t N = g.size();
    buf_ = fftw_alloc_real(N);
    plan_ = fftw_plan_r2r_2d(n_, n_, buf_, buf_, FFTW_REDFT00, FFTW_REDFT00, FFTW_ESTIMATE);
    eig_.resize(n_);
    const double ih2 = 1.0 / (g.spacing() * g.spacing());
    for (int k = 0; k < n_; ++k)
      eig_[k] = (2.0 - 2.0 * std::cos(std::numbers::pi * k / (n_ - 1))) * ih2;
    norm_ = 1.0 / (4.0 * (n_ - 1.0) * (n_ - 1.0));
  }
  NeumannPoisson(const NeumannPoisson&) = delete;
  NeumannPoisson& operator=(const NeumannPoisson&) = delete;
  ~NeumannPoisson() {
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }

  const Grid& grid() const { return grid_; }

  // z = (scale * (-L) + shift)^{-1} r. With shift == 0 the constant mode of r
  // is discarded and z has zero plain mean over nodes in the DCT sense.
  void solve(const double* r, double* z, double scale, double shift) {
    const std::size_t N = grid_.size();
    std::copy(r, r + N, buf_);
    fftw_execute(plan_);
    for (int l = 0; l < n_; ++l)
      for (int k = 0; k < n_; ++k) {
        const std::size_t idx = static_cast<std::size_t>(l) * n_ + k;
        const double d = scale * (eig_[k] + eig_[l]) + shift;
        buf_[idx] = d > 0.0 ? buf_[idx] * norm_ / d : 0.0;
      }
    fftw_execute(plan_);
    std::copy(buf_, buf_ + N, z);
  }

 private:
  Grid grid_;
  int n_;
  double* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
  std::vector<double> eig_;
  double norm_ = 1.0;
};

}  // namespace vortex
