#pragma once

// Inner loops shared by the tensor ops and the solver. Every kernel in
// `pino::kernels` is OpenMP-parallel over disjoint output slices with a fixed
// per-element reduction order, so results do not depend on the thread count.
// `pino::kernels::serial` holds plain reference loops used by the tests and
// the benchmark.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace pino::kernels {

using cplx = std::complex<double>;

struct MixDims {
  std::size_t batch = 0, in = 0, out = 0, plane = 0;  // plane = H*W
};

void channel_mix_forward(std::span<const double> x, std::span<const double> w,
                         std::span<const double> b, const MixDims& d,
                         std::span<double> out);
void channel_mix_backward(std::span<const double> x, std::span<const double> w,
                          std::span<const double> g, const MixDims& d,
                          std::span<double> gx, std::span<double> gw,
                          std::span<double> gb);

/// Five-point Laplacian with mirror ghosts on `planes` stacked HxW fields.
void laplacian_neumann(std::span<const double> in, std::size_t planes,
                       std::size_t height, std::size_t width, double h,
                       std::span<double> out);
/// Transpose of laplacian_neumann (the mirror stencil is not symmetric).
void laplacian_neumann_adjoint(std::span<const double> g, std::size_t planes,
                               std::size_t height, std::size_t width, double h,
                               std::span<double> out);

/// Precomputed twiddles for the truncated real DFT used by spectral_conv.
/// Retained rows are [0, m) and [H-m, H); retained columns [0, m).
class SpectralPlan {
 public:
  SpectralPlan(std::size_t height, std::size_t width, std::size_t modes);

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t modes() const { return m_; }
  std::size_t block() const { return 2 * m_ * m_; }
  std::size_t row_freq(std::size_t r) const { return r < m_ ? r : h_ - 2 * m_ + r; }
  double column_weight(std::size_t l) const { return colw_[l]; }

  /// real [planes,H,W] -> complex [planes,2m,m] (unnormalised forward DFT).
  void forward(std::span<const double> x, std::size_t planes,
               std::span<cplx> out) const;
  /// Adjoint of forward, returns the real gradient.
  void forward_adjoint(std::span<const cplx> g, std::size_t planes,
                       std::span<double> out) const;
  /// complex [planes,2m,m] -> real [planes,H,W]: real part of the inverse DFT
  /// of the Hermitian-completed half spectrum.
  void inverse(std::span<const cplx> y, std::size_t planes,
               std::span<double> out) const;
  void inverse_adjoint(std::span<const double> g, std::size_t planes,
                       std::span<cplx> out) const;

 private:
  std::size_t h_, w_, m_;
  std::vector<double> col_cos_, col_sin_;  // [m][W]
  std::vector<cplx> row_tw_;               // [2m][H], e^{-2 pi i k h / H}
  std::vector<double> colw_;               // 1 or 2 per retained column
};

/// y[b,o,k] = sum_i x[b,i,k] * (wr + i wi)[i,o,k] over k in a mode block.
void spectral_mix_forward(std::span<const cplx> x, std::span<const double> wr,
                          std::span<const double> wi, std::size_t batch,
                          std::size_t in, std::size_t out, std::size_t block,
                          std::span<cplx> y);
void spectral_mix_backward(std::span<const cplx> x, std::span<const double> wr,
                           std::span<const double> wi, std::span<const cplx> g,
                           std::size_t batch, std::size_t in, std::size_t out,
                           std::size_t block, std::span<cplx> gx,
                           std::span<double> gwr, std::span<double> gwi);

struct ReactionParams {
  double a, k, eps, mu1, mu2;
};

/// One forward-Euler step of the monodomain Aliev-Panfilov system on an
/// n x n grid, in place. `stim` is the stimulus current per node (may be
/// empty). `lap` is scratch of size n*n.
void ap_euler_step(std::span<double> v, std::span<double> w,
                   std::span<const double> stim, std::size_t n, double h,
                   double diffusion, const ReactionParams& p, double dt,
                   std::span<double> lap);

namespace serial {

void channel_mix_forward(std::span<const double> x, std::span<const double> w,
                         std::span<const double> b, const MixDims& d,
                         std::span<double> out);
void laplacian_neumann(std::span<const double> in, std::size_t planes,
                       std::size_t height, std::size_t width, double h,
                       std::span<double> out);
/// Direct evaluation of the truncated spectral convolution with per-mode
/// complex weights, no twiddle tables.
void spectral_conv(std::span<const double> x, std::span<const double> wr,
                   std::span<const double> wi, std::size_t batch,
                   std::size_t in, std::size_t out, std::size_t height,
                   std::size_t width, std::size_t modes, std::span<double> y);
void ap_euler_step(std::span<double> v, std::span<double> w,
                   std::span<const double> stim, std::size_t n, double h,
                   double diffusion, const ReactionParams& p, double dt);

}  // namespace serial
}  // namespace pino::kernels
