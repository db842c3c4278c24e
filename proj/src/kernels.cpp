#include "pino/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pino::kernels {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

inline long as_long(std::size_t v) { return static_cast<long>(v); }

}  // namespace

void channel_mix_forward(std::span<const double> x, std::span<const double> w,
                         std::span<const double> b, const MixDims& d,
                         std::span<double> out) {
  const std::size_t P = d.plane;
#pragma omp parallel for schedule(static)
  for (long bo = 0; bo < as_long(d.batch * d.out); ++bo) {
    const std::size_t bi = static_cast<std::size_t>(bo) / d.out;
    const std::size_t o = static_cast<std::size_t>(bo) % d.out;
    double* dst = out.data() + (bi * d.out + o) * P;
    const double bias = b.empty() ? 0.0 : b[o];
    for (std::size_t p = 0; p < P; ++p) dst[p] = bias;
    for (std::size_t i = 0; i < d.in; ++i) {
      const double wi = w[o * d.in + i];
      const double* src = x.data() + (bi * d.in + i) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] += wi * src[p];
    }
  }
}

void channel_mix_backward(std::span<const double> x, std::span<const double> w,
                          std::span<const double> g, const MixDims& d,
                          std::span<double> gx, std::span<double> gw,
                          std::span<double> gb) {
  const std::size_t P = d.plane;
  if (!gx.empty()) {
#pragma omp parallel for schedule(static)
    for (long bi_ = 0; bi_ < as_long(d.batch * d.in); ++bi_) {
      const std::size_t bi = static_cast<std::size_t>(bi_) / d.in;
      const std::size_t i = static_cast<std::size_t>(bi_) % d.in;
      double* dst = gx.data() + (bi * d.in + i) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = 0.0;
      for (std::size_t o = 0; o < d.out; ++o) {
        const double wi = w[o * d.in + i];
        const double* src = g.data() + (bi * d.out + o) * P;
        for (std::size_t p = 0; p < P; ++p) dst[p] += wi * src[p];
      }
    }
  }
  if (!gw.empty()) {
#pragma omp parallel for schedule(static)
    for (long oi = 0; oi < as_long(d.out * d.in); ++oi) {
      const std::size_t o = static_cast<std::size_t>(oi) / d.in;
      const std::size_t i = static_cast<std::size_t>(oi) % d.in;
      double acc = 0.0;
      for (std::size_t bi = 0; bi < d.batch; ++bi) {
        const double* gs = g.data() + (bi * d.out + o) * P;
        const double* xs = x.data() + (bi * d.in + i) * P;
        // four interleaved partial sums keep the loop pipelined; the
        // combination order is fixed
        double q[4] = {0.0, 0.0, 0.0, 0.0};
        std::size_t p = 0;
        for (; p + 4 <= P; p += 4)
          for (std::size_t u = 0; u < 4; ++u) q[u] += gs[p + u] * xs[p + u];
        for (; p < P; ++p) q[0] += gs[p] * xs[p];
        acc += (q[0] + q[1]) + (q[2] + q[3]);
      }
      gw[static_cast<std::size_t>(oi)] = acc;
    }
  }
  if (!gb.empty()) {
#pragma omp parallel for schedule(static)
    for (long o = 0; o < as_long(d.out); ++o) {
      double acc = 0.0;
      for (std::size_t bi = 0; bi < d.batch; ++bi) {
        const double* gs = g.data() + (bi * d.out + static_cast<std::size_t>(o)) * P;
        double part = 0.0;
        for (std::size_t p = 0; p < P; ++p) part += gs[p];
        acc += part;
      }
      gb[static_cast<std::size_t>(o)] = acc;
    }
  }
}

void laplacian_neumann(std::span<const double> in, std::size_t planes,
                       std::size_t height, std::size_t width, double h,
                       std::span<double> out) {
  const double inv_h2 = 1.0 / (h * h);
  const std::size_t H = height, W = width;
#pragma omp parallel for schedule(static)
  for (long pr = 0; pr < as_long(planes * H); ++pr) {
    const std::size_t p = static_cast<std::size_t>(pr) / H;
    const std::size_t i = static_cast<std::size_t>(pr) % H;
    const double* base = in.data() + p * H * W;
    const double* row = base + i * W;
    const double* up = base + (i > 0 ? i - 1 : 1) * W;
    const double* down = base + (i + 1 < H ? i + 1 : H - 2) * W;
    double* dst = out.data() + p * H * W + i * W;
    dst[0] = (up[0] + down[0] + 2.0 * row[1] - 4.0 * row[0]) * inv_h2;
    for (std::size_t j = 1; j + 1 < W; ++j)
      dst[j] = (up[j] + down[j] + row[j - 1] + row[j + 1] - 4.0 * row[j]) * inv_h2;
    dst[W - 1] =
        (up[W - 1] + down[W - 1] + 2.0 * row[W - 2] - 4.0 * row[W - 1]) * inv_h2;
  }
}

namespace {

// Coefficient of x[j] in row i of the 1D mirror stencil (i = j +- 1).
inline double mirror_coef(std::size_t i, std::size_t j, std::size_t n) {
  if (i == 0 && j == 1) return 2.0;
  if (i == n - 1 && j == n - 2) return 2.0;
  return 1.0;
}

}  // namespace

void laplacian_neumann_adjoint(std::span<const double> g, std::size_t planes,
                               std::size_t height, std::size_t width, double h,
                               std::span<double> out) {
  const double inv_h2 = 1.0 / (h * h);
  const std::size_t H = height, W = width;
#pragma omp parallel for schedule(static)
  for (long pr = 0; pr < as_long(planes * H); ++pr) {
    const std::size_t p = static_cast<std::size_t>(pr) / H;
    const std::size_t i = static_cast<std::size_t>(pr) % H;
    const double* base = g.data() + p * H * W;
    double* dst = out.data() + p * H * W + i * W;
    for (std::size_t j = 0; j < W; ++j) {
      double acc = -4.0 * base[i * W + j];
      if (i > 0) acc += mirror_coef(i - 1, i, H) * base[(i - 1) * W + j];
      if (i + 1 < H) acc += mirror_coef(i + 1, i, H) * base[(i + 1) * W + j];
      if (j > 0) acc += mirror_coef(j - 1, j, W) * base[i * W + j - 1];
      if (j + 1 < W) acc += mirror_coef(j + 1, j, W) * base[i * W + j + 1];
      dst[j] = acc * inv_h2;
    }
  }
}

SpectralPlan::SpectralPlan(std::size_t height, std::size_t width, std::size_t modes)
    : h_(height), w_(width), m_(modes) {
  if (modes == 0 || 2 * modes > height || 2 * modes > width)
    throw std::invalid_argument("spectral plan needs H, W >= 2*modes");
  col_cos_.resize(m_ * w_);
  col_sin_.resize(m_ * w_);
  for (std::size_t l = 0; l < m_; ++l)
    for (std::size_t x = 0; x < w_; ++x) {
      const double theta = two_pi * static_cast<double>((l * x) % w_) / static_cast<double>(w_);
      col_cos_[l * w_ + x] = std::cos(theta);
      col_sin_[l * w_ + x] = std::sin(theta);
    }
  row_tw_.resize(2 * m_ * h_);
  for (std::size_t r = 0; r < 2 * m_; ++r) {
    const std::size_t k = row_freq(r);
    for (std::size_t y = 0; y < h_; ++y) {
      const double phi = two_pi * static_cast<double>((k * y) % h_) / static_cast<double>(h_);
      row_tw_[r * h_ + y] = cplx(std::cos(phi), -std::sin(phi));
    }
  }
  colw_.resize(m_);
  for (std::size_t l = 0; l < m_; ++l) colw_[l] = (l == 0 || 2 * l == w_) ? 1.0 : 2.0;
}

void SpectralPlan::forward(std::span<const double> x, std::size_t planes,
                           std::span<cplx> out) const {
  const std::size_t H = h_, W = w_, M = m_;
#pragma omp parallel for schedule(static)
  for (long p_ = 0; p_ < as_long(planes); ++p_) {
    const std::size_t p = static_cast<std::size_t>(p_);
    std::vector<cplx> xc(H * M);
    const double* src = x.data() + p * H * W;
    for (std::size_t y = 0; y < H; ++y) {
      const double* row = src + y * W;
      for (std::size_t l = 0; l < M; ++l) {
        const double* c = col_cos_.data() + l * W;
        const double* s = col_sin_.data() + l * W;
        double re = 0.0, im = 0.0;
        for (std::size_t q = 0; q < W; ++q) {
          re += row[q] * c[q];
          im -= row[q] * s[q];
        }
        xc[y * M + l] = cplx(re, im);
      }
    }
    cplx* dst = out.data() + p * 2 * M * M;
    for (std::size_t r = 0; r < 2 * M; ++r) {
      const cplx* tw = row_tw_.data() + r * H;
      for (std::size_t l = 0; l < M; ++l) {
        cplx acc = 0.0;
        for (std::size_t y = 0; y < H; ++y) acc += xc[y * M + l] * tw[y];
        dst[r * M + l] = acc;
      }
    }
  }
}

void SpectralPlan::forward_adjoint(std::span<const cplx> g, std::size_t planes,
                                   std::span<double> out) const {
  const std::size_t H = h_, W = w_, M = m_;
#pragma omp parallel for schedule(static)
  for (long p_ = 0; p_ < as_long(planes); ++p_) {
    const std::size_t p = static_cast<std::size_t>(p_);
    const cplx* src = g.data() + p * 2 * M * M;
    std::vector<cplx> gxc(H * M, 0.0);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t l = 0; l < M; ++l) {
        cplx acc = 0.0;
        for (std::size_t r = 0; r < 2 * M; ++r)
          acc += src[r * M + l] * std::conj(row_tw_[r * H + y]);
        gxc[y * M + l] = acc;
      }
    double* dst = out.data() + p * H * W;
    for (std::size_t y = 0; y < H; ++y) {
      double* row = dst + y * W;
      for (std::size_t q = 0; q < W; ++q) row[q] = 0.0;
      for (std::size_t l = 0; l < M; ++l) {
        const double a = gxc[y * M + l].real(), b = gxc[y * M + l].imag();
        const double* c = col_cos_.data() + l * W;
        const double* s = col_sin_.data() + l * W;
        for (std::size_t q = 0; q < W; ++q) row[q] += a * c[q] - b * s[q];
      }
    }
  }
}

void SpectralPlan::inverse(std::span<const cplx> y, std::size_t planes,
                           std::span<double> out) const {
  const std::size_t H = h_, W = w_, M = m_;
  const double norm = 1.0 / static_cast<double>(H * W);
#pragma omp parallel for schedule(static)
  for (long p_ = 0; p_ < as_long(planes); ++p_) {
    const std::size_t p = static_cast<std::size_t>(p_);
    const cplx* src = y.data() + p * 2 * M * M;
    std::vector<cplx> z(H * M);
    for (std::size_t row = 0; row < H; ++row)
      for (std::size_t l = 0; l < M; ++l) {
        cplx acc = 0.0;
        for (std::size_t r = 0; r < 2 * M; ++r)
          acc += src[r * M + l] * std::conj(row_tw_[r * H + row]);
        z[row * M + l] = acc * (colw_[l] * norm);
      }
    double* dst = out.data() + p * H * W;
    for (std::size_t row = 0; row < H; ++row) {
      double* o = dst + row * W;
      for (std::size_t q = 0; q < W; ++q) o[q] = 0.0;
      for (std::size_t l = 0; l < M; ++l) {
        const double a = z[row * M + l].real(), b = z[row * M + l].imag();
        const double* c = col_cos_.data() + l * W;
        const double* s = col_sin_.data() + l * W;
        for (std::size_t q = 0; q < W; ++q) o[q] += a * c[q] - b * s[q];
      }
    }
  }
}

void SpectralPlan::inverse_adjoint(std::span<const double> g, std::size_t planes,
                                   std::span<cplx> out) const {
  const std::size_t H = h_, W = w_, M = m_;
  const double norm = 1.0 / static_cast<double>(H * W);
#pragma omp parallel for schedule(static)
  for (long p_ = 0; p_ < as_long(planes); ++p_) {
    const std::size_t p = static_cast<std::size_t>(p_);
    const double* src = g.data() + p * H * W;
    std::vector<cplx> gz(H * M);
    for (std::size_t row = 0; row < H; ++row) {
      const double* gr = src + row * W;
      for (std::size_t l = 0; l < M; ++l) {
        const double* c = col_cos_.data() + l * W;
        const double* s = col_sin_.data() + l * W;
        double re = 0.0, im = 0.0;
        for (std::size_t q = 0; q < W; ++q) {
          re += gr[q] * c[q];
          im -= gr[q] * s[q];
        }
        gz[row * M + l] = cplx(re, im) * (colw_[l] * norm);
      }
    }
    cplx* dst = out.data() + p * 2 * M * M;
    for (std::size_t r = 0; r < 2 * M; ++r) {
      const cplx* tw = row_tw_.data() + r * H;
      for (std::size_t l = 0; l < M; ++l) {
        cplx acc = 0.0;
        for (std::size_t row = 0; row < H; ++row) acc += gz[row * M + l] * tw[row];
        dst[r * M + l] = acc;
      }
    }
  }
}

void spectral_mix_forward(std::span<const cplx> x, std::span<const double> wr,
                          std::span<const double> wi, std::size_t batch,
                          std::size_t in, std::size_t out, std::size_t block,
                          std::span<cplx> y) {
#pragma omp parallel for schedule(static)
  for (long bo = 0; bo < as_long(batch * out); ++bo) {
    const std::size_t b = static_cast<std::size_t>(bo) / out;
    const std::size_t o = static_cast<std::size_t>(bo) % out;
    cplx* dst = y.data() + (b * out + o) * block;
    for (std::size_t k = 0; k < block; ++k) dst[k] = 0.0;
    for (std::size_t i = 0; i < in; ++i) {
      const cplx* src = x.data() + (b * in + i) * block;
      const double* r = wr.data() + (i * out + o) * block;
      const double* q = wi.data() + (i * out + o) * block;
      for (std::size_t k = 0; k < block; ++k) dst[k] += src[k] * cplx(r[k], q[k]);
    }
  }
}

void spectral_mix_backward(std::span<const cplx> x, std::span<const double> wr,
                           std::span<const double> wi, std::span<const cplx> g,
                           std::size_t batch, std::size_t in, std::size_t out,
                           std::size_t block, std::span<cplx> gx,
                           std::span<double> gwr, std::span<double> gwi) {
  if (!gx.empty()) {
#pragma omp parallel for schedule(static)
    for (long bi = 0; bi < as_long(batch * in); ++bi) {
      const std::size_t b = static_cast<std::size_t>(bi) / in;
      const std::size_t i = static_cast<std::size_t>(bi) % in;
      cplx* dst = gx.data() + (b * in + i) * block;
      for (std::size_t k = 0; k < block; ++k) dst[k] = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        const cplx* src = g.data() + (b * out + o) * block;
        const double* r = wr.data() + (i * out + o) * block;
        const double* q = wi.data() + (i * out + o) * block;
        for (std::size_t k = 0; k < block; ++k) dst[k] += src[k] * cplx(r[k], -q[k]);
      }
    }
  }
  if (!gwr.empty() || !gwi.empty()) {
#pragma omp parallel for schedule(static)
    for (long io = 0; io < as_long(in * out); ++io) {
      const std::size_t i = static_cast<std::size_t>(io) / out;
      const std::size_t o = static_cast<std::size_t>(io) % out;
      for (std::size_t k = 0; k < block; ++k) {
        cplx acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
          acc += g[(b * out + o) * block + k] * std::conj(x[(b * in + i) * block + k]);
        if (!gwr.empty()) gwr[(i * out + o) * block + k] = acc.real();
        if (!gwi.empty()) gwi[(i * out + o) * block + k] = acc.imag();
      }
    }
  }
}

void ap_euler_step(std::span<double> v, std::span<double> w,
                   std::span<const double> stim, std::size_t n, double h,
                   double diffusion, const ReactionParams& p, double dt,
                   std::span<double> lap) {
  laplacian_neumann(v, 1, n, n, h, lap);
  const bool has_stim = !stim.empty();
#pragma omp parallel for schedule(static)
  for (long i_ = 0; i_ < as_long(n * n); ++i_) {
    const std::size_t i = static_cast<std::size_t>(i_);
    const double V = v[i], Wr = w[i];
    double dv = diffusion * lap[i] - p.k * V * (V - p.a) * (V - 1.0) - V * Wr;
    if (has_stim) dv += stim[i];
    const double dw = (p.eps + p.mu1 * Wr / (V + p.mu2)) * (-Wr - p.k * V * (V - p.a - 1.0));
    v[i] = V + dt * dv;
    w[i] = Wr + dt * dw;
  }
}

namespace serial {

void channel_mix_forward(std::span<const double> x, std::span<const double> w,
                         std::span<const double> b, const MixDims& d,
                         std::span<double> out) {
  for (std::size_t bi = 0; bi < d.batch; ++bi)
    for (std::size_t o = 0; o < d.out; ++o)
      for (std::size_t p = 0; p < d.plane; ++p) {
        double acc = b.empty() ? 0.0 : b[o];
        for (std::size_t i = 0; i < d.in; ++i)
          acc += w[o * d.in + i] * x[(bi * d.in + i) * d.plane + p];
        out[(bi * d.out + o) * d.plane + p] = acc;
      }
}

void laplacian_neumann(std::span<const double> in, std::size_t planes,
                       std::size_t height, std::size_t width, double h,
                       std::span<double> out) {
  const auto H = static_cast<long>(height), W = static_cast<long>(width);
  auto mirror = [](long i, long n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
  for (std::size_t p = 0; p < planes; ++p) {
    const double* f = in.data() + p * height * width;
    auto at = [&](long i, long j) { return f[mirror(i, H) * W + mirror(j, W)]; };
    for (long i = 0; i < H; ++i)
      for (long j = 0; j < W; ++j)
        out[p * height * width + static_cast<std::size_t>(i * W + j)] =
            (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j)) /
            (h * h);
  }
}

void spectral_conv(std::span<const double> x, std::span<const double> wr,
                   std::span<const double> wi, std::size_t batch,
                   std::size_t in, std::size_t out, std::size_t height,
                   std::size_t width, std::size_t modes, std::span<double> y) {
  const std::size_t H = height, W = width, M = modes, K = 2 * M * M;
  auto row_freq = [&](std::size_t r) { return r < M ? r : H - 2 * M + r; };
  auto phase = [&](std::size_t k, std::size_t yy, std::size_t l, std::size_t xx) {
    return two_pi * (static_cast<double>(k * yy) / static_cast<double>(H) +
                     static_cast<double>(l * xx) / static_cast<double>(W));
  };
  std::vector<cplx> X(batch * in * K);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t r = 0; r < 2 * M; ++r)
        for (std::size_t l = 0; l < M; ++l) {
          cplx acc = 0.0;
          for (std::size_t yy = 0; yy < H; ++yy)
            for (std::size_t xx = 0; xx < W; ++xx)
              acc += x[((b * in + i) * H + yy) * W + xx] *
                     std::polar(1.0, -phase(row_freq(r), yy, l, xx));
          X[(b * in + i) * K + r * M + l] = acc;
        }
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      std::vector<cplx> Y(K, 0.0);
      for (std::size_t i = 0; i < in; ++i)
        for (std::size_t k = 0; k < K; ++k)
          Y[k] += X[(b * in + i) * K + k] *
                  cplx(wr[(i * out + o) * K + k], wi[(i * out + o) * K + k]);
      for (std::size_t yy = 0; yy < H; ++yy)
        for (std::size_t xx = 0; xx < W; ++xx) {
          double acc = 0.0;
          for (std::size_t r = 0; r < 2 * M; ++r)
            for (std::size_t l = 0; l < M; ++l) {
              const double cw = (l == 0 || 2 * l == W) ? 1.0 : 2.0;
              acc += cw * (Y[r * M + l] * std::polar(1.0, phase(row_freq(r), yy, l, xx))).real();
            }
          y[((b * out + o) * H + yy) * W + xx] = acc / static_cast<double>(H * W);
        }
    }
}

void ap_euler_step(std::span<double> v, std::span<double> w,
                   std::span<const double> stim, std::size_t n, double h,
                   double diffusion, const ReactionParams& p, double dt) {
  std::vector<double> lap(n * n);
  laplacian_neumann(v, 1, n, n, h, lap);
  for (std::size_t i = 0; i < n * n; ++i) {
    const double V = v[i], Wr = w[i];
    const double react = -p.k * V * (V - p.a) * (V - 1.0) - V * Wr;
    const double dw = (p.eps + p.mu1 * Wr / (V + p.mu2)) * (-Wr - p.k * V * (V - p.a - 1.0));
    v[i] = V + dt * (diffusion * lap[i] + react + (stim.empty() ? 0.0 : stim[i]));
    w[i] = Wr + dt * dw;
  }
}

}  // namespace serial
}  // namespace pino::kernels
