#include <doctest.h>

#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pino/kernels.hpp"
#include "support/physics.hpp"

using namespace pino;
namespace k = pino::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Runs body at 1 and 4 threads; the kernels promise the same bits either way.
template <class F>
void with_threads(F body) {
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  for (int t : {1, 4}) {
    omp_set_num_threads(t);
    body();
  }
  omp_set_num_threads(saved);
#else
  body();
#endif
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("channel_mix matches the serial loop") {
    const k::MixDims d{3, 5, 7, 41 * 41};
    const auto x = random_vec(d.batch * d.in * d.plane, 1);
    const auto w = random_vec(d.out * d.in, 2);
    const auto b = random_vec(d.out, 3);
    std::vector<double> ref(d.batch * d.out * d.plane), out(ref.size());
    k::serial::channel_mix_forward(x, w, b, d, ref);
    with_threads([&] {
      k::channel_mix_forward(x, w, b, d, out);
      CHECK(max_abs_diff(out, ref) == 0.0);
    });
  }

  TEST_CASE("laplacian matches the serial loop") {
    const auto v = random_vec(3 * 37 * 29, 4);
    std::vector<double> ref(v.size()), out(v.size());
    k::serial::laplacian_neumann(v, 3, 37, 29, 0.25, ref);
    std::vector<double> first;
    with_threads([&] {
      k::laplacian_neumann(v, 3, 37, 29, 0.25, out);
      CHECK(max_abs_diff(out, ref) < 1e-12);
      if (first.empty()) first = out;
      CHECK(max_abs_diff(out, first) == 0.0);
    });
  }

  TEST_CASE("laplacian of constants and quadratics") {
    const std::size_t n = 17;
    const double h = 0.5;
    std::vector<double> c(n * n, 3.25), out(n * n);
    k::laplacian_neumann(c, 1, n, n, h, out);
    for (double x : out) CHECK(x == 0.0);

    std::vector<double> q(n * n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t col = 0; col < n; ++col) {
        const double x = static_cast<double>(col) * h;
        q[r * n + col] = x * x;
      }
    k::laplacian_neumann(q, 1, n, n, h, out);
    for (std::size_t r = 1; r + 1 < n; ++r)
      for (std::size_t col = 1; col + 1 < n; ++col) CHECK(out[r * n + col] == doctest::Approx(2.0).epsilon(1e-12));
  }

  TEST_CASE("no-flux stencil conserves the total") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      CHECK(testing::flux_imbalance(41, 1.0, s) < 1e-10);
      CHECK(testing::flux_imbalance(101, 0.25, s) < 1e-10);
    }
  }

  TEST_CASE("adjoint laplacian is the transpose") {
    const std::size_t H = 9, W = 12;
    const auto x = random_vec(H * W, 5), g = random_vec(H * W, 6);
    std::vector<double> ax(H * W), atg(H * W);
    k::laplacian_neumann(x, 1, H, W, 0.7, ax);
    k::laplacian_neumann_adjoint(g, 1, H, W, 0.7, atg);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < H * W; ++i) lhs += g[i] * ax[i], rhs += atg[i] * x[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("twiddle spectral convolution matches direct evaluation") {
    const std::size_t B = 2, I = 3, O = 2, H = 12, W = 10, M = 3, K = 2 * M * M;
    const auto x = random_vec(B * I * H * W, 7);
    const auto wr = random_vec(I * O * K, 8), wi = random_vec(I * O * K, 9);
    std::vector<double> ref(B * O * H * W), out(ref.size());
    k::serial::spectral_conv(x, wr, wi, B, I, O, H, W, M, ref);
    with_threads([&] {
      k::SpectralPlan plan(H, W, M);
      std::vector<k::cplx> xh(B * I * K), yh(B * O * K);
      plan.forward(x, B * I, xh);
      k::spectral_mix_forward(xh, wr, wi, B, I, O, K, yh);
      plan.inverse(yh, B * O, out);
      CHECK(max_abs_diff(out, ref) < 1e-12);
    });
  }

  TEST_CASE("spectral plan rejects small grids") {
    CHECK_THROWS_AS(k::SpectralPlan(10, 10, 6), std::invalid_argument);
  }

  TEST_CASE("solver step matches the serial loop") {
    const std::size_t n = 31;
    const k::ReactionParams p{0.15, 8.0, 0.002, 0.2, 0.3};
    auto v = random_vec(n * n, 10, 0.0, 1.0), w = random_vec(n * n, 11, 0.0, 1.0);
    auto stim = random_vec(n * n, 12, 0.0, 0.1);
    auto v2 = v, w2 = w;
    std::vector<double> lap(n * n);
    for (int s = 0; s < 20; ++s) {
      k::serial::ap_euler_step(v, w, stim, n, 1.0, 0.55, p, 0.05);
      k::ap_euler_step(v2, w2, stim, n, 1.0, 0.55, p, 0.05, lap);
    }
    CHECK(max_abs_diff(v, v2) < 1e-12);
    CHECK(max_abs_diff(w, w2) < 1e-12);
  }
}
