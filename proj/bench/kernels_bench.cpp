// Serial reference loops against the OpenMP kernels. With one core the two
// should be close; the point is the parallel path costs nothing extra.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pino/kernels.hpp"

namespace k = pino::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void channel_mix(benchmark::State& st, bool parallel) {
  const std::size_t n = static_cast<std::size_t>(st.range(0));
  const k::MixDims d{4, 32, 32, n * n};
  const auto x = noise(d.batch * d.in * d.plane, 1), w = noise(d.in * d.out, 2), b = noise(d.out, 3);
  std::vector<double> out(d.batch * d.out * d.plane);
  for (auto _ : st) {
    if (parallel)
      k::channel_mix_forward(x, w, b, d, out);
    else
      k::serial::channel_mix_forward(x, w, b, d, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void laplacian(benchmark::State& st, bool parallel) {
  const std::size_t n = static_cast<std::size_t>(st.range(0));
  const auto x = noise(32 * n * n, 4);
  std::vector<double> out(x.size());
  for (auto _ : st) {
    if (parallel)
      k::laplacian_neumann(x, 32, n, n, 1.0, out);
    else
      k::serial::laplacian_neumann(x, 32, n, n, 1.0, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void ap_step(benchmark::State& st, bool parallel) {
  const std::size_t n = static_cast<std::size_t>(st.range(0));
  auto v = noise(n * n, 5), w = noise(n * n, 6);
  for (auto& x : v) x = 0.5 + 0.5 * x;
  for (auto& x : w) x = 0.5 + 0.5 * x;
  std::vector<double> lap(n * n);
  const k::ReactionParams p{0.15, 8.0, 0.002, 0.2, 0.3};
  for (auto _ : st) {
    if (parallel)
      k::ap_euler_step(v, w, {}, n, 100.0 / double(n - 1), 0.55, p, 1e-4, lap);
    else
      k::serial::ap_euler_step(v, w, {}, n, 100.0 / double(n - 1), 0.55, p, 1e-4);
    benchmark::DoNotOptimize(v.data());
  }
}

void spectral(benchmark::State& st, bool parallel) {
  const std::size_t n = static_cast<std::size_t>(st.range(0)), c = 16, m = 8;
  const auto x = noise(c * n * n, 7), wr = noise(c * c * 2 * m * m, 8), wi = noise(c * c * 2 * m * m, 9);
  std::vector<double> y(c * n * n);
  if (parallel) {
    const k::SpectralPlan plan(n, n, m);
    std::vector<k::cplx> xf(c * plan.block()), yf(c * plan.block());
    for (auto _ : st) {
      plan.forward(x, c, xf);
      k::spectral_mix_forward(xf, wr, wi, 1, c, c, plan.block(), yf);
      plan.inverse(yf, c, y);
      benchmark::DoNotOptimize(y.data());
    }
  } else {
    for (auto _ : st) {
      k::serial::spectral_conv(x, wr, wi, 1, c, c, n, n, m, y);
      benchmark::DoNotOptimize(y.data());
    }
  }
}

}  // namespace

BENCHMARK_CAPTURE(channel_mix, serial, false)->Arg(41)->Arg(101);
BENCHMARK_CAPTURE(channel_mix, omp, true)->Arg(41)->Arg(101);
BENCHMARK_CAPTURE(laplacian, serial, false)->Arg(101)->Arg(401);
BENCHMARK_CAPTURE(laplacian, omp, true)->Arg(101)->Arg(401);
BENCHMARK_CAPTURE(ap_step, serial, false)->Arg(101)->Arg(401);
BENCHMARK_CAPTURE(ap_step, omp, true)->Arg(101)->Arg(401);
BENCHMARK_CAPTURE(spectral, serial, false)->Arg(41);
BENCHMARK_CAPTURE(spectral, omp, true)->Arg(41);

BENCHMARK_MAIN();
