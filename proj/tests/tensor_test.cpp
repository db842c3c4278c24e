#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "pino/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace pino;
using pino::testing::uniform;

namespace {

// Direct O(N^2) DFT over an HxW plane.
std::vector<cplx> naive_dft(const std::vector<cplx>& x, std::size_t H, std::size_t W, int sign) {
  std::vector<cplx> out(H * W);
  for (std::size_t k = 0; k < H; ++k)
    for (std::size_t l = 0; l < W; ++l) {
      cplx acc = 0.0;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t q = 0; q < W; ++q) {
          const double ph = sign * 2.0 * std::numbers::pi *
                            (static_cast<double>(k * y) / H + static_cast<double>(l * q) / W);
          acc += x[y * W + q] * cplx(std::cos(ph), std::sin(ph));
        }
      out[k * W + l] = acc;
    }
  return out;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("elementwise basics") {
    Tape t;
    const Var a = t.constant(Tensor::from({2}, {1, 2}));
    const Var b = t.constant(Tensor::from({2}, {3, 4}));
    const Var c = add(a, b);
    CHECK(c.value().data()[0] == 4.0);
    CHECK(c.value().data()[1] == 6.0);

    std::mt19937_64 rng(3);
    const Tensor x = uniform({2, 3, 4, 4}, rng);
    const Var p = mul(t.constant(x), t.constant(Tensor::filled(x.shape(), 1.0)));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(p.value().data()[i] == x.data()[i]);
  }

  TEST_CASE("gelu at zero") {
    // exact-erf GELU: value 0, derivative Phi(0) + 0 * phi(0) = 0.5
    Tape t;
    const Var x = t.param(Tensor::from({1}, {0.0}));
    const Var y = gelu(x);
    CHECK(y.value().item() == 0.0);
    t.backward(sum(y));
    CHECK(x.grad().data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  }

  TEST_CASE("broadcast mismatch names both shapes") {
    Tape t;
    const Var a = t.constant(Tensor::zeros({2, 3}));
    const Var b = t.constant(Tensor::zeros({2, 4}));
    try {
      (void)add(a, b);
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2,3]") != std::string::npos);
      CHECK(msg.find("[2,4]") != std::string::npos);
    }
  }

  TEST_CASE("broadcast along unit extents") {
    Tape t;
    const Var a = t.constant(Tensor::from({2, 1}, {1, 2}));
    const Var b = t.constant(Tensor::from({1, 3}, {10, 20, 30}));
    const Var c = add(a, b);
    REQUIRE(c.shape() == Shape{2, 3});
    CHECK(c.value().data()[4] == 22.0);
  }

  TEST_CASE("channel_mix") {
    Tape t;
    std::mt19937_64 rng(1);
    const Tensor x = uniform({2, 3, 5, 5}, rng);
    Tensor eye = Tensor::zeros({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.data()[i * 3 + i] = 1.0;
    const Var y = channel_mix(t.constant(x), t.constant(eye), t.constant(Tensor::zeros({3})));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.value().data()[i] == x.data()[i]);

    // hand evaluation: 1*3 + 2*5 + 7
    const Var z = channel_mix(t.constant(Tensor::from({1, 2, 1, 1}, {3, 5})), t.constant(Tensor::from({1, 2}, {1, 2})),
                              t.constant(Tensor::from({1}, {7})));
    CHECK(z.value().item() == 20.0);

    Tape t2;
    const Var bias = t2.param(Tensor::zeros({4}));
    const Var out = channel_mix(t2.constant(x), t2.constant(uniform({4, 3}, rng)), bias);
    t2.backward(sum(out));
    // d sum / d bias[o] counts every (b, h, w) position
    const Tensor gb = bias.grad();
    for (double g : gb.data()) CHECK(g == 2.0 * 25.0);

    CHECK_THROWS_AS(channel_mix(t.constant(x), t.constant(Tensor::zeros({3, 2})), t.constant(Tensor::zeros({3}))),
                    std::invalid_argument);
  }

  TEST_CASE("fft2 of a constant is a DC spike") {
    Tape t;
    const double c = 0.75;
    const Var f = fft2(t.constant(Tensor::filled({6, 5}, c)));
    const auto d = f.value().cdata();
    CHECK(std::abs(d[0] - cplx(c * 30.0, 0.0)) < 1e-12);
    for (std::size_t i = 1; i < d.size(); ++i) CHECK(std::abs(d[i]) < 1e-12);
  }

  TEST_CASE("fft2 matches a direct DFT and inverts") {
    std::mt19937_64 rng(7);
    const Tensor x = uniform({8, 8}, rng);
    Tape t;
    const Var f = fft2(t.constant(x));
    std::vector<cplx> xc(x.data().begin(), x.data().end());
    const auto ref = naive_dft(xc, 8, 8, -1);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(f.value().cdata()[i] - ref[i]) < 1e-11);
    const Var back = real_part(ifft2(f));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back.value().data()[i] - x.data()[i]) < 1e-10);
  }

  TEST_CASE("Parseval on 16x16") {
    std::mt19937_64 rng(11);
    const Tensor x = uniform({16, 16}, rng);
    double direct = 0.0;
    for (double v : x.data()) direct += v * v;
    Tape t;
    const Var f = fft2(t.constant(x));
    double spectral = 0.0;
    for (const auto& z : f.value().cdata()) spectral += std::norm(z);
    CHECK(direct == doctest::Approx(spectral / 256.0).epsilon(1e-12));
  }

  TEST_CASE("truncate then fill is the ideal low-pass") {
    const std::size_t N = 32, m = 4;
    std::mt19937_64 rng(5);
    const Tensor x = uniform({N, N}, rng);
    Tape t;
    const Var lp = real_part(ifft2(mode_fill(mode_truncate(fft2(t.constant(x)), m), N, N)));

    // oracle: keep rows R = [0,m) u [N-m,N) in columns [0,m) and their
    // conjugate partners in columns N-m+1..N-1, then invert directly
    std::vector<cplx> xc(x.data().begin(), x.data().end());
    auto X = naive_dft(xc, N, N, -1);
    auto in_rows = [&](std::size_t k) { return k < m || k >= N - m; };
    for (std::size_t k = 0; k < N; ++k)
      for (std::size_t l = 0; l < N; ++l) {
        const bool keep = (l < m && in_rows(k)) || (l > N - m && in_rows((N - k) % N));
        if (!keep) X[k * N + l] = 0.0;
      }
    auto inv = naive_dft(X, N, N, +1);
    for (std::size_t i = 0; i < N * N; ++i) CHECK(std::abs(lp.value().data()[i] - inv[i].real() / (N * N)) < 1e-10);
  }

  TEST_CASE("band-limited round trip at modes = H/2") {
    std::mt19937_64 rng(9);
    Tape t;
    auto lowpass = [&](const Var& v) { return real_part(ifft2(mode_fill(mode_truncate(fft2(v), 4), 8, 8))); };
    const Var once = lowpass(t.constant(uniform({8, 8}, rng)));
    const Var twice = lowpass(once);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(once.value().data()[i] - twice.value().data()[i]) < 1e-12);
  }

  TEST_CASE("mode_truncate rejects too few grid points") {
    Tape t;
    const Var f = fft2(t.constant(Tensor::zeros({6, 6})));
    try {
      (void)mode_truncate(f, 4);
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("H >= 8") != std::string::npos);
    }
  }

  TEST_CASE("backward contract") {
    Tape t;
    std::mt19937_64 rng(2);
    const Tensor xv = uniform({3, 4}, rng);
    const Var x = t.param(xv);
    const Var loss = sum(square(x));
    t.backward(loss);
    for (std::size_t i = 0; i < xv.numel(); ++i) CHECK(x.grad().data()[i] == 2.0 * xv.data()[i]);
    CHECK_THROWS(t.backward(loss));
    t.reset();

    Tape t2;
    const Var y = t2.param(xv);
    CHECK_THROWS_AS(t2.backward(square(y)), std::invalid_argument);
  }

  TEST_CASE("constants stay off the tape") {
    Tape t;
    const Var c = t.constant(Tensor::zeros({4}));
    (void)exp(add(c, c));
    CHECK(t.size() == 0);
    const Var p = t.param(Tensor::zeros({4}));
    (void)exp(add(p, c));
    CHECK(t.size() == 3);
  }

  TEST_CASE("gradients of every op") {
    for (const auto& op : pino::testing::op_cases()) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        std::mt19937_64 rng(seed);
        const auto r = pino::testing::gradcheck(op.graph, op.inputs(rng), seed);
        INFO(op.name << " seed " << seed << " rel " << r.max_rel);
        CHECK(r.max_rel < (op.linear ? 1e-6 : 1e-4));
      }
    }
  }

  TEST_CASE("truncate/fill gradient at step 1e-5") {
    std::mt19937_64 rng(4);
    const auto r = pino::testing::gradcheck(
        [](Tape&, const std::vector<Var>& v) { return real_part(ifft2(mode_fill(mode_truncate(fft2(v[0]), 4), 8, 8))); },
        {uniform({8, 8}, rng)}, 4, 1e-5);
    CHECK(r.max_rel < 1e-6);
  }

  TEST_CASE("ops are deterministic") {
    std::mt19937_64 rng(8);
    const Tensor x = uniform({2, 4, 12, 12}, rng), wr = uniform({4, 4, 6, 3}, rng), wi = uniform({4, 4, 6, 3}, rng);
    Tape t;
    const Var a = spectral_conv(t.constant(x), t.constant(wr), t.constant(wi), 3);
    const Var b = spectral_conv(t.constant(x), t.constant(wr), t.constant(wi), 3);
    for (std::size_t i = 0; i < a.value().numel(); ++i) CHECK(a.value().data()[i] == b.value().data()[i]);
  }

  TEST_CASE("fused spectral_conv equals the composed chain") {
    std::mt19937_64 rng(12);
    const Tensor x = uniform({2, 3, 10, 9}, rng), wr = uniform({3, 2, 6, 3}, rng), wi = uniform({3, 2, 6, 3}, rng);
    Tape t;
    const Var fused = spectral_conv(t.constant(x), t.constant(wr), t.constant(wi), 3);
    const Var chain = real_part(
        ifft2(mode_fill(spectral_mix(mode_truncate(fft2(t.constant(x)), 3), t.constant(wr), t.constant(wi)), 10, 9)));
    for (std::size_t i = 0; i < fused.value().numel(); ++i)
      CHECK(std::abs(fused.value().data()[i] - chain.value().data()[i]) < 1e-12);
  }

  TEST_CASE("spectral_conv commutes with cyclic shifts") {
    std::mt19937_64 rng(13);
    const std::size_t N = 12;
    const Tensor x = uniform({1, 2, N, N}, rng), wr = uniform({2, 2, 6, 3}, rng), wi = uniform({2, 2, 6, 3}, rng);
    Tensor xs = Tensor::zeros(x.shape());
    const std::size_t dy = 3, dx = 5;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < N; ++y)
        for (std::size_t q = 0; q < N; ++q)
          xs.data()[(c * N + (y + dy) % N) * N + (q + dx) % N] = x.data()[(c * N + y) * N + q];
    Tape t;
    const Var a = spectral_conv(t.constant(x), t.constant(wr), t.constant(wi), 3);
    const Var b = spectral_conv(t.constant(xs), t.constant(wr), t.constant(wi), 3);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < N; ++y)
        for (std::size_t q = 0; q < N; ++q)
          CHECK(std::abs(b.value().data()[(c * N + (y + dy) % N) * N + (q + dx) % N] -
                         a.value().data()[(c * N + y) * N + q]) < 1e-12);
  }
}
