#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pino/fno.hpp"
#include "pino/io.hpp"
#include "support/gradcheck.hpp"
#include "support/tmpdir.hpp"

using namespace pino;
using namespace pino::fno;
using pino::testing::uniform;

namespace {

FnoConfig small(std::size_t modes = 4, std::size_t width = 6) {
  FnoConfig c = FnoConfig::for_frames(1, modes, width);
  return c;
}

// Smooth periodic field with frequencies below 3 per axis, sampled on an
// n x n grid over [0, 1).
Tensor band_limited(std::size_t channels, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t = Tensor::zeros({1, channels, n, n});
  for (std::size_t c = 0; c < channels; ++c) {
    double coef[3][3][2];
    for (auto& a : coef)
      for (auto& b : a)
        for (auto& x : b) x = u(rng);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t q = 0; q < n; ++q) {
        const double y = static_cast<double>(r) / n, x = static_cast<double>(q) / n;
        double v = 0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            const double ph = 2 * std::numbers::pi * (a * y + b * x);
            v += coef[a][b][0] * std::cos(ph) + coef[a][b][1] * std::sin(ph);
          }
        t.data()[(c * n + r) * n + q] = v;
      }
  }
  return t;
}

}  // namespace

TEST_SUITE("fno") {
  TEST_CASE("grid embedding") {
    Tape t;
    const Var e = grid_embed(t.constant(Tensor::zeros({1, 1, 2, 2})));
    REQUIRE(e.shape() == Shape{1, 3, 2, 2});
    const auto d = e.value().data();
    CHECK(d[4] == 0.0);
    CHECK(d[5] == 0.0);
    CHECK(d[6] == 1.0);
    CHECK(d[7] == 1.0);  // rows
    CHECK(d[8] == 0.0);
    CHECK(d[9] == 1.0);
    CHECK(d[10] == 0.0);
    CHECK(d[11] == 1.0);  // columns
    for (std::size_t n : {7u, 41u}) {
      const Var g = grid_embed(t.constant(Tensor::zeros({2, 3, n, n})));
      const auto v = g.value().data();
      const std::size_t P = n * n;
      CHECK(v[(3) * P] == 0.0);
      CHECK(v[(3) * P + P - 1] == 1.0);
      CHECK(v[(4) * P + n - 1] == 1.0);
      CHECK(v[(5 + 3) * P + P - 1] == 1.0);
      CHECK(grid_embed(g).shape()[1] == 7);
    }
  }

  TEST_CASE("config layouts") {
    const auto s = FnoConfig::for_frames(1);
    CHECK(s.in_channels == 4);
    CHECK(s.out_channels == 2);
    const auto m = FnoConfig::for_frames(6);
    CHECK(m.in_channels == 14);
    CHECK(m.out_channels == 12);
    FnoConfig bad = s;
    bad.blocks = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }

  TEST_CASE("output shape follows the input grid") {
    const Model model(FnoConfig::for_frames(1, 8, 4), 7);
    const std::size_t count = model.parameter_count();
    for (std::size_t n : {41u, 52u, 103u, 205u, 401u}) {
      std::mt19937_64 rng(n);
      const Tensor y = model.predict(uniform({1, 2, n, n}, rng));
      CHECK(y.shape() == Shape{1, 2, n, n});
      for (double v : y.data()) REQUIRE(std::isfinite(v));
    }
    CHECK(model.parameter_count() == count);
    CHECK(Model(FnoConfig::for_frames(1, 8, 4), 8).parameter_count() == count);
  }

  TEST_CASE("input validation") {
    const Model model(small(), 1);
    std::mt19937_64 rng(1);
    try {
      model.predict(uniform({1, 3, 16, 16}, rng));
      FAIL("accepted wrong channels");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[1,3,16,16]") != std::string::npos);
      CHECK(msg.find("[B,2,H,W]") != std::string::npos);
    }
    CHECK_THROWS_AS(model.predict(uniform({1, 2, 7, 7}, rng)), std::invalid_argument);
  }

  TEST_CASE("zero projection gives zero output") {
    Model model(small(), 2);
    model.zero_projection();
    std::mt19937_64 rng(2);
    const Tensor y = model.predict(uniform({2, 2, 12, 12}, rng, -5, 5));
    for (double v : y.data()) CHECK(v == 0.0);
  }

  TEST_CASE("seeded initialisation is deterministic") {
    const Model a(small(), 11), b(small(), 11), c(small(), 12);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());
    for (std::size_t i = 0; i < a.params().size(); ++i)
      for (std::size_t j = 0; j < a.params()[i].value.numel(); ++j)
        REQUIRE(a.params()[i].value.data()[j] == b.params()[i].value.data()[j]);
    const double s = 1.0 / (6.0 * 6.0);
    for (double v : a.param("block0.spec_re").data()) CHECK(std::abs(v) <= s);
  }

  TEST_CASE("checkpoint round trip") {
    testing::TempDir dir;
    const Model m(small(), 5);
    const Extensions ext{{"NOTE", {1, 2, 3}}};
    save_checkpoint(dir / "m.ckpt", m, ext);
    const auto c = load_checkpoint(dir / "m.ckpt");
    CHECK(c.model.config() == m.config());
    CHECK(c.model.checksum() == m.checksum());
    REQUIRE(c.extension("NOTE") != nullptr);
    CHECK(*c.extension("NOTE") == std::vector<std::uint8_t>{1, 2, 3});
    CHECK(c.extension("NONE") == nullptr);

    const FnoConfig other = small(4, 8);
    CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", &other), DataError);
    const FnoConfig same = small();
    CHECK(load_checkpoint(dir / "m.ckpt", &same).model.checksum() == m.checksum());

    auto bytes = read_file(dir / "m.ckpt");
    bytes[bytes.size() / 3] ^= 0x10;
    write_file(dir / "bad.ckpt", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
  }

  TEST_CASE("parameter sets must match the configuration") {
    auto params = Model(small(), 1).params();
    params.pop_back();
    CHECK_THROWS_AS(Model(small(), params), DataError);
  }

  TEST_CASE("full forward pass gradient check") {
    FnoConfig c = FnoConfig::for_frames(1, 3, 4);
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      std::mt19937_64 rng(seed);
      const Model model(c, seed);
      const auto rep = testing::fno_gradcheck(model, uniform({1, 2, 8, 8}, rng), seed);
      CHECK(rep.max_rel < 1e-4);
    }
    c.activation = Activation::relu;
    c.gating = false;
    std::mt19937_64 rng(9);
    CHECK(testing::fno_gradcheck(Model(c, 9), uniform({1, 2, 8, 8}, rng), 9).max_rel < 1e-4);
  }

  TEST_CASE("identity and zero spectral kernels") {
    const std::size_t W = 3, m = 4, K = 2 * m * m;
    Tensor re = Tensor::zeros({W, W, 2 * m, m}), im = Tensor::zeros({W, W, 2 * m, m});
    for (std::size_t i = 0; i < W; ++i)
      for (std::size_t k = 0; k < K; ++k) re.data()[(i * W + i) * K + k] = 1.0;
    const Tensor x = band_limited(W, 8, 1);
    Tape t;
    const Var y = spectral_conv(t.constant(x), t.constant(re), t.constant(im), m);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.value().data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
    const Var z = spectral_conv(t.constant(x), t.constant(Tensor::zeros(re.shape())), t.constant(im), m);
    for (double v : z.value().data()) CHECK(v == 0.0);
  }

  TEST_CASE("spectral convolution is consistent across resolutions") {
    const std::size_t C = 2, m = 4;
    std::mt19937_64 rng(4);
    const Tensor re = uniform({C, C, 2 * m, m}, rng), im = uniform({C, C, 2 * m, m}, rng);
    const Tensor coarse = band_limited(C, 41, 2), fine = band_limited(C, 82, 2);
    Tape t;
    const Tensor a = spectral_conv(t.constant(coarse), t.constant(re), t.constant(im), m).value();
    const Tensor b = spectral_conv(t.constant(fine), t.constant(re), t.constant(im), m).value();
    double num = 0, den = 0;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t r = 0; r < 41; ++r)
        for (std::size_t q = 0; q < 41; ++q) {
          const double va = a.data()[(c * 41 + r) * 41 + q];
          const double vb = b.data()[(c * 82 + 2 * r) * 82 + 2 * q];
          num += (va - vb) * (va - vb);
          den += va * va;
        }
    CHECK(std::sqrt(num / den) < 0.05);
    CHECK(std::sqrt(num / den) < 1e-9);
  }
}
