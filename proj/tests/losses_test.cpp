#include <doctest.h>

#include <cmath>
#include <random>

#include "pino/losses.hpp"
#include "support/gradcheck.hpp"
#include "support/physics.hpp"

using namespace pino;
using namespace pino::loss;
using pino::testing::uniform;

namespace {

double value(const Var& v) { return v.value().item(); }

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("relative L2") {
    Tape t;
    std::mt19937_64 rng(1);
    const Tensor x = uniform({3, 2, 6, 6}, rng);
    CHECK(value(relative_l2(t.constant(x), t.constant(x))) < 1e-100);

    // unit-RMS target, constant offset 0.1
    Tensor ones = Tensor::filled({2, 2, 5, 5}, 1.0), off = Tensor::filled({2, 2, 5, 5}, 1.1);
    CHECK(value(relative_l2(t.constant(off), t.constant(ones))) == doctest::Approx(0.1).epsilon(1e-12));

    const Tensor y = uniform({3, 2, 6, 6}, rng);
    Tensor xs = x, ys = y;
    for (auto& v : xs.data()) v *= -3.5;
    for (auto& v : ys.data()) v *= -3.5;
    CHECK(value(relative_l2(t.constant(xs), t.constant(ys))) ==
          doctest::Approx(value(relative_l2(t.constant(x), t.constant(y)))).epsilon(1e-12));
    CHECK_THROWS_AS(relative_l2(t.constant(x), t.constant(Tensor::zeros({3, 2, 6, 5}))), std::invalid_argument);
  }

  TEST_CASE("time derivative is exact on linear-in-time frames") {
    const std::size_t L = 5, H = 6, W = 7;
    Tensor f = Tensor::zeros({2, L, 2, H, W});
    std::mt19937_64 rng(2);
    const Tensor c = uniform({2, 1, 2, H, W}, rng);
    ResidualSpec spec;
    spec.include_rhs = false;
    spec.dt_au = 0.3;
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t i = 0; i < 2 * H * W; ++i)
          f.data()[(s * L + l) * 2 * H * W + i] = c.data()[s * 2 * H * W + i] * spec.dt_au * static_cast<double>(l) + 0.25;
    Tape t;
    const auto r = pde_residual(t.constant(f), spec);
    REQUIRE(r.v.shape() == Shape{2, L - 2, 1, H, W});
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t l = 0; l < L - 2; ++l)
        for (std::size_t i = 0; i < H * W; ++i) {
          CHECK(r.v.value().data()[(s * (L - 2) + l) * H * W + i] ==
                doctest::Approx(c.data()[s * 2 * H * W + i]).epsilon(1e-12));
          CHECK(r.w.value().data()[(s * (L - 2) + l) * H * W + i] ==
                doctest::Approx(c.data()[s * 2 * H * W + H * W + i]).epsilon(1e-12));
        }
  }

  TEST_CASE("rest state has zero residual") {
    Tape t;
    const auto r = pde_residual(t.constant(Tensor::zeros({1, 4, 2, 8, 8})), ResidualSpec{});
    for (double v : r.v.value().data()) CHECK(v == 0.0);
    for (double v : r.w.value().data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(pde_residual(t.constant(Tensor::zeros({1, 2, 2, 8, 8})), ResidualSpec{}), std::invalid_argument);
  }

  TEST_CASE("ground truth beats time-permuted frames") {
    ap::SimOptions o;
    o.horizon_ms = 300;
    o.require_reentry = false;
    const auto t = ap::simulate(ap::Scenario::centrifugal, ap::Grid::square(41), o);
    const auto r = testing::residual_oracle(t);
    CHECK(r.ratio() >= 10.0);
  }

  TEST_CASE("sequence views") {
    Tape t;
    const Var p = t.constant(Tensor::zeros({3, 12, 8, 8}));
    CHECK(as_sequences(p).shape() == Shape{3, 6, 2, 8, 8});
    CHECK(as_one_sequence(t.constant(Tensor::zeros({5, 2, 8, 8}))).shape() == Shape{1, 5, 2, 8, 8});
    CHECK_THROWS_AS(as_one_sequence(p), std::invalid_argument);
  }

  TEST_CASE("residual loss weights") {
    Tape t;
    std::mt19937_64 rng(3);
    const Tensor r = uniform({1, 2, 1, 5, 5}, rng);
    const Residual res{t.constant(r), t.constant(r)};
    double ms = 0.0;
    for (double x : r.data()) ms += x * x;
    ms /= static_cast<double>(r.numel());
    CHECK(value(residual_loss(res, 2.0, 1.0)) == doctest::Approx(3.0 * ms).epsilon(1e-12));
  }

  TEST_CASE("boundary loss") {
    Tape t;
    CHECK(value(boundary_loss(t.constant(Tensor::filled({2, 4, 6, 6}, 0.7)), 1.0)) == 0.0);
    // x-ramp: only the two vertical edges see a slope of 1/h
    Tensor ramp = Tensor::zeros({1, 1, 4, 5});
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 5; ++c) ramp.data()[r * 5 + c] = static_cast<double>(c);
    CHECK(value(boundary_loss(t.constant(ramp), 0.5)) == doctest::Approx(8.0 * 4.0 / 18.0));
  }

  TEST_CASE("initial condition loss") {
    Tape t;
    std::mt19937_64 rng(4);
    const Tensor a = uniform({2, 6, 5, 5}, rng);
    CHECK(value(initial_loss(t.constant(a), t.constant(a))) == 0.0);
    Tensor b = a;
    for (std::size_t i = 2 * 25; i < 6 * 25; ++i) b.data()[i] += 1.0;  // later frames of sample 0 only
    CHECK(value(initial_loss(t.constant(b), t.constant(a))) == 0.0);
    b.data()[0] += 1.0;
    CHECK(value(initial_loss(t.constant(b), t.constant(a))) == doctest::Approx(1.0 / 100.0));
  }

  TEST_CASE("loss component gradients") {
    const ResidualSpec spec{ap::Params{}, 1.0, 0.4, true};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::mt19937_64 rng(seed);
      const Tensor frames = uniform({1, 4, 2, 8, 8}, rng, 0.05, 0.9);
      const auto res = testing::gradcheck(
          [&](Tape&, const std::vector<Var>& v) { return residual_loss(pde_residual(v[0], spec), 2.0, 1.0); },
          {frames}, seed);
      CHECK(res.max_rel < 1e-4);
      const Tensor a = uniform({2, 4, 8, 8}, rng), b = uniform({2, 4, 8, 8}, rng);
      CHECK(testing::gradcheck([](Tape&, const std::vector<Var>& v) { return relative_l2(v[0], v[1]); }, {a, b}, seed)
                .max_rel < 1e-4);
      CHECK(testing::gradcheck([](Tape&, const std::vector<Var>& v) { return boundary_loss(v[0], 2.5); }, {a}, seed)
                .max_rel < 1e-4);
      CHECK(testing::gradcheck([](Tape&, const std::vector<Var>& v) { return initial_loss(v[0], v[1]); }, {a, b}, seed)
                .max_rel < 1e-4);
    }
  }

  TEST_CASE("fixed weights never move") {
    LossWeights w;
    for (int i = 0; i < 5; ++i) update_weights(w, {1.0 * i, 2.0, 0.5, 0.1});
    CHECK(w.lambdas() == Values{1.0, 0.01, 0.1, 0.1});
    w.active = {true, false, false, false};
    CHECK(w.lambdas() == Values{1.0, 0.0, 0.0, 0.0});
  }

  TEST_CASE("softadapt is symmetric") {
    LossWeights w;
    w.scheme = Scheme::softadapt;
    w.active = {true, true, false, false};
    update_weights(w, {0.5, 0.5, 0, 0});
    update_weights(w, {0.3, 0.3, 0, 0});
    CHECK(w.multiplier[0] == doctest::Approx(w.multiplier[1]));
    CHECK(w.multiplier[0] + w.multiplier[1] == doctest::Approx(2.0));
    // the component that grew gets more weight
    update_weights(w, {0.6, 0.3, 0, 0});
    CHECK(w.multiplier[0] > w.multiplier[1]);
  }

  TEST_CASE("reladapt resets to the initial weights") {
    LossWeights w;
    w.scheme = Scheme::reladapt;
    w.reset_prob = 0.0;
    w.alpha = 0.5;
    update_weights(w, {1, 1, 1, 1});
    update_weights(w, {2, 0.1, 1, 3});
    CHECK(w.multiplier != Values{1, 1, 1, 1});
    w.reset_prob = 1.0;
    update_weights(w, {5, 0.2, 1, 3});
    CHECK(w.lambdas() == w.initial);
  }

  TEST_CASE("weights stay finite and non-negative") {
    for (Scheme s : {Scheme::softadapt, Scheme::reladapt}) {
      LossWeights w;
      w.scheme = s;
      w.reseed(9);
      std::mt19937_64 rng(10);
      std::uniform_real_distribution<double> u(0.0, 50.0);
      for (int i = 0; i < 200; ++i) {
        update_weights(w, {u(rng), u(rng) * 1e-3, u(rng), u(rng) * 1e3});
        for (double l : w.lambdas()) REQUIRE((std::isfinite(l) && l >= 0.0));
      }
      const auto before = w.multiplier;
      update_weights(w, {1.0, NAN, 1.0, 1.0});
      CHECK(w.skipped == 1);
      CHECK(w.multiplier == before);
    }
  }

  TEST_CASE("weight state round trip") {
    LossWeights w;
    w.scheme = Scheme::reladapt;
    w.reseed(42);
    update_weights(w, {1, 2, 3, 4});
    update_weights(w, {2, 2, 3, 1});
    const auto copy = LossWeights::deserialize(w.serialize());
    CHECK(copy == w);
    auto a = w, b = copy;
    update_weights(a, {3, 1, 1, 1});
    update_weights(b, {3, 1, 1, 1});
    CHECK(a.multiplier == b.multiplier);
    CHECK(parse_scheme("softadapt") == Scheme::softadapt);
    CHECK_THROWS_AS(parse_scheme("gradnorm"), std::invalid_argument);
  }
}
