#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "pino/eval.hpp"
#include "pino/io.hpp"
#include "support/tmpdir.hpp"

using namespace pino;
using namespace pino::eval;

namespace {

ap::Trajectory uniform_traj(std::size_t T, std::size_t n, float v) {
  ap::Trajectory t;
  t.T = T;
  t.H = t.W = n;
  t.frames.assign(T * 2 * n * n, 0.0f);
  for (std::size_t k = 0; k < T; ++k)
    for (auto& x : t.field(k, 0)) x = v;
  return t;
}

const ap::Trajectory& spiral41() {
  static const ap::Trajectory t = [] {
    ap::SimOptions o;
    o.horizon_ms = 1000;
    o.require_reentry = false;
    return ap::simulate(ap::Scenario::spiral, ap::Grid::square(41), o);
  }();
  return t;
}

Predictor zeros() {
  return [](const Tensor& x) { return Tensor::zeros(x.shape()); };
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("rmse definition and properties") {
    const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 6};
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(a, b) == doctest::Approx(1.0));
    CHECK(rmse(a, b) == rmse(b, a));
    std::vector<double> ca, cb;
    for (double x : a) ca.push_back(-3 * x);
    for (double x : b) cb.push_back(-3 * x);
    CHECK(rmse(ca, cb) == doctest::Approx(3 * rmse(a, b)));
    CHECK_THROWS_AS(rmse(a, std::vector<double>{1}), std::invalid_argument);
  }

  TEST_CASE("p2p on trivial predictors") {
    const auto pairs = data::build_single(10, 1);
    CHECK(eval_p2p(zeros(), uniform_traj(10, 8, 0.0f), pairs).rmse == 0.0);
    const auto r = eval_p2p(zeros(), uniform_traj(10, 8, 0.3f), pairs);
    CHECK(r.rmse == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(r.frame_rmse.size() == 9);
    CHECK(r.mode == "p2p");

    const auto& t = spiral41();
    const auto multi = data::build_multi(t.T, 1, 5);
    const auto o = eval_p2p(oracle(t, 6), t, multi);
    CHECK(o.rmse == 0.0);
    CHECK(eval_p2p(oracle(t, 1), t, data::build_single(t.T, 1)).rmse == 0.0);
    CHECK(o.frame_time_ms.front() == 30.0);
  }

  TEST_CASE("resolution below the model minimum is rejected") {
    const fno::Model m(fno::FnoConfig::for_frames(1, 8, 4), 1);
    const auto t = uniform_traj(4, 11, 0.1f);
    CHECK_THROWS_AS(eval_p2p(m, t, data::build_single(4, 1)), std::invalid_argument);
  }

  TEST_CASE("rollout") {
    const auto& t = spiral41();
    const auto pairs = data::build_multi(t.T, 1, 5);
    const auto deep = eval_rollout(oracle(t, 6), t, pairs[0], 20);
    CHECK(deep.rmse == 0.0);
    for (double e : deep.frame_rmse) CHECK(e == 0.0);
    CHECK(deep.frame_rmse.size() == 120);
    CHECK_FALSE(deep.collapsed);

    // depth 1 uses ground truth input, exactly like P2P on the first pair
    const fno::Model m(fno::FnoConfig::for_frames(6, 4, 4), 3);
    const auto one = eval_rollout(predictor(m), t, pairs[10], 1);
    const auto p2p = eval_p2p(m, t, std::span(pairs).subspan(10, 1));
    CHECK(one.rmse == p2p.rmse);

    const auto single = data::build_single(t.T, 1);
    const auto chain = eval_rollout(oracle(t, 1), t, single[3], 50);
    CHECK(chain.rmse == 0.0);
    CHECK(chain.frame_rmse.size() == 50);
    CHECK_THROWS_AS(eval_rollout(oracle(t, 1), t, single[3], 0), std::invalid_argument);
  }

  TEST_CASE("zero model collapses on the spiral") {
    const auto& t = spiral41();
    const auto r = eval_rollout(zeros(), t, data::build_single(t.T, 1)[0], 150);
    CHECK(r.collapsed);
    const auto calm = eval_rollout(zeros(), uniform_traj(30, 8, 0.0f), data::build_single(30, 1)[0], 20);
    CHECK_FALSE(calm.collapsed);
  }

  TEST_CASE("collapse rule") {
    EvalReport r;
    const std::vector<double> pred{0.9, 0.1, 0.1, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.9};
    const std::vector<double> truth(pred.size(), 0.8);
    detect_collapse(r, pred, truth, {});
    CHECK(r.collapsed);
    CHECK(r.collapse_frame == 6);
    detect_collapse(r, std::span(pred).first(10), std::span(truth).first(10), {});
    CHECK_FALSE(r.collapsed);
    detect_collapse(r, pred, std::vector<double>(pred.size(), 0.4), {});
    CHECK_FALSE(r.collapsed);
  }

  TEST_CASE("oracle shows no resolution degradation") {
    ap::SimOptions o;
    o.horizon_ms = 200;
    o.require_reentry = false;
    const auto full = ap::simulate(ap::Scenario::centrifugal, ap::Grid::square(81), o);
    // answers from the full trajectory sampled at whatever grid it is handed
    std::map<std::size_t, ap::Trajectory> cache;
    const Predictor any_grid = [&](const Tensor& x) {
      const std::size_t stride = (full.H - 1) / (x.extent(2) - 1);
      auto it = cache.try_emplace(stride, data::downsample(full, stride)).first;
      return oracle(it->second, 1)(x);
    };
    const auto rows = eval_resolution(any_grid, full, data::DatasetConfig{}, 10);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].grid == 9);
    CHECK(rows[1].grid == 11);
    CHECK(rows[4].grid == 81);
    for (const auto& r : rows) {
      CHECK(r.rmse == 0.0);
      CHECK(r.degradation_pct == 0.0);
    }
    CHECK(resolution_csv(rows).rfind("factor,grid,rmse,degradation_pct\n1,9,0,0\n1.25,11,", 0) == 0);
    CHECK_THROWS_AS(eval_resolution(any_grid, full, data::DatasetConfig{}, 7), std::invalid_argument);
  }

  TEST_CASE("same-scenario transfer equals p2p") {
    const auto& t = spiral41();
    const fno::Model m(fno::FnoConfig::for_frames(1, 4, 4), 5);
    const auto pairs = data::build_single(t.T, 1);
    const auto a = eval_p2p(m, t, pairs);
    const auto b = eval_p2p(predictor(m), t, pairs);
    CHECK(a.rmse == b.rmse);
    CHECK(a.frame_rmse == b.frame_rmse);
    CHECK(a.scenario == "spiral");
  }

  TEST_CASE("correlation") {
    const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1};
    CHECK(correlation(a, b) == doctest::Approx(1.0));
    CHECK(correlation(a, c) == doctest::Approx(-1.0));
    CHECK(correlation(a, std::vector<double>(4, 1.0)) == 0.0);
  }

  TEST_CASE("speed benchmark medians") {
    auto work = [](int n) {
      return [n] {
        volatile double s = 0;
        for (int i = 0; i < n; ++i) s = s + std::sqrt(static_cast<double>(i));
      };
    };
    const auto r = benchmark_speed(work(4'000'000), work(400'000), 5);
    CHECK(r.solver_s.size() == 5);
    CHECK(r.ratio > 3.0);
    CHECK(r.solver_mad_pct < 20.0);
  }

  TEST_CASE("report writers") {
    testing::TempDir dir;
    EvalReport r;
    r.scenario = "spiral";
    r.source_scenario = "planar";
    r.frame_time_ms = {5, 10};
    r.frame_rmse = {0.1, 0.2};
    CHECK(metrics_csv(r) == "index,time_ms,rmse_v\n0,5,0.1\n1,10,0.2\n");
    const auto meta = report_meta(r);
    CHECK(meta.find("source_scenario = planar") != std::string::npos);
    CHECK(meta.find("scenario = spiral") != std::string::npos);
    CHECK(snapshot_name("spiral", "p2p", 500.0) == "spiral_p2p_t500.pgm");

    const std::vector<double> v{0.0, 0.5, 1.0, 2.0, -1.0, 0.25};
    write_pgm(dir / "x.pgm", v, 2, 3);
    const auto bytes = read_file(dir / "x.pgm");
    const std::string head = "P5\n3 2\n255\n";
    REQUIRE(bytes.size() == head.size() + 6);
    CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<long>(head.size())) == head);
    // top image row is the last grid row
    CHECK(bytes[head.size() + 0] == 255);
    CHECK(bytes[head.size() + 1] == 0);
    CHECK(bytes[head.size() + 2] == 64);
    CHECK(bytes[head.size() + 3] == 0);
    CHECK(bytes[head.size() + 4] == 128);
  }
}
