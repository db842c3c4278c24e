#include <doctest.h>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pino/cli.hpp"
#include "pino/config.hpp"
#include "pino/io.hpp"
#include "support/tmpdir.hpp"

using namespace pino;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "pino");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* o = std::cout.rdbuf(out.rdbuf());
  auto* e = std::cerr.rdbuf(err.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(o);
  std::cerr.rdbuf(e);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 1") {
    testing::TempDir dir;
    CHECK(run({"simulate", "--scenario", "scroll", "-o", dir.path().string()}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"config", "--set", "model.nope=3"}).code == 1);
    CHECK(run({"config", "--set", "model.width=wide"}).code == 1);
    CHECK(run({"train", "-o", dir.path().string()}).code == 1);  // no seed
    CHECK(run({"--help"}).code == 0);
  }

  TEST_CASE("missing artifacts exit with 2 and name the producer") {
    testing::TempDir dir;
    const auto r = run({"dataset", "--scenario", "planar", "--grid", "21", "-o", dir.path().string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("pino simulate --scenario planar --grid 21") != std::string::npos);
    const auto t = run({"train", "--seed", "1", "--scenario", "planar", "-o", dir.path().string()});
    CHECK(t.code == 2);
    CHECK(t.err.find("pino dataset") != std::string::npos);
  }

  TEST_CASE("config precedence is flags, then file, then defaults") {
    testing::TempDir dir;
    CHECK(resolve_config({}, {}).width == 32);
    write_text(dir / "a.ini", "[model]\nwidth = 16\nmodes = 6\n[train]\nscheme = softadapt\n");
    auto c = resolve_config(dir / "a.ini", {});
    CHECK(c.width == 16);
    CHECK(c.modes == 6);
    CHECK(c.train.scheme == loss::Scheme::softadapt);
    c = resolve_config(dir / "a.ini", {{"model.width", "8"}});
    CHECK(c.width == 8);
    CHECK(c.modes == 6);
    CHECK(c.train.lambdas == loss::Values{1.0, 0.01, 0.1, 0.1});
    CHECK_THROWS_AS(resolve_config(dir / "a.ini", {{"model.depth", "8"}}), UsageError);
    write_text(dir / "b.ini", "[model]\nwdith = 16\n");
    CHECK_THROWS_AS(resolve_config(dir / "b.ini", {}), UsageError);
    CHECK_THROWS_AS(resolve_config(dir / "none.ini", {}), UsageError);

    // the canonical text reproduces the configuration
    write_text(dir / "c.ini", c.text());
    const auto again = resolve_config(dir / "c.ini", {});
    CHECK(again.text() == c.text());
    CHECK(again.hash() == c.hash());
  }

  TEST_CASE("simulate writes a 201-frame trajectory reproducibly") {
    testing::TempDir dir;
    const std::vector<std::string> args{"simulate", "--scenario", "planar", "--grid", "21", "--horizon", "1000",
                                        "--save", "5", "-o", dir.path().string()};
    REQUIRE(run(args).code == 0);
    const fs::path traj = dir / "trajectories/planar_g21.aptj";
    const auto t = ap::read_trajectory(traj);
    CHECK(t.T == 201);
    CHECK(fs::exists(traj.string() + ".meta"));
    CHECK(fs::exists(traj.string() + ".run"));
    CHECK(fs::exists(traj.string() + ".config.ini"));
    const auto crc = file_crc(traj);
    REQUIRE(run(args).code == 0);
    CHECK(file_crc(traj) == crc);
    // the checksum must follow the content, not just the format
    auto shorter = args;
    shorter[6] = "900";
    REQUIRE(run(shorter).code == 0);
    CHECK(file_crc(traj) != crc);
  }

  TEST_CASE("small pipeline end to end") {
    testing::TempDir dir;
    const std::string out = dir.path().string();
    const std::vector<std::string> common{"--scenario", "centrifugal", "--grid", "17", "-o", out};
    auto with = [&](std::vector<std::string> a) {
      a.insert(a.end(), common.begin(), common.end());
      return run(a);
    };
    REQUIRE(with({"simulate", "--horizon", "300"}).code == 0);
    REQUIRE(with({"dataset", "--m", "2"}).code == 0);
    const std::vector<std::string> model{"--m", "2", "--modes", "3", "--width", "4", "--seed", "5", "--set",
                                         "model.blocks=1", "--set", "train.eval_every=1"};
    auto train = [&](std::vector<std::string> a) {
      a.insert(a.end(), model.begin(), model.end());
      return with(a);
    };
    REQUIRE(train({"train", "--stage", "1", "--epochs", "3"}).code == 0);
    const fs::path base = dir / "checkpoints/centrifugal_g17_d1_n1_m2_fno.ckpt";
    CHECK(fs::exists(base));
    const auto hist = read_text(dir / "reports/centrifugal_g17_d1_n1_m2_fno_history.csv");
    REQUIRE(train({"train", "--stage", "1", "--epochs", "3"}).code == 0);
    CHECK(read_text(dir / "reports/centrifugal_g17_d1_n1_m2_fno_history.csv") == hist);

    REQUIRE(train({"train", "--stage", "2", "--scheme", "reladapt", "--epochs", "2"}).code == 0);
    CHECK(fs::exists(dir / "checkpoints/centrifugal_g17_d1_n1_m2_pino-reladapt.ckpt"));
    CHECK(read_text(dir / "checkpoints/centrifugal_g17_d1_n1_m2_pino-reladapt.ckpt.run").find("[inputs]") !=
          std::string::npos);

    const auto ev = with({"evaluate", "--m", "2", "--model", "pino-reladapt", "--mode", "both"});
    REQUIRE(ev.code == 0);
    CHECK(fs::exists(dir / "reports/centrifugal_g17_d1_n1_m2_pino-reladapt_p2p.csv"));
    CHECK(fs::exists(dir / "reports/centrifugal_g17_d1_n1_m2_pino-reladapt_rollout.meta"));

    const auto ro = with({"rollout", "--m", "2", "--from-checkpoint", "oracle", "--frames", "6"});
    REQUIRE(ro.code == 0);
    const auto meta = read_text(dir / "reports/centrifugal_g17_d1_n1_m2_oracle_rollout.meta");
    CHECK(meta.find("rmse_v = 0\n") != std::string::npos);
    CHECK(meta.find("frames = 6\n") != std::string::npos);

    CHECK(with({"evaluate", "--m", "2", "--model", "pino-softadapt"}).code == 2);
  }
}
