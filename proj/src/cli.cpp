#include "pino/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "pino/apsolver.hpp"
#include "pino/config.hpp"
#include "pino/dataset.hpp"
#include "pino/eval.hpp"
#include "pino/fno.hpp"
#include "pino/io.hpp"
#include "pino/training.hpp"

#ifndef PINO_VERSION
#define PINO_VERSION "dev"
#endif

namespace pino {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kModels{"fno", "pino-fixed", "pino-softadapt", "pino-reladapt"};

// ---------------------------------------------------------------- layout

struct Layout {
  fs::path root;
  fs::path trajectory(ap::Scenario s, std::size_t grid) const {
    return root / "trajectories" / (std::string(ap::to_string(s)) + "_g" + std::to_string(grid) + ".aptj");
  }
  fs::path datasets() const { return root / "datasets"; }
  fs::path checkpoint(const std::string& ds, const std::string& model) const {
    return root / "checkpoints" / (ds + "_" + model + ".ckpt");
  }
  fs::path report(const std::string& stem) const { return root / "reports" / stem; }
  fs::path snapshots(const std::string& sub) const { return root / "snapshots" / sub; }
};

std::string dataset_name(ap::Scenario s, const ExperimentConfig& c, const data::DatasetConfig& d) {
  return std::string(ap::to_string(s)) + "_g" + std::to_string(c.grid) + "_d" + std::to_string(d.downsample) +
         "_n" + std::to_string(d.n) + "_m" + std::to_string(d.m);
}

std::string scen_flag(ap::Scenario s) { return "--scenario " + std::string(ap::to_string(s)); }

void require(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw DataError(p.string() + " not found; produce it with `pino " + producer + "`");
}

// Run manifest: command, code version, config hash, and checksums of what was
// read and written. The resolved config sits next to it so the run can be
// repeated with --config.
void write_manifest(const fs::path& artifact, const std::string& command, const ExperimentConfig& cfg,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  const fs::path cfg_path = fs::path(artifact.string() + ".config.ini");
  write_text(cfg_path, cfg.text());
  std::ostringstream os;
  os << "[run]\ncommand = " << command << "\nversion = " << PINO_VERSION << "\nconfig = " << cfg_path.filename().string()
     << "\nconfig_crc32 = " << hex32(cfg.hash()) << "\n\n[inputs]\n";
  for (const auto& p : inputs) os << p.string() << " = " << hex32(file_crc(p)) << '\n';
  os << "\n[outputs]\n";
  for (const auto& p : outputs) os << p.string() << " = " << hex32(file_crc(p)) << '\n';
  write_text(fs::path(artifact.string() + ".run"), os.str());
}

// ---------------------------------------------------------------- flags

// Flags land in an Overrides map so they beat file values uniformly.
struct Flags {
  std::string config;
  Overrides set;
  std::vector<std::string> raw_sets;

  template <class T>
  void bind(CLI::App* app, const std::string& name, const std::string& key, const std::string& doc) {
    app->add_option_function<T>(
        name,
        [this, key](const T& v) {
          std::ostringstream os;
          if constexpr (std::is_same_v<T, double>) os.precision(17);
          os << v;
          set[key] = os.str();
        },
        doc + " [" + key + "]");
  }
  void common(CLI::App* app) {
    app->add_option("-c,--config", config, "experiment config file");
    app->add_option("--set", raw_sets, "override any config key: section.key=value");
    app->add_option_function<std::string>(
        "-o,--out", [this](const std::string& v) { set["experiment.out"] = v; }, "output root");
    bind<std::uint64_t>(app, "--seed", "experiment.seed", "seed");
  }
  ExperimentConfig resolve() {
    for (const auto& s : raw_sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
      set[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return resolve_config(config, set);
  }
};

void scenario_flag(CLI::App* app, Flags& f) {
  app->add_option_function<std::vector<std::string>>(
      "-s,--scenario",
      [&f](const std::vector<std::string>& v) {
        std::string joined;
        for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
        f.set["experiment.scenarios"] = joined;
      },
      "scenario(s): planar, centrifugal, spiral, spiral_break [experiment.scenarios]");
}

void dataset_flags(CLI::App* app, Flags& f) {
  f.bind<std::size_t>(app, "--grid", "simulate.grid", "source trajectory grid");
  f.bind<std::size_t>(app, "--n", "dataset.n", "prediction offset in frames");
  f.bind<std::size_t>(app, "--m", "dataset.m", "multi-frame window length minus one, 0 for single-frame");
  f.bind<std::size_t>(app, "--downsample", "dataset.downsample", "spatial stride");
}

// ---------------------------------------------------------------- simulate

ap::SimOptions sim_options(const ExperimentConfig& c, ap::Scenario s) {
  ap::SimOptions o;
  o.horizon_ms = c.horizon_ms > 0.0 ? c.horizon_ms : ap::default_horizon_ms(s);
  o.save_ms = c.save_ms;
  if (c.s2_ms > 0.0) o.s2_ms = c.s2_ms;
  o.units = c.units;
  return o;
}

int cmd_simulate(const ExperimentConfig& c, const std::string& scan) {
  const Layout L{c.out};
  const ap::Grid g = ap::Grid::square(c.grid);
  for (auto s : c.scenarios) {
    if (!scan.empty()) {
      double from = 0, to = 0, step = 0;
      char c1 = 0, c2 = 0;
      std::istringstream is(scan);
      if (!(is >> from >> c1 >> to >> c2 >> step) || c1 != ':' || c2 != ':')
        throw UsageError("--scan-s2 expects from:to:step in ms, got '" + scan + "'");
      const double s2 = ap::scan_s2(s, g, from, to, step);
      const fs::path out = L.report(std::string(ap::to_string(s)) + "_g" + std::to_string(c.grid) + "_s2scan.txt");
      std::ostringstream os;
      os << "scenario = " << ap::to_string(s) << "\ngrid = " << c.grid << "\nrange_ms = " << scan
         << "\ns2_ms = " << s2 << '\n';
      write_text(out, os.str());
      std::cout << ap::to_string(s) << ": S2 = " << s2 << " ms\n";
      continue;
    }
    const auto t = ap::simulate(s, g, sim_options(c, s));
    const fs::path out = L.trajectory(s, c.grid);
    write_trajectory(out, t);
    write_manifest(out, "simulate " + scen_flag(s), c, {}, {out});
    std::cout << out.string() << ": " << t.T << " frames, " << t.H << "x" << t.W << ", crc32 "
              << hex32(file_crc(out)) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- dataset

int cmd_dataset(const ExperimentConfig& c) {
  const Layout L{c.out};
  for (auto s : c.scenarios) {
    const fs::path src = L.trajectory(s, c.grid);
    require(src, "simulate " + scen_flag(s) + " --grid " + std::to_string(c.grid));
    data::Dataset d = data::make_dataset(ap::read_trajectory(src), c.dataset);
    d.source = src.string();
    d.source_crc = file_crc(src);
    const std::string name = dataset_name(s, c, c.dataset);
    data::write_dataset(L.datasets(), name, d);
    const fs::path manifest = L.datasets() / (name + ".manifest");
    write_manifest(manifest, "dataset " + scen_flag(s), c, {src}, {manifest, L.datasets() / (name + ".aptj")});
    std::cout << name << ": " << d.traj.T << " frames at " << d.traj.H << "x" << d.traj.W << ", "
              << d.split.train.size() << " train / " << d.split.test.size() << " test pairs\n";
  }
  return 0;
}

data::Dataset load_dataset(const Layout& L, ap::Scenario s, const ExperimentConfig& c,
                           const data::DatasetConfig& dc) {
  const std::string name = dataset_name(s, c, dc);
  const fs::path manifest = L.datasets() / (name + ".manifest");
  require(manifest, "dataset " + scen_flag(s) + " --grid " + std::to_string(c.grid) + " --n " +
                        std::to_string(dc.n) + " --m " + std::to_string(dc.m) + " --downsample " +
                        std::to_string(dc.downsample));
  return data::read_dataset(manifest);
}

// ---------------------------------------------------------------- train

int cmd_train(ExperimentConfig c, int stage, bool resume) {
  if (!c.seed_given) throw UsageError("train needs a seed: pass --seed or set experiment.seed");
  const Layout L{c.out};
  for (auto s : c.scenarios) {
    const data::Dataset ds = load_dataset(L, s, c, c.dataset);
    const std::string name = dataset_name(s, c, c.dataset);
    const fno::FnoConfig mc = c.model_config();
    train::TrainConfig tc = c.train;
    tc.stage = stage;
    tc.seed = c.seed;
    tc.epochs = stage == 1 ? c.epochs_stage1 : c.epochs_stage2;
    const std::string id = stage == 1 ? "fno" : "pino-" + std::string(loss::to_string(tc.scheme));
    tc.checkpoint = L.checkpoint(name, id);
    const bool multi = ds.cfg.multi();

    std::vector<fs::path> inputs{L.datasets() / (name + ".manifest"), L.datasets() / (name + ".aptj")};
    std::optional<train::TrainState> st;
    if (resume && fs::exists(tc.checkpoint)) {
      st.emplace(train::load_state(tc.checkpoint, &mc));
      spdlog::info("resuming {} at epoch {}", tc.checkpoint.string(), st->epoch);
    } else if (stage == 1) {
      st.emplace(train::TrainState::start(fno::Model(mc, c.seed), tc, multi));
    } else {
      const fs::path base = L.checkpoint(name, "fno");
      require(base, "train " + scen_flag(s) + " --stage 1");
      inputs.push_back(base);
      st.emplace(train::TrainState::start(train::load_state(base, &mc).best_model(), tc, multi));
    }
    spdlog::info("{} {}: {} parameters, {} train / {} test pairs, {} epochs", name, id,
                 st->model.parameter_count(), ds.split.train.size(), ds.split.test.size(), tc.epochs);
    train::train_stage(*st, ds, tc, [](const train::HistoryRow& r) {
      if (!std::isnan(r.test_rmse))
        spdlog::info("epoch {:4d} lr {:.3e} data {:.4e} res {:.3e} total {:.4e} test rmse {:.5f}", r.epoch + 1, r.lr,
                     r.components[0], r.components[1], r.total, r.test_rmse);
    });
    const fs::path hist = L.report(name + "_" + id + "_history.csv");
    const fs::path lcsv = L.report(name + "_" + id + "_loss.csv");
    write_text(hist, train::history_csv(st->history));
    write_text(lcsv, train::loss_csv(st->history));
    write_manifest(tc.checkpoint, "train " + scen_flag(s) + " --stage " + std::to_string(stage), c, inputs,
                   {tc.checkpoint, hist, lcsv});
    std::cout << tc.checkpoint.string() << ": best test rmse " << st->best_metric << " at epoch " << st->best_epoch
              << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct Loaded {
  std::optional<fno::Model> model;
  std::string id;
  std::vector<fs::path> inputs;
};

// Predictor that keeps every output so snapshots can be taken afterwards.
struct Recording {
  eval::Predictor inner;
  std::vector<Tensor> outputs;
  eval::Predictor fn() {
    return [this](const Tensor& x) {
      outputs.push_back(inner(x));
      return outputs.back();
    };
  }
};

Loaded load_model(const Layout& L, const std::string& which, ap::Scenario source, const ExperimentConfig& c,
                  const data::DatasetConfig& dc) {
  Loaded m;
  m.id = which;
  if (which == "oracle") return m;
  fs::path ck;
  if (std::find(kModels.begin(), kModels.end(), which) != kModels.end()) {
    ck = L.checkpoint(dataset_name(source, c, dc), which);
    require(ck, "train " + scen_flag(source) + (which == "fno" ? " --stage 1" : " --stage 2 --scheme " + which.substr(5)));
  } else {
    ck = which;
    if (!fs::exists(ck)) throw DataError("checkpoint " + ck.string() + " not found; produce it with `pino train`");
    m.id = ck.stem().string();
  }
  m.model.emplace(train::load_state(ck).best_model());
  m.inputs.push_back(ck);
  return m;
}

eval::Predictor make_predictor(const Loaded& m, const data::Dataset& ds) {
  if (m.model) return eval::predictor(*m.model);
  const auto& p = ds.split.test.front();
  return eval::oracle(ds.traj, p.target.front() - p.input.front());
}

void snapshot(const fs::path& dir, const std::string& scen, const std::string& mode, double t_ms, const Tensor& pred,
              std::span<const float> truth, std::size_t H, std::size_t W) {
  const std::size_t P = H * W;
  eval::write_pgm(dir / eval::snapshot_name(scen, mode, t_ms), pred.data().subspan(0, P), H, W);
  std::vector<double> tv(truth.begin(), truth.end());
  eval::write_pgm(dir / eval::snapshot_name(scen, "truth", t_ms), tv, H, W);
}

// Runs P2P and/or roll-out on `target`'s test pairs and writes reports and
// snapshots. Returns the reports.
std::vector<eval::EvalReport> evaluate_one(const Layout& L, const ExperimentConfig& c, const data::Dataset& ds,
                                           ap::Scenario target, ap::Scenario source, const Loaded& m,
                                           const std::string& modes, const std::string& ds_name) {
  std::vector<eval::EvalReport> out;
  const std::string scen(ap::to_string(target));
  const std::string tag = ds_name + "_" + m.id + (source != target ? "_from-" + std::string(ap::to_string(source)) : "");
  const fs::path snapdir = L.snapshots(tag);
  const double t0_ms = static_cast<double>(ds.first_frame) * ds.traj.save_ms;

  auto finish = [&](eval::EvalReport r) {
    r.source_scenario = std::string(ap::to_string(source));
    r.model_id = m.id;
    for (auto& t : r.frame_time_ms) t += t0_ms;
    const fs::path csv = L.report(tag + "_" + r.mode + ".csv");
    write_text(csv, eval::metrics_csv(r));
    write_text(fs::path(csv).replace_extension(".meta"), eval::report_meta(r));
    std::cout << tag << " " << r.mode << ": rmse " << r.rmse << (r.collapsed ? " (collapsed)" : "") << '\n';
    out.push_back(std::move(r));
  };

  if (modes == "p2p" || modes == "both") {
    finish(eval::eval_p2p(make_predictor(m, ds), ds.traj, ds.split.test, 1));
    // Snapshot at the requested time if a pair targets it, else the first test pair.
    const auto pairs = ds.cfg.multi() ? data::build_multi(ds.traj.T, ds.cfg.n, ds.cfg.m)
                                      : data::build_single(ds.traj.T, ds.cfg.n);
    const data::SamplePair* pick = &ds.split.test.front();
    for (const auto& p : pairs)
      if (std::abs(t0_ms + ds.traj.time_ms(p.target.front()) - c.snapshot_ms) < 1e-6) pick = &p;
    const Tensor pred = make_predictor(m, ds)(data::gather_inputs(ds.traj, std::span(pick, 1)));
    snapshot(snapdir, scen, "p2p", t0_ms + ds.traj.time_ms(pick->target.front()), pred,
             ds.traj.field(pick->target.front(), 0), ds.traj.H, ds.traj.W);
  }
  if (modes == "rollout" || modes == "both") {
    const auto& start = ds.split.test.front();
    Recording rec{make_predictor(m, ds), {}};
    const std::size_t steps = c.rollout_frames ? c.rollout_frames : ds.traj.T;
    finish(eval::eval_rollout(rec.fn(), ds.traj, start, steps, c.collapse));
    const std::size_t last = rec.outputs.size() - 1;
    const std::size_t k = start.target.front() + last * (start.target.front() - start.input.front());
    snapshot(snapdir, scen, "rollout", t0_ms + ds.traj.time_ms(k), rec.outputs.back(), ds.traj.field(k, 0), ds.traj.H,
             ds.traj.W);
  }
  return out;
}

int cmd_evaluate(const ExperimentConfig& c, const std::string& model, const std::string& source_tag,
                 const std::string& modes, bool resolution, const std::string& suite) {
  const Layout L{c.out};
  if (modes != "p2p" && modes != "rollout" && modes != "both") throw UsageError("--mode: p2p, rollout or both");

  if (!suite.empty()) {
    if (suite != "baseline") throw UsageError("--suite: only 'baseline' is defined");
    // scenario x model x {single, multi} x {p2p, rollout}
    std::vector<std::string> missing;
    data::DatasetConfig single = c.dataset, multi = c.dataset;
    single.m = 0;
    multi.m = c.dataset.m ? c.dataset.m : 5;
    for (auto s : c.scenarios)
      for (const auto* dc : {&single, &multi})
        for (const auto& id : kModels)
          if (!fs::exists(L.checkpoint(dataset_name(s, c, *dc), id)))
            missing.push_back(L.checkpoint(dataset_name(s, c, *dc), id).string());
    if (!missing.empty()) {
      std::string msg = "baseline suite is missing " + std::to_string(missing.size()) +
                        " checkpoint(s), produce them with `pino train --stage 1` and `pino train --stage 2 "
                        "--scheme <fixed|softadapt|reladapt>` for --m 0 and --m " + std::to_string(multi.m) + ":";
      for (const auto& p : missing) msg += "\n  " + p;
      throw DataError(msg);
    }
    std::ostringstream table;
    table.precision(8);
    table << "scenario,data,model,p2p_rmse,rollout_rmse,rollout_collapsed\n";
    for (auto s : c.scenarios)
      for (const auto* dc : {&single, &multi}) {
        const data::Dataset ds = load_dataset(L, s, c, *dc);
        for (const auto& id : kModels) {
          const Loaded m = load_model(L, id, s, c, *dc);
          const auto rs = evaluate_one(L, c, ds, s, s, m, "both", dataset_name(s, c, *dc));
          table << ap::to_string(s) << ',' << (dc->multi() ? "multi" : "single") << ',' << id << ',' << rs[0].rmse
                << ',' << rs[1].rmse << ',' << (rs[1].collapsed ? "true" : "false") << '\n';
        }
      }
    const fs::path out = L.report("baseline.csv");
    write_text(out, table.str());
    write_manifest(out, "evaluate --suite baseline", c, {}, {out});
    std::cout << table.str();
    return 0;
  }

  for (auto target : c.scenarios) {
    const ap::Scenario source = source_tag.empty() ? target : ap::parse_scenario(source_tag);
    const data::Dataset ds = load_dataset(L, target, c, c.dataset);
    const std::string name = dataset_name(target, c, c.dataset);
    const Loaded m = load_model(L, model, source, c, c.dataset);
    if (resolution) {
      const fs::path full = L.trajectory(target, c.full_grid);
      require(full, "simulate " + scen_flag(target) + " --grid " + std::to_string(c.full_grid));
      const auto traj = ap::read_trajectory(full);
      if ((traj.H - 1) != (ds.traj.H - 1) * c.dataset.downsample)
        throw DataError("resolution: dataset grid " + std::to_string(ds.traj.H) + " is not the " +
                        std::to_string(c.full_grid) + " grid at stride " + std::to_string(c.dataset.downsample));
      eval::Predictor f = m.model ? eval::predictor(*m.model) : eval::Predictor{};
      if (!m.model) {
        // Oracle on every grid: look the answer up in the matching stride of the full trajectory.
        const auto& p = ds.split.test.front();
        const std::size_t off = p.target.front() - p.input.front();
        auto au = std::make_shared<ap::Trajectory>(ap::to_au(traj));
        auto cache = std::make_shared<std::map<std::size_t, ap::Trajectory>>();
        f = [au, cache, off](const Tensor& x) {
          const std::size_t stride = (au->H - 1) / (x.extent(2) - 1);
          auto it = cache->find(stride);
          if (it == cache->end()) it = cache->emplace(stride, data::downsample(*au, stride)).first;
          return eval::oracle(it->second, off)(x);
        };
      }
      const auto rows = eval::eval_resolution(f, traj, c.dataset, c.dataset.downsample);
      const fs::path out = L.report(name + "_" + m.id + "_resolution.csv");
      write_text(out, eval::resolution_csv(rows));
      std::vector<fs::path> in = m.inputs;
      in.push_back(full);
      write_manifest(out, "evaluate --resolution " + scen_flag(target), c, in, {out});
      std::cout << eval::resolution_csv(rows);
      if (m.model) std::cout << "parameters: " << m.model->parameter_count() << " at every resolution\n";
      continue;
    }
    const auto reports = evaluate_one(L, c, ds, target, source, m, modes, name);
    (void)reports;
  }
  return 0;
}

// ---------------------------------------------------------------- rollout

int cmd_rollout(const ExperimentConfig& c, const std::string& from, std::size_t frames) {
  const Layout L{c.out};
  for (auto s : c.scenarios) {
    const data::Dataset ds = load_dataset(L, s, c, c.dataset);
    const Loaded m = load_model(L, from, s, c, c.dataset);
    ExperimentConfig cc = c;
    const std::size_t per_call = ds.cfg.frames_per_sample();
    if (frames) cc.rollout_frames = (frames + per_call - 1) / per_call;
    evaluate_one(L, cc, ds, s, s, m, "rollout", dataset_name(s, c, c.dataset));
  }
  return 0;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const ExperimentConfig& c, const std::string& model) {
  const Layout L{c.out};
  for (auto s : c.scenarios) {
    const data::Dataset ds = load_dataset(L, s, c, c.dataset);
    const Loaded m = load_model(L, model, s, c, c.dataset);
    if (!m.model) throw UsageError("bench needs a trained model, not the oracle");
    ap::SimOptions o = sim_options(c, s);
    o.horizon_ms = c.bench_horizon_ms;
    o.require_reentry = false;
    const ap::Grid g = ap::Grid::square(c.full_grid);
    const auto& p = ds.split.train.front();
    const std::size_t offset = p.target.front() - p.input.front();
    const auto frames = static_cast<std::size_t>(std::llround(c.bench_horizon_ms / ds.traj.save_ms));
    const std::size_t calls = (frames + offset - 1) / offset;
    const Tensor x0 = data::gather_inputs(ds.traj, std::span(&p, 1));
    const auto rep = eval::benchmark_speed([&] { (void)ap::simulate(s, g, o); },
                                           [&] {
                                             Tensor x = x0;
                                             for (std::size_t k = 0; k < calls; ++k) x = m.model->predict(x);
                                           },
                                           c.repeats);
    std::ostringstream os;
    os.precision(6);
    os << "scenario = " << ap::to_string(s) << "\nmodel = " << m.id << "\nhorizon_ms = " << c.bench_horizon_ms
       << "\nsolver_grid = " << c.full_grid << "\nmodel_grid = " << ds.traj.H << "\nmodel_calls = " << calls
       << "\nrepeats = " << c.repeats << "\nsolver_median_s = " << rep.solver_median
       << "\nmodel_median_s = " << rep.model_median << "\nratio = " << rep.ratio
       << "\nsolver_mad_pct = " << rep.solver_mad_pct << "\nmodel_mad_pct = " << rep.model_mad_pct << '\n';
    const fs::path out = L.report(dataset_name(s, c, c.dataset) + "_" + m.id + "_bench.txt");
    write_text(out, os.str());
    write_manifest(out, "bench " + scen_flag(s), c, m.inputs, {out});
    std::cout << os.str();
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Aliev-Panfilov simulation and Fourier neural operator surrogates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PINO_VERSION);

  Flags f;
  std::string scan, model = "fno", source, modes = "both", suite, from;
  int stage = 1;
  bool resume = false, resolution = false;
  std::size_t frames = 0;

  auto* sim = app.add_subcommand("simulate", "run the solver and write trajectories");
  f.common(sim);
  scenario_flag(sim, f);
  f.bind<std::size_t>(sim, "--grid", "simulate.grid", "points per side");
  f.bind<double>(sim, "--horizon", "simulate.horizon_ms", "horizon in ms");
  f.bind<double>(sim, "--save", "simulate.save_ms", "save interval in ms");
  f.bind<double>(sim, "--s2", "simulate.s2_ms", "S2 onset in ms");
  f.bind<std::string>(sim, "--units", "simulate.units", "au or mv_ms");
  sim->add_option("--scan-s2", scan, "search S2 onsets from:to:step (ms) instead of simulating");

  auto* dsc = app.add_subcommand("dataset", "build train/test pairs from a trajectory");
  f.common(dsc);
  scenario_flag(dsc, f);
  dataset_flags(dsc, f);
  f.bind<double>(dsc, "--start", "dataset.start_ms", "first frame time kept");
  f.bind<double>(dsc, "--end", "dataset.end_ms", "last frame time kept");
  f.bind<double>(dsc, "--fraction", "dataset.fraction", "training share");

  auto* tr = app.add_subcommand("train", "train a model (stage 1: data only, stage 2: data plus physics)");
  f.common(tr);
  scenario_flag(tr, f);
  dataset_flags(tr, f);
  tr->add_option("--stage", stage, "1 or 2")->check(CLI::Range(1, 2));
  f.bind<std::string>(tr, "--scheme", "train.scheme", "fixed, softadapt or reladapt");
  f.bind<double>(tr, "--lr", "train.lr", "initial learning rate");
  f.bind<std::size_t>(tr, "--batch", "train.batch", "batch size");
  f.bind<std::size_t>(tr, "--modes", "model.modes", "Fourier modes");
  f.bind<std::size_t>(tr, "--width", "model.width", "hidden channels");
  tr->add_option_function<std::size_t>(
      "--epochs", [&](const std::size_t& e) { f.set[stage == 1 ? "train.epochs_stage1" : "train.epochs_stage2"] = std::to_string(e); },
      "epochs for the selected stage");
  tr->add_flag("--resume", resume, "continue from the stage's checkpoint if present");

  auto* ev = app.add_subcommand("evaluate", "P2P, roll-out, resolution and transfer evaluation");
  f.common(ev);
  scenario_flag(ev, f);
  dataset_flags(ev, f);
  ev->add_option("--model", model, "fno, pino-fixed, pino-softadapt, pino-reladapt, oracle or a checkpoint path");
  ev->add_option("--source", source, "scenario the model was trained on (zero-shot transfer)");
  ev->add_option("--mode", modes, "p2p, rollout or both");
  ev->add_flag("--resolution", resolution, "P2P at factors 1.25, 2.5, 5 and 10 of the training grid");
  ev->add_option("--suite", suite, "baseline: every scenario, model, data kind and mode");

  auto* ro = app.add_subcommand("rollout", "autoregressive roll-out from a checkpoint");
  f.common(ro);
  scenario_flag(ro, f);
  dataset_flags(ro, f);
  ro->add_option("--from-checkpoint", from, "model id, checkpoint path, or oracle")->required();
  ro->add_option("--frames", frames, "predicted frames (0: to the end of the data)");

  auto* be = app.add_subcommand("bench", "time model roll-out against the solver");
  f.common(be);
  scenario_flag(be, f);
  dataset_flags(be, f);
  be->add_option("--model", model, "model id or checkpoint path");
  f.bind<std::size_t>(be, "--solver-grid", "evaluate.full_grid", "solver grid");
  f.bind<std::size_t>(be, "--repeats", "evaluate.repeats", "timed repetitions");

  auto* cf = app.add_subcommand("config", "print the resolved configuration with every key");
  f.common(cf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig c = f.resolve();
    if (sim->parsed()) return cmd_simulate(c, scan);
    if (dsc->parsed()) return cmd_dataset(c);
    if (tr->parsed()) return cmd_train(c, stage, resume);
    if (ev->parsed()) return cmd_evaluate(c, model, source, modes, resolution, suite);
    if (ro->parsed()) return cmd_rollout(c, from, frames);
    if (be->parsed()) return cmd_bench(c, model);
    if (cf->parsed()) {
      std::cout << c.text();
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const ap::NoReentry& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace pino
