#include "pino/apsolver.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pino/io.hpp"
#include "pino/kernels.hpp"

namespace pino::ap {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::planar: return "planar";
    case Scenario::centrifugal: return "centrifugal";
    case Scenario::spiral: return "spiral";
    case Scenario::spiral_break: return "spiral_break";
  }
  return "unknown";
}

std::string_view to_string(Units u) { return u == Units::au ? "AU" : "mV/ms"; }

Scenario parse_scenario(std::string_view tag) {
  for (Scenario s : kAllScenarios)
    if (to_string(s) == tag) return s;
  throw std::invalid_argument("unknown scenario '" + std::string(tag) +
                              "' (expected planar, centrifugal, spiral or spiral_break)");
}

void Params::validate() const {
  const double all[] = {D, a, k, eps, mu1, mu2};
  for (double v : all)
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("Aliev-Panfilov parameters must be positive and finite");
}

Params Params::for_scenario(Scenario s) {
  Params p;
  if (s == Scenario::spiral_break) {
    p.a = 0.099;
    p.mu1 = 0.1;
  }
  return p;
}

Grid Grid::square(std::size_t n, double side_mm) {
  if (n < 3) throw std::invalid_argument("grid needs at least 3 points per axis");
  return Grid{n, side_mm / static_cast<double>(n - 1)};
}

Rates reaction_rhs(double v, double w, const Params& p) {
  if (!std::isfinite(v) || !std::isfinite(w))
    throw std::invalid_argument("reaction_rhs: non-finite state");
  const double dv = -p.k * v * (v - p.a) * (v - 1.0) - v * w;
  const double dw = (p.eps + p.mu1 * w / (v + p.mu2)) * (-w - p.k * v * (v - p.a - 1.0));
  return {dv, dw};
}

bool Stimulus::covers(double x, double y) const {
  constexpr double tol = 1e-9;
  switch (region) {
    case Region::left_wall: return x <= size_mm + tol;
    case Region::corner_disc: return x * x + y * y <= size_mm * size_mm + tol;
    case Region::lower_half: return y <= size_mm + tol;
  }
  return false;
}

std::vector<Stimulus> protocol(Scenario s, double s2_ms) {
  const Stimulus s1{Region::left_wall, 2.0, 0.0, 2.0, 5.0};
  switch (s) {
    case Scenario::planar: return {s1};
    case Scenario::centrifugal: return {{Region::corner_disc, 5.0, 0.0, 2.0, 5.0}};
    case Scenario::spiral:
    case Scenario::spiral_break:
      return {s1, {Region::lower_half, kSideMm / 2.0, s2_ms, 2.0, 5.0}};
  }
  return {};
}

double default_s2_ms(Scenario s) {
  // Earliest persisting S2 from scan_s2 at 101x101 (see `pino simulate --scan-s2`).
  switch (s) {
    case Scenario::spiral: return 430.0;
    case Scenario::spiral_break: return 920.0;
    default: return std::numeric_limits<double>::quiet_NaN();
  }
}

double default_horizon_ms(Scenario s) {
  return (s == Scenario::spiral || s == Scenario::spiral_break) ? 2500.0 : 1000.0;
}

double default_dt_au(const Grid& g, const Params& p) {
  return std::min(0.5 * g.h * g.h / (4.0 * p.D), 0.05);
}

// ---------------------------------------------------------------- Solver

Solver::Solver(Grid grid, Params params, double dt_au, std::vector<Stimulus> stimuli)
    : grid_(grid), params_(params), dt_(dt_au), stimuli_(std::move(stimuli)) {
  params_.validate();
  if (grid_.n < 3 || !(grid_.h > 0.0)) throw std::invalid_argument("solver grid must be >= 3x3 with h > 0");
  const double bound = grid_.h * grid_.h / (4.0 * params_.D);
  if (!(dt_ > 0.0) || dt_ > bound)
    throw std::invalid_argument("dt = " + std::to_string(dt_) + " AU exceeds the stability bound " +
                                std::to_string(bound) + " AU");
  const std::size_t n = grid_.n;
  v_.assign(n * n, 0.0);
  w_.assign(n * n, 0.0);
  stim_.assign(n * n, 0.0);
  lap_.assign(n * n, 0.0);
  for (const auto& s : stimuli_) {
    if (!(s.duration_ms > 0.0)) throw std::invalid_argument("stimulus duration must be positive");
    std::vector<std::uint8_t> mask(n * n, 0);
    std::size_t count = 0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (s.covers(static_cast<double>(c) * grid_.h, static_cast<double>(r) * grid_.h)) {
          mask[r * n + c] = 1;
          ++count;
        }
    if (count == 0) throw std::invalid_argument("stimulus region contains no grid points");
    masks_.push_back(std::move(mask));
  }
}

void Solver::fill_stimulus(double t0, double t1) {
  std::fill(stim_.begin(), stim_.end(), 0.0);
  for (std::size_t s = 0; s < stimuli_.size(); ++s) {
    const double on = ms_to_au(stimuli_[s].onset_ms);
    const double off = on + ms_to_au(stimuli_[s].duration_ms);
    const double overlap = std::min(t1, off) - std::max(t0, on);
    if (overlap <= 0.0) continue;
    const double current = stimuli_[s].amplitude * overlap / dt_;
    const auto& mask = masks_[s];
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) stim_[i] += current;
  }
}

void Solver::step() {
  const double t0 = time_au();
  fill_stimulus(t0, t0 + dt_);
  const kernels::ReactionParams rp{params_.a, params_.k, params_.eps, params_.mu1, params_.mu2};
  kernels::ap_euler_step(v_, w_, stim_, grid_.n, grid_.h, params_.D, rp, dt_, lap_);
  ++steps_;
  for (std::size_t i = 0; i < v_.size(); ++i)
    if (!std::isfinite(v_[i]) || !std::isfinite(w_[i]))
      throw NumericalError("solver produced a non-finite value at step " + std::to_string(steps_) +
                           " (t = " + std::to_string(au_to_ms(time_au())) + " ms)");
}

void Solver::advance_to(double t_au) {
  const double n = (t_au - time_au()) / dt_;
  const double whole = std::round(n);
  if (whole < 0.0 || std::abs(n - whole) > 1e-9 * std::max(1.0, whole))
    throw std::invalid_argument("advance_to: target is not a whole number of steps ahead");
  for (auto i = static_cast<std::size_t>(whole); i > 0; --i) step();
}

// ---------------------------------------------------------------- simulate

Trajectory simulate(Scenario s, const Grid& g, const SimOptions& opt) {
  return simulate(s, g, opt, Params::for_scenario(s));
}

Trajectory simulate(Scenario s, const Grid& g, const SimOptions& opt, const Params& p) {
  if (!(opt.save_ms > 0.0) || !(opt.horizon_ms >= 0.0))
    throw std::invalid_argument("horizon must be >= 0 and save interval > 0");
  const double ratio = opt.horizon_ms / opt.save_ms;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    throw std::invalid_argument("horizon " + std::to_string(opt.horizon_ms) +
                                " ms is not a multiple of the save interval " +
                                std::to_string(opt.save_ms) + " ms");
  const double s2 = std::isnan(opt.s2_ms) ? default_s2_ms(s) : opt.s2_ms;
  const double save_au = ms_to_au(opt.save_ms);
  const double base = opt.dt_au > 0.0 ? opt.dt_au : default_dt_au(g, p);
  const auto substeps = static_cast<std::size_t>(std::ceil(save_au / base - 1e-9));
  Solver solver(g, p, save_au / static_cast<double>(substeps), protocol(s, s2));

  Trajectory t;
  t.T = static_cast<std::size_t>(std::round(ratio)) + 1;
  t.H = t.W = g.n;
  t.save_ms = opt.save_ms;
  t.h_mm = g.h;
  t.units = opt.units;
  t.scenario = s;
  t.params = p;
  t.frames.resize(t.T * 2 * t.plane());

  bool warned = false;
  auto store = [&](std::size_t k) {
    auto v = t.field(k, 0);
    auto w = t.field(k, 1);
    const auto sv = solver.v();
    const auto sw = solver.w();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!warned && (sv[i] < -0.2 || sv[i] > 1.2)) {
        spdlog::warn("V = {:.3f} AU outside [-0.2, 1.2] at t = {} ms", sv[i], t.time_ms(k));
        warned = true;
      }
      v[i] = static_cast<float>(opt.units == Units::au ? sv[i] : au_to_mv(sv[i]));
      w[i] = static_cast<float>(sw[i]);
    }
  };
  store(0);
  for (std::size_t k = 1; k < t.T; ++k) {
    for (std::size_t j = 0; j < substeps; ++j) solver.step();
    store(k);
  }

  const bool spiral = s == Scenario::spiral || s == Scenario::spiral_break;
  if (spiral && opt.require_reentry && s2 < opt.horizon_ms) {
    const auto from = static_cast<std::size_t>(std::ceil(s2 / opt.save_ms));
    const Trajectory au = to_au(t);
    const std::size_t q = first_quiescent_run(au, from);
    if (q < t.T)
      throw NoReentry("no reentry: " + std::string(to_string(s)) + " activity dies out at " +
                      std::to_string(au.time_ms(q)) + " ms after S2 at " + std::to_string(s2) + " ms");
  }
  return t;
}

Trajectory to_au(const Trajectory& t) {
  if (t.units == Units::au) return t;
  Trajectory out = t;
  for (std::size_t k = 0; k < t.T; ++k)
    for (auto& v : out.field(k, 0)) v = static_cast<float>(mv_to_au(v));
  out.units = Units::au;
  return out;
}

std::size_t first_quiescent_run(const Trajectory& t, std::size_t from, double level, std::size_t run) {
  std::size_t streak = 0;
  for (std::size_t k = from; k < t.T; ++k) {
    const auto v = t.field(k, 0);
    const double vmax = *std::max_element(v.begin(), v.end());
    streak = vmax < level ? streak + 1 : 0;
    if (streak >= run) return k + 1 - run;
  }
  return t.T;
}

double scan_s2(Scenario s, const Grid& g, double from_ms, double to_ms, double step_ms,
               double until_ms) {
  if (std::isnan(until_ms)) until_ms = default_horizon_ms(s);
  if (!(step_ms > 0.0) || to_ms < from_ms) throw std::invalid_argument("scan_s2: empty range");
  SimOptions opt;
  opt.require_reentry = false;
  for (double s2 = from_ms; s2 <= to_ms + 1e-9; s2 += step_ms) {
    opt.s2_ms = s2;
    opt.horizon_ms = std::ceil(std::max(s2 + 1000.0, until_ms) / opt.save_ms) * opt.save_ms;
    const Trajectory t = simulate(s, g, opt);
    const auto first = static_cast<std::size_t>(std::ceil(s2 / opt.save_ms));
    const bool persists = first_quiescent_run(t, first) == t.T;
    spdlog::info("scan {} S2 = {} ms: {}", to_string(s), s2, persists ? "reentry persists" : "dies out");
    if (persists) return s2;
  }
  throw NoReentry("no S2 time in [" + std::to_string(from_ms) + ", " + std::to_string(to_ms) +
                  "] ms sustains reentry through " + std::to_string(until_ms) + " ms");
}

std::size_t count_wavefronts(std::span<const float> v, std::size_t H, std::size_t W, double level,
                             std::size_t min_cells) {
  std::vector<std::uint8_t> seen(H * W, 0);
  std::vector<std::size_t> stack;
  std::size_t count = 0;
  for (std::size_t start = 0; start < H * W; ++start) {
    if (seen[start] || !(v[start] > level)) continue;
    std::size_t size = 0;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t r = i / W, c = i % W;
      auto visit = [&](std::size_t j) {
        if (!seen[j] && v[j] > level) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      if (r > 0) visit(i - W);
      if (r + 1 < H) visit(i + W);
      if (c > 0) visit(i - 1);
      if (c + 1 < W) visit(i + 1);
    }
    if (size >= min_cells) ++count;
  }
  return count;
}

std::vector<double> activation_times(const Trajectory& t, double level) {
  std::vector<double> act(t.plane(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < t.T; ++k) {
    const auto v = t.field(k, 0);
    for (std::size_t i = 0; i < act.size(); ++i)
      if (std::isnan(act[i]) && v[i] > level) act[i] = t.time_ms(k);
  }
  return act;
}

// ---------------------------------------------------------------- file format

namespace {
constexpr std::uint16_t kTrajVersion = 1;
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& t) {
  if (t.frames.size() != t.T * 2 * t.plane())
    throw std::invalid_argument("trajectory frame buffer does not match its header");
  ByteWriter w;
  w.bytes("APTJ");
  w.u16(kTrajVersion);
  w.u32(static_cast<std::uint32_t>(t.T));
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(t.H));
  w.u32(static_cast<std::uint32_t>(t.W));
  w.f64(t.save_ms);
  w.f64(t.h_mm);
  w.u8(static_cast<std::uint8_t>(t.units));
  w.u8(static_cast<std::uint8_t>(t.scenario));
  for (double p : {t.params.D, t.params.a, t.params.k, t.params.eps, t.params.mu1, t.params.mu2})
    w.f64(p);
  for (float f : t.frames) w.f32(f);
  seal(w);
  write_file(path, w.buffer());
  write_text(path.string() + ".meta", trajectory_meta(t));
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  const auto raw = read_file(path);
  const auto bytes = unseal(raw, path.string());
  ByteReader r(bytes, path.string());
  r.expect("APTJ");
  const std::uint16_t version = r.u16();
  if (version != kTrajVersion)
    throw DataError(path.string() + ": unsupported trajectory version " + std::to_string(version));
  Trajectory t;
  t.T = r.u32();
  const std::uint32_t d = r.u32();
  t.H = r.u32();
  t.W = r.u32();
  if (d != 2) throw DataError(path.string() + ": expected 2 fields, found " + std::to_string(d));
  t.save_ms = r.f64();
  t.h_mm = r.f64();
  const std::uint8_t unit = r.u8(), scen = r.u8();
  if (unit > 1 || scen > 3) throw DataError(path.string() + ": invalid unit or scenario tag");
  t.units = static_cast<Units>(unit);
  t.scenario = static_cast<Scenario>(scen);
  t.params.D = r.f64();
  t.params.a = r.f64();
  t.params.k = r.f64();
  t.params.eps = r.f64();
  t.params.mu1 = r.f64();
  t.params.mu2 = r.f64();
  const std::size_t count = t.T * 2 * t.plane();
  if (r.remaining() != 4 * count)
    throw DataError(path.string() + ": frame payload has " + std::to_string(r.remaining()) +
                    " bytes, header implies " + std::to_string(4 * count));
  t.frames.resize(count);
  for (auto& f : t.frames) f = r.f32();
  return t;
}

std::string trajectory_meta(const Trajectory& t) {
  std::ostringstream os;
  os.precision(17);
  os << "format = APTJ\nversion = " << kTrajVersion << "\nframes = " << t.T
     << "\nfields = 2\nheight = " << t.H << "\nwidth = " << t.W << "\nsave_ms = " << t.save_ms
     << "\nh_mm = " << t.h_mm << "\nunits = " << to_string(t.units)
     << "\nscenario = " << to_string(t.scenario) << "\nD = " << t.params.D << "\na = " << t.params.a
     << "\nk = " << t.params.k << "\neps = " << t.params.eps << "\nmu1 = " << t.params.mu1
     << "\nmu2 = " << t.params.mu2 << '\n';
  return os.str();
}

}  // namespace pino::ap
