#pragma once

// Explicit finite-difference solver for the monodomain Aliev-Panfilov model
// on a square grid with no-flux boundaries, plus the trajectory file format.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pino::ap {

inline constexpr double kSideMm = 100.0;
inline constexpr double kMsPerAu = 12.9;

inline double mv_to_au(double mv) { return (mv + 80.0) / 100.0; }
inline double au_to_mv(double au) { return au * 100.0 - 80.0; }
inline double ms_to_au(double ms) { return ms / kMsPerAu; }
inline double au_to_ms(double au) { return au * kMsPerAu; }

enum class Scenario : std::uint8_t { planar = 0, centrifugal = 1, spiral = 2, spiral_break = 3 };
enum class Units : std::uint8_t { au = 0, mv_ms = 1 };

std::string_view to_string(Scenario s);
std::string_view to_string(Units u);
/// Throws std::invalid_argument listing the accepted tags.
Scenario parse_scenario(std::string_view tag);
inline constexpr Scenario kAllScenarios[] = {Scenario::planar, Scenario::centrifugal,
                                             Scenario::spiral, Scenario::spiral_break};

struct Params {
  double D = 0.55;  // mm^2 per AU time
  double a = 0.15;
  double k = 8.0;
  double eps = 0.002;
  double mu1 = 0.2;
  double mu2 = 0.3;

  void validate() const;
  static Params for_scenario(Scenario s);
  bool operator==(const Params&) const = default;
};

struct Grid {
  std::size_t n = 101;  // points per axis
  double h = 1.0;       // mm

  static Grid square(std::size_t n, double side_mm = kSideMm);
  double side() const { return static_cast<double>(n - 1) * h; }
};

struct Rates {
  double dv, dw;
};

/// Non-diffusive right-hand side at one point. Throws on non-finite input.
Rates reaction_rhs(double v, double w, const Params& p);

enum class Region : std::uint8_t { left_wall, corner_disc, lower_half };

struct Stimulus {
  Region region = Region::left_wall;
  double size_mm = 2.0;  // strip width, disc radius, or half-plane height
  double onset_ms = 0.0;
  double duration_ms = 2.0;
  double amplitude = 5.0;  // added to dV/dt, AU per AU time

  bool covers(double x_mm, double y_mm) const;
};

/// Default stimulation protocol; `s2_ms` only matters for the spiral scenarios.
std::vector<Stimulus> protocol(Scenario s, double s2_ms);
/// Frozen cross-stimulation times found by scan_s2.
double default_s2_ms(Scenario s);
double default_horizon_ms(Scenario s);

/// Largest stable Euler step used by default: min(0.5 h^2 / (4D), 0.05) AU.
double default_dt_au(const Grid& g, const Params& p);

/// Forward-Euler integrator. Rows are y (row 0 at y = 0), columns are x.
class Solver {
 public:
  Solver(Grid grid, Params params, double dt_au, std::vector<Stimulus> stimuli);

  /// Advances one step; throws NumericalError naming the step on NaN.
  void step();
  /// Steps until time_au() reaches t_au; t_au must be a whole number of
  /// steps ahead (within 1e-9 relative).
  void advance_to(double t_au);

  double time_au() const { return static_cast<double>(steps_) * dt_; }
  std::size_t steps() const { return steps_; }
  double dt() const { return dt_; }
  const Grid& grid() const { return grid_; }
  std::span<double> v() { return v_; }
  std::span<double> w() { return w_; }
  std::span<const double> v() const { return v_; }
  std::span<const double> w() const { return w_; }

 private:
  void fill_stimulus(double t0, double t1);

  Grid grid_;
  Params params_;
  double dt_;
  std::vector<Stimulus> stimuli_;
  std::vector<std::vector<std::uint8_t>> masks_;
  std::vector<double> v_, w_, stim_, lap_;
  std::size_t steps_ = 0;
};

/// Time-ordered stack of (V, W) frames, stored as f32 exactly as on disk.
struct Trajectory {
  std::size_t T = 0, H = 0, W = 0;
  double save_ms = 5.0;
  double h_mm = 1.0;
  Units units = Units::au;
  Scenario scenario = Scenario::planar;
  Params params;
  std::vector<float> frames;  // [T][2][H][W]

  std::size_t plane() const { return H * W; }
  std::span<const float> field(std::size_t t, std::size_t d) const {
    return std::span<const float>(frames).subspan((t * 2 + d) * plane(), plane());
  }
  std::span<float> field(std::size_t t, std::size_t d) {
    return std::span<float>(frames).subspan((t * 2 + d) * plane(), plane());
  }
  double time_ms(std::size_t t) const { return static_cast<double>(t) * save_ms; }
  bool operator==(const Trajectory&) const = default;
};

/// Thrown when a spiral protocol fails to produce sustained reentry.
class NoReentry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimOptions {
  double horizon_ms = 1000.0;
  double save_ms = 5.0;
  double dt_au = 0.0;  // 0 selects default_dt_au, rounded down to divide save_ms
  double s2_ms = std::numeric_limits<double>::quiet_NaN();  // NaN selects the default
  bool require_reentry = true;
  Units units = Units::au;
};

Trajectory simulate(Scenario s, const Grid& g, const SimOptions& opt);
Trajectory simulate(Scenario s, const Grid& g, const SimOptions& opt, const Params& p);

/// Converts a trajectory's voltage field to AU; a no-op on AU input.
Trajectory to_au(const Trajectory& t);

/// Earliest S2 time on [from, to] (step `step_ms`) after which activity
/// persists for at least 1000 ms and through `until_ms` (NaN: the scenario's
/// default horizon). Throws NoReentry if none works.
double scan_s2(Scenario s, const Grid& g, double from_ms, double to_ms, double step_ms,
               double until_ms = std::numeric_limits<double>::quiet_NaN());

/// Index of the first frame after `from` where the spatial maximum of V stays
/// below `level` for `run` consecutive frames, or T if there is none.
std::size_t first_quiescent_run(const Trajectory& t, std::size_t from, double level = 0.5,
                                std::size_t run = 5);

/// Number of 4-connected components of {V > level} with at least `min_cells`
/// points.
std::size_t count_wavefronts(std::span<const float> v, std::size_t H, std::size_t W,
                             double level = 0.5, std::size_t min_cells = 4);

/// Per-node time (ms) of the first frame with V > level; NaN if never.
std::vector<double> activation_times(const Trajectory& t, double level = 0.5);

void write_trajectory(const std::filesystem::path& path, const Trajectory& t);
Trajectory read_trajectory(const std::filesystem::path& path);
/// Human-readable mirror of the binary header (written as `<path>.meta`).
std::string trajectory_meta(const Trajectory& t);

}  // namespace pino::ap
