#include "pino/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "pino/io.hpp"

namespace pino::eval {

Predictor predictor(const fno::Model& model) {
  return [&model](const Tensor& x) { return model.predict(x); };
}

Predictor oracle(const ap::Trajectory& t, std::size_t offset) {
  return [&t, offset](const Tensor& x) {
    const std::size_t B = x.extent(0), C = x.extent(1), P = t.plane();
    if (x.extent(2) != t.H || x.extent(3) != t.W)
      throw std::invalid_argument("oracle: input grid does not match the trajectory");
    const std::size_t L = C / 2;
    std::vector<std::vector<std::size_t>> frames(B);
    const auto xd = x.data();
    for (std::size_t b = 0; b < B; ++b) {
      const double* v = xd.data() + b * C * P;
      std::size_t found = t.T;
      for (std::size_t k = 0; k < t.T && found == t.T; ++k) {
        const auto tv = t.field(k, 0);
        const auto tw = t.field(k, 1);
        bool same = true;
        for (std::size_t i = 0; i < P && same; ++i)
          same = v[i] == static_cast<double>(tv[i]) && v[P + i] == static_cast<double>(tw[i]);
        if (same) found = k;
      }
      if (found == t.T || found + offset + L > t.T)
        throw std::out_of_range("oracle: input window has no ground-truth continuation");
      for (std::size_t l = 0; l < L; ++l) frames[b].push_back(found + offset + l);
    }
    return data::gather(t, frames);
  };
}

double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rmse: size mismatch or empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

namespace {

// Pooled squared-error accumulator shared by P2P and roll-out so that both
// sum in the same order.
struct Accum {
  explicit Accum(std::size_t plane) : cell(plane, 0.0) {}
  double add(const double* pred, const double* truth) {
    double s = 0.0;
    for (std::size_t i = 0; i < cell.size(); ++i) {
      const double e = (pred[i] - truth[i]) * (pred[i] - truth[i]);
      cell[i] += e;
      s += e;
    }
    total += s;
    count += cell.size();
    ++frames;
    return s;
  }
  void finish(EvalReport& r, std::size_t W) const {
    r.rmse = std::sqrt(total / static_cast<double>(count));
    const auto [lo, hi] = std::minmax_element(cell.begin(), cell.end());
    const auto best = static_cast<std::size_t>(lo - cell.begin());
    const auto worst = static_cast<std::size_t>(hi - cell.begin());
    r.best_cell = {best / W, best % W};
    r.worst_cell = {worst / W, worst % W};
  }
  std::vector<double> cell;
  double total = 0.0;
  std::size_t count = 0, frames = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_of(const double* v, std::size_t n) { return *std::max_element(v, v + n); }

}  // namespace

EvalReport eval_p2p(const Predictor& f, const ap::Trajectory& t, std::span<const data::SamplePair> pairs,
                    std::size_t batch) {
  if (pairs.empty()) throw std::invalid_argument("eval_p2p: no test pairs");
  EvalReport r;
  r.scenario = r.source_scenario = std::string(ap::to_string(t.scenario));
  r.mode = "p2p";
  const std::size_t P = t.plane();
  Accum acc(P);
  double elapsed = 0.0;
  for (std::size_t s = 0; s < pairs.size(); s += batch) {
    const auto chunk = pairs.subspan(s, std::min(batch, pairs.size() - s));
    const Tensor x = data::gather_inputs(t, chunk);
    const Tensor y = data::gather_targets(t, chunk);
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor p = f(x);
    elapsed += seconds_since(t0);
    if (p.shape() != y.shape())
      throw std::invalid_argument("eval_p2p: prediction " + shape_str(p.shape()) + " vs target " +
                                  shape_str(y.shape()));
    const std::size_t L = chunk[0].target.size();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      double sq = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t off = (b * 2 * L + 2 * l) * P;
        sq += acc.add(p.data().data() + off, y.data().data() + off);
      }
      r.frame_time_ms.push_back(t.time_ms(chunk[b].target.front()));
      r.frame_rmse.push_back(std::sqrt(sq / static_cast<double>(L * P)));
    }
  }
  acc.finish(r, t.W);
  r.inference_s = elapsed;
  return r;
}

EvalReport eval_p2p(const fno::Model& model, const ap::Trajectory& t, std::span<const data::SamplePair> pairs,
                    std::size_t batch) {
  return eval_p2p(predictor(model), t, pairs, batch);
}

void detect_collapse(EvalReport& r, std::span<const double> pred_max, std::span<const double> true_max,
                     const Collapse& rule) {
  std::size_t streak = 0;
  r.collapsed = false;
  for (std::size_t k = 0; k < pred_max.size(); ++k) {
    streak = (pred_max[k] < rule.pred_below && true_max[k] > rule.truth_above) ? streak + 1 : 0;
    if (streak >= rule.frames) {
      r.collapsed = true;
      r.collapse_frame = k + 1 - rule.frames;
      return;
    }
  }
}

EvalReport eval_rollout(const Predictor& f, const ap::Trajectory& t, const data::SamplePair& start,
                        std::size_t steps, const Collapse& rule) {
  if (steps < 1) throw std::invalid_argument("eval_rollout: horizon must be at least one step");
  EvalReport r;
  r.scenario = r.source_scenario = std::string(ap::to_string(t.scenario));
  r.mode = "rollout";
  const std::size_t P = t.plane(), L = start.target.size();
  const std::size_t offset = start.target.front() - start.input.front();
  Accum acc(P);
  std::vector<double> pred_max, true_max;
  std::vector<std::vector<std::size_t>> first{start.input};
  Tensor input = data::gather(t, first);
  double elapsed = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<std::vector<std::size_t>> target{start.target};
    for (auto& k : target[0]) k += s * offset;
    if (target[0].back() >= t.T) break;
    const auto t0 = std::chrono::steady_clock::now();
    Tensor pred = f(input);
    elapsed += seconds_since(t0);
    const Tensor truth = data::gather(t, target);
    if (pred.shape() != truth.shape())
      throw std::invalid_argument("eval_rollout: prediction " + shape_str(pred.shape()) + " vs target " +
                                  shape_str(truth.shape()));
    for (std::size_t l = 0; l < L; ++l) {
      const double* pv = pred.data().data() + 2 * l * P;
      const double* tv = truth.data().data() + 2 * l * P;
      const double sq = acc.add(pv, tv);
      r.frame_time_ms.push_back(t.time_ms(target[0][l]));
      r.frame_rmse.push_back(std::sqrt(sq / static_cast<double>(P)));
      pred_max.push_back(max_of(pv, P));
      true_max.push_back(max_of(tv, P));
    }
    input = std::move(pred);
  }
  if (acc.frames == 0) throw std::invalid_argument("eval_rollout: start pair leaves no room in the trajectory");
  acc.finish(r, t.W);
  r.inference_s = elapsed;
  detect_collapse(r, pred_max, true_max, rule);
  return r;
}

std::vector<ResolutionRow> eval_resolution(const Predictor& f, const ap::Trajectory& full,
                                           const data::DatasetConfig& cfg, std::size_t base_stride) {
  std::vector<ResolutionRow> rows;
  for (double factor : {1.0, 1.25, 2.5, 5.0, 10.0}) {
    const double s = static_cast<double>(base_stride) / factor;
    const auto stride = static_cast<std::size_t>(std::llround(s));
    if (stride < 1 || std::abs(s - static_cast<double>(stride)) > 1e-9 || (full.H - 1) % stride != 0)
      throw std::invalid_argument("eval_resolution: factor " + std::to_string(factor) +
                                  " is not an integer stride of the full grid");
    data::DatasetConfig c = cfg;
    c.downsample = stride;
    const data::Dataset ds = data::make_dataset(full, c);
    const EvalReport r = eval_p2p(f, ds.traj, ds.split.test, 1);
    rows.push_back({factor, ds.traj.H, r.rmse, 0.0});
  }
  const double ref = rows.front().rmse;
  for (auto& row : rows) row.degradation_pct = ref > 0.0 ? 100.0 * (row.rmse - ref) / ref : 0.0;
  return rows;
}

std::string resolution_csv(const std::vector<ResolutionRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "factor,grid,rmse,degradation_pct\n";
  for (const auto& r : rows) os << r.factor << ',' << r.grid << ',' << r.rmse << ',' << r.degradation_pct << '\n';
  return os.str();
}

double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("correlation: size mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mad_pct(const std::vector<double>& v, double med) {
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - med));
  return med > 0.0 ? 100.0 * median(dev) / med : 0.0;
}

}  // namespace

SpeedReport benchmark_speed(const std::function<void()>& solver, const std::function<void()>& model,
                            std::size_t repeats) {
  if (repeats < 1) throw std::invalid_argument("benchmark_speed: repeats must be >= 1");
  SpeedReport r;
  for (std::size_t i = 0; i < repeats; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    solver();
    r.solver_s.push_back(seconds_since(t0));
    t0 = std::chrono::steady_clock::now();
    model();
    r.model_s.push_back(seconds_since(t0));
  }
  r.solver_median = median(r.solver_s);
  r.model_median = median(r.model_s);
  r.ratio = r.solver_median / r.model_median;
  r.solver_mad_pct = mad_pct(r.solver_s, r.solver_median);
  r.model_mad_pct = mad_pct(r.model_s, r.model_median);
  return r;
}

std::string metrics_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "index,time_ms,rmse_v\n";
  for (std::size_t i = 0; i < r.frame_rmse.size(); ++i)
    os << i << ',' << r.frame_time_ms[i] << ',' << r.frame_rmse[i] << '\n';
  return os.str();
}

std::string report_meta(const EvalReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "scenario = " << r.scenario << "\nsource_scenario = " << r.source_scenario << "\nmodel = " << r.model_id
     << "\nmode = " << r.mode << "\nframes = " << r.frame_rmse.size() << "\nrmse_v = " << r.rmse
     << "\naggregation = pooled over all evaluated voltage values (AU)"
     << "\ncollapsed = " << (r.collapsed ? "true" : "false") << "\ncollapse_frame = " << r.collapse_frame
     << "\nbest_cell = " << r.best_cell.first << ',' << r.best_cell.second << "\nworst_cell = " << r.worst_cell.first
     << ',' << r.worst_cell.second << "\ninference_s = " << r.inference_s << "\nsolver_s = " << r.solver_s << '\n';
  return os.str();
}

void write_pgm(const std::filesystem::path& path, std::span<const double> v, std::size_t H, std::size_t W) {
  if (v.size() != H * W) throw std::invalid_argument("write_pgm: field size does not match H x W");
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  // Image rows run top to bottom, grid rows bottom to top.
  for (std::size_t r = H; r-- > 0;)
    for (std::size_t c = 0; c < W; ++c) {
      const double x = std::clamp(v[r * W + c], 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0))));
    }
  write_text(path, out);
}

std::string snapshot_name(const std::string& scenario, const std::string& mode, double t_ms) {
  std::ostringstream os;
  os << scenario << '_' << mode << "_t" << std::llround(t_ms) << ".pgm";
  return os.str();
}

}  // namespace pino::eval
