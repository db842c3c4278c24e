#include "pino/training.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pino/eval.hpp"
#include "pino/io.hpp"

namespace pino::train {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (stage != 1 && stage != 2) throw std::invalid_argument("stage must be 1 or 2");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("loss weights must be finite and >= 0");
}

double lr_at(std::size_t epoch, std::size_t epochs, double lr0) {
  if (epoch >= epochs) return 0.0;
  const double x = static_cast<double>(epoch) / static_cast<double>(epochs);
  return std::max(0.0, lr0 * (1.0 + std::cos(std::numbers::pi * x)) / 2.0);
}

// ---------------------------------------------------------------- Adam

Adam::Adam(const fno::Model& model) {
  for (const auto& p : model.params()) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

void Adam::step(fno::Model& model, const std::vector<Tensor>& grads, double lr) {
  auto& params = model.params();
  if (grads.size() != params.size() || m_.size() != params.size())
    throw std::invalid_argument("Adam: gradient list does not match the parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].value.data();
    const auto g = grads[k].data();
    auto& m = m_[k];
    auto& v = v_[k];
    if (g.size() != p.size()) throw std::invalid_argument("Adam: gradient shape mismatch for " + params[k].name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

std::vector<std::uint8_t> Adam::serialize() const {
  ByteWriter w;
  w.bytes("OPT1");
  w.f64(beta1);
  w.f64(beta2);
  w.f64(eps);
  w.u64(t_);
  w.u32(static_cast<std::uint32_t>(m_.size()));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    w.u64(m_[k].size());
    for (double x : m_[k]) w.f64(x);
    for (double x : v_[k]) w.f64(x);
  }
  return w.take();
}

Adam Adam::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "optimizer state");
  r.expect("OPT1");
  Adam a;
  a.beta1 = r.f64();
  a.beta2 = r.f64();
  a.eps = r.f64();
  a.t_ = r.u64();
  const std::uint32_t n = r.u32();
  a.m_.resize(n);
  a.v_.resize(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint64_t len = r.u64();
    a.m_[k].resize(len);
    a.v_[k].resize(len);
    for (auto& x : a.m_[k]) x = r.f64();
    for (auto& x : a.v_[k]) x = r.f64();
  }
  return a;
}

// ---------------------------------------------------------------- state

TrainState TrainState::start(fno::Model model, const TrainConfig& cfg, bool multi) {
  cfg.validate();
  loss::LossWeights w;
  w.scheme = cfg.stage == 1 ? loss::Scheme::fixed : cfg.scheme;
  w.initial = cfg.lambdas;
  if (cfg.stage == 1)
    w.active = {true, false, false, false};
  else
    w.active = {true, true, multi, true};
  w.reseed(cfg.seed);
  Adam opt(model);
  TrainState st(std::move(model), std::move(opt), std::move(w));
  st.stage = cfg.stage;
  return st;
}

fno::Model TrainState::best_model() const {
  if (best_params.empty()) return model;
  fno::Model m = model;
  for (std::size_t i = 0; i < best_params.size(); ++i) m.params()[i].value = best_params[i];
  return m;
}

double test_rmse(const fno::Model& model, const data::Dataset& ds, std::size_t batch) {
  return eval::eval_p2p(model, ds.traj, ds.split.test, batch).rmse;
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

// Batches of pair positions: shuffled pairs for multi-frame data, shuffled
// contiguous time blocks for single-frame data.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch, bool multi,
                                                   std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> out;
  if (multi) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    shuffle(order, rng);
    for (std::size_t s = 0; s < count; s += batch)
      out.emplace_back(order.begin() + static_cast<long>(s),
                       order.begin() + static_cast<long>(std::min(count, s + batch)));
  } else {
    for (std::size_t s = 0; s < count; s += batch) {
      std::vector<std::size_t> block;
      for (std::size_t i = s; i < std::min(count, s + batch); ++i) block.push_back(i);
      out.push_back(std::move(block));
    }
    shuffle(out, rng);
  }
  return out;
}

}  // namespace

HistoryRow run_epoch(TrainState& st, const data::Dataset& ds, const TrainConfig& cfg) {
  const bool multi = ds.cfg.multi();
  const auto& pairs = ds.split.train;
  const double lr = lr_at(st.epoch, cfg.epochs, cfg.lr0);
  std::mt19937_64 rng(cfg.seed + 1000003ull * static_cast<std::uint64_t>(st.stage) + st.epoch);
  const auto batches = make_batches(pairs.size(), cfg.batch_for(multi), multi, rng);

  loss::ResidualSpec spec;
  spec.params = ds.traj.params;
  spec.h_mm = ds.traj.h_mm;
  spec.dt_au = ap::ms_to_au(ds.traj.save_ms);

  HistoryRow row;
  row.stage = st.stage;
  row.epoch = st.epoch;
  row.lr = lr;
  row.lambdas = st.weights.lambdas();
  loss::Values sums{};
  std::array<std::size_t, loss::kComponents> counts{};
  double total_sum = 0.0;

  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    std::vector<data::SamplePair> chunk;
    for (auto i : batches[bi]) chunk.push_back(pairs[i]);
    Tape tape;
    const Var x = tape.constant(data::gather_inputs(ds.traj, chunk));
    const Var y = tape.constant(data::gather_targets(ds.traj, chunk));
    std::vector<Var> params;
    const Var pred = st.model.forward(tape, x, &params);

    std::array<Var, loss::kComponents> parts;
    parts[loss::kData] = loss::relative_l2(pred, y);
    if (st.stage == 2) {
      if (multi) {
        parts[loss::kRes] = loss::residual_loss(loss::pde_residual(loss::as_sequences(pred), spec),
                                                st.weights.w_v, st.weights.w_w);
        parts[loss::kIc] = loss::initial_loss(pred, y);
      } else if (chunk.size() >= 3) {
        if (!data::time_contiguous(chunk))
          throw std::logic_error("single-frame physics batch is not time-contiguous");
        parts[loss::kRes] = loss::residual_loss(loss::pde_residual(loss::as_one_sequence(pred), spec),
                                                st.weights.w_v, st.weights.w_w);
      }
      parts[loss::kBc] = loss::boundary_loss(pred, spec.h_mm);
    }

    Var total;
    for (std::size_t c = 0; c < loss::kComponents; ++c) {
      if (!parts[c].valid() || !st.weights.active[c]) continue;
      sums[c] += parts[c].value().item();
      ++counts[c];
      const Var term = scale(parts[c], row.lambdas[c]);
      total = total.valid() ? add(total, term) : term;
    }
    const double tv = total.value().item();
    if (!std::isfinite(tv))
      throw NumericalError("non-finite training loss at stage " + std::to_string(st.stage) + ", epoch " +
                           std::to_string(st.epoch) + ", batch " + std::to_string(bi));
    total_sum += tv;
    tape.backward(total);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(p.grad());
    st.opt.step(st.model, grads, lr);
  }

  for (std::size_t c = 0; c < loss::kComponents; ++c)
    row.components[c] = counts[c] ? sums[c] / static_cast<double>(counts[c]) : 0.0;
  row.total = total_sum / static_cast<double>(batches.size());
  if (st.stage == 2) loss::update_weights(st.weights, row.components);
  ++st.epoch;
  return row;
}

void train_stage(TrainState& st, const data::Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (st.stage != cfg.stage)
    throw std::invalid_argument("training state is at stage " + std::to_string(st.stage) + ", config asks for " +
                                std::to_string(cfg.stage));
  while (st.epoch < cfg.epochs) {
    HistoryRow row = run_epoch(st, ds, cfg);
    if (st.epoch % cfg.eval_every == 0 || st.epoch == cfg.epochs) {
      row.test_rmse = test_rmse(st.model, ds, cfg.batch_for(ds.cfg.multi()));
      if (row.test_rmse < st.best_metric) {
        st.best_metric = row.test_rmse;
        st.best_epoch = st.epoch;
        st.best_params.clear();
        for (const auto& p : st.model.params()) st.best_params.push_back(p.value);
      }
    }
    st.history.push_back(row);
    if (on_epoch) on_epoch(row);
    if (!cfg.checkpoint.empty() && cfg.checkpoint_every > 0 && st.epoch % cfg.checkpoint_every == 0)
      save_state(cfg.checkpoint, st);
  }
  if (!cfg.checkpoint.empty()) save_state(cfg.checkpoint, st);
}

// ---------------------------------------------------------------- persistence

namespace {

void put_values(ByteWriter& w, const loss::Values& v) {
  for (double x : v) w.f64(x);
}
loss::Values get_values(ByteReader& r) {
  loss::Values v{};
  for (double& x : v) x = r.f64();
  return v;
}

}  // namespace

void save_state(const std::filesystem::path& path, const TrainState& st) {
  ByteWriter t;
  t.bytes("TRN1");
  t.u8(static_cast<std::uint8_t>(st.stage));
  t.u64(st.epoch);
  t.f64(st.best_metric);
  t.u64(st.best_epoch);
  t.u32(static_cast<std::uint32_t>(st.best_params.size()));
  for (const auto& p : st.best_params) {
    t.u64(p.numel());
    for (double x : p.data()) t.f64(x);
  }
  t.u32(static_cast<std::uint32_t>(st.history.size()));
  for (const auto& h : st.history) {
    t.u8(static_cast<std::uint8_t>(h.stage));
    t.u64(h.epoch);
    t.f64(h.lr);
    put_values(t, h.components);
    put_values(t, h.lambdas);
    t.f64(h.total);
    t.f64(h.test_rmse);
  }
  fno::save_checkpoint(path, st.model,
                       {{"OPT1", st.opt.serialize()}, {"WTS1", st.weights.serialize()}, {"TRN1", t.take()}});
}

TrainState load_state(const std::filesystem::path& path, const fno::FnoConfig* expect) {
  fno::Checkpoint ck = fno::load_checkpoint(path, expect);
  const auto* opt = ck.extension("OPT1");
  const auto* wts = ck.extension("WTS1");
  const auto* trn = ck.extension("TRN1");
  if (!opt || !wts || !trn) {
    Adam a(ck.model);
    return TrainState(std::move(ck.model), std::move(a), loss::LossWeights{});
  }
  TrainState st(std::move(ck.model), Adam::deserialize(*opt), loss::LossWeights::deserialize(*wts));
  ByteReader r(*trn, path.string() + " training state");
  r.expect("TRN1");
  st.stage = r.u8();
  st.epoch = r.u64();
  st.best_metric = r.f64();
  st.best_epoch = r.u64();
  const std::uint32_t nb = r.u32();
  if (nb != 0 && nb != st.model.params().size())
    throw DataError(path.string() + ": best-model block does not match the parameter list");
  for (std::uint32_t i = 0; i < nb; ++i) {
    const std::uint64_t n = r.u64();
    const Shape& shape = st.model.params()[i].value.shape();
    if (n != numel_of(shape)) throw DataError(path.string() + ": best-model tensor size mismatch");
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    st.best_params.push_back(Tensor::from(shape, std::move(v)));
  }
  const std::uint32_t nh = r.u32();
  for (std::uint32_t i = 0; i < nh; ++i) {
    HistoryRow h;
    h.stage = r.u8();
    h.epoch = r.u64();
    h.lr = r.f64();
    h.components = get_values(r);
    h.lambdas = get_values(r);
    h.total = r.f64();
    h.test_rmse = r.f64();
    st.history.push_back(h);
  }
  return st;
}

namespace {
std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::ostringstream os;
  os << "stage,epoch,lr,L_data,L_res,L_ic,L_bc,total,lambda_data,lambda_res,lambda_ic,lambda_bc,test_rmse\n";
  for (const auto& h : rows) {
    os << h.stage << ',' << h.epoch << ',' << num(h.lr);
    for (double c : h.components) os << ',' << num(c);
    os << ',' << num(h.total);
    for (double l : h.lambdas) os << ',' << num(l);
    os << ',' << (std::isnan(h.test_rmse) ? std::string() : num(h.test_rmse)) << '\n';
  }
  return os.str();
}

std::string loss_csv(const std::vector<HistoryRow>& rows) {
  std::ostringstream os;
  os << "epoch,L_data,L_res,L_ic,L_bc,lambda_data,lambda_res,lambda_ic,lambda_bc\n";
  for (const auto& h : rows) {
    os << h.epoch;
    for (double c : h.components) os << ',' << num(c);
    for (double l : h.lambdas) os << ',' << num(l);
    os << '\n';
  }
  return os.str();
}

}  // namespace pino::train
