#include "pino/losses.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pino/io.hpp"

namespace pino::loss {

Var relative_l2(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("data loss: prediction " + shape_str(pred.shape()) + " vs target " +
                                shape_str(target.shape()));
  const std::size_t B = pred.shape().at(0);
  const std::size_t N = pred.value().numel() / B;
  auto per_sample = [&](const Var& x) { return sum_to(square(reshape(x, {B, N})), {B, 1}); };
  // tiny floor keeps sqrt differentiable at pred == target
  const Var num = sqrt(add_scalar(per_sample(sub(pred, target)), 1e-300));
  const Var den = sqrt(add_scalar(per_sample(target), 1e-24));
  return mean(div(num, den));
}

Var as_sequences(const Var& pred) {
  const Shape& s = pred.shape();
  if (s.size() != 4 || s[1] % 2 != 0)
    throw std::invalid_argument("expected [B, 2L, H, W] predictions, got " + shape_str(s));
  return reshape(pred, {s[0], s[1] / 2, 2, s[2], s[3]});
}

Var as_one_sequence(const Var& pred) {
  const Shape& s = pred.shape();
  if (s.size() != 4 || s[1] != 2)
    throw std::invalid_argument("expected [B, 2, H, W] single-frame predictions, got " + shape_str(s));
  return reshape(pred, {1, s[0], 2, s[2], s[3]});
}

Residual pde_residual(const Var& frames, const ResidualSpec& spec) {
  const Shape& s = frames.shape();
  if (s.size() != 5 || s[2] != 2)
    throw std::invalid_argument("pde_residual: expected [S, L, 2, H, W], got " + shape_str(s));
  const std::size_t L = s[1];
  if (L < 3)
    throw std::invalid_argument("pde_residual: needs at least 3 frames along time, got " + std::to_string(L));
  const std::size_t I = L - 2;
  const Var next = narrow(frames, 1, 2, I);
  const Var prev = narrow(frames, 1, 0, I);
  const Var dudt = scale(sub(next, prev), 1.0 / (2.0 * spec.dt_au));
  Var rv = narrow(dudt, 2, 0, 1);
  Var rw = narrow(dudt, 2, 1, 1);
  if (!spec.include_rhs) return {rv, rw};

  const ap::Params& p = spec.params;
  const Var mid = narrow(frames, 1, 1, I);
  const Var V = narrow(mid, 2, 0, 1);
  const Var W = narrow(mid, 2, 1, 1);
  const Var cubic = scale(mul(mul(V, add_scalar(V, -p.a)), add_scalar(V, -1.0)), p.k);
  const Var rhs_v = sub(sub(scale(laplacian_neumann(V, spec.h_mm), p.D), cubic), mul(V, W));
  const Var gate = add_scalar(scale(div(W, clamp_min(add_scalar(V, p.mu2), 1e-6)), p.mu1), p.eps);
  const Var drive = neg(add(W, scale(mul(V, add_scalar(V, -p.a - 1.0)), p.k)));
  const Var rhs_w = mul(gate, drive);
  return {sub(rv, rhs_v), sub(rw, rhs_w)};
}

Var residual_loss(const Residual& r, double w_v, double w_w) {
  return add(scale(mean(square(r.v)), w_v), scale(mean(square(r.w)), w_w));
}

Var boundary_loss(const Var& pred, double h_mm) {
  const Shape& s = pred.shape();
  if (s.size() != 4 || s[2] < 2 || s[3] < 2)
    throw std::invalid_argument("boundary_loss: expected [B, C, H, W], got " + shape_str(s));
  const std::size_t H = s[2], W = s[3];
  auto edge = [&](int dim, std::size_t outer, std::size_t inner) {
    return square(scale(sub(narrow(pred, dim, inner, 1), narrow(pred, dim, outer, 1)), 1.0 / h_mm));
  };
  const Var total = add(add(sum(edge(3, 0, 1)), sum(edge(3, W - 1, W - 2))),
                        add(sum(edge(2, 0, 1)), sum(edge(2, H - 1, H - 2))));
  const double count = static_cast<double>(s[0] * s[1] * 2 * (H + W));
  return scale(total, 1.0 / count);
}

Var initial_loss(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("initial_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                                shape_str(target.shape()));
  return mean(square(sub(narrow(pred, 1, 0, 2), narrow(target, 1, 0, 2))));
}

// ---------------------------------------------------------------- weighting

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::fixed: return "fixed";
    case Scheme::softadapt: return "softadapt";
    case Scheme::reladapt: return "reladapt";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view tag) {
  for (Scheme s : {Scheme::fixed, Scheme::softadapt, Scheme::reladapt})
    if (to_string(s) == tag) return s;
  throw std::invalid_argument("unknown weighting scheme '" + std::string(tag) +
                              "' (expected fixed, softadapt or reladapt)");
}

Values LossWeights::lambdas() const {
  Values out{};
  for (std::size_t i = 0; i < kComponents; ++i) out[i] = active[i] ? initial[i] * multiplier[i] : 0.0;
  return out;
}

std::size_t LossWeights::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// n * softmax(z) over the active entries.
Values balanced_softmax(const Values& z, const std::array<bool, kComponents>& active, double n) {
  double zmax = -INFINITY;
  for (std::size_t i = 0; i < kComponents; ++i)
    if (active[i]) zmax = std::max(zmax, z[i]);
  Values e{};
  double total = 0.0;
  for (std::size_t i = 0; i < kComponents; ++i)
    if (active[i]) total += (e[i] = std::exp(z[i] - zmax));
  for (auto& v : e) v = n * v / total;
  return e;
}

}  // namespace

void update_weights(LossWeights& w, const Values& latest) {
  for (std::size_t i = 0; i < kComponents; ++i)
    if (w.active[i] && !std::isfinite(latest[i])) {
      ++w.skipped;
      spdlog::warn("loss component {} is non-finite; weight update skipped", i);
      return;
    }
  const double n = static_cast<double>(w.active_count());
  switch (w.scheme) {
    case Scheme::fixed: break;
    case Scheme::softadapt: {
      Values z{};
      for (std::size_t i = 0; i < kComponents; ++i)
        z[i] = w.has_previous ? w.beta * (latest[i] - w.previous[i]) : 0.0;
      const Values soft = balanced_softmax(z, w.active, 1.0);
      double total = 0.0;
      for (std::size_t i = 0; i < kComponents; ++i)
        if (w.active[i]) total += soft[i] * latest[i];
      if (total > 0.0)
        for (std::size_t i = 0; i < kComponents; ++i)
          if (w.active[i]) w.multiplier[i] = n * soft[i] * latest[i] / total;
      break;
    }
    case Scheme::reladapt: {
      const bool reset = uniform01(w.rng) < w.reset_prob;
      if (reset) {
        w.multiplier.fill(1.0);
      } else if (w.has_previous) {
        Values z{};
        for (std::size_t i = 0; i < kComponents; ++i)
          if (w.active[i]) z[i] = latest[i] / (w.tau * std::max(w.previous[i], 1e-300));
        const Values bal = balanced_softmax(z, w.active, n);
        for (std::size_t i = 0; i < kComponents; ++i)
          if (w.active[i]) w.multiplier[i] = w.alpha * w.multiplier[i] + (1.0 - w.alpha) * bal[i];
      }
      break;
    }
  }
  w.previous = latest;
  w.has_previous = true;
  ++w.updates;
}

std::vector<std::uint8_t> LossWeights::serialize() const {
  ByteWriter b;
  b.bytes("WTS1");
  b.u8(static_cast<std::uint8_t>(scheme));
  for (double v : initial) b.f64(v);
  for (double v : multiplier) b.f64(v);
  for (bool a : active) b.u8(a ? 1 : 0);
  b.f64(w_v);
  b.f64(w_w);
  b.f64(beta);
  b.f64(tau);
  b.f64(alpha);
  b.f64(reset_prob);
  b.u64(seed);
  for (double v : previous) b.f64(v);
  b.u8(has_previous ? 1 : 0);
  b.u64(updates);
  b.u64(skipped);
  std::ostringstream os;
  os << rng;
  b.str(os.str());
  return b.take();
}

LossWeights LossWeights::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "loss weight state");
  r.expect("WTS1");
  LossWeights w;
  const std::uint8_t s = r.u8();
  if (s > 2) throw DataError("loss weight state: unknown scheme tag");
  w.scheme = static_cast<Scheme>(s);
  for (double& v : w.initial) v = r.f64();
  for (double& v : w.multiplier) v = r.f64();
  for (std::size_t i = 0; i < kComponents; ++i) w.active[i] = r.u8() != 0;
  w.w_v = r.f64();
  w.w_w = r.f64();
  w.beta = r.f64();
  w.tau = r.f64();
  w.alpha = r.f64();
  w.reset_prob = r.f64();
  w.seed = r.u64();
  for (double& v : w.previous) v = r.f64();
  w.has_previous = r.u8() != 0;
  w.updates = r.u64();
  w.skipped = r.u64();
  std::istringstream is(r.str());
  is >> w.rng;
  if (!is) throw DataError("loss weight state: corrupt random generator state");
  return w;
}

bool LossWeights::operator==(const LossWeights& o) const { return serialize() == o.serialize(); }

}  // namespace pino::loss
