#include "pino/tensor.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "pino/kernels.hpp"

namespace pino {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, DType dtype) {
  Tensor t;
  t.dtype_ = dtype;
  const std::size_t n = numel_of(shape);
  t.shape_ = std::move(shape);
  if (dtype == DType::real)
    t.real_.assign(n, 0.0);
  else
    t.cplx_.assign(n, cplx(0.0, 0.0));
  return t;
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.real_.begin(), t.real_.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (numel_of(shape) != values.size())
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.real_ = std::move(values);
  return t;
}

Tensor Tensor::from_complex(Shape shape, std::vector<cplx> values) {
  if (numel_of(shape) != values.size())
    throw std::invalid_argument("Tensor::from_complex: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = DType::complex;
  t.cplx_ = std::move(values);
  return t;
}

std::size_t Tensor::extent(int dim) const {
  const int r = static_cast<int>(shape_.size());
  const int d = dim < 0 ? r + dim : dim;
  if (d < 0 || d >= r)
    throw std::out_of_range("dimension " + std::to_string(dim) + " of " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(d)];
}

std::span<const double> Tensor::data() const {
  if (is_complex()) throw std::logic_error("real view of a complex tensor");
  return real_;
}
std::span<double> Tensor::data() {
  if (is_complex()) throw std::logic_error("real view of a complex tensor");
  return real_;
}
std::span<const cplx> Tensor::cdata() const {
  if (!is_complex()) throw std::logic_error("complex view of a real tensor");
  return cplx_;
}
std::span<cplx> Tensor::cdata() {
  if (!is_complex()) throw std::logic_error("complex view of a real tensor");
  return cplx_;
}

std::span<const double> Tensor::raw() const {
  if (is_complex())
    return {reinterpret_cast<const double*>(cplx_.data()), 2 * cplx_.size()};
  return real_;
}
std::span<double> Tensor::raw() {
  if (is_complex()) return {reinterpret_cast<double*>(cplx_.data()), 2 * cplx_.size()};
  return real_;
}

double Tensor::item() const {
  if (numel() != 1 || is_complex())
    throw std::logic_error("item() on non-scalar tensor " + shape_str(shape_));
  return real_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel_of(shape) != numel())
    throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

// ---------------------------------------------------------------- Tape

void detail::Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  auto dst = grad.raw();
  auto src = g.raw();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor::zeros(node_->value.shape(), node_->value.dtype());
  return node_->grad;
}

detail::Node* node_of(const Var& v) { return v.node_.get(); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  if (requires_grad) nodes_.push_back(n);
  return Var(n, this);
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn fn, const char* tag) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->tag = tag;
  for (const auto& p : parents) {
    if (p.tape_ != this) throw std::logic_error(std::string(tag) + ": operands on different tapes");
    n->requires_grad = n->requires_grad || p.requires_grad();
  }
  // Nodes outside the gradient path are not retained, so gradient-free
  // evaluation frees intermediates as soon as their Vars go out of scope.
  if (n->requires_grad) {
    for (auto& p : parents) n->parents.push_back(p.node_);
    n->backward = std::move(fn);
    nodes_.push_back(n);
  }
  return Var(n, this);
}

void Tape::backward(const Var& loss) {
  if (consumed_) throw std::logic_error("backward called twice without Tape::reset");
  if (loss.tape_ != this) throw std::logic_error("backward: loss recorded on another tape");
  const Tensor& v = loss.value();
  if (v.is_complex() || v.numel() != 1)
    throw std::invalid_argument("backward needs a real scalar loss, got " + shape_str(v.shape()));
  consumed_ = true;
  loss.node_->accumulate(Tensor::filled(v.shape(), 1.0));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

// ---------------------------------------------------------------- helpers

namespace {

using detail::Node;

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::logic_error("operation on an empty Var");
  return a.tape();
}

void require_real(const Var& a, const char* op) {
  if (a.value().is_complex()) throw std::invalid_argument(std::string(op) + ": complex operand");
}

void require_complex(const Var& a, const char* op) {
  if (!a.value().is_complex()) throw std::invalid_argument(std::string(op) + ": real operand");
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  auto fail = [&] {
    return std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " do not broadcast");
  };
  if (a.size() != b.size()) throw fail();
  Shape out(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (a[d] == b[d] || b[d] == 1)
      out[d] = a[d];
    else if (a[d] == 1)
      out[d] = b[d];
    else
      throw fail();
  }
  return out;
}

std::vector<std::size_t> broadcast_strides(const Shape& operand, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t d = out.size(); d-- > 0;) {
    st[d] = (operand[d] == 1 && out[d] != 1) ? 0 : s;
    s *= operand[d];
  }
  return st;
}

// Calls f(out_index, a_index, b_index) for every element of `out` in
// row-major order.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const std::size_t r = out.size();
  const std::size_t n = numel_of(out);
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  if (sa == out && sb == out) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const auto st_a = broadcast_strides(sa, out);
  const auto st_b = broadcast_strides(sb, out);
  const std::size_t inner = out[r - 1];
  const std::size_t ia_in = st_a[r - 1], ib_in = st_b[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t o = 0;
  while (o < n) {
    std::size_t ba = 0, bb = 0;
    for (std::size_t d = 0; d + 1 < r; ++d) {
      ba += idx[d] * st_a[d];
      bb += idx[d] * st_b[d];
    }
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ba + j * ia_in, bb + j * ib_in);
    o += inner;
    for (std::size_t d = r - 1; d-- > 0;) {
      if (++idx[d] < out[d]) break;
      idx[d] = 0;
    }
  }
}

Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out = Tensor::zeros(target);
  auto dst = out.data();
  auto src = g.data();
  for_each_broadcast(g.shape(), target, target,
                     [&](std::size_t o, std::size_t ia, std::size_t) { dst[ia] += src[o]; });
  return out;
}

template <class Fwd, class Deriv>
Var unary(const Var& a, const char* tag, Fwd fwd, Deriv deriv) {
  require_real(a, tag);
  const auto x = a.value().data();
  Tensor y = Tensor::zeros(a.shape());
  auto yd = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) yd[i] = fwd(x[i]);
  return tape_of(a).record(
      std::move(y), {a},
      [deriv](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        const auto xv = pa.value.data();
        const auto yv = self.value.data();
        const auto g = self.grad.data();
        Tensor ga = Tensor::zeros(pa.value.shape());
        auto gd = ga.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = g[i] * deriv(xv[i], yv[i]);
        pa.accumulate(ga);
      },
      tag);
}

std::size_t norm_dim(const Shape& s, int dim, const char* op) {
  const int r = static_cast<int>(s.size());
  const int d = dim < 0 ? r + dim : dim;
  if (d < 0 || d >= r)
    throw std::out_of_range(std::string(op) + ": dimension " + std::to_string(dim) + " of " +
                            shape_str(s));
  return static_cast<std::size_t>(d);
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require_real(a, "add");
  require_real(b, "add");
  const Shape out = broadcast_shape(a.shape(), b.shape(), "add");
  Tensor y = Tensor::zeros(out);
  auto yd = y.data();
  const auto ad = a.value().data(), bd = b.value().data();
  for_each_broadcast(out, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { yd[o] = ad[ia] + bd[ib]; });
  return tape_of(a).record(
      std::move(y), {a, b},
      [](Node& self) {
        for (auto& p : self.parents)
          if (p->requires_grad) p->accumulate(reduce_to(self.grad, p->value.shape()));
      },
      "add");
}

Var sub(const Var& a, const Var& b) {
  require_real(a, "sub");
  require_real(b, "sub");
  const Shape out = broadcast_shape(a.shape(), b.shape(), "sub");
  Tensor y = Tensor::zeros(out);
  auto yd = y.data();
  const auto ad = a.value().data(), bd = b.value().data();
  for_each_broadcast(out, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { yd[o] = ad[ia] - bd[ib]; });
  return tape_of(a).record(
      std::move(y), {a, b},
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) pa.accumulate(reduce_to(self.grad, pa.value.shape()));
        if (pb.requires_grad) {
          Tensor gb = reduce_to(self.grad, pb.value.shape());
          for (auto& v : gb.data()) v = -v;
          pb.accumulate(gb);
        }
      },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  require_real(a, "mul");
  require_real(b, "mul");
  const Shape out = broadcast_shape(a.shape(), b.shape(), "mul");
  Tensor y = Tensor::zeros(out);
  auto yd = y.data();
  const auto ad = a.value().data(), bd = b.value().data();
  for_each_broadcast(out, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { yd[o] = ad[ia] * bd[ib]; });
  return tape_of(a).record(
      std::move(y), {a, b},
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto g = self.grad.data();
        const auto av = pa.value.data(), bv = pb.value.data();
        const Shape& out_shape = self.value.shape();
        if (pa.requires_grad) {
          Tensor ga = Tensor::zeros(pa.value.shape());
          auto gd = ga.data();
          for_each_broadcast(out_shape, pa.value.shape(), pb.value.shape(),
                             [&](std::size_t o, std::size_t ia, std::size_t ib) { gd[ia] += g[o] * bv[ib]; });
          pa.accumulate(ga);
        }
        if (pb.requires_grad) {
          Tensor gb = Tensor::zeros(pb.value.shape());
          auto gd = gb.data();
          for_each_broadcast(out_shape, pa.value.shape(), pb.value.shape(),
                             [&](std::size_t o, std::size_t ia, std::size_t ib) { gd[ib] += g[o] * av[ia]; });
          pb.accumulate(gb);
        }
      },
      "mul");
}

Var div(const Var& a, const Var& b) {
  require_real(a, "div");
  require_real(b, "div");
  const Shape out = broadcast_shape(a.shape(), b.shape(), "div");
  Tensor y = Tensor::zeros(out);
  auto yd = y.data();
  const auto ad = a.value().data(), bd = b.value().data();
  for_each_broadcast(out, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { yd[o] = ad[ia] / bd[ib]; });
  return tape_of(a).record(
      std::move(y), {a, b},
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto g = self.grad.data();
        const auto av = pa.value.data(), bv = pb.value.data();
        const Shape& out_shape = self.value.shape();
        if (pa.requires_grad) {
          Tensor ga = Tensor::zeros(pa.value.shape());
          auto gd = ga.data();
          for_each_broadcast(out_shape, pa.value.shape(), pb.value.shape(),
                             [&](std::size_t o, std::size_t ia, std::size_t ib) { gd[ia] += g[o] / bv[ib]; });
          pa.accumulate(ga);
        }
        if (pb.requires_grad) {
          Tensor gb = Tensor::zeros(pb.value.shape());
          auto gd = gb.data();
          for_each_broadcast(out_shape, pa.value.shape(), pb.value.shape(),
                             [&](std::size_t o, std::size_t ia, std::size_t ib) {
                               gd[ib] -= g[o] * av[ia] / (bv[ib] * bv[ib]);
                             });
          pb.accumulate(gb);
        }
      },
      "div");
}

Var neg(const Var& a) {
  return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var exp(const Var& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var relu(const Var& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return unary(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double y) {
        // Phi(x) = y / x away from zero saves a second erf
        const double cdf = std::abs(x) > 1e-3 ? y / x : 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Var sigmoid(const Var& a) {
  return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var clamp_min(const Var& a, double lo) {
  return unary(a, "clamp_min", [lo](double x) { return x > lo ? x : lo; },
               [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions / shape

Var sum(const Var& a) {
  require_real(a, "sum");
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return tape_of(a).record(
      Tensor::scalar(acc), {a},
      [](Node& self) {
        Node& pa = *self.parents[0];
        if (pa.requires_grad) pa.accumulate(Tensor::filled(pa.value.shape(), self.grad.data()[0]));
      },
      "sum");
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().numel());
  return scale(sum(a), 1.0 / n);
}

Var sum_to(const Var& a, const Shape& shape) {
  require_real(a, "sum_to");
  broadcast_shape(a.shape(), shape, "sum_to");
  Tensor y = reduce_to(a.value(), shape);
  return tape_of(a).record(
      std::move(y), {a},
      [](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        Tensor ga = Tensor::zeros(pa.value.shape());
        auto gd = ga.data();
        const auto g = self.grad.data();
        for_each_broadcast(pa.value.shape(), pa.value.shape(), self.value.shape(),
                           [&](std::size_t o, std::size_t, std::size_t ib) { gd[o] = g[ib]; });
        pa.accumulate(ga);
      },
      "sum_to");
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return tape_of(a).record(
      std::move(y), {a},
      [](Node& self) {
        Node& pa = *self.parents[0];
        if (pa.requires_grad) pa.accumulate(self.grad.reshaped(pa.value.shape()));
      },
      "reshape");
}

namespace {

struct SliceGeom {
  std::size_t outer, dim_extent, inner;  // inner counted in raw doubles
};

SliceGeom slice_geom(const Tensor& t, std::size_t d) {
  const auto& s = t.shape();
  SliceGeom g{1, s[d], t.is_complex() ? 2u : 1u};
  for (std::size_t i = 0; i < d; ++i) g.outer *= s[i];
  for (std::size_t i = d + 1; i < s.size(); ++i) g.inner *= s[i];
  return g;
}

}  // namespace

Var narrow(const Var& a, int dim, std::size_t start, std::size_t length) {
  const std::size_t d = norm_dim(a.shape(), dim, "narrow");
  if (start + length > a.shape()[d] || length == 0)
    throw std::out_of_range("narrow: [" + std::to_string(start) + ", " +
                            std::to_string(start + length) + ") outside extent " +
                            std::to_string(a.shape()[d]));
  Shape out_shape = a.shape();
  out_shape[d] = length;
  Tensor y = Tensor::zeros(out_shape, a.value().dtype());
  const SliceGeom g = slice_geom(a.value(), d);
  const auto src = a.value().raw();
  auto dst = y.raw();
  for (std::size_t o = 0; o < g.outer; ++o)
    std::copy_n(src.begin() + static_cast<long>((o * g.dim_extent + start) * g.inner),
                length * g.inner, dst.begin() + static_cast<long>(o * length * g.inner));
  return tape_of(a).record(
      std::move(y), {a},
      [d, start, length](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        Tensor ga = Tensor::zeros(pa.value.shape(), pa.value.dtype());
        const SliceGeom gg = slice_geom(pa.value, d);
        const auto gs = self.grad.raw();
        auto gd = ga.raw();
        for (std::size_t o = 0; o < gg.outer; ++o)
          std::copy_n(gs.begin() + static_cast<long>(o * length * gg.inner), length * gg.inner,
                      gd.begin() + static_cast<long>((o * gg.dim_extent + start) * gg.inner));
        pa.accumulate(ga);
      },
      "narrow");
}

Var concat(const std::vector<Var>& parts, int dim) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const std::size_t d = norm_dim(parts[0].shape(), dim, "concat");
  Shape out_shape = parts[0].shape();
  out_shape[d] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size() || p.value().dtype() != parts[0].value().dtype())
      throw std::invalid_argument("concat: incompatible part " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != d && s[i] != parts[0].shape()[i])
        throw std::invalid_argument("concat: shapes " + shape_str(parts[0].shape()) + " and " +
                                    shape_str(s) + " differ off the concat axis");
    out_shape[d] += s[d];
  }
  Tensor y = Tensor::zeros(out_shape, parts[0].value().dtype());
  const SliceGeom gy = slice_geom(y, d);
  auto dst = y.raw();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const SliceGeom gp = slice_geom(p.value(), d);
    const auto src = p.value().raw();
    for (std::size_t o = 0; o < gp.outer; ++o)
      std::copy_n(src.begin() + static_cast<long>(o * gp.dim_extent * gp.inner),
                  gp.dim_extent * gp.inner,
                  dst.begin() + static_cast<long>((o * gy.dim_extent + offset) * gy.inner));
    offset += gp.dim_extent;
  }
  return tape_of(parts[0]).record(
      std::move(y), parts,
      [d](Node& self) {
        const SliceGeom gy2 = slice_geom(self.value, d);
        const auto gs = self.grad.raw();
        std::size_t off = 0;
        for (auto& pp : self.parents) {
          const SliceGeom gp = slice_geom(pp->value, d);
          if (pp->requires_grad) {
            Tensor gpart = Tensor::zeros(pp->value.shape(), pp->value.dtype());
            auto gd = gpart.raw();
            for (std::size_t o = 0; o < gp.outer; ++o)
              std::copy_n(gs.begin() + static_cast<long>((o * gy2.dim_extent + off) * gy2.inner),
                          gp.dim_extent * gp.inner,
                          gd.begin() + static_cast<long>(o * gp.dim_extent * gp.inner));
            pp->accumulate(gpart);
          }
          off += gp.dim_extent;
        }
      },
      "concat");
}

// ---------------------------------------------------------------- channel mix

Var channel_mix(const Var& x, const Var& weight, const Var& bias) {
  require_real(x, "channel_mix");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Shape& bs = bias.shape();
  if (xs.size() != 4 || ws.size() != 2 || bs.size() != 1 || ws[1] != xs[1] || bs[0] != ws[0])
    throw std::invalid_argument("channel_mix: x " + shape_str(xs) + ", weight " + shape_str(ws) +
                                ", bias " + shape_str(bs) + " are incompatible");
  const kernels::MixDims d{xs[0], xs[1], ws[0], xs[2] * xs[3]};
  Tensor y = Tensor::zeros({xs[0], ws[0], xs[2], xs[3]});
  kernels::channel_mix_forward(x.value().data(), weight.value().data(), bias.value().data(), d,
                               y.data());
  return tape_of(x).record(
      std::move(y), {x, weight, bias},
      [d](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        Tensor gx, gw, gb;
        if (px.requires_grad) gx = Tensor::zeros(px.value.shape());
        if (pw.requires_grad) gw = Tensor::zeros(pw.value.shape());
        if (pb.requires_grad) gb = Tensor::zeros(pb.value.shape());
        kernels::channel_mix_backward(
            px.value.data(), pw.value.data(), self.grad.data(), d,
            px.requires_grad ? gx.data() : std::span<double>{},
            pw.requires_grad ? gw.data() : std::span<double>{},
            pb.requires_grad ? gb.data() : std::span<double>{});
        if (px.requires_grad) px.accumulate(gx);
        if (pw.requires_grad) pw.accumulate(gw);
        if (pb.requires_grad) pb.accumulate(gb);
      },
      "channel_mix");
}

// ---------------------------------------------------------------- spectral

namespace {

// Unnormalised 2D DFT over the trailing two dims; sign -1 forward, +1 backward.
Tensor dft2(const Tensor& in, int sign) {
  const std::size_t H = in.extent(-2), W = in.extent(-1);
  Tensor src = in.is_complex() ? in : Tensor::zeros(in.shape(), DType::complex);
  if (!in.is_complex()) {
    auto s = src.cdata();
    auto r = in.data();
    for (std::size_t i = 0; i < r.size(); ++i) s[i] = cplx(r[i], 0.0);
  }
  Tensor out = Tensor::zeros(in.shape(), DType::complex);
  const std::size_t plane = H * W;
  const int howmany = static_cast<int>(in.numel() / plane);
  const int n[2] = {static_cast<int>(H), static_cast<int>(W)};
  auto* ip = reinterpret_cast<fftw_complex*>(src.cdata().data());
  auto* op = reinterpret_cast<fftw_complex*>(out.cdata().data());
  fftw_plan plan = fftw_plan_many_dft(2, n, howmany, ip, nullptr, 1, static_cast<int>(plane), op,
                                      nullptr, 1, static_cast<int>(plane),
                                      sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
  if (plan == nullptr) throw std::runtime_error("fftw planning failed");
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  return out;
}

void scale_in_place(Tensor& t, double s) {
  for (auto& v : t.raw()) v *= s;
}

Tensor real_of(const Tensor& z) {
  Tensor r = Tensor::zeros(z.shape());
  auto d = r.data();
  auto c = z.cdata();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = c[i].real();
  return r;
}

void check_spatial(const Shape& s, const char* op) {
  if (s.size() < 2 || s[s.size() - 1] < 1 || s[s.size() - 2] < 1)
    throw std::invalid_argument(std::string(op) + ": needs [..., H, W], got " + shape_str(s));
}

void check_modes(std::size_t H, std::size_t W, std::size_t modes, const char* op) {
  // Mirrored columns W-l (l < modes) must not overlap the retained ones.
  if (modes == 0 || 2 * modes > H || 2 * modes - 1 > W)
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(modes) +
                                " modes need H >= " + std::to_string(2 * modes) + " and W >= " +
                                std::to_string(2 * modes - 1) + ", grid is " + std::to_string(H) +
                                "x" + std::to_string(W));
}

std::size_t row_freq(std::size_t r, std::size_t modes, std::size_t H) {
  return r < modes ? r : H - 2 * modes + r;
}

}  // namespace

Var fft2(const Var& x) {
  check_spatial(x.shape(), "fft2");
  const bool was_real = !x.value().is_complex();
  return tape_of(x).record(
      dft2(x.value(), -1), {x},
      [was_real](Node& self) {
        Node& px = *self.parents[0];
        if (!px.requires_grad) return;
        Tensor g = dft2(self.grad, +1);
        px.accumulate(was_real ? real_of(g) : g);
      },
      "fft2");
}

Var ifft2(const Var& x) {
  check_spatial(x.shape(), "ifft2");
  require_complex(x, "ifft2");
  const double norm = 1.0 / static_cast<double>(x.value().extent(-2) * x.value().extent(-1));
  Tensor y = dft2(x.value(), +1);
  scale_in_place(y, norm);
  return tape_of(x).record(
      std::move(y), {x},
      [norm](Node& self) {
        Node& px = *self.parents[0];
        if (!px.requires_grad) return;
        Tensor g = dft2(self.grad, -1);
        scale_in_place(g, norm);
        px.accumulate(g);
      },
      "ifft2");
}

Var real_part(const Var& z) {
  require_complex(z, "real_part");
  return tape_of(z).record(
      real_of(z.value()), {z},
      [](Node& self) {
        Node& pz = *self.parents[0];
        if (!pz.requires_grad) return;
        Tensor g = Tensor::zeros(pz.value.shape(), DType::complex);
        auto gd = g.cdata();
        auto src = self.grad.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = cplx(src[i], 0.0);
        pz.accumulate(g);
      },
      "real_part");
}

Var mode_truncate(const Var& xf, std::size_t modes) {
  require_complex(xf, "mode_truncate");
  check_spatial(xf.shape(), "mode_truncate");
  const std::size_t H = xf.value().extent(-2), W = xf.value().extent(-1), M = modes;
  check_modes(H, W, M, "mode_truncate");
  Shape out_shape = xf.shape();
  out_shape[out_shape.size() - 2] = 2 * M;
  out_shape[out_shape.size() - 1] = M;
  Tensor y = Tensor::zeros(out_shape, DType::complex);
  const std::size_t planes = xf.value().numel() / (H * W);
  const auto src = xf.value().cdata();
  auto dst = y.cdata();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < 2 * M; ++r)
      for (std::size_t l = 0; l < M; ++l)
        dst[(p * 2 * M + r) * M + l] = src[(p * H + row_freq(r, M, H)) * W + l];
  return tape_of(xf).record(
      std::move(y), {xf},
      [H, W, M, planes](Node& self) {
        Node& px = *self.parents[0];
        if (!px.requires_grad) return;
        Tensor g = Tensor::zeros(px.value.shape(), DType::complex);
        auto gd = g.cdata();
        auto gs = self.grad.cdata();
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t r = 0; r < 2 * M; ++r)
            for (std::size_t l = 0; l < M; ++l)
              gd[(p * H + row_freq(r, M, H)) * W + l] = gs[(p * 2 * M + r) * M + l];
        px.accumulate(g);
      },
      "mode_truncate");
}

Var mode_fill(const Var& block, std::size_t height, std::size_t width) {
  require_complex(block, "mode_fill");
  check_spatial(block.shape(), "mode_fill");
  const std::size_t M = block.value().extent(-1), H = height, W = width;
  if (block.value().extent(-2) != 2 * M)
    throw std::invalid_argument("mode_fill: block " + shape_str(block.shape()) +
                                " is not [..., 2m, m]");
  check_modes(H, W, M, "mode_fill");
  Shape out_shape = block.shape();
  out_shape[out_shape.size() - 2] = H;
  out_shape[out_shape.size() - 1] = W;
  Tensor y = Tensor::zeros(out_shape, DType::complex);
  const std::size_t planes = block.value().numel() / (2 * M * M);
  const auto src = block.value().cdata();
  auto dst = y.cdata();
  auto mirrored = [W](std::size_t l) { return l >= 1 && 2 * l != W; };
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < 2 * M; ++r) {
      const std::size_t k = row_freq(r, M, H);
      for (std::size_t l = 0; l < M; ++l) {
        const cplx v = src[(p * 2 * M + r) * M + l];
        dst[(p * H + k) * W + l] = v;
        if (mirrored(l)) dst[(p * H + (H - k) % H) * W + (W - l)] = std::conj(v);
      }
    }
  return tape_of(block).record(
      std::move(y), {block},
      [H, W, M, planes, mirrored](Node& self) {
        Node& pb = *self.parents[0];
        if (!pb.requires_grad) return;
        Tensor g = Tensor::zeros(pb.value.shape(), DType::complex);
        auto gd = g.cdata();
        auto gs = self.grad.cdata();
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t r = 0; r < 2 * M; ++r) {
            const std::size_t k = row_freq(r, M, H);
            for (std::size_t l = 0; l < M; ++l) {
              cplx acc = gs[(p * H + k) * W + l];
              if (mirrored(l)) acc += std::conj(gs[(p * H + (H - k) % H) * W + (W - l)]);
              gd[(p * 2 * M + r) * M + l] = acc;
            }
          }
        pb.accumulate(g);
      },
      "mode_fill");
}

namespace {

void check_spectral_weights(const Shape& ws, const Shape& wi, std::size_t in, std::size_t modes,
                            const char* op) {
  if (ws != wi || ws.size() != 4 || ws[0] != in || ws[2] != 2 * modes || ws[3] != modes)
    throw std::invalid_argument(std::string(op) + ": weights " + shape_str(ws) + "/" +
                                shape_str(wi) + " do not match " + std::to_string(in) +
                                " input channels and " + std::to_string(modes) + " modes");
}

std::shared_ptr<const kernels::SpectralPlan> plan_for(std::size_t H, std::size_t W,
                                                      std::size_t M) {
  thread_local std::map<std::tuple<std::size_t, std::size_t, std::size_t>,
                        std::shared_ptr<const kernels::SpectralPlan>>
      cache;
  auto key = std::make_tuple(H, W, M);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto plan = std::make_shared<const kernels::SpectralPlan>(H, W, M);
  cache.emplace(key, plan);
  return plan;
}

}  // namespace

Var spectral_mix(const Var& xf, const Var& w_re, const Var& w_im) {
  require_complex(xf, "spectral_mix");
  const Shape& xs = xf.shape();
  if (xs.size() != 4 || xs[2] != 2 * xs[3])
    throw std::invalid_argument("spectral_mix: input " + shape_str(xs) + " is not [B,C,2m,m]");
  check_spectral_weights(w_re.shape(), w_im.shape(), xs[1], xs[3], "spectral_mix");
  const std::size_t B = xs[0], I = xs[1], O = w_re.shape()[1], K = xs[2] * xs[3];
  Tensor y = Tensor::zeros({B, O, xs[2], xs[3]}, DType::complex);
  kernels::spectral_mix_forward(xf.value().cdata(), w_re.value().data(), w_im.value().data(), B, I,
                                O, K, y.cdata());
  return tape_of(xf).record(
      std::move(y), {xf, w_re, w_im},
      [B, I, O, K](Node& self) {
        Node& px = *self.parents[0];
        Node& pr = *self.parents[1];
        Node& pi = *self.parents[2];
        Tensor gx, gr, gi;
        if (px.requires_grad) gx = Tensor::zeros(px.value.shape(), DType::complex);
        if (pr.requires_grad) gr = Tensor::zeros(pr.value.shape());
        if (pi.requires_grad) gi = Tensor::zeros(pi.value.shape());
        kernels::spectral_mix_backward(px.value.cdata(), pr.value.data(), pi.value.data(),
                                       self.grad.cdata(), B, I, O, K,
                                       px.requires_grad ? gx.cdata() : std::span<cplx>{},
                                       pr.requires_grad ? gr.data() : std::span<double>{},
                                       pi.requires_grad ? gi.data() : std::span<double>{});
        if (px.requires_grad) px.accumulate(gx);
        if (pr.requires_grad) pr.accumulate(gr);
        if (pi.requires_grad) pi.accumulate(gi);
      },
      "spectral_mix");
}

Var spectral_conv(const Var& v, const Var& w_re, const Var& w_im, std::size_t modes) {
  require_real(v, "spectral_conv");
  const Shape& vs = v.shape();
  if (vs.size() != 4) throw std::invalid_argument("spectral_conv: input " + shape_str(vs) + " is not [B,C,H,W]");
  const std::size_t B = vs[0], I = vs[1], H = vs[2], W = vs[3], M = modes;
  if (M == 0 || H < 2 * M || W < 2 * M)
    throw std::invalid_argument("spectral_conv: " + std::to_string(M) + " modes need a grid of at least " +
                                std::to_string(2 * M) + "x" + std::to_string(2 * M) + ", got " +
                                std::to_string(H) + "x" + std::to_string(W));
  check_spectral_weights(w_re.shape(), w_im.shape(), I, M, "spectral_conv");
  const std::size_t O = w_re.shape()[1], K = 2 * M * M;
  auto plan = plan_for(H, W, M);
  auto xhat = std::make_shared<std::vector<cplx>>(B * I * K);
  plan->forward(v.value().data(), B * I, *xhat);
  std::vector<cplx> yhat(B * O * K);
  kernels::spectral_mix_forward(*xhat, w_re.value().data(), w_im.value().data(), B, I, O, K, yhat);
  Tensor y = Tensor::zeros({B, O, H, W});
  plan->inverse(yhat, B * O, y.data());
  return tape_of(v).record(
      std::move(y), {v, w_re, w_im},
      [plan, xhat, B, I, O, K](Node& self) {
        Node& pv = *self.parents[0];
        Node& pr = *self.parents[1];
        Node& pi = *self.parents[2];
        std::vector<cplx> gy(B * O * K);
        plan->inverse_adjoint(self.grad.data(), B * O, gy);
        std::vector<cplx> gx;
        if (pv.requires_grad) gx.resize(B * I * K);
        Tensor gr, gi;
        if (pr.requires_grad) gr = Tensor::zeros(pr.value.shape());
        if (pi.requires_grad) gi = Tensor::zeros(pi.value.shape());
        kernels::spectral_mix_backward(*xhat, pr.value.data(), pi.value.data(), gy, B, I, O, K, gx,
                                       pr.requires_grad ? gr.data() : std::span<double>{},
                                       pi.requires_grad ? gi.data() : std::span<double>{});
        if (pv.requires_grad) {
          Tensor gv = Tensor::zeros(pv.value.shape());
          plan->forward_adjoint(gx, B * I, gv.data());
          pv.accumulate(gv);
        }
        if (pr.requires_grad) pr.accumulate(gr);
        if (pi.requires_grad) pi.accumulate(gi);
      },
      "spectral_conv");
}

Var laplacian_neumann(const Var& x, double h) {
  require_real(x, "laplacian_neumann");
  if (!(h > 0.0)) throw std::invalid_argument("laplacian_neumann: spacing must be positive");
  const std::size_t H = x.value().extent(-2), W = x.value().extent(-1);
  if (H < 3 || W < 3)
    throw std::invalid_argument("laplacian_neumann: field must be at least 3x3, got " +
                                std::to_string(H) + "x" + std::to_string(W));
  const std::size_t planes = x.value().numel() / (H * W);
  Tensor y = Tensor::zeros(x.shape());
  kernels::laplacian_neumann(x.value().data(), planes, H, W, h, y.data());
  return tape_of(x).record(
      std::move(y), {x},
      [planes, H, W, h](Node& self) {
        Node& px = *self.parents[0];
        if (!px.requires_grad) return;
        Tensor g = Tensor::zeros(px.value.shape());
        kernels::laplacian_neumann_adjoint(self.grad.data(), planes, H, W, h, g.data());
        px.accumulate(g);
      },
      "laplacian_neumann");
}

}  // namespace pino
