#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pino {

using Shape = std::vector<std::size_t>;
using cplx = std::complex<double>;

enum class DType : std::uint8_t { real, complex };

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles or complex doubles.
///
/// Real and complex tensors never convert implicitly; fft2 is the only
/// operation that promotes real input to complex and real_part the only way
/// back.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::real);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor from_complex(Shape shape, std::vector<cplx> values);
  static Tensor scalar(double value) { return from({}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return numel_of(shape_); }
  DType dtype() const { return dtype_; }
  bool is_complex() const { return dtype_ == DType::complex; }
  bool empty() const { return real_.empty() && cplx_.empty(); }

  /// Extent of dimension `dim`; negative values count from the back.
  std::size_t extent(int dim) const;

  std::span<const double> data() const;
  std::span<double> data();
  std::span<const cplx> cdata() const;
  std::span<cplx> cdata();

  /// Raw doubles of either dtype (complex as interleaved re/im pairs).
  std::span<const double> raw() const;
  std::span<double> raw();

  double item() const;
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  DType dtype_ = DType::real;
  std::vector<double> real_;
  std::vector<cplx> cplx_;
};

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char* tag = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
};

}  // namespace detail

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient after Tape::backward; zeros when the node was not reached.
  Tensor grad() const;
  Tape& tape() const { return *tape_; }
  bool valid() const { return node_ != nullptr; }

 private:
  friend class Tape;
  friend detail::Node* node_of(const Var& v);
  Var(std::shared_ptr<detail::Node> node, Tape* tape)
      : node_(std::move(node)), tape_(tape) {}

  std::shared_ptr<detail::Node> node_;
  Tape* tape_ = nullptr;
};

/// Reverse-mode tape. Nodes are stored in creation order, which is a
/// topological order; backward walks it in reverse once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var param(Tensor value) { return leaf(std::move(value), true); }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Accumulates d(loss)/d(node) into every node reachable from `loss`.
  /// Throws if `loss` is not a real scalar or if called twice without reset.
  void backward(const Var& loss);
  void reset();

  /// Number of retained nodes (those on a gradient path).
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  using BackwardFn = std::function<void(detail::Node&)>;
  Var record(Tensor value, std::vector<Var> parents, BackwardFn fn,
             const char* tag);

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  bool consumed_ = false;
};

detail::Node* node_of(const Var& v);

// Elementwise arithmetic. Binary operands must have equal rank; each extent
// must match or be 1 on one side (unit-extent broadcast only).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var clamp_min(const Var& a, double lo);

// Reductions and shape manipulation.
Var sum(const Var& a);
Var mean(const Var& a);
/// Sums `a` down to `shape`, the adjoint of unit-extent broadcasting.
Var sum_to(const Var& a, const Shape& shape);
Var reshape(const Var& a, Shape shape);
Var narrow(const Var& a, int dim, std::size_t start, std::size_t length);
Var concat(const std::vector<Var>& parts, int dim);

/// Pointwise linear map across channels:
/// out[b,o,h,w] = sum_i weight[o,i] * x[b,i,h,w] + bias[o].
Var channel_mix(const Var& x, const Var& weight, const Var& bias);

// Spectral operations over the two trailing dimensions.
/// Unnormalised forward DFT; promotes real input.
Var fft2(const Var& x);
/// Inverse DFT normalised by 1/(H*W).
Var ifft2(const Var& x);
Var real_part(const Var& z);
/// Keeps rows [0, modes) and [H-modes, H), columns [0, modes):
/// [..., H, W] -> [..., 2*modes, modes].
Var mode_truncate(const Var& xf, std::size_t modes);
/// Inverse layout of mode_truncate: zero-fills to [..., H, W] and mirrors the
/// retained columns 1..modes-1 into their conjugate-symmetric positions, so
/// real_part(ifft2(mode_fill(mode_truncate(fft2(x))))) is the ideal low-pass
/// of a real x.
Var mode_fill(const Var& block, std::size_t height, std::size_t width);
/// Per-mode complex channel mixing: xf [B,Cin,2m,m] complex, weights as real
/// and imaginary parts [Cin,Cout,2m,m] -> [B,Cout,2m,m] complex.
Var spectral_mix(const Var& xf, const Var& w_re, const Var& w_im);
/// Fused real-to-real spectral convolution equal to
/// real_part(ifft2(mode_fill(spectral_mix(mode_truncate(fft2(v)))))).
Var spectral_conv(const Var& v, const Var& w_re, const Var& w_im,
                  std::size_t modes);

/// Five-point Laplacian with mirror ghost nodes over the trailing two
/// dimensions, spacing h.
Var laplacian_neumann(const Var& x, double h);

}  // namespace pino
