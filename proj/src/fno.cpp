#include "pino/fno.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pino/io.hpp"

namespace pino::fno {

FnoConfig FnoConfig::for_frames(std::size_t frames, std::size_t modes, std::size_t width) {
  FnoConfig c;
  c.modes = modes;
  c.width = width;
  c.in_channels = 2 * frames + 2;
  c.out_channels = 2 * frames;
  return c;
}

void FnoConfig::validate() const {
  if (blocks < 1 || modes < 1 || width < 1 || out_channels < 1 || in_channels < 3)
    throw std::invalid_argument("invalid FNO configuration: " + describe(*this));
}

std::string describe(const FnoConfig& c) {
  std::ostringstream os;
  os << "modes=" << c.modes << " width=" << c.width << " blocks=" << c.blocks << " in=" << c.in_channels
     << " out=" << c.out_channels << " activation=" << (c.activation == Activation::gelu ? "gelu" : "relu")
     << " gating=" << (c.gating ? 1 : 0);
  return os.str();
}

Var grid_embed(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] < 2 || s[3] < 2)
    throw std::invalid_argument("grid_embed: needs [B,C,H,W] with H,W >= 2, got " + shape_str(s));
  const std::size_t B = s[0], H = s[2], W = s[3];
  Tensor coords = Tensor::zeros({B, 2, H, W});
  auto d = coords.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        d[((b * 2 + 0) * H + r) * W + c] = static_cast<double>(r) / static_cast<double>(H - 1);
        d[((b * 2 + 1) * H + r) * W + c] = static_cast<double>(c) / static_cast<double>(W - 1);
      }
  return concat({x, x.tape().constant(std::move(coords))}, 1);
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = bound * (2.0 * uniform01(rng) - 1.0);
  return t;
}

// Linear layer init: weights and bias uniform in +-1/sqrt(fan_in).
void linear(std::vector<Param>& ps, const std::string& name, std::size_t out, std::size_t in,
            std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  ps.push_back({name + ".w", uniform({out, in}, bound, rng)});
  ps.push_back({name + ".b", uniform({out}, bound, rng)});
}

constexpr double kGateInit = 3.0;

}  // namespace

Model::Model(const FnoConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t w = cfg_.width, m = cfg_.modes;
  linear(params_, "lift", w, cfg_.in_channels, rng);
  const double spec = 1.0 / static_cast<double>(w * w);
  for (std::size_t l = 0; l < cfg_.blocks; ++l) {
    const std::string b = "block" + std::to_string(l);
    params_.push_back({b + ".spec_re", uniform({w, w, 2 * m, m}, spec, rng)});
    params_.push_back({b + ".spec_im", uniform({w, w, 2 * m, m}, spec, rng)});
    linear(params_, b + ".skip", w, w, rng);
    linear(params_, b + ".mlp1", 2 * w, w, rng);
    linear(params_, b + ".mlp2", w, 2 * w, rng);
    if (cfg_.gating) params_.push_back({b + ".gate", Tensor::filled({1, w, 1, 1}, kGateInit)});
  }
  linear(params_, "proj1", 2 * w, w, rng);
  linear(params_, "proj2", cfg_.out_channels, 2 * w, rng);
}

Model::Model(const FnoConfig& cfg, std::vector<Param> params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  const Model reference(cfg_, 0);
  if (reference.params_.size() != params_.size())
    throw DataError("parameter set has " + std::to_string(params_.size()) + " tensors, configuration needs " +
                    std::to_string(reference.params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name != reference.params_[i].name ||
        params_[i].value.shape() != reference.params_[i].value.shape())
      throw DataError("parameter '" + params_[i].name + "' " + shape_str(params_[i].value.shape()) +
                      " does not match expected '" + reference.params_[i].name + "' " +
                      shape_str(reference.params_[i].value.shape()));
}

const Tensor& Model::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.value;
  throw std::out_of_range("no parameter named " + name);
}

Tensor& Model::param(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).param(name));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::uint32_t Model::checksum() const {
  std::uint32_t c = 0;
  for (const auto& p : params_) {
    const auto raw = p.value.data();
    c = crc32({reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size() * sizeof(double)}, c);
  }
  return c;
}

void Model::zero_projection() {
  for (auto& v : param("proj2.w").data()) v = 0.0;
  for (auto& v : param("proj2.b").data()) v = 0.0;
}

Var Model::forward(Tape& tape, const Var& input, std::vector<Var>* out_params) const {
  const Shape& s = input.shape();
  if (s.size() != 4 || s[1] != cfg_.data_channels())
    throw std::invalid_argument("FNO input has shape " + shape_str(s) + ", expected [B," +
                                std::to_string(cfg_.data_channels()) + ",H,W]");
  if (s[2] < 2 * cfg_.modes || s[3] < 2 * cfg_.modes)
    throw std::invalid_argument("grid " + std::to_string(s[2]) + "x" + std::to_string(s[3]) + " is below the " +
                                std::to_string(2 * cfg_.modes) + "x" + std::to_string(2 * cfg_.modes) +
                                " minimum for " + std::to_string(cfg_.modes) + " modes");
  std::vector<Var> p;
  p.reserve(params_.size());
  for (const auto& prm : params_) p.push_back(out_params ? tape.param(prm.value) : tape.constant(prm.value));
  std::size_t k = 0;
  auto next = [&]() -> const Var& { return p[k++]; };
  auto act = [&](const Var& x) { return cfg_.activation == Activation::gelu ? gelu(x) : relu(x); };

  const Var& lw = next();
  const Var& lb = next();
  Var v = channel_mix(grid_embed(input), lw, lb);
  for (std::size_t l = 0; l < cfg_.blocks; ++l) {
    const Var& sre = next();
    const Var& sim = next();
    const Var& ww = next();
    const Var& wb = next();
    const Var& m1w = next();
    const Var& m1b = next();
    const Var& m2w = next();
    const Var& m2b = next();
    Var z = act(add(spectral_conv(v, sre, sim, cfg_.modes), channel_mix(v, ww, wb)));
    z = channel_mix(act(channel_mix(z, m1w, m1b)), m2w, m2b);
    v = cfg_.gating ? add(z, mul(sigmoid(next()), v)) : add(z, v);
  }
  const Var& q1w = next();
  const Var& q1b = next();
  const Var& q2w = next();
  const Var& q2b = next();
  Var out = channel_mix(act(channel_mix(v, q1w, q1b)), q2w, q2b);
  if (out_params) *out_params = std::move(p);
  return out;
}

Tensor Model::predict(const Tensor& input) const {
  Tape tape;
  return forward(tape, tape.constant(input)).value();
}

// ---------------------------------------------------------------- checkpoint

namespace {
constexpr std::uint16_t kCkptVersion = 1;
}

const std::vector<std::uint8_t>* Checkpoint::extension(const std::string& tag) const {
  for (const auto& [name, bytes] : extensions)
    if (name == tag) return &bytes;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Extensions& ext) {
  const FnoConfig& c = model.config();
  ByteWriter w;
  w.bytes("FNO1");
  w.u16(kCkptVersion);
  w.u32(static_cast<std::uint32_t>(c.modes));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.blocks));
  w.u32(static_cast<std::uint32_t>(c.in_channels));
  w.u32(static_cast<std::uint32_t>(c.out_channels));
  w.u8(static_cast<std::uint8_t>(c.activation));
  w.u8(c.gating ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : p.value.data()) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(ext.size()));
  for (const auto& [tag, bytes] : ext) {
    w.str(tag);
    w.u64(bytes.size());
    w.bytes({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  }
  seal(w);
  write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const FnoConfig* expect) {
  const auto bytes = read_file(path);
  ByteReader r(unseal(bytes, path.string()), path.string());
  r.expect("FNO1");
  if (const auto v = r.u16(); v != kCkptVersion)
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  FnoConfig c;
  c.modes = r.u32();
  c.width = r.u32();
  c.blocks = r.u32();
  c.in_channels = r.u32();
  c.out_channels = r.u32();
  const std::uint8_t act = r.u8();
  if (act > 1) throw DataError(path.string() + ": unknown activation tag");
  c.activation = static_cast<Activation>(act);
  c.gating = r.u8() != 0;
  if (expect && !(*expect == c))
    throw DataError(path.string() + ": checkpoint configuration (" + describe(c) +
                    ") does not match the requested one (" + describe(*expect) + ")");
  std::vector<Param> params(r.u32());
  for (auto& p : params) {
    p.name = r.str();
    Shape shape(r.u32());
    for (auto& e : shape) e = r.u32();
    std::vector<double> values(numel_of(shape));
    for (auto& v : values) v = r.f64();
    p.value = Tensor::from(std::move(shape), std::move(values));
  }
  Extensions ext(r.u32());
  for (auto& [tag, data] : ext) {
    tag = r.str();
    const std::string blob = r.bytes(r.u64());
    data.assign(blob.begin(), blob.end());
  }
  if (r.remaining() != 0) throw DataError(path.string() + ": trailing bytes after checkpoint payload");
  return {Model(c, std::move(params)), std::move(ext)};
}

}  // namespace pino::fno
