#include "pino/dataset.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <sstream>

#include "pino/io.hpp"

namespace pino::data {

void DatasetConfig::validate() const {
  if (n < 1) throw std::invalid_argument("dataset: n must be >= 1");
  if (m == 1) throw std::invalid_argument("dataset: multi-frame m must be >= 2 (or 0 for single-frame)");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("dataset: fraction must be in (0, 1]");
  if (downsample < 1) throw std::invalid_argument("dataset: downsample factor must be >= 1");
}

std::vector<SamplePair> build_single(std::size_t frames, std::size_t n) {
  if (n < 1 || frames < n + 1)
    throw std::invalid_argument("build_single: " + std::to_string(frames) +
                                " frames are too few for n = " + std::to_string(n));
  std::vector<SamplePair> out;
  for (std::size_t i = 0; i + n < frames; ++i) out.push_back({{i}, {i + n}});
  return out;
}

std::vector<SamplePair> build_multi(std::size_t frames, std::size_t n, std::size_t m) {
  if (n < 1 || m < 2 || frames < 2 * m + n + 1)
    throw std::invalid_argument("build_multi: " + std::to_string(frames) + " frames are too few for n = " +
                                std::to_string(n) + ", m = " + std::to_string(m));
  std::vector<SamplePair> out;
  for (std::size_t i = 0; i + 2 * m + n < frames; ++i) {
    SamplePair p;
    for (std::size_t j = 0; j <= m; ++j) {
      p.input.push_back(i + j);
      p.target.push_back(i + m + n + j);
    }
    out.push_back(std::move(p));
  }
  return out;
}

Split split(const std::vector<SamplePair>& pairs, std::size_t frames, double fraction, std::size_t buffer) {
  Split s;
  s.cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(frames) + 1e-9));
  for (const auto& p : pairs) {
    if (p.latest() < s.cut)
      s.train.push_back(p);
    else if (p.earliest() >= s.cut + buffer)
      s.test.push_back(p);
  }
  if (s.train.empty() || s.test.empty())
    throw std::invalid_argument("split leaves " + std::to_string(s.train.size()) + " training and " +
                                std::to_string(s.test.size()) + " test pairs (cut " +
                                std::to_string(s.cut) + ", buffer " + std::to_string(buffer) + ")");
  return s;
}

ap::Trajectory downsample(const ap::Trajectory& t, std::size_t factor) {
  if (factor < 1 || (t.H - 1) % factor != 0 || (t.W - 1) % factor != 0)
    throw std::invalid_argument("downsample: grid " + std::to_string(t.H) + "x" + std::to_string(t.W) +
                                " is not divisible by factor " + std::to_string(factor));
  if (factor == 1) return t;
  ap::Trajectory out = t;
  out.H = (t.H - 1) / factor + 1;
  out.W = (t.W - 1) / factor + 1;
  out.h_mm = t.h_mm * static_cast<double>(factor);
  out.frames.assign(out.T * 2 * out.plane(), 0.0f);
  for (std::size_t k = 0; k < t.T; ++k)
    for (std::size_t d = 0; d < 2; ++d) {
      const auto src = t.field(k, d);
      auto dst = out.field(k, d);
      for (std::size_t r = 0; r < out.H; ++r)
        for (std::size_t c = 0; c < out.W; ++c) dst[r * out.W + c] = src[r * factor * t.W + c * factor];
    }
  return out;
}

ap::Trajectory slice_frames(const ap::Trajectory& t, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > t.T)
    throw std::invalid_argument("slice_frames: [" + std::to_string(first) + ", " +
                                std::to_string(first + count) + ") outside " + std::to_string(t.T) + " frames");
  ap::Trajectory out = t;
  out.T = count;
  const std::size_t stride = 2 * t.plane();
  out.frames.assign(t.frames.begin() + static_cast<long>(first * stride),
                    t.frames.begin() + static_cast<long>((first + count) * stride));
  return out;
}

Dataset make_dataset(const ap::Trajectory& source, const DatasetConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.cfg = cfg;
  ap::Trajectory t = cfg.normalize ? ap::to_au(source) : source;
  t = downsample(t, cfg.downsample);
  const auto first = static_cast<std::size_t>(std::ceil(cfg.start_ms / t.save_ms - 1e-9));
  std::size_t last = t.T - 1;
  if (!std::isnan(cfg.end_ms))
    last = std::min(last, static_cast<std::size_t>(std::floor(cfg.end_ms / t.save_ms + 1e-9)));
  if (first > last)
    throw std::invalid_argument("dataset window [" + std::to_string(cfg.start_ms) + ", " +
                                std::to_string(cfg.end_ms) + "] ms holds no frames");
  d.first_frame = first;
  d.traj = slice_frames(t, first, last - first + 1);
  const auto pairs = cfg.multi() ? build_multi(d.traj.T, cfg.n, cfg.m) : build_single(d.traj.T, cfg.n);
  d.split = split(pairs, d.traj.T, cfg.fraction, cfg.buffer());
  return d;
}

Tensor gather(const ap::Trajectory& t, std::span<const std::vector<std::size_t>> frames) {
  if (frames.empty()) throw std::invalid_argument("gather: empty batch");
  const std::size_t L = frames[0].size(), P = t.plane();
  Tensor out = Tensor::zeros({frames.size(), 2 * L, t.H, t.W});
  auto dst = out.data();
  for (std::size_t b = 0; b < frames.size(); ++b) {
    if (frames[b].size() != L) throw std::invalid_argument("gather: ragged frame lists");
    for (std::size_t l = 0; l < L; ++l) {
      if (frames[b][l] >= t.T) throw std::out_of_range("gather: frame index past the trajectory");
      for (std::size_t d = 0; d < 2; ++d) {
        const auto src = t.field(frames[b][l], d);
        double* o = dst.data() + ((b * 2 * L) + l * 2 + d) * P;
        for (std::size_t i = 0; i < P; ++i) o[i] = src[i];
      }
    }
  }
  return out;
}

Tensor gather_inputs(const ap::Trajectory& t, std::span<const SamplePair> pairs) {
  std::vector<std::vector<std::size_t>> idx;
  for (const auto& p : pairs) idx.push_back(p.input);
  return gather(t, idx);
}

Tensor gather_targets(const ap::Trajectory& t, std::span<const SamplePair> pairs) {
  std::vector<std::vector<std::size_t>> idx;
  for (const auto& p : pairs) idx.push_back(p.target);
  return gather(t, idx);
}

bool time_contiguous(std::span<const SamplePair> pairs) {
  for (std::size_t i = 1; i < pairs.size(); ++i)
    if (pairs[i].earliest() != pairs[i - 1].earliest() + 1) return false;
  return true;
}

// ---------------------------------------------------------------- manifest

namespace {

std::string join_starts(const std::vector<SamplePair>& pairs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < pairs.size(); ++i) os << (i ? " " : "") << pairs[i].earliest();
  return os.str();
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::string& name, const Dataset& d) {
  const auto data_path = dir / (name + ".aptj");
  ap::write_trajectory(data_path, d.traj);
  std::ostringstream os;
  os << "[dataset]\n"
     << "data = " << name << ".aptj\n"
     << "data_crc32 = " << hex32(file_crc(data_path)) << '\n'
     << "source = " << d.source << '\n'
     << "source_crc32 = " << hex32(d.source_crc) << '\n'
     << "first_frame = " << d.first_frame << '\n'
     << "frames = " << d.traj.T << '\n'
     << "scenario = " << ap::to_string(d.traj.scenario) << '\n'
     << "grid = " << d.traj.H << 'x' << d.traj.W << '\n'
     << "\n[config]\n"
     << "n = " << d.cfg.n << '\n'
     << "m = " << d.cfg.m << '\n'
     << "fraction = " << fmt_double(d.cfg.fraction) << '\n'
     << "buffer = " << d.cfg.buffer() << '\n'
     << "start_ms = " << fmt_double(d.cfg.start_ms) << '\n'
     << "end_ms = " << (std::isnan(d.cfg.end_ms) ? std::string("end") : fmt_double(d.cfg.end_ms)) << '\n'
     << "downsample = " << d.cfg.downsample << '\n'
     << "normalize = " << (d.cfg.normalize ? "true" : "false") << '\n'
     << "\n[split]\n"
     << "cut = " << d.split.cut << '\n'
     << "train_count = " << d.split.train.size() << '\n'
     << "test_count = " << d.split.test.size() << '\n'
     << "train_starts = " << join_starts(d.split.train) << '\n'
     << "test_starts = " << join_starts(d.split.test) << '\n';
  write_text(dir / (name + ".manifest"), os.str());
}

Dataset read_dataset(const std::filesystem::path& manifest) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(manifest.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError("cannot parse dataset manifest " + manifest.string() + ": " + e.message());
  }
  try {
    const auto data_path = manifest.parent_path() / tree.get<std::string>("dataset.data");
    const std::string crc = tree.get<std::string>("dataset.data_crc32");
    if (hex32(file_crc(data_path)) != crc)
      throw DataError(data_path.string() + ": content checksum differs from manifest " + manifest.string());
    DatasetConfig cfg;
    cfg.n = tree.get<std::size_t>("config.n");
    cfg.m = tree.get<std::size_t>("config.m");
    cfg.fraction = tree.get<double>("config.fraction");
    cfg.start_ms = tree.get<double>("config.start_ms");
    const std::string end = tree.get<std::string>("config.end_ms");
    cfg.end_ms = end == "end" ? std::numeric_limits<double>::quiet_NaN() : std::stod(end);
    cfg.downsample = tree.get<std::size_t>("config.downsample");
    cfg.normalize = tree.get<bool>("config.normalize");
    cfg.validate();

    Dataset d;
    d.cfg = cfg;
    d.traj = ap::read_trajectory(data_path);
    d.source = tree.get<std::string>("dataset.source", "");
    d.source_crc = static_cast<std::uint32_t>(std::stoul(tree.get<std::string>("dataset.source_crc32"), nullptr, 16));
    d.first_frame = tree.get<std::size_t>("dataset.first_frame");
    const auto pairs = cfg.multi() ? build_multi(d.traj.T, cfg.n, cfg.m) : build_single(d.traj.T, cfg.n);
    d.split = split(pairs, d.traj.T, cfg.fraction, cfg.buffer());
    if (join_starts(d.split.train) != tree.get<std::string>("split.train_starts") ||
        join_starts(d.split.test) != tree.get<std::string>("split.test_starts"))
      throw DataError(manifest.string() + ": recorded split does not match the rebuilt pairs");
    return d;
  } catch (const pt::ptree_error& e) {
    throw DataError("dataset manifest " + manifest.string() + ": " + e.what());
  }
}

}  // namespace pino::data
