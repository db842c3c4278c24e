#include "pino/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "pino/io.hpp"

namespace pino {

namespace {

using Cfg = ExperimentConfig;

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest form that reads back exactly
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& s) {
  if (s == "nan" || s == "end") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError(key + ": expected a number, got '" + s + "'");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw UsageError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + s + "'");
}

struct Key {
  std::string section, name, doc;
  std::function<std::string(const Cfg&)> get;
  std::function<void(Cfg&, const std::string&)> set;
  std::string path() const { return section + "." + name; }
};

Key num(std::string sec, std::string name, std::string doc, double Cfg::*field) {
  auto path = sec + "." + name;
  return {sec, name, doc, [field](const Cfg& c) { return fmt_double(c.*field); },
          [field, path](Cfg& c, const std::string& s) { c.*field = to_double(path, s); }};
}

Key count(std::string sec, std::string name, std::string doc, std::size_t Cfg::*field) {
  auto path = sec + "." + name;
  return {sec, name, doc, [field](const Cfg& c) { return std::to_string(c.*field); },
          [field, path](Cfg& c, const std::string& s) { c.*field = to_uint(path, s); }};
}

template <class Get>
Key custom(std::string sec, std::string name, std::string doc, Get get,
           std::function<void(Cfg&, const std::string&)> set) {
  return {sec, name, doc, get, std::move(set)};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = [] {
    std::vector<Key> v;
    v.push_back(custom(
        "experiment", "seed", "seed for initialisation, shuffling and weight resets (required by train)",
        [](const Cfg& c) { return std::to_string(c.seed); },
        [](Cfg& c, const std::string& s) {
          c.seed = to_uint("experiment.seed", s);
          c.seed_given = true;
        }));
    v.push_back(custom(
        "experiment", "scenarios", "comma-separated: planar, centrifugal, spiral, spiral_break",
        [](const Cfg& c) {
          std::string out;
          for (auto s : c.scenarios) out += (out.empty() ? "" : ",") + std::string(ap::to_string(s));
          return out;
        },
        [](Cfg& c, const std::string& s) {
          c.scenarios.clear();
          std::stringstream ss(s);
          std::string tok;
          while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (tok.empty()) continue;
            try {
              c.scenarios.push_back(ap::parse_scenario(tok));
            } catch (const std::invalid_argument& e) {
              throw UsageError(e.what());
            }
          }
          if (c.scenarios.empty()) throw UsageError("experiment.scenarios: empty list");
        }));
    v.push_back(custom(
        "experiment", "out", "output root (the PINO_OUT environment variable overrides the default)",
        [](const Cfg& c) { return c.out.string(); }, [](Cfg& c, const std::string& s) { c.out = s; }));

    v.push_back(count("simulate", "grid", "points per side of the square 100 mm domain", &Cfg::grid));
    v.push_back(num("simulate", "horizon_ms", "simulated time, 0 for the scenario default", &Cfg::horizon_ms));
    v.push_back(num("simulate", "save_ms", "interval between saved frames", &Cfg::save_ms));
    v.push_back(num("simulate", "s2_ms", "S2 onset for spiral scenarios, 0 for the scenario default", &Cfg::s2_ms));
    v.push_back(custom(
        "simulate", "units", "au or mv_ms for stored trajectories",
        [](const Cfg& c) { return std::string(c.units == ap::Units::au ? "au" : "mv_ms"); },
        [](Cfg& c, const std::string& s) {
          if (s == "au")
            c.units = ap::Units::au;
          else if (s == "mv_ms")
            c.units = ap::Units::mv_ms;
          else
            throw UsageError("simulate.units: expected au or mv_ms, got '" + s + "'");
        }));

    auto dcount = [](std::string name, std::string doc, std::size_t data::DatasetConfig::*f) {
      auto path = "dataset." + name;
      return Key{"dataset", name, doc, [f](const Cfg& c) { return std::to_string(c.dataset.*f); },
                 [f, path](Cfg& c, const std::string& s) { c.dataset.*f = to_uint(path, s); }};
    };
    auto dnum = [](std::string name, std::string doc, double data::DatasetConfig::*f) {
      auto path = "dataset." + name;
      return Key{"dataset", name, doc, [f](const Cfg& c) { return fmt_double(c.dataset.*f); },
                 [f, path](Cfg& c, const std::string& s) { c.dataset.*f = to_double(path, s); }};
    };
    v.push_back(dcount("n", "frames from the last input frame to the first target frame", &data::DatasetConfig::n));
    v.push_back(dcount("m", "0 for single-frame pairs, otherwise windows of m+1 frames", &data::DatasetConfig::m));
    v.push_back(dnum("fraction", "leading share of frames used for training", &data::DatasetConfig::fraction));
    v.push_back(dnum("start_ms", "first frame time kept", &data::DatasetConfig::start_ms));
    v.push_back(dnum("end_ms", "last frame time kept, nan for the end", &data::DatasetConfig::end_ms));
    v.push_back(dcount("downsample", "spatial stride applied to the trajectory", &data::DatasetConfig::downsample));
    v.push_back(custom(
        "dataset", "normalize", "convert mV/ms trajectories to AU",
        [](const Cfg& c) { return std::string(c.dataset.normalize ? "true" : "false"); },
        [](Cfg& c, const std::string& s) { c.dataset.normalize = to_bool("dataset.normalize", s); }));

    v.push_back(count("model", "modes", "retained Fourier modes per axis", &Cfg::modes));
    v.push_back(count("model", "width", "hidden channels", &Cfg::width));
    v.push_back(count("model", "blocks", "FNO blocks", &Cfg::blocks));
    v.push_back(custom(
        "model", "activation", "gelu or relu",
        [](const Cfg& c) { return std::string(c.activation == fno::Activation::gelu ? "gelu" : "relu"); },
        [](Cfg& c, const std::string& s) {
          if (s == "gelu")
            c.activation = fno::Activation::gelu;
          else if (s == "relu")
            c.activation = fno::Activation::relu;
          else
            throw UsageError("model.activation: expected gelu or relu, got '" + s + "'");
        }));
    v.push_back(custom(
        "model", "gating", "learned gate on the block skip path",
        [](const Cfg& c) { return std::string(c.gating ? "true" : "false"); },
        [](Cfg& c, const std::string& s) { c.gating = to_bool("model.gating", s); }));

    auto tnum = [](std::string name, std::string doc, double* (*ref)(Cfg&), double (*val)(const Cfg&)) {
      auto path = "train." + name;
      return Key{"train", name, doc, [val](const Cfg& c) { return fmt_double(val(c)); },
                 [ref, path](Cfg& c, const std::string& s) { *ref(c) = to_double(path, s); }};
    };
    v.push_back(tnum(
        "lr", "initial learning rate of each stage", [](Cfg& c) { return &c.train.lr0; },
        [](const Cfg& c) { return c.train.lr0; }));
    v.push_back(count("train", "epochs_stage1", "data-only epochs", &Cfg::epochs_stage1));
    v.push_back(count("train", "epochs_stage2", "data plus physics epochs", &Cfg::epochs_stage2));
    v.push_back(custom(
        "train", "batch", "0 for 8 (multi-frame) or 16 (single-frame)",
        [](const Cfg& c) { return std::to_string(c.train.batch); },
        [](Cfg& c, const std::string& s) { c.train.batch = to_uint("train.batch", s); }));
    v.push_back(custom(
        "train", "scheme", "stage-2 loss weighting: fixed, softadapt or reladapt",
        [](const Cfg& c) { return std::string(loss::to_string(c.train.scheme)); },
        [](Cfg& c, const std::string& s) {
          try {
            c.train.scheme = loss::parse_scheme(s);
          } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
          }
        }));
    const char* comps[] = {"lambda_data", "lambda_res", "lambda_ic", "lambda_bc"};
    for (std::size_t i = 0; i < loss::kComponents; ++i) {
      std::string path = std::string("train.") + comps[i];
      v.push_back(Key{"train", comps[i], "initial loss weight",
                      [i](const Cfg& c) { return fmt_double(c.train.lambdas[i]); },
                      [i, path](Cfg& c, const std::string& s) { c.train.lambdas[i] = to_double(path, s); }});
    }
    v.push_back(custom(
        "train", "eval_every", "epochs between test evaluations for best-model tracking",
        [](const Cfg& c) { return std::to_string(c.train.eval_every); },
        [](Cfg& c, const std::string& s) { c.train.eval_every = to_uint("train.eval_every", s); }));
    v.push_back(custom(
        "train", "checkpoint_every", "epochs between checkpoints, 0 for the end only",
        [](const Cfg& c) { return std::to_string(c.train.checkpoint_every); },
        [](Cfg& c, const std::string& s) { c.train.checkpoint_every = to_uint("train.checkpoint_every", s); }));

    v.push_back(count("evaluate", "rollout_frames", "model calls per roll-out, 0 to the end", &Cfg::rollout_frames));
    v.push_back(custom(
        "evaluate", "collapse_pred_below", "roll-out collapse: predicted max V under this",
        [](const Cfg& c) { return fmt_double(c.collapse.pred_below); },
        [](Cfg& c, const std::string& s) { c.collapse.pred_below = to_double("evaluate.collapse_pred_below", s); }));
    v.push_back(custom(
        "evaluate", "collapse_truth_above", "while true max V is over this",
        [](const Cfg& c) { return fmt_double(c.collapse.truth_above); },
        [](Cfg& c, const std::string& s) {
          c.collapse.truth_above = to_double("evaluate.collapse_truth_above", s);
        }));
    v.push_back(custom(
        "evaluate", "collapse_frames", "for this many consecutive frames",
        [](const Cfg& c) { return std::to_string(c.collapse.frames); },
        [](Cfg& c, const std::string& s) { c.collapse.frames = to_uint("evaluate.collapse_frames", s); }));
    v.push_back(num("evaluate", "snapshot_ms", "source-trajectory time of exported snapshots", &Cfg::snapshot_ms));
    v.push_back(count("evaluate", "full_grid", "native grid for resolution evaluation", &Cfg::full_grid));
    v.push_back(count("evaluate", "repeats", "timed repetitions in bench", &Cfg::repeats));
    v.push_back(num("evaluate", "bench_horizon_ms", "horizon timed in bench", &Cfg::bench_horizon_ms));
    return v;
  }();
  return k;
}

const Key* find_key(const std::string& path) {
  for (const auto& k : keys())
    if (k.path() == path) return &k;
  return nullptr;
}

void apply(Cfg& c, const std::string& path, const std::string& value) {
  const Key* k = find_key(path);
  if (!k) throw UsageError("unknown config key '" + path + "'");
  k->set(c, trim(value));
}

}  // namespace

fno::FnoConfig ExperimentConfig::model_config() const {
  fno::FnoConfig f = fno::FnoConfig::for_frames(dataset.frames_per_sample(), modes, width);
  f.blocks = blocks;
  f.activation = activation;
  f.gating = gating;
  return f;
}

std::string ExperimentConfig::text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      os << (section.empty() ? "" : "\n") << '[' << k.section << "]\n";
      section = k.section;
    }
    os << "# " << k.doc << '\n' << k.name << " = " << k.get(*this) << '\n';
  }
  return os.str();
}

std::uint32_t ExperimentConfig::hash() const {
  const std::string t = text();
  return crc32(std::span(reinterpret_cast<const std::uint8_t*>(t.data()), t.size()));
}

ExperimentConfig resolve_config(const std::filesystem::path& file, const Overrides& flags) {
  ExperimentConfig c;
  if (const char* env = std::getenv("PINO_OUT"); env && *env) c.out = env;
  if (!file.empty()) {
    if (!std::filesystem::exists(file)) throw UsageError("config file " + file.string() + " does not exist");
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(file.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw UsageError("config: key '" + section + "' outside any [section]");
      for (const auto& [key, value] : body) apply(c, section + "." + key, value.data());
    }
  }
  for (const auto& [path, value] : flags) apply(c, path, value);

  try {
    c.dataset.validate();
    c.model_config().validate();
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (c.grid < 3) throw UsageError("simulate.grid must be >= 3");
  if (!(c.save_ms > 0.0)) throw UsageError("simulate.save_ms must be positive");
  if (c.epochs_stage1 == 0 || c.epochs_stage2 == 0) throw UsageError("epochs must be >= 1");
  if (c.repeats == 0) throw UsageError("evaluate.repeats must be >= 1");
  return c;
}

}  // namespace pino
