#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tiltline/errors.hpp"
#include "tiltline/experiments.hpp"
#include "tiltline/random.hpp"

namespace tiltline::experiments {

namespace {

const char* kDefaults = R"({
  "kind": "simulate",
  "output": "out",
  "seed": 1,
  "workers": 1,
  "chains": 1,
  "samples": 1000,
  "checkpoint_every": 0,
  "level": 0.99,
  "sampler": {
    "n": 1,
    "left": -1.0,
    "right": 1.0,
    "dt": 0.05,
    "tilt": {"kind": "geometric", "a": 1.0, "lambda": 2.0, "rhos": []},
    "boundary": {"kind": "zero", "left": [], "right": [], "nu_linear": [], "eta_linear": []},
    "floor": null,
    "ceiling": null,
    "block_len": 21,
    "max_rejections": 64,
    "schedule": "systematic",
    "burnin": 100,
    "thin": 1
  },
  "observables": ["one_point:1:0"],
  "oracle": {"x_max": null, "spacing": null, "cost_limit": 2e11},
  "params": {
    "settings": [[3, 2], [5, 3], [8, 4]],
    "alpha": 0.25,
    "window": [-1.0, 1.0],
    "max_rel_se": 0.05,
    "k_list": [1, 2, 3],
    "M_list": [2.0, 4.0, 8.0],
    "gap_k": 3,
    "delta_list": [0.1, 0.05, 0.025, 0.0125],
    "tilt_low": 1.0,
    "tilt_high": 2.0,
    "observable": "one_point:1:0",
    "coupled_sweeps": 10000,
    "t0": -0.5,
    "t1": 0.5,
    "threshold": 0.01,
    "event": [{"line": 1, "time": 0.0, "threshold": 0.5}],
    "shift": 1.0,
    "sampler_dir": "",
    "oracle_dir": "",
    "ks_threshold": 0.01,
    "criteria": []
  }
})";

// Keys whose default is null accept a number, an array of numbers or null.
bool nullable_ok(const json& v) {
  if (v.is_null() || v.is_number()) return true;
  if (!v.is_array()) return false;
  return std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
}

bool same_type(const json& def, const json& v) {
  if (def.is_null()) return nullable_ok(v);
  if (def.is_number_unsigned() || def.is_number_integer()) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }
  if (def.is_number()) return v.is_number();
  return def.type() == v.type();
}

void check_event(const json& ev) {
  for (const auto& c : ev) {
    if (!c.is_object()) throw ConfigError("params.event entries must be objects");
    for (const auto& [key, value] : c.items()) {
      if (key == "line") {
        if (!value.is_number_unsigned()) throw ConfigError("params.event.line must be >= 1");
      } else if (key == "time" || key == "threshold") {
        if (!value.is_number()) throw ConfigError("params.event." + key + " must be a number");
      } else if (key == "above") {
        if (!value.is_boolean()) throw ConfigError("params.event.above must be a boolean");
      } else {
        throw ConfigError("unknown key params.event." + key);
      }
    }
    if (!c.contains("line") || !c.contains("time") || !c.contains("threshold")) {
      throw ConfigError("params.event entries need line, time and threshold");
    }
  }
}

// Overlays `user` onto `base` (a copy of the defaults), rejecting unknown
// keys and type mismatches.
void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("expected an object at " + (path.empty() ? "top level" : path));
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown key " + here);
    json& def = base[key];
    if (def.is_object()) {
      merge_strict(def, value, here);
      continue;
    }
    if (!same_type(def, value)) throw ConfigError("wrong type for " + here);
    def = value;
  }
}

std::vector<double> numbers(const json& v, const std::string& what) {
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(what + " must contain numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::optional<Path> level_path(const json& v, const TimeGrid& grid, const std::string& what) {
  if (v.is_null()) return std::nullopt;
  if (v.is_number()) return Path(grid.size(), v.get<double>());
  Path p = numbers(v, what);
  if (p.size() != grid.size()) throw ConfigError(what + " must have one value per node");
  return p;
}

std::vector<Potential> linear_potentials(const json& v, const std::string& what) {
  std::vector<Potential> out;
  for (double c : numbers(v, what)) out.push_back([c](double x) { return c * x; });
  return out;
}

}  // namespace

const json& default_document() {
  static const json doc = json::parse(kDefaults);
  return doc;
}

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {
      "simulate",   "oracle",   "compare",    "tightness-scan", "max-scaling",
      "gap-scan",   "domination", "gibbs-check", "monotone-scan", "accept"};
  return kinds;
}

SamplerConfig sampler_from_json(const json& s, std::uint64_t seed) {
  SamplerConfig c;
  try {
    c.n = s.at("n").get<std::size_t>();
    c.grid = TimeGrid::with_spacing(s.at("left").get<double>(), s.at("right").get<double>(),
                                    s.at("dt").get<double>());
    const json& tilt = s.at("tilt");
    const std::string tk = tilt.at("kind").get<std::string>();
    if (tk == "geometric") {
      c.tilts = TiltSchedule::geometric(tilt.at("a").get<double>(), tilt.at("lambda").get<double>());
    } else if (tk == "constants") {
      c.tilts = TiltSchedule::constants(numbers(tilt.at("rhos"), "sampler.tilt.rhos"));
    } else if (tk == "none") {
      c.tilts = TiltSchedule::none();
    } else {
      throw ConfigError("sampler.tilt.kind must be geometric, constants or none");
    }
    const json& b = s.at("boundary");
    const std::string bk = b.at("kind").get<std::string>();
    if (bk == "zero") {
      c.boundary = ZeroBoundary{};
    } else if (bk == "fixed") {
      c.boundary = FixedBoundary{numbers(b.at("left"), "sampler.boundary.left"),
                                 numbers(b.at("right"), "sampler.boundary.right")};
    } else if (bk == "free") {
      c.boundary = FreeBoundary{linear_potentials(b.at("nu_linear"), "sampler.boundary.nu_linear"),
                                linear_potentials(b.at("eta_linear"), "sampler.boundary.eta_linear")};
    } else {
      throw ConfigError("sampler.boundary.kind must be zero, fixed or free");
    }
    c.floor = level_path(s.at("floor"), c.grid, "sampler.floor");
    c.ceiling = level_path(s.at("ceiling"), c.grid, "sampler.ceiling");
    c.block_len = s.at("block_len").get<std::size_t>();
    c.max_rejections = s.at("max_rejections").get<std::size_t>();
    const std::string sched = s.at("schedule").get<std::string>();
    if (sched == "systematic") {
      c.schedule = SweepSchedule::systematic;
    } else if (sched == "random_block") {
      c.schedule = SweepSchedule::random_block;
    } else {
      throw ConfigError("sampler.schedule must be systematic or random_block");
    }
    c.burnin = s.at("burnin").get<std::size_t>();
    c.thin = s.at("thin").get<std::size_t>();
    c.seed = seed;
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sampler section: ") + e.what());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("sampler section: ") + e.what());
  }
  return c;
}

json measure_of(const json& s) {
  json m = json::object();
  for (const char* key : {"n", "left", "right", "dt", "tilt", "boundary", "floor", "ceiling"}) {
    m[key] = s.at(key);
  }
  return m;
}

ExperimentConfig parse_config(const json& user) {
  json doc = default_document();
  merge_strict(doc, user, "");
  const std::string kind = doc.at("kind").get<std::string>();
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw ConfigError("unknown experiment kind " + kind);
  }
  if (doc.at("workers").get<std::size_t>() == 0) throw ConfigError("workers must be >= 1");
  if (doc.at("chains").get<std::size_t>() == 0) throw ConfigError("chains must be >= 1");
  const double level = doc.at("level").get<double>();
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  for (const auto& o : doc.at("observables")) {
    if (!o.is_string()) throw ConfigError("observables must be strings");
  }
  check_event(doc.at("params").at("event"));
  ExperimentConfig config{doc};
  config.sampler();
  try {
    config.observables();
    Observable::parse(doc.at("params").at("observable").get<std::string>());
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  try {
    return parse_config(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be KEY=VALUE: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("malformed override key " + key);
    if (!node->is_object()) throw ConfigError("override path " + key + " crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

SamplerConfig ExperimentConfig::sampler() const { return sampler_from_json(doc.at("sampler"), seed()); }

std::vector<Observable> ExperimentConfig::observables() const {
  std::vector<Observable> out;
  for (const auto& o : doc.at("observables")) out.push_back(Observable::parse(o.get<std::string>()));
  return out;
}

OracleOptions ExperimentConfig::oracle() const {
  OracleOptions o;
  const json& s = doc.at("oracle");
  if (!s.at("x_max").is_null()) o.x_max = s.at("x_max").get<double>();
  if (!s.at("spacing").is_null()) o.spacing = s.at("spacing").get<double>();
  o.cost_limit = s.at("cost_limit").get<double>();
  return o;
}

std::uint64_t ExperimentConfig::hash() const {
  json d = doc;
  d.erase("seed");
  d.erase("output");
  d.erase("workers");
  return fnv1a64(d.dump());
}

}  // namespace tiltline::experiments
