#pragma once

// Run configuration: flat `key = value` text grouped under [section]
// headers. Every field has a default; parsing rejects unknown sections and
// keys, and validation reports every violated field at once. The resolved
// snapshot written into a run directory parses back to the same config.

#include <fstream>
#include <functional>
#include <sstream>

#include "mpail/eval.hpp"

namespace mpail {

struct EnvConfig {
  bool slip = true;
  double slip_coefficient = 0.1;
  double slip_noise = 0.01;
  double init_box = 1.0;  // nav: side of the initial-position box
};

struct RunConfig {
  std::string env = "nav";         // nav | cartpole
  std::string model = "analytic";  // analytic | learned
  std::string demos;
  std::string out = "run";
  std::uint64_t seed = 1;
  EnvConfig env_params;
  MppiConfig mppi;
  TrainConfig train;
  LearnedDynamicsConfig dynamics;

  /// Cartpole has no analytic planner model and a one-dimensional action.
  static RunConfig defaults_for(const std::string& env) {
    RunConfig c;
    c.env = env;
    if (env == "cartpole") {
      c.model = "learned";
      c.mppi.sampling_variance = CartpoleEnv().default_sampling_variance();
    }
    return c;
  }

  std::unique_ptr<Environment> make_env() const {
    if (env == "nav") {
      SlipParams sp{env_params.slip, env_params.slip_coefficient, env_params.slip_noise};
      auto e = std::make_unique<NavEnv>(BicycleParams{}, sp);
      auto r = NavEnv::box_region(env_params.init_box);
      e->set_init_region(r);
      return e;
    }
    if (env == "cartpole") return std::make_unique<CartpoleEnv>();
    throw ConfigError("run.env must be nav or cartpole");
  }

  DynamicsModel make_model(const Environment& e) const {
    if (model == "analytic") {
      if (e.name() != "nav") throw ConfigError("run.model = analytic is only available for nav");
      return DynamicsModel::analytic_bicycle(BicycleParams{});
    }
    Rng rng = derive_rng(seed, 0x3000);
    return DynamicsModel::learned(e.state_dim(), e.action_dim(), e.angle_dims(), dynamics, rng);
  }

  /// Planner settings with the temperature the trainer starts from.
  MppiConfig planner() const {
    MppiConfig m = mppi;
    m.temperature = train.initial_temperature;
    return m;
  }

  TrainConfig training() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (env != "nav" && env != "cartpole") v.push_back("run.env must be nav or cartpole");
    if (model != "analytic" && model != "learned") v.push_back("run.model must be analytic or learned");
    if (env == "cartpole" && model == "analytic") v.push_back("run.model = analytic is only available for nav");
    const int ad = env == "cartpole" ? 1 : 2;
    if (mppi.sampling_variance.size() != ad)
      v.push_back("mppi.sampling_variance must have " + std::to_string(ad) + " entries for " + env);
    for (auto& s : mppi.violations()) v.push_back(s);
    for (auto& s : train.violations()) v.push_back(s);
    if (!(env_params.slip_coefficient >= 0.0)) v.push_back("env.slip_coefficient must be >= 0");
    if (!(env_params.slip_noise >= 0.0)) v.push_back("env.slip_noise must be >= 0");
    if (!(env_params.init_box > 0.0)) v.push_back("env.init_box must be > 0");
    if (!(dynamics.adam.lr > 0.0)) v.push_back("dynamics.lr must be > 0");
    if (!(dynamics.schedule.decay_rate > 0.0 && dynamics.schedule.decay_rate <= 1.0))
      v.push_back("dynamics.decay_rate must be in (0, 1]");
    if (dynamics.schedule.decay_every_episodes < 1) v.push_back("dynamics.decay_every must be >= 1");
    if (dynamics.schedule.min_lr < 0.0) v.push_back("dynamics.min_lr must be >= 0");
    for (int h : dynamics.hidden)
      if (h < 1) v.push_back("dynamics.hidden widths must be >= 1");
    return v;
  }

  void validate() const {
    auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ConfigError(msg);
  }
};

namespace config_detail {

inline std::string fmt(double x) { return csv::format_double(x); }
inline std::string fmt(int x) { return std::to_string(x); }
inline std::string fmt(bool x) { return x ? "true" : "false"; }

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) throw ConfigError("expected a finite number");
  return v;
}

inline long long parse_int(const std::string& s) {
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("expected an integer");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false");
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (auto& f : csv::split(s)) out.push_back(parse_double(csv::trim(f)));
  return out;
}

template <class T>
std::string fmt_list(const T& xs) {
  std::string out;
  for (std::size_t i = 0; i < static_cast<std::size_t>(xs.size()); ++i)
    out += (i ? "," : "") + fmt(xs[static_cast<Eigen::Index>(i)]);
  return out;
}

inline std::string fmt_widths(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

inline std::vector<int> parse_widths(const std::string& s) {
  std::vector<int> out;
  for (auto& f : csv::split(s)) out.push_back(static_cast<int>(parse_int(csv::trim(f))));
  if (out.empty()) throw ConfigError("expected a comma-separated list of widths");
  return out;
}

inline nn::Activation parse_activation(const std::string& s) {
  if (s == "relu") return nn::Activation::ReLU;
  if (s == "leaky_relu") return nn::Activation::LeakyReLU;
  if (s == "identity") return nn::Activation::Identity;
  throw ConfigError("expected relu, leaky_relu or identity");
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline void add_adam(std::vector<Field>& f, const std::string& sec, std::function<nn::AdamConfig&(RunConfig&)> ref,
                     std::function<const nn::AdamConfig&(const RunConfig&)> cref) {
  f.push_back({sec, "lr", [=](const RunConfig& c) { return fmt(cref(c).lr); },
               [=](RunConfig& c, const std::string& s) { ref(c).lr = parse_double(s); }});
  f.push_back({sec, "beta1", [=](const RunConfig& c) { return fmt(cref(c).beta1); },
               [=](RunConfig& c, const std::string& s) { ref(c).beta1 = parse_double(s); }});
  f.push_back({sec, "beta2", [=](const RunConfig& c) { return fmt(cref(c).beta2); },
               [=](RunConfig& c, const std::string& s) { ref(c).beta2 = parse_double(s); }});
  f.push_back({sec, "eps", [=](const RunConfig& c) { return fmt(cref(c).eps); },
               [=](RunConfig& c, const std::string& s) { ref(c).eps = parse_double(s); }});
}

#define MPAIL_FIELD(SEC, KEY, EXPR, PARSE)                                          \
  f.push_back({SEC, KEY, [](const RunConfig& c) { return fmt(c.EXPR); },            \
               [](RunConfig& c, const std::string& s) { c.EXPR = PARSE(s); }})
#define MPAIL_INT(s) static_cast<int>(parse_int(s))

inline const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back({"run", "env", [](const RunConfig& c) { return c.env; },
                 [](RunConfig& c, const std::string& s) { c.env = s; }});
    f.push_back({"run", "model", [](const RunConfig& c) { return c.model; },
                 [](RunConfig& c, const std::string& s) { c.model = s; }});
    f.push_back({"run", "demos", [](const RunConfig& c) { return c.demos; },
                 [](RunConfig& c, const std::string& s) { c.demos = s; }});
    f.push_back({"run", "out", [](const RunConfig& c) { return c.out; },
                 [](RunConfig& c, const std::string& s) { c.out = s; }});
    f.push_back({"run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& s) {
                   auto v = parse_int(s);
                   if (v < 0) throw ConfigError("expected a non-negative integer");
                   c.seed = static_cast<std::uint64_t>(v);
                 }});

    MPAIL_FIELD("env", "slip", env_params.slip, parse_bool);
    MPAIL_FIELD("env", "slip_coefficient", env_params.slip_coefficient, parse_double);
    MPAIL_FIELD("env", "slip_noise", env_params.slip_noise, parse_double);
    MPAIL_FIELD("env", "init_box", env_params.init_box, parse_double);

    MPAIL_FIELD("mppi", "samples", mppi.samples, MPAIL_INT);
    MPAIL_FIELD("mppi", "horizon", mppi.horizon, MPAIL_INT);
    MPAIL_FIELD("mppi", "iterations", mppi.iterations, MPAIL_INT);
    f.push_back({"mppi", "sampling_variance", [](const RunConfig& c) { return fmt_list(c.mppi.sampling_variance); },
                 [](RunConfig& c, const std::string& s) {
                   auto v = parse_list(s);
                   c.mppi.sampling_variance = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
                 }});
    MPAIL_FIELD("mppi", "markup", mppi.markup, parse_double);
    MPAIL_FIELD("mppi", "use_cost", mppi.use_cost, parse_bool);
    MPAIL_FIELD("mppi", "use_value", mppi.use_value, parse_bool);

    MPAIL_FIELD("train", "iterations", train.iterations, MPAIL_INT);
    MPAIL_FIELD("train", "parallel_envs", train.parallel_envs, MPAIL_INT);
    MPAIL_FIELD("train", "gamma", train.gamma, parse_double);
    MPAIL_FIELD("train", "gae_lambda", train.gae_lambda, parse_double);
    MPAIL_FIELD("train", "initial_temperature", train.initial_temperature, parse_double);
    MPAIL_FIELD("train", "temperature_decay", train.temperature_decay, parse_double);
    MPAIL_FIELD("train", "min_temperature", train.min_temperature, parse_double);
    MPAIL_FIELD("train", "value_updates", train.value_updates_per_iteration, MPAIL_INT);
    MPAIL_FIELD("train", "disc_updates", train.disc_updates_per_iteration, MPAIL_INT);
    MPAIL_FIELD("train", "checkpoint_every", train.checkpoint_every, MPAIL_INT);
    MPAIL_FIELD("train", "float_rollouts", train.float_rollouts, parse_bool);
    MPAIL_FIELD("train", "sigma_floor", train.sigma_floor, parse_double);

    add_adam(f, "disc", [](RunConfig& c) -> nn::AdamConfig& { return c.train.disc.adam; },
             [](const RunConfig& c) -> const nn::AdamConfig& { return c.train.disc.adam; });
    f.push_back({"disc", "hidden", [](const RunConfig& c) { return fmt_widths(c.train.disc.hidden); },
                 [](RunConfig& c, const std::string& s) { c.train.disc.hidden = parse_widths(s); }});
    f.push_back({"disc", "activation", [](const RunConfig& c) { return std::string(nn::to_string(c.train.disc.activation)); },
                 [](RunConfig& c, const std::string& s) { c.train.disc.activation = parse_activation(s); }});
    MPAIL_FIELD("disc", "spectral_norm", train.disc.spectral_norm, parse_bool);
    MPAIL_FIELD("disc", "l2", train.disc.l2, parse_double);
    MPAIL_FIELD("disc", "epochs", train.disc.epochs, MPAIL_INT);
    MPAIL_FIELD("disc", "mini_batches", train.disc.mini_batches, MPAIL_INT);

    add_adam(f, "value", [](RunConfig& c) -> nn::AdamConfig& { return c.train.value.adam; },
             [](const RunConfig& c) -> const nn::AdamConfig& { return c.train.value.adam; });
    f.push_back({"value", "hidden", [](const RunConfig& c) { return fmt_widths(c.train.value.hidden); },
                 [](RunConfig& c, const std::string& s) { c.train.value.hidden = parse_widths(s); }});
    f.push_back({"value", "activation", [](const RunConfig& c) { return std::string(nn::to_string(c.train.value.activation)); },
                 [](RunConfig& c, const std::string& s) { c.train.value.activation = parse_activation(s); }});
    MPAIL_FIELD("value", "clip", train.value.clip, parse_double);
    MPAIL_FIELD("value", "max_grad_norm", train.value.max_grad_norm, parse_double);
    MPAIL_FIELD("value", "epochs", train.value.epochs, MPAIL_INT);
    MPAIL_FIELD("value", "mini_batches", train.value.mini_batches, MPAIL_INT);

    f.push_back({"dynamics", "lr", [](const RunConfig& c) { return fmt(c.dynamics.adam.lr); },
                 [](RunConfig& c, const std::string& s) {
                   c.dynamics.adam.lr = parse_double(s);
                   c.dynamics.schedule.base_lr = c.dynamics.adam.lr;
                 }});
    MPAIL_FIELD("dynamics", "beta1", dynamics.adam.beta1, parse_double);
    MPAIL_FIELD("dynamics", "beta2", dynamics.adam.beta2, parse_double);
    MPAIL_FIELD("dynamics", "eps", dynamics.adam.eps, parse_double);
    f.push_back({"dynamics", "hidden", [](const RunConfig& c) { return fmt_widths(c.dynamics.hidden); },
                 [](RunConfig& c, const std::string& s) { c.dynamics.hidden = parse_widths(s); }});
    f.push_back({"dynamics", "activation", [](const RunConfig& c) { return std::string(nn::to_string(c.dynamics.activation)); },
                 [](RunConfig& c, const std::string& s) { c.dynamics.activation = parse_activation(s); }});
    MPAIL_FIELD("dynamics", "predict_delta", dynamics.predict_delta, parse_bool);
    MPAIL_FIELD("dynamics", "decay_rate", dynamics.schedule.decay_rate, parse_double);
    MPAIL_FIELD("dynamics", "decay_every", dynamics.schedule.decay_every_episodes, MPAIL_INT);
    MPAIL_FIELD("dynamics", "min_lr", dynamics.schedule.min_lr, parse_double);
    MPAIL_FIELD("dynamics", "epochs", train.dyn_epochs, MPAIL_INT);
    MPAIL_FIELD("dynamics", "batch_size", train.dyn_batch_size, MPAIL_INT);
    f.push_back({"dynamics", "buffer_capacity", [](const RunConfig& c) { return std::to_string(c.train.buffer_capacity); },
                 [](RunConfig& c, const std::string& s) {
                   auto v = parse_int(s);
                   if (v < 1) throw ConfigError("expected a positive integer");
                   c.train.buffer_capacity = static_cast<std::size_t>(v);
                 }});
    return f;
  }();
  return all;
}

#undef MPAIL_FIELD
#undef MPAIL_INT

}  // namespace config_detail

/// Applies `key = value` lines from `in` on top of `base`. Problems of
/// every kind (syntax, unknown keys, bad values, range violations) are
/// collected and reported together in one ConfigError.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  using config_detail::fields;
  std::vector<std::string> errors;
  std::string line, section;
  std::size_t lineno = 0;
  // The env key decides environment-dependent defaults, so apply it first.
  std::vector<std::tuple<std::size_t, std::string, std::string, std::string>> entries;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = csv::trim(line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + "malformed section header");
        continue;
      }
      section = csv::trim(line.substr(1, line.size() - 2));
      bool known = std::any_of(fields().begin(), fields().end(), [&](const auto& f) { return f.section == section; });
      if (!known) errors.push_back(where + "unknown section [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected key = value");
      continue;
    }
    entries.emplace_back(lineno, section, csv::trim(line.substr(0, eq)), csv::trim(line.substr(eq + 1)));
  }
  for (const auto& [ln, sec, key, value] : entries)
    if (sec == "run" && key == "env" && value != base.env && (value == "nav" || value == "cartpole")) {
      auto keep = base;
      base = RunConfig::defaults_for(value);
      base.demos = keep.demos;
      base.out = keep.out;
      base.seed = keep.seed;
    }
  std::vector<std::string> seen;
  for (const auto& [ln, sec, key, value] : entries) {
    const std::string where = "line " + std::to_string(ln) + ": ";
    const std::string name = sec + "." + key;
    auto it = std::find_if(fields().begin(), fields().end(),
                           [&](const auto& f) { return f.section == sec && f.key == key; });
    if (it == fields().end()) {
      if (sec.empty())
        errors.push_back(where + "key '" + key + "' outside any section");
      else if (std::any_of(fields().begin(), fields().end(), [&](const auto& f) { return f.section == sec; }))
        errors.push_back(where + "unknown key '" + name + "'");
      continue;
    }
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) {
      errors.push_back(where + "duplicate key '" + name + "'");
      continue;
    }
    seen.push_back(name);
    try {
      it->set(base, value);
    } catch (const Error& e) {
      errors.push_back(where + name + " = '" + value + "': " + e.what());
    }
  }
  for (auto& v : base.violations()) errors.push_back(v);
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return base;
}

inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  return parse_config(in, std::move(base));
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  return parse_config(f, std::move(base));
}

/// Every field, grouped by section, in a form parse_config reads back.
inline std::string config_snapshot(const RunConfig& c) {
  std::string out, section;
  for (const auto& f : config_detail::fields()) {
    if (f.section != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

inline void write_config_snapshot(const RunConfig& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << config_snapshot(c);
  if (!f) throw Error("write failed: " + path);
}

}  // namespace mpail
