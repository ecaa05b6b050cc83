#include "spoc/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spoc/errors.hpp"

namespace spoc {
namespace {

using json = nlohmann::ordered_json;

template <class E>
struct EnumNames {
  E value;
  const char* name;
};

constexpr EnumNames<FilterMode> kFilterModes[] = {{FilterMode::Branching, "branching"}, {FilterMode::None, "none"}};
constexpr EnumNames<LearningRate> kLearningRates[] = {{LearningRate::Constant, "constant"},
                                                      {LearningRate::Inverse, "inverse"}};
constexpr EnumNames<ParticleSelect> kSelects[] = {{ParticleSelect::Weighted, "weighted"},
                                                  {ParticleSelect::Uniform, "uniform"}};
constexpr EnumNames<RolloutMode> kRollouts[] = {{RolloutMode::FreshBrownian, "fresh_brownian"},
                                                {RolloutMode::SimulatedY, "simulated_y"}};
constexpr EnumNames<HxpMode> kHxpModes[] = {{HxpMode::Adjoint, "adjoint"},
                                            {HxpMode::ScalarPairing, "scalar_pairing"},
                                            {HxpMode::Pointwise, "pointwise"}};
constexpr EnumNames<Z2Mode> kZ2Modes[] = {{Z2Mode::Shifted, "shifted"}, {Z2Mode::Raw, "raw"}};
constexpr EnumNames<Z2Baseline> kBaselines[] = {{Z2Baseline::None, "none"},
                                                {Z2Baseline::RunningMean, "running_mean"}};

template <class E, std::size_t N>
std::string enum_name(const EnumNames<E> (&table)[N], E v) {
  for (const auto& entry : table) {
    if (entry.value == v) return entry.name;
  }
  return "?";
}

template <class E, std::size_t N>
E enum_value(const EnumNames<E> (&table)[N], const json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError("expected a string", key);
  const auto s = j.get<std::string>();
  std::string options;
  for (const auto& entry : table) {
    if (s == entry.name) return entry.value;
    options += options.empty() ? entry.name : std::string(", ") + entry.name;
  }
  throw ConfigError("unknown value '" + s + "' (expected one of: " + options + ")", key);
}

double as_real(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("expected a number", key);
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError("expected a finite number", key);
  return v;
}

std::uint64_t as_unsigned(const json& j, const std::string& key) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    if (j.get<std::int64_t>() < 0) throw ConfigError("expected a non-negative integer", key);
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v >= 0.0 && v == std::floor(v) && v < 9.0e15) return static_cast<std::uint64_t>(v);
  }
  throw ConfigError("expected a non-negative integer", key);
}

bool as_bool(const json& j, const std::string& key) {
  if (!j.is_boolean()) throw ConfigError("expected true or false", key);
  return j.get<bool>();
}

std::optional<double> as_optional_real(const json& j, const std::string& key) {
  if (j.is_null()) return std::nullopt;
  return as_real(j, key);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct Key {
  const char* name;
  std::function<void(RunConfig&, const json&, const std::string&)> set;
  std::function<json(const RunConfig&)> get;
};

#define SPOC_REAL_KEY(field)                                                                       \
  Key {                                                                                            \
    #field, [](RunConfig& c, const json& j, const std::string& k) { c.field = as_real(j, k); },    \
        [](const RunConfig& c) { return json(c.field); }                                          \
  }
#define SPOC_SIZE_KEY(field)                                                                       \
  Key {                                                                                            \
    #field,                                                                                        \
        [](RunConfig& c, const json& j, const std::string& k) {                                    \
          c.field = static_cast<std::size_t>(as_unsigned(j, k));                                   \
        },                                                                                         \
        [](const RunConfig& c) { return json(static_cast<std::uint64_t>(c.field)); }              \
  }
#define SPOC_ENUM_KEY(field, table)                                                                \
  Key {                                                                                            \
    #field, [](RunConfig& c, const json& j, const std::string& k) { c.field = enum_value(table, j, k); }, \
        [](const RunConfig& c) { return json(enum_name(table, c.field)); }                        \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"preset", [](RunConfig&, const json&, const std::string&) {},
          [](const RunConfig& c) { return json(c.preset); }},
      SPOC_REAL_KEY(L),
      SPOC_REAL_KEY(T),
      SPOC_REAL_KEY(dt),
      SPOC_SIZE_KEY(n_elems),
      SPOC_SIZE_KEY(N_W),
      SPOC_SIZE_KEY(d),
      SPOC_REAL_KEY(sigma_amplitude),
      SPOC_REAL_KEY(g_amplitude),
      SPOC_REAL_KEY(observation_gain),
      SPOC_REAL_KEY(sensor_width),
      SPOC_SIZE_KEY(initial_modes),
      SPOC_REAL_KEY(initial_spread),
      Key{"control_lower",
          [](RunConfig& c, const json& j, const std::string& k) { c.control_lower = as_optional_real(j, k); },
          [](const RunConfig& c) { return optional_json(c.control_lower); }},
      Key{"control_upper",
          [](RunConfig& c, const json& j, const std::string& k) { c.control_upper = as_optional_real(j, k); },
          [](const RunConfig& c) { return optional_json(c.control_upper); }},
      SPOC_SIZE_KEY(S),
      SPOC_REAL_KEY(branch_interval),
      SPOC_ENUM_KEY(filter_mode, kFilterModes),
      SPOC_REAL_KEY(alpha),
      SPOC_SIZE_KEY(n_SGD),
      SPOC_SIZE_KEY(batch),
      SPOC_ENUM_KEY(learning_rate, kLearningRates),
      SPOC_ENUM_KEY(particle_select, kSelects),
      SPOC_ENUM_KEY(rollout_mode, kRollouts),
      SPOC_ENUM_KEY(hxp_mode, kHxpModes),
      SPOC_ENUM_KEY(z2_mode, kZ2Modes),
      SPOC_ENUM_KEY(z2_baseline, kBaselines),
      Key{"warm_start", [](RunConfig& c, const json& j, const std::string& k) { c.warm_start = as_bool(j, k); },
          [](const RunConfig& c) { return json(c.warm_start); }},
      SPOC_SIZE_KEY(cost_samples),
      Key{"seed", [](RunConfig& c, const json& j, const std::string& k) { c.seed = as_unsigned(j, k); },
          [](const RunConfig& c) { return json(c.seed); }},
      Key{"threads",
          [](RunConfig& c, const json& j, const std::string& k) {
            const auto v = as_unsigned(j, k);
            if (v == 0 || v > 1024) throw ConfigError("expected 1..1024 worker threads", k);
            c.threads = static_cast<unsigned>(v);
          },
          [](const RunConfig& c) { return json(c.threads); }},
      Key{"dump_noise", [](RunConfig& c, const json& j, const std::string& k) { c.dump_noise = as_bool(j, k); },
          [](const RunConfig& c) { return json(c.dump_noise); }},
  };
  return table;
}

#undef SPOC_REAL_KEY
#undef SPOC_SIZE_KEY
#undef SPOC_ENUM_KEY

const Key& find_key(std::string_view name) {
  for (const Key& k : keys()) {
    if (name == k.name) return k;
  }
  throw ConfigError("unknown configuration key", std::string(name));
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

bool is_multiple(double interval, double dt) {
  const double ratio = interval / dt;
  const double nearest = std::round(ratio);
  return std::abs(nearest * dt - interval) <= 1e-12 * std::max(1.0, std::abs(interval));
}

}  // namespace

std::size_t RunConfig::n_steps() const { return static_cast<std::size_t>(std::llround(T / dt)); }

std::size_t RunConfig::branch_every() const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(branch_interval / dt)));
}

std::vector<std::string> preset_names() { return {"heat_benchmark", "uncontrolled", "linear_gaussian_test"}; }

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  if (name == "heat_benchmark") return c;
  if (name == "uncontrolled") {
    c.n_SGD = 0;
    return c;
  }
  if (name == "linear_gaussian_test") {
    c.L = 1.0;
    c.T = 0.5;
    c.dt = 0.01;
    c.n_elems = 16;
    c.N_W = 4;
    c.d = 3;
    c.sigma_amplitude = 0.3;
    c.g_amplitude = 0.0;
    c.observation_gain = 4.0;
    c.sensor_width = 0.1;
    c.initial_modes = 3;
    c.initial_spread = 0.5;
    c.S = 200;
    c.branch_interval = 0.05;
    c.n_SGD = 50;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'", "preset");
}

RunConfig parse_config_text(std::string_view json_text, std::string_view base_preset) {
  const json j = parse_json(json_text, "configuration");
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  std::string preset(base_preset);
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("expected a string", "preset");
    preset = j["preset"].get<std::string>();
  }
  RunConfig config = preset_config(preset);
  for (const auto& [key, value] : j.items()) {
    find_key(key).set(config, value, key);
  }
  validate(config);
  return config;
}

RunConfig parse_config_file(const std::filesystem::path& path, std::string_view base_preset) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), base_preset);
}

void apply_override(RunConfig& config, std::string_view key, std::string_view value) {
  const Key& k = find_key(key);
  const std::string name(key);
  if (name == "preset") throw ConfigError("the preset cannot be changed by an override", name);
  json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) parsed = json(std::string(value));
  k.set(config, parsed, name);
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got '" + std::string(assignment) + "'");
  }
  apply_override(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void validate(const RunConfig& c) {
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0)) throw ConfigError("must be positive", key);
  };
  positive(c.L, "L");
  positive(c.dt, "dt");
  if (!(c.T >= 0.0)) throw ConfigError("must be non-negative", "T");
  if (c.n_elems < 2) throw ConfigError("need at least two elements", "n_elems");
  if (c.N_W == 0 || c.N_W > c.n_elems - 1) throw ConfigError("must lie in [1, n_elems - 1]", "N_W");
  if (c.d == 0) throw ConfigError("must be positive", "d");
  if (c.S == 0) throw ConfigError("must be positive", "S");
  if (c.batch == 0) throw ConfigError("must be positive", "batch");
  positive(c.branch_interval, "branch_interval");
  positive(c.sensor_width, "sensor_width");
  if (c.alpha < 0.0) throw ConfigError("must be non-negative", "alpha");
  if (!is_multiple(c.T, c.dt)) throw ConfigError("dt must divide T", "dt");
  if (!is_multiple(c.branch_interval, c.dt)) throw ConfigError("dt must divide the branching interval", "branch_interval");
  if (c.control_lower.has_value() != c.control_upper.has_value()) {
    throw ConfigError("set both bounds of the control box or neither", "control_lower");
  }
  if (c.control_lower && !(*c.control_lower <= *c.control_upper)) {
    throw ConfigError("lower bound exceeds upper bound", "control_lower");
  }
  if (c.preset != "heat_benchmark" && c.preset != "uncontrolled" && c.preset != "linear_gaussian_test") {
    throw ConfigError("unknown preset '" + c.preset + "'", "preset");
  }
}

std::string config_to_json(const RunConfig& config) {
  json j = json::object();
  for (const Key& k : keys()) j[k.name] = k.get(config);
  return j.dump(2);
}

Problem make_problem(const RunConfig& config) {
  validate(config);
  FemOperators ops = FemOperators::assemble(config.L, config.n_elems, config.dt);
  ModelSpec spec;
  if (config.preset == "linear_gaussian_test") {
    LinearGaussianParams p;
    p.d = config.d;
    p.n_w = config.N_W;
    p.sigma_amplitude = config.sigma_amplitude;
    p.observation_gain = config.observation_gain;
    p.sensor_width = config.sensor_width;
    p.initial_modes = config.initial_modes;
    p.initial_spread = config.initial_spread;
    spec = linear_gaussian_test(ops, p);
  } else {
    HeatBenchmarkParams p;
    p.d = config.d;
    p.n_w = config.N_W;
    p.sigma_amplitude = config.sigma_amplitude;
    p.g_amplitude = config.g_amplitude;
    p.observation_gain = config.observation_gain;
    p.sensor_width = config.sensor_width;
    spec = heat_benchmark(ops, p);
    for (std::size_t k = 0; k < std::min(config.initial_modes, ops.dofs()); ++k) {
      spec.initial.modes.push_back(sine_mode(ops, k + 1) * config.initial_spread);
    }
    if (config.initial_spread == 0.0) spec.initial.modes.clear();
  }
  if (config.control_lower) spec.control_set = ControlSet::box(*config.control_lower, *config.control_upper);
  return Problem{config, std::move(ops), std::move(spec)};
}

std::string to_string(FilterMode v) { return enum_name(kFilterModes, v); }
std::string to_string(LearningRate v) { return enum_name(kLearningRates, v); }
std::string to_string(ParticleSelect v) { return enum_name(kSelects, v); }
std::string to_string(RolloutMode v) { return enum_name(kRollouts, v); }
std::string to_string(HxpMode v) { return enum_name(kHxpModes, v); }
std::string to_string(Z2Mode v) { return enum_name(kZ2Modes, v); }
std::string to_string(Z2Baseline v) { return enum_name(kBaselines, v); }

}  // namespace spoc
