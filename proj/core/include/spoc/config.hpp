#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spoc/adjoint.hpp"
#include "spoc/control.hpp"
#include "spoc/fem.hpp"
#include "spoc/model.hpp"

namespace spoc {

enum class FilterMode { Branching, None };

/// Fully resolved run configuration: preset defaults plus overrides.
/// Field names match the JSON keys.
struct RunConfig {
  std::string preset = "heat_benchmark";

  // Discretization.
  double L = 10.0;
  double T = 1.0;
  double dt = 0.01;
  std::size_t n_elems = 400;
  std::size_t N_W = 50;
  std::size_t d = 5;

  // Model coefficients.
  double sigma_amplitude = 0.05;
  double g_amplitude = 0.03;
  double observation_gain = 1.0;
  double sensor_width = 0.5;
  std::size_t initial_modes = 0;
  double initial_spread = 0.0;
  std::optional<double> control_lower;
  std::optional<double> control_upper;

  // Filter.
  std::size_t S = 200;
  double branch_interval = 0.05;
  FilterMode filter_mode = FilterMode::Branching;

  // Optimizer.
  double alpha = 0.001;
  std::size_t n_SGD = 1000;
  std::size_t batch = 1;
  LearningRate learning_rate = LearningRate::Constant;
  ParticleSelect particle_select = ParticleSelect::Weighted;
  RolloutMode rollout_mode = RolloutMode::FreshBrownian;
  HxpMode hxp_mode = HxpMode::Adjoint;
  Z2Mode z2_mode = Z2Mode::Shifted;
  Z2Baseline z2_baseline = Z2Baseline::None;
  bool warm_start = true;
  std::size_t cost_samples = 32;

  // Reproducibility and output.
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool dump_noise = false;

  bool operator==(const RunConfig&) const = default;

  std::size_t n_steps() const;          // N_T = T / dt
  std::size_t branch_every() const;     // branch_interval / dt
};

std::vector<std::string> preset_names();
/// Defaults of a named preset; throws ConfigError for unknown names.
RunConfig preset_config(std::string_view name);

/// Parses a JSON object. A "preset" key selects the defaults the remaining
/// keys override; unknown keys and ill-typed values raise ConfigError naming
/// the key. `base_preset` is used when the object has no "preset" key.
RunConfig parse_config_text(std::string_view json_text, std::string_view base_preset = "heat_benchmark");
RunConfig parse_config_file(const std::filesystem::path& path, std::string_view base_preset = "heat_benchmark");

/// Applies key=value. The value is read as JSON when it parses as JSON and
/// as a bare string otherwise, so `hxp_mode=pointwise` and `dt=0.02` both work.
void apply_override(RunConfig& config, std::string_view key, std::string_view value);
void apply_override(RunConfig& config, std::string_view assignment);

/// Throws ConfigError if an invariant is violated (positivity, dt | T, dt | rho).
void validate(const RunConfig& config);

/// Canonical JSON text; parse_config_text(config_to_json(c)) == c.
std::string config_to_json(const RunConfig& config);

/// Everything needed to run: configuration, discretization and model.
struct Problem {
  RunConfig config;
  FemOperators ops;
  ModelSpec spec;
};

Problem make_problem(const RunConfig& config);

std::string to_string(FilterMode v);
std::string to_string(LearningRate v);
std::string to_string(ParticleSelect v);
std::string to_string(RolloutMode v);
std::string to_string(HxpMode v);
std::string to_string(Z2Mode v);
std::string to_string(Z2Baseline v);

}  // namespace spoc
