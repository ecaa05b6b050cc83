#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "spoc/config.hpp"
#include "spoc/control.hpp"
#include "spoc/field.hpp"
#include "spoc/noise.hpp"

namespace spoc {

struct CostTraceRow {
  std::size_t outer = 0;
  double t = 0.0;
  double mean = 0.0;       // estimated cost-to-go from the filter at t_n under the optimized schedule
  double std_error = 0.0;
};

struct FilterTraceRow {
  std::size_t step = 0;  // time index after the update
  double t = 0.0;
  double ess = 0.0;
  double min_weight = 0.0;
  double max_weight = 0.0;
  bool branched = false;
  double posterior_mode1 = 0.0;  // <E[x | Y], e_1>
  double truth_mode1 = 0.0;      // <x, e_1>
  double posterior_norm = 0.0;
  double truth_norm = 0.0;
};

struct RunReport {
  RunConfig config;
  std::vector<CostTraceRow> cost_trace;
  std::vector<SgdTraceRow> sgd_trace;
  std::vector<FilterTraceRow> filter_trace;
  std::vector<Field> applied_controls;  // u-hat at t_0..t_N
  std::vector<Field> truth;             // x at t_0..t_N
  std::vector<Field> posterior_means;   // filter mean at t_0..t_N
  ControlSchedule first_schedule;       // optimized schedule at t_0
  double realized_cost = 0.0;           // closed-loop cost of the truth path
  double wall_seconds = 0.0;
  double sgd_seconds = 0.0;
  double filter_seconds = 0.0;
  std::vector<double> truth_dw;         // truth noise, kept when dump_noise is set
  std::vector<double> truth_db;
};

struct RunHooks {
  /// Called once on the pre-drawn truth noise before the loop starts.
  std::function<void(NoisePath&)> truth_noise;
  /// Called after the inner optimization at every outer step.
  std::function<void(std::size_t outer, const ControlSchedule&)> on_schedule;
};

/// The receding-horizon loop: at each t_n optimize the conditional schedule
/// on [t_n, T] by SGD over particle-started rollouts, apply its first entry
/// to the truth, observe, then propagate, weight and periodically branch the
/// particle cloud.
RunReport run_algorithm1(const Problem& problem, const RunHooks& hooks = {});

}  // namespace spoc
