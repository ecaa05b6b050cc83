#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spoc/adjoint.hpp"
#include "spoc/fem.hpp"
#include "spoc/field.hpp"
#include "spoc/filter.hpp"
#include "spoc/model.hpp"

namespace spoc {

/// How the inner loop simulates the future on (t_n, T].
enum class RolloutMode {
  FreshBrownian,  // truth dynamics under fresh (dW, dB)
  SimulatedY,     // particle dynamics under a fresh Brownian Y, weighted by rho_T
};

enum class ParticleSelect { Weighted, Uniform };
enum class LearningRate { Constant, Inverse };
enum class Z2Baseline { None, RunningMean };

/// Conditional control u_{t_k} | t_n for k = start..N_T.
struct ControlSchedule {
  std::size_t start = 0;
  std::vector<Field> u;
  std::size_t iteration = 0;
  double alpha = 0.0;

  std::size_t end() const noexcept { return start + u.size() - 1; }  // N_T
  const Field& at(std::size_t k) const { return u.at(k - start); }
  Field& at(std::size_t k) { return u.at(k - start); }
};

ControlSchedule zero_schedule(std::size_t start, std::size_t n_total, std::size_t dofs, double alpha);
/// Drops the first entry: the warm start for the next outer step.
ControlSchedule shift_schedule(const ControlSchedule& schedule);

/// Schedule pairing sum_{k<N} dt <a_k, b_k>; the last node carries no weight
/// because u_N never acts on the state.
double schedule_inner(const FemOperators& ops, std::span<const Field> a, std::span<const Field> b);
double schedule_norm(const FemOperators& ops, std::span<const Field> a);

/// psi = M^{-1}(b_u * M p) + L_u + sum_j z2^j h_u^j, the L2 representer of the
/// control derivative of the Hamiltonian.
Field gradient_field(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u,
                     const Field& p, std::span<const double> z2);

/// Draws one future realization from `x_start` at time index schedule.start
/// under `schedule`. Noise comes from (seed, stream) with absolute time steps
/// as counters. `log_weight` receives log rho_T in SimulatedY mode (0 otherwise).
Trajectory rollout(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                   const ControlSchedule& schedule, std::uint64_t seed, std::uint64_t stream,
                   RolloutMode mode, double* log_weight = nullptr);

struct GradientOptions {
  RolloutMode rollout = RolloutMode::FreshBrownian;
  AdjointOptions adjoint;
  Z2Mode z2_mode = Z2Mode::Shifted;
};

struct GradientSample {
  std::vector<Field> psi;  // one per schedule node; psi at N_T is zero
  double cost = 0.0;       // realized cost of the rollout (weighted in SimulatedY mode)
};

/// Gradient of the cost along one trajectory (forward sweep, z, p, psi).
GradientSample trajectory_gradient(const ModelSpec& spec, const FemOperators& ops, const Trajectory& traj,
                                   std::size_t n_nodes, const GradientOptions& options, double weight = 1.0);

/// One stochastic gradient: rollout + backward sweep + psi at every step.
GradientSample sample_gradient(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                               const ControlSchedule& schedule, std::uint64_t seed, std::uint64_t stream,
                               const GradientOptions& options);

/// u_k <- project_U(u_k - step * psi_k) for every k; increments the iteration.
void sgd_step(ControlSchedule& schedule, std::span<const Field> gradient, const ModelSpec& spec,
              double step_size);
void sgd_step(ControlSchedule& schedule, std::span<const Field> gradient, const ModelSpec& spec);

struct SgdSettings {
  std::size_t n_sgd = 0;
  std::size_t batch = 1;
  LearningRate learning_rate = LearningRate::Constant;
  ParticleSelect select = ParticleSelect::Weighted;
  Z2Baseline baseline = Z2Baseline::None;
  GradientOptions gradient;
  std::uint64_t seed = 0;
  std::size_t outer = 0;  // index n of the outer step, namespaces the streams
  unsigned threads = 1;
};

struct SgdTraceRow {
  std::size_t outer = 0;
  std::size_t iteration = 0;
  double grad_norm = 0.0;
  double rollout_cost = 0.0;
};

/// Algorithm steps (i)-(iv) repeated n_sgd times: pick a particle, simulate
/// one future, solve z then p backward, evaluate psi, take an SGD step.
void inner_sgd(const ModelSpec& spec, const FemOperators& ops, const ParticleCloud& cloud,
               ControlSchedule& schedule, const SgdSettings& settings,
               std::vector<SgdTraceRow>* trace = nullptr);

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo mean and standard error of sum_k dt L(x_k, u_k) + integral m(x_N)
/// over independent truth simulations from `start(i)` at schedule.start.
CostEstimate estimate_cost(const ModelSpec& spec, const FemOperators& ops,
                           const std::function<Field(std::size_t)>& start, const ControlSchedule& schedule,
                           std::size_t n_samples, std::uint64_t seed, unsigned threads = 1);
CostEstimate estimate_cost(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                           const ControlSchedule& schedule, std::size_t n_samples, std::uint64_t seed,
                           unsigned threads = 1);

/// Cost of `eval` with the observation path frozen at the one generated by
/// `base`. Each sample draws (dW, dB), builds Y from the base schedule's
/// truth trajectory, replays the particle dynamics under `eval` against that
/// Y and weights time-locally by the likelihood ratio of the two schedules.
/// Unbiased for the cost of `eval`; at eval = base its per-sample derivative
/// is exactly the psi of the adjoint sweep along the base trajectory.
CostEstimate estimate_cost_frozen(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                                  const ControlSchedule& base, const ControlSchedule& eval,
                                  std::size_t n_samples, std::uint64_t seed, unsigned threads = 1);

/// Mean psi over the same samples that estimate_cost_frozen(base, base) uses.
std::vector<Field> mean_gradient_frozen(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                                        const ControlSchedule& base, std::size_t n_samples, std::uint64_t seed,
                                        const GradientOptions& options, unsigned threads = 1);

}  // namespace spoc
