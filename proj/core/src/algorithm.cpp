#include "spoc/algorithm.hpp"

#include <algorithm>
#include <chrono>

#include "spoc/errors.hpp"
#include "spoc/filter.hpp"
#include "spoc/forward.hpp"

namespace spoc {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

FilterTraceRow filter_row(const ParticleCloud& cloud, const Field& truth, const Field& mode1,
                          const FemOperators& ops, std::size_t step, bool branched, const Field& mean) {
  FilterTraceRow row;
  row.step = step;
  row.t = static_cast<double>(step) * ops.dt();
  row.ess = cloud.effective_sample_size();
  const auto [lo, hi] = std::minmax_element(cloud.normalized.begin(), cloud.normalized.end());
  row.min_weight = *lo;
  row.max_weight = *hi;
  row.branched = branched;
  row.posterior_mode1 = ops.inner(mean, mode1);
  row.truth_mode1 = ops.inner(truth, mode1);
  row.posterior_norm = ops.norm(mean);
  row.truth_norm = ops.norm(truth);
  return row;
}

}  // namespace

RunReport run_algorithm1(const Problem& problem, const RunHooks& hooks) {
  const auto t_start = Clock::now();
  const RunConfig& cfg = problem.config;
  const ModelSpec& spec = problem.spec;
  const FemOperators& ops = problem.ops;
  const std::size_t N = cfg.n_steps();
  const std::size_t n_dof = ops.dofs();
  const double dt = ops.dt();

  RunReport report;
  report.config = cfg;

  NoisePath truth_noise;
  if (N > 0) {
    truth_noise = sample_path(cfg.seed, stream_id(Stream::Truth), N, spec.n_w(), spec.d(), dt);
    if (hooks.truth_noise) hooks.truth_noise(truth_noise);
  }
  if (cfg.dump_noise) {
    report.truth_dw = truth_noise.dw;
    report.truth_db = truth_noise.db;
  }

  Field x = spec.initial.mean;
  if (!spec.initial.is_deterministic()) {
    std::vector<double> xi(spec.initial.modes.size());
    standard_normals(cfg.seed, stream_id(Stream::Initial, 0, 0), 0, Lane::Aux, xi);
    x = spec.initial.sample(xi);
  }
  ParticleCloud cloud = init_cloud(cfg.S, spec, cfg.seed);
  const Field mode1 = sine_mode(ops, 1);

  SgdSettings sgd;
  sgd.n_sgd = cfg.n_SGD;
  sgd.batch = cfg.batch;
  sgd.learning_rate = cfg.learning_rate;
  sgd.select = cfg.particle_select;
  sgd.baseline = cfg.z2_baseline;
  sgd.gradient.rollout = cfg.rollout_mode;
  sgd.gradient.adjoint.hxp_mode = cfg.hxp_mode;
  sgd.gradient.z2_mode = cfg.z2_mode;
  sgd.seed = cfg.seed;
  sgd.threads = cfg.threads;

  StepWorkspace ws(n_dof, spec.d());
  std::vector<double> h(spec.d()), dy(spec.d());
  ControlSchedule schedule = zero_schedule(0, N, n_dof, cfg.alpha);
  const std::size_t branch_every = cfg.branch_every();

  report.truth.push_back(x);
  Field mean = posterior_mean(cloud);
  report.posterior_means.push_back(mean);
  report.filter_trace.push_back(filter_row(cloud, x, mode1, ops, 0, false, mean));

  for (std::size_t n = 0; n <= N; ++n) {
    if (n > 0) {
      schedule = cfg.warm_start ? shift_schedule(schedule) : zero_schedule(n, N, n_dof, cfg.alpha);
    }

    const auto t_sgd = Clock::now();
    sgd.outer = n;
    inner_sgd(spec, ops, cloud, schedule, sgd, &report.sgd_trace);
    report.sgd_seconds += seconds_since(t_sgd);
    if (n == 0) report.first_schedule = schedule;
    if (hooks.on_schedule) hooks.on_schedule(n, schedule);

    const Field u_hat = schedule.at(n);
    report.applied_controls.push_back(u_hat);

    if (cfg.cost_samples > 0) {
      const auto picker = [&](std::size_t i) -> Field {
        const double u01 = uniform01(cfg.seed, stream_id(Stream::CostEstimate, static_cast<std::uint32_t>(n),
                                                         static_cast<std::uint32_t>(i)), 0);
        return cloud.positions[sample_index(cloud.normalized, u01)];
      };
      const CostEstimate est = estimate_cost(spec, ops, picker, schedule, cfg.cost_samples, cfg.seed, cfg.threads);
      report.cost_trace.push_back({n, static_cast<double>(n) * dt, est.mean, est.std_error});
    }

    if (n == N) {
      report.realized_cost += terminal_cost(spec, ops, x);
      break;
    }
    report.realized_cost += dt * running_cost(spec, ops, x, u_hat);

    // Truth and observation over [t_n, t_{n+1}).
    spec.h->observe(x, u_hat, h);
    const auto db = truth_noise.db_row(n);
    for (std::size_t j = 0; j < spec.d(); ++j) dy[j] = h[j] * dt + db[j];
    Field next(n_dof);
    advance(spec, ops, x, u_hat, truth_noise.dw_row(n), db, next, ws);
    check_finite(next, "state", n + 1);
    x = std::move(next);

    // Filter update.
    const auto t_filter = Clock::now();
    PropagateOptions prop;
    prop.seed = cfg.seed;
    prop.step = n;
    prop.threads = cfg.threads;
    bool branched = false;
    if (cfg.filter_mode == FilterMode::Branching) {
      propagate_and_weight(cloud, u_hat, dy, spec, ops, prop);
      normalize(cloud);
      if ((n + 1 - cloud.interval_start) % branch_every == 0) {
        branch(cloud, cfg.seed, n + 1);
        branched = true;
      }
    } else {
      // Prior-only cloud: same particle moves, weights never updated.
      const std::vector<double> keep = cloud.log_weights;
      propagate_and_weight(cloud, u_hat, dy, spec, ops, prop);
      cloud.log_weights = keep;
      normalize(cloud);
    }
    report.filter_seconds += seconds_since(t_filter);

    mean = posterior_mean(cloud);
    report.truth.push_back(x);
    report.posterior_means.push_back(mean);
    report.filter_trace.push_back(filter_row(cloud, x, mode1, ops, n + 1, branched, mean));
  }

  report.wall_seconds = seconds_since(t_start);
  return report;
}

}  // namespace spoc
