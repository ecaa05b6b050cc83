#include "spoc/control.hpp"

#include <algorithm>
#include <cmath>

#include "spoc/errors.hpp"
#include "spoc/forward.hpp"
#include "spoc/noise.hpp"
#include "spoc/parallel.hpp"

namespace spoc {

ControlSchedule zero_schedule(std::size_t start, std::size_t n_total, std::size_t dofs, double alpha) {
  if (start > n_total) throw Error("zero_schedule: start lies beyond the horizon");
  ControlSchedule s;
  s.start = start;
  s.u.assign(n_total - start + 1, Field(dofs));
  s.alpha = alpha;
  return s;
}

ControlSchedule shift_schedule(const ControlSchedule& schedule) {
  if (schedule.u.size() < 2) throw Error("shift_schedule: nothing left to shift");
  ControlSchedule s;
  s.start = schedule.start + 1;
  s.u.assign(schedule.u.begin() + 1, schedule.u.end());
  s.iteration = 0;
  s.alpha = schedule.alpha;
  return s;
}

double schedule_inner(const FemOperators& ops, std::span<const Field> a, std::span<const Field> b) {
  if (a.size() != b.size()) throw ShapeError("schedule_inner: schedules differ in length");
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < a.size(); ++k) s += ops.dt() * ops.inner(a[k], b[k]);
  return s;
}

double schedule_norm(const FemOperators& ops, std::span<const Field> a) {
  return std::sqrt(schedule_inner(ops, a, a));
}

Field gradient_field(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u,
                     const Field& p, std::span<const double> z2) {
  const std::size_t n = ops.dofs();
  if (x.size() != n || u.size() != n || p.size() != n) throw ShapeError("gradient_field: fields not on mesh");

  // M^{-1}[b_u * (M p) + G(l_u)]: the drift term is the transpose of the
  // nodal drift derivative in the L2 pairing, the cost term a load vector.
  // Both share one mass solve.
  Field psi(n);
  std::vector<double> bu(n), w(n);
  spec.drift.eval_du(x.values(), u.values(), bu);
  ops.apply_mass(p.values(), w);
  running_cost_loads(spec, ops, x, u, {}, psi.values());
  for (std::size_t i = 0; i < n; ++i) psi[i] += bu[i] * w[i];
  ops.solve_mass_in_place(psi.values());

  if (!z2.empty() && !spec.h->is_trivial()) {
    if (z2.size() != spec.h->dimension()) throw ShapeError("gradient_field: z2 has wrong dimension");
    spec.h->add_control_gradient(x, u, z2, psi.values());
  }
  return psi;
}

Trajectory rollout(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                   const ControlSchedule& schedule, std::uint64_t seed, std::uint64_t stream,
                   RolloutMode mode, double* log_weight) {
  const std::size_t steps = schedule.u.size() - 1;
  const std::size_t n_w = spec.n_w();
  const std::size_t d = spec.d();
  const double dt = ops.dt();
  const double scale = std::sqrt(dt);

  Trajectory traj;
  traj.dt = dt;
  traj.n_w = n_w;
  traj.d = d;
  traj.x.reserve(steps + 1);
  traj.x.push_back(x_start);
  traj.u.assign(schedule.u.begin(), schedule.u.begin() + static_cast<std::ptrdiff_t>(steps));
  traj.dw.resize(steps * n_w);
  traj.innovation.resize(steps * d);

  StepWorkspace ws(ops.dofs(), d);
  std::vector<double> noise(d);
  double logw = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto t = static_cast<std::uint32_t>(schedule.start + k);
    std::span<double> dw(traj.dw.data() + k * n_w, n_w);
    std::span<double> c(traj.innovation.data() + k * d, d);
    standard_normals(seed, stream, t, Lane::W, dw);
    for (double& v : dw) v *= scale;

    const Field& x = traj.x.back();
    if (mode == RolloutMode::FreshBrownian) {
      standard_normals(seed, stream, t, Lane::B, c);
      for (double& v : c) v *= scale;
    } else {
      standard_normals(seed, stream, t, Lane::Y, noise);
      spec.h->observe(x, traj.u[k], ws.h);
      for (std::size_t j = 0; j < d; ++j) {
        const double dy = scale * noise[j];
        c[j] = dy - dt * ws.h[j];
        logw += ws.h[j] * dy - 0.5 * ws.h[j] * ws.h[j] * dt;
      }
    }
    Field next(ops.dofs());
    advance(spec, ops, x, traj.u[k], dw, c, next, ws);
    check_finite(next, "rollout", schedule.start + k + 1);
    traj.x.push_back(std::move(next));
  }
  if (log_weight) *log_weight = logw;
  return traj;
}

GradientSample trajectory_gradient(const ModelSpec& spec, const FemOperators& ops, const Trajectory& traj,
                                   std::size_t n_nodes, const GradientOptions& options, double weight) {
  const std::size_t steps = traj.n_steps();
  if (n_nodes != steps + 1) throw ShapeError("trajectory_gradient: schedule and trajectory disagree");
  const BsdePath bsde = solve_bsde_z(traj, spec, ops, options.adjoint.z2_baseline);
  const AdjointPath adj = solve_bspde_p(traj, bsde, spec, ops, options.adjoint);

  GradientSample out;
  out.cost = weight * bsde.z[0];
  out.psi.reserve(n_nodes);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto z2 = effective_z2(bsde, adj, k, options.z2_mode);
    Field psi = gradient_field(spec, ops, traj.x[k], traj.u[k], adj.p_bar[k], z2);
    if (weight != 1.0) psi *= weight;
    out.psi.push_back(std::move(psi));
  }
  out.psi.emplace_back(ops.dofs());
  return out;
}

GradientSample sample_gradient(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                               const ControlSchedule& schedule, std::uint64_t seed, std::uint64_t stream,
                               const GradientOptions& options) {
  double logw = 0.0;
  const Trajectory traj = rollout(spec, ops, x_start, schedule, seed, stream, options.rollout, &logw);
  const double weight = options.rollout == RolloutMode::SimulatedY ? std::exp(logw) : 1.0;
  return trajectory_gradient(spec, ops, traj, schedule.u.size(), options, weight);
}

void sgd_step(ControlSchedule& schedule, std::span<const Field> gradient, const ModelSpec& spec,
              double step_size) {
  if (gradient.size() != schedule.u.size()) throw ShapeError("sgd_step: gradient length differs from schedule");
  for (std::size_t k = 0; k < schedule.u.size(); ++k) {
    if (step_size != 0.0) schedule.u[k].axpy(-step_size, gradient[k]);
    spec.control_set.project_in_place(schedule.u[k]);
  }
  ++schedule.iteration;
}

void sgd_step(ControlSchedule& schedule, std::span<const Field> gradient, const ModelSpec& spec) {
  sgd_step(schedule, gradient, spec, schedule.alpha);
}

void inner_sgd(const ModelSpec& spec, const FemOperators& ops, const ParticleCloud& cloud,
               ControlSchedule& schedule, const SgdSettings& settings, std::vector<SgdTraceRow>* trace) {
  if (schedule.u.size() < 2 || settings.n_sgd == 0) return;
  if (cloud.size() == 0) throw Error("inner_sgd: empty particle cloud");
  const std::size_t batch = std::max<std::size_t>(1, settings.batch);
  const auto outer = static_cast<std::uint32_t>(settings.outer);

  double cost_sum = 0.0;
  std::size_t cost_count = 0;
  std::vector<GradientSample> samples(batch);

  for (std::size_t it = 0; it < settings.n_sgd; ++it) {
    GradientOptions options = settings.gradient;
    options.adjoint.z2_baseline =
        settings.baseline == Z2Baseline::RunningMean && cost_count > 0 ? cost_sum / static_cast<double>(cost_count) : 0.0;

    parallel_for(batch, settings.threads, [&](std::size_t b) {
      const double u01 = uniform01(settings.seed, stream_id(Stream::Selection, outer, static_cast<std::uint32_t>(it)),
                                   static_cast<std::uint32_t>(b));
      std::size_t index = 0;
      if (settings.select == ParticleSelect::Weighted) {
        index = sample_index(cloud.normalized, u01);
      } else {
        index = std::min(cloud.size() - 1, static_cast<std::size_t>(u01 * static_cast<double>(cloud.size())));
      }
      const auto stream = stream_id(Stream::Rollout, outer, static_cast<std::uint32_t>(it * batch + b));
      samples[b] = sample_gradient(spec, ops, cloud.positions[index], schedule, settings.seed, stream, options);
    });

    std::vector<Field> grad = std::move(samples[0].psi);
    double cost = samples[0].cost;
    for (std::size_t b = 1; b < batch; ++b) {
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += samples[b].psi[k];
      cost += samples[b].cost;
    }
    if (batch > 1) {
      for (Field& g : grad) g *= 1.0 / static_cast<double>(batch);
      cost /= static_cast<double>(batch);
    }
    for (std::size_t b = 0; b < batch; ++b) cost_sum += samples[b].cost;
    cost_count += batch;

    const double step = settings.learning_rate == LearningRate::Inverse
                            ? schedule.alpha / static_cast<double>(it + 1)
                            : schedule.alpha;
    if (trace) trace->push_back({settings.outer, it, schedule_norm(ops, grad), cost});
    sgd_step(schedule, grad, spec, step);
  }
}

namespace {

double path_cost(const ModelSpec& spec, const FemOperators& ops, const Trajectory& traj) {
  double cost = 0.0;
  for (std::size_t k = 0; k < traj.n_steps(); ++k) cost += ops.dt() * running_cost(spec, ops, traj.x[k], traj.u[k]);
  return cost + terminal_cost(spec, ops, traj.x.back());
}

// Welford's update: a constant sample yields a standard error of exactly zero.
CostEstimate summarize(const std::vector<double>& values) {
  CostEstimate est;
  double ss = 0.0;
  std::size_t count = 0;
  for (double v : values) {
    ++count;
    const double delta = v - est.mean;
    est.mean += delta / static_cast<double>(count);
    ss += delta * (v - est.mean);
  }
  if (count > 1) {
    const auto n = static_cast<double>(count);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

double frozen_sample(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                     const ControlSchedule& base, const ControlSchedule& eval, std::uint64_t seed,
                     std::uint64_t stream) {
  const std::size_t steps = base.u.size() - 1;
  const std::size_t d = spec.d();
  const double dt = ops.dt();
  const double scale = std::sqrt(dt);
  std::vector<double> dw(spec.n_w()), db(d), dy(d), hb(d), he(d), c(d);
  StepWorkspace ws(ops.dofs(), d);
  Field xb = x_start, x = x_start, next(ops.dofs());
  double log_ratio = 0.0;
  double cost = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto t = static_cast<std::uint32_t>(base.start + k);
    standard_normals(seed, stream, t, Lane::W, dw);
    standard_normals(seed, stream, t, Lane::B, db);
    for (double& v : dw) v *= scale;
    for (double& v : db) v *= scale;

    spec.h->observe(xb, base.u[k], hb);
    spec.h->observe(x, eval.u[k], he);
    cost += dt * running_cost(spec, ops, x, eval.u[k]) * std::exp(log_ratio);
    for (std::size_t j = 0; j < d; ++j) {
      dy[j] = hb[j] * dt + db[j];
      log_ratio += (he[j] - hb[j]) * dy[j] - 0.5 * (he[j] * he[j] - hb[j] * hb[j]) * dt;
      c[j] = dy[j] - dt * he[j];
    }
    advance(spec, ops, x, eval.u[k], dw, c, next, ws);
    std::swap(x, next);
    advance(spec, ops, xb, base.u[k], dw, db, next, ws);
    std::swap(xb, next);
    check_finite(x, "frozen-observation replay", base.start + k + 1);
  }
  return cost + terminal_cost(spec, ops, x) * std::exp(log_ratio);
}

}  // namespace

CostEstimate estimate_cost(const ModelSpec& spec, const FemOperators& ops,
                           const std::function<Field(std::size_t)>& start, const ControlSchedule& schedule,
                           std::size_t n_samples, std::uint64_t seed, unsigned threads) {
  if (n_samples == 0) throw ConfigError("need at least one cost sample", "cost_samples");
  std::vector<double> costs(n_samples);
  const auto major = static_cast<std::uint32_t>(schedule.start);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    const auto stream = stream_id(Stream::CostEstimate, major, static_cast<std::uint32_t>(i));
    const Trajectory traj = rollout(spec, ops, start(i), schedule, seed, stream, RolloutMode::FreshBrownian);
    costs[i] = path_cost(spec, ops, traj);
  });
  return summarize(costs);
}

CostEstimate estimate_cost(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                           const ControlSchedule& schedule, std::size_t n_samples, std::uint64_t seed,
                           unsigned threads) {
  return estimate_cost(spec, ops, [&](std::size_t) { return x_start; }, schedule, n_samples, seed, threads);
}

CostEstimate estimate_cost_frozen(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                                  const ControlSchedule& base, const ControlSchedule& eval,
                                  std::size_t n_samples, std::uint64_t seed, unsigned threads) {
  if (n_samples == 0) throw ConfigError("need at least one cost sample", "cost_samples");
  if (base.u.size() != eval.u.size() || base.start != eval.start) {
    throw ShapeError("estimate_cost_frozen: schedules differ in support");
  }
  std::vector<double> costs(n_samples);
  const auto major = static_cast<std::uint32_t>(base.start);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    const auto stream = stream_id(Stream::CostEstimate, major, static_cast<std::uint32_t>(i));
    costs[i] = frozen_sample(spec, ops, x_start, base, eval, seed, stream);
  });
  return summarize(costs);
}

std::vector<Field> mean_gradient_frozen(const ModelSpec& spec, const FemOperators& ops, const Field& x_start,
                                        const ControlSchedule& base, std::size_t n_samples, std::uint64_t seed,
                                        const GradientOptions& options, unsigned threads) {
  if (n_samples == 0) throw ConfigError("need at least one cost sample", "cost_samples");
  std::vector<std::vector<Field>> psi(n_samples);
  const auto major = static_cast<std::uint32_t>(base.start);
  GradientOptions truth_options = options;
  truth_options.rollout = RolloutMode::FreshBrownian;
  parallel_for(n_samples, threads, [&](std::size_t i) {
    const auto stream = stream_id(Stream::CostEstimate, major, static_cast<std::uint32_t>(i));
    psi[i] = sample_gradient(spec, ops, x_start, base, seed, stream, truth_options).psi;
  });
  std::vector<Field> mean = std::move(psi[0]);
  for (std::size_t i = 1; i < n_samples; ++i) {
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += psi[i][k];
  }
  for (Field& f : mean) f *= 1.0 / static_cast<double>(n_samples);
  return mean;
}

}  // namespace spoc
