#include "spoc/forward.hpp"

#include "spoc/errors.hpp"

namespace spoc {

void check_finite(const Field& x, const char* what, std::size_t step, std::optional<std::size_t> particle) {
  if (!x.all_finite()) throw BlowUpError(what, step, particle);
}

void advance(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u,
             std::span<const double> dw_row, std::span<const double> coeff, Field& out,
             StepWorkspace& ws) {
  const std::size_t n = ops.dofs();
  if (x.size() != n || u.size() != n) throw ShapeError("advance: state or control not on mesh");
  if (coeff.size() != spec.d()) throw ShapeError("advance: observation-noise row has wrong length");
  if (ws.rhs.size() != n) ws = StepWorkspace(n, spec.d());
  const double dt = ops.dt();

  std::span<double> rhs(ws.rhs);
  std::span<double> scratch(ws.scratch);

  spec.drift.eval(x.values(), u.values(), scratch);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = x[i] + dt * scratch[i];

  add_cylindrical(spec, x.values(), dw_row, rhs, scratch);

  for (std::size_t j = 0; j < spec.d(); ++j) {
    const NoiseChannel& ch = spec.g[j];
    const double c = coeff[j];
    if (c == 0.0 || (ch.amplitude.constant && *ch.amplitude.constant == 0.0)) continue;
    ch.amplitude.eval(x.values(), {}, scratch);
    const double* e = ch.direction.data();
    for (std::size_t i = 0; i < n; ++i) rhs[i] += scratch[i] * e[i] * c;
  }

  if (out.size() != n) out = Field(n);
  ops.apply_mass(rhs, out.values());
  ops.solve_implicit_in_place(out.values());
}

Field step_truth(const Field& x, const Field& u, std::span<const double> dw_row,
                 std::span<const double> db_row, const ModelSpec& spec, const FemOperators& ops,
                 std::size_t step_index) {
  StepWorkspace ws(ops.dofs(), spec.d());
  Field out(ops.dofs());
  advance(spec, ops, x, u, dw_row, db_row, out, ws);
  check_finite(out, "state", step_index);
  return out;
}

Field step_particle(const Field& x, const Field& u, std::span<const double> dw_row,
                    std::span<const double> dy_row, const ModelSpec& spec, const FemOperators& ops,
                    std::size_t step_index) {
  if (dy_row.size() != spec.d()) throw ShapeError("step_particle: dY row has wrong length");
  StepWorkspace ws(ops.dofs(), spec.d());
  spec.h->observe(x, u, ws.h);
  for (std::size_t j = 0; j < spec.d(); ++j) ws.coeff[j] = dy_row[j] - ops.dt() * ws.h[j];
  Field out(ops.dofs());
  const std::vector<double> coeff = ws.coeff;
  advance(spec, ops, x, u, dw_row, coeff, out, ws);
  check_finite(out, "particle", step_index);
  return out;
}

StatePath simulate_truth(const ModelSpec& spec, const FemOperators& ops, const Field& x0,
                         std::span<const Field> controls, const NoisePath& noise,
                         std::size_t first_step) {
  if (controls.size() < noise.n_steps) throw ShapeError("simulate_truth: too few controls");
  StatePath path;
  path.first_step = first_step;
  path.x.reserve(noise.n_steps + 1);
  path.x.push_back(x0);
  StepWorkspace ws(ops.dofs(), spec.d());
  for (std::size_t k = 0; k < noise.n_steps; ++k) {
    Field next(ops.dofs());
    advance(spec, ops, path.x.back(), controls[k], noise.dw_row(k), noise.db_row(k), next, ws);
    check_finite(next, "state", first_step + k + 1);
    path.x.push_back(std::move(next));
  }
  return path;
}

ObservationPath synthesize_observation(const StatePath& truth, std::span<const Field> controls,
                                       const NoisePath& noise, const ModelSpec& spec) {
  const std::size_t steps = truth.n_steps();
  if (noise.n_steps < steps || controls.size() < steps) {
    throw ShapeError("synthesize_observation: path lengths disagree");
  }
  const std::size_t d = spec.d();
  ObservationPath obs;
  obs.d = d;
  obs.n_steps = steps;
  obs.dy.resize(steps * d);
  obs.y.assign((steps + 1) * d, 0.0);
  std::vector<double> h(d);
  for (std::size_t k = 0; k < steps; ++k) {
    spec.h->observe(truth.x[k], controls[k], h);
    const auto db = noise.db_row(k);
    for (std::size_t j = 0; j < d; ++j) {
      obs.dy[k * d + j] = h[j] * noise.dt + db[j];
      obs.y[(k + 1) * d + j] = obs.y[k * d + j] + obs.dy[k * d + j];
    }
  }
  return obs;
}

}  // namespace spoc
