#include "spoc/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "spoc/errors.hpp"

namespace spoc {

Pointwise Pointwise::constant_map(double c) {
  Pointwise p;
  p.value = [c](double, double) { return c; };
  p.dx = [](double, double) { return 0.0; };
  p.du = [](double, double) { return 0.0; };
  p.constant = c;
  return p;
}

Pointwise Pointwise::make(Fn value, Fn dx, Fn du) {
  Pointwise p;
  p.value = std::move(value);
  p.dx = std::move(dx);
  p.du = du ? std::move(du) : Fn([](double, double) { return 0.0; });
  return p;
}

namespace {

void eval_with(const Pointwise::Fn& f, const Pointwise::BatchFn& batch, std::optional<double> fill_value,
               std::span<const double> x, std::span<const double> u, std::span<double> out) {
  if (x.size() != out.size() || (!u.empty() && u.size() != x.size())) {
    throw ShapeError("Pointwise: argument sizes differ");
  }
  if (fill_value) {
    std::fill(out.begin(), out.end(), *fill_value);
    return;
  }
  if (batch) {
    batch(x, u, out);
    return;
  }
  if (u.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], 0.0);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], u[i]);
  }
}

}  // namespace

void Pointwise::eval(std::span<const double> x, std::span<const double> u,
                     std::span<double> out) const {
  eval_with(value, value_batch, constant, x, u, out);
}

void Pointwise::eval_dx(std::span<const double> x, std::span<const double> u,
                        std::span<double> out) const {
  eval_with(dx, dx_batch, constant ? std::optional<double>(0.0) : std::nullopt, x, u, out);
}

void Pointwise::eval_du(std::span<const double> x, std::span<const double> u,
                        std::span<double> out) const {
  eval_with(du, du_batch, constant ? std::optional<double>(0.0) : std::nullopt, x, u, out);
}

ProjectionObservation::ProjectionObservation(const FemOperators& ops, std::vector<Field> sensors,
                                             Link link, double gain, double x_coefficient,
                                             double u_coefficient)
    : sensors_(std::move(sensors)), link_(link), gain_(gain), cx_(x_coefficient), cu_(u_coefficient) {
  weighted_.reserve(sensors_.size());
  for (const Field& s : sensors_) {
    if (s.size() != ops.dofs()) throw ShapeError("ProjectionObservation: sensor not on mesh");
    weighted_.push_back(ops.apply_mass(s));
  }
}

void ProjectionObservation::arguments(const Field& x, const Field& u, std::span<double> out) const {
  if (out.size() != sensors_.size()) throw ShapeError("observe: output has wrong dimension");
  for (std::size_t j = 0; j < sensors_.size(); ++j) {
    double a = 0.0;
    if (cx_ != 0.0) a += cx_ * dot(x.values(), weighted_[j].values());
    if (cu_ != 0.0) a += cu_ * dot(u.values(), weighted_[j].values());
    out[j] = a;
  }
}

void ProjectionObservation::observe(const Field& x, const Field& u, std::span<double> out) const {
  arguments(x, u, out);
  for (double& a : out) a = gain_ * (link_ == Link::Arctan ? std::atan(a) : a);
}

void ProjectionObservation::gradient(const Field& x, const Field& u, std::vector<Field>& hx,
                                     std::vector<Field>& hu) const {
  const std::size_t d = sensors_.size();
  std::vector<double> args(d);
  arguments(x, u, args);
  hx.resize(d);
  hu.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double slope = gain_ * (link_ == Link::Arctan ? 1.0 / (1.0 + args[j] * args[j]) : 1.0);
    hx[j] = sensors_[j] * (slope * cx_);
    hu[j] = sensors_[j] * (slope * cu_);
  }
}

void ObservationMap::add_state_gradient(const Field& x, const Field& u, std::span<const double> weights,
                                        std::span<double> out) const {
  std::vector<Field> hx, hu;
  gradient(x, u, hx, hu);
  for (std::size_t j = 0; j < hx.size(); ++j) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[j] * hx[j][i];
  }
}

void ObservationMap::add_control_gradient(const Field& x, const Field& u, std::span<const double> weights,
                                          std::span<double> out) const {
  std::vector<Field> hx, hu;
  gradient(x, u, hx, hu);
  for (std::size_t j = 0; j < hu.size(); ++j) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[j] * hu[j][i];
  }
}

void ProjectionObservation::add_weighted_sensors(const Field& x, const Field& u, std::span<const double> weights,
                                                 double coefficient, std::span<double> out) const {
  const std::size_t d = sensors_.size();
  if (weights.size() != d) throw ShapeError("observation gradient: weights have wrong dimension");
  if (coefficient == 0.0) return;
  std::array<double, 16> small{};
  std::vector<double> large(d > small.size() ? d : 0);
  const std::span<double> args = d <= small.size() ? std::span<double>(small).first(d) : std::span<double>(large);
  arguments(x, u, args);
  for (std::size_t j = 0; j < d; ++j) {
    const double slope = gain_ * (link_ == Link::Arctan ? 1.0 / (1.0 + args[j] * args[j]) : 1.0);
    const double w = weights[j] * slope * coefficient;
    if (w == 0.0) continue;
    const double* s = sensors_[j].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * s[i];
  }
}

void ProjectionObservation::add_state_gradient(const Field& x, const Field& u, std::span<const double> weights,
                                               std::span<double> out) const {
  add_weighted_sensors(x, u, weights, cx_, out);
}

void ProjectionObservation::add_control_gradient(const Field& x, const Field& u,
                                                 std::span<const double> weights, std::span<double> out) const {
  add_weighted_sensors(x, u, weights, cu_, out);
}

double ProjectionObservation::bound() const noexcept {
  if (is_trivial()) return 0.0;
  if (link_ == Link::Arctan) return std::abs(gain_) * std::numbers::pi / 2.0;
  return std::numeric_limits<double>::infinity();
}

ControlSet ControlSet::box(double lower, double upper) {
  if (!(lower <= upper)) throw ConfigError("control box needs lower <= upper", "control_lower");
  ControlSet set;
  set.bounded_ = true;
  set.lower_ = lower;
  set.upper_ = upper;
  return set;
}

Field ControlSet::project(Field u) const {
  project_in_place(u);
  return u;
}

void ControlSet::project_in_place(Field& u) const {
  if (!bounded_) return;
  for (double& v : u.values()) v = std::clamp(v, lower_, upper_);
}

bool ControlSet::contains(const Field& u) const {
  if (!bounded_) return true;
  return std::all_of(u.values().begin(), u.values().end(),
                     [&](double v) { return v >= lower_ && v <= upper_; });
}

Field InitialLaw::sample(std::span<const double> standard_normals) const {
  if (standard_normals.size() < modes.size()) throw ShapeError("InitialLaw: too few normals");
  Field x = mean;
  for (std::size_t i = 0; i < modes.size(); ++i) x.axpy(standard_normals[i], modes[i]);
  return x;
}

bool ModelSpec::sigma_is_additive() const noexcept {
  return std::all_of(sigma.begin(), sigma.end(),
                     [](const NoiseChannel& c) { return c.amplitude.constant.has_value(); });
}

bool ModelSpec::g_is_zero() const noexcept {
  return std::all_of(g.begin(), g.end(), [](const NoiseChannel& c) {
    return c.amplitude.constant.has_value() && *c.amplitude.constant == 0.0;
  });
}

Field sine_mode(const FemOperators& ops, std::size_t k) {
  const double length = ops.mesh().length();
  const double scale = std::sqrt(2.0 / length);
  const double freq = static_cast<double>(k) * std::numbers::pi / length;
  return ops.interpolate([=](double l) { return scale * std::sin(freq * l); });
}

Field gaussian_sensor(const FemOperators& ops, double centre, double width) {
  Field s = ops.interpolate([=](double l) {
    const double r = (l - centre) / width;
    return std::exp(-0.5 * r * r);
  });
  const double norm = ops.norm(s);
  if (!(norm > 0.0)) throw ConfigError("sensor has zero norm on this mesh", "sensor_width");
  return s * (1.0 / norm);
}

namespace {

std::vector<NoiseChannel> additive_channels(const FemOperators& ops, std::size_t count,
                                            double amplitude) {
  std::vector<NoiseChannel> channels;
  channels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    channels.push_back({Pointwise::constant_map(amplitude), sine_mode(ops, i + 1)});
  }
  return channels;
}

std::vector<Field> evenly_spaced_sensors(const FemOperators& ops, std::size_t d, double width) {
  std::vector<Field> sensors;
  const double length = ops.mesh().length();
  for (std::size_t j = 1; j <= d; ++j) {
    sensors.push_back(gaussian_sensor(ops, static_cast<double>(j) * length / static_cast<double>(d + 1), width));
  }
  return sensors;
}

Pointwise half_square_cost() {
  return Pointwise::inlined([](double x, double u) { return 0.5 * (x * x + u * u); },
                            [](double x, double) { return x; }, [](double, double u) { return u; });
}

Pointwise half_square_terminal() {
  return Pointwise::inlined([](double x, double) { return 0.5 * x * x; },
                            [](double x, double) { return x; }, [](double, double) { return 0.0; });
}

Pointwise control_drift() {
  return Pointwise::inlined([](double, double u) { return u; }, [](double, double) { return 0.0; },
                            [](double, double) { return 1.0; });
}

}  // namespace

ModelSpec heat_benchmark(const FemOperators& ops, const HeatBenchmarkParams& params) {
  if (params.d == 0) throw ConfigError("observation dimension must be positive", "d");
  if (params.n_w == 0 || params.n_w > ops.dofs()) {
    throw ConfigError("N_W must lie in [1, n_elems - 1]", "N_W");
  }
  ModelSpec spec;
  spec.name = "heat_benchmark";
  spec.drift = control_drift();
  spec.sigma = additive_channels(ops, params.n_w, params.sigma_amplitude);

  const double a = params.g_amplitude;
  for (std::size_t j = 0; j < params.d; ++j) {
    Pointwise amp = a == 0.0 ? Pointwise::constant_map(0.0)
                             : Pointwise::inlined([a](double x, double) { return a * (x + 1.0); },
                                                  [a](double, double) { return a; },
                                                  [](double, double) { return 0.0; });
    spec.g.push_back({std::move(amp), sine_mode(ops, j + 1)});
  }
  spec.h = std::make_shared<ProjectionObservation>(
      ops, evenly_spaced_sensors(ops, params.d, params.sensor_width),
      ProjectionObservation::Link::Arctan, params.observation_gain, 1.0, 1.0);
  spec.running = half_square_cost();
  spec.terminal = half_square_terminal();
  const double length = ops.mesh().length();
  spec.initial.mean = ops.interpolate([=](double l) { return std::sin(std::numbers::pi * l / length); });
  return spec;
}

ModelSpec linear_gaussian_test(const FemOperators& ops, const LinearGaussianParams& params) {
  if (params.d == 0) throw ConfigError("observation dimension must be positive", "d");
  if (params.n_w == 0 || params.n_w > ops.dofs()) {
    throw ConfigError("N_W must lie in [1, n_elems - 1]", "N_W");
  }
  ModelSpec spec;
  spec.name = "linear_gaussian_test";
  spec.drift = control_drift();
  spec.sigma = additive_channels(ops, params.n_w, params.sigma_amplitude);
  for (std::size_t j = 0; j < params.d; ++j) {
    spec.g.push_back({Pointwise::constant_map(0.0), sine_mode(ops, j + 1)});
  }
  spec.h = std::make_shared<ProjectionObservation>(
      ops, evenly_spaced_sensors(ops, params.d, params.sensor_width),
      ProjectionObservation::Link::Identity, params.observation_gain, 1.0, 0.0);
  spec.running = half_square_cost();
  spec.terminal = half_square_terminal();
  spec.initial.mean = sine_mode(ops, 1) * 0.5;
  for (std::size_t k = 0; k < std::min(params.initial_modes, ops.dofs()); ++k) {
    spec.initial.modes.push_back(sine_mode(ops, k + 1) * params.initial_spread);
  }
  return spec;
}

Field apply_nemytskii(const Pointwise& f, const Field& x, const Field& u) {
  require_same_size(x, u, "apply_nemytskii");
  Field out(x.size());
  f.eval(x.values(), u.values(), out.values());
  return out;
}

std::vector<double> observe(const ModelSpec& spec, const Field& x, const Field& u) {
  std::vector<double> out(spec.h->dimension());
  spec.h->observe(x, u, out);
  return out;
}

ObservationGradient observation_gradient(const ModelSpec& spec, const Field& x, const Field& u) {
  ObservationGradient grad;
  spec.h->gradient(x, u, grad.hx, grad.hu);
  return grad;
}

namespace {

enum class Partial { Value, Dx, Du };

// Gauss-point buffers are reused per thread: the cost integrals run several
// times per time step, and fresh zero-filled vectors showed up in profiles.
std::span<double> quadrature_scratch(std::size_t size) {
  thread_local std::vector<double> buffer;
  if (buffer.size() < size) buffer.resize(size);
  return {buffer.data(), size};
}

/// Samples of f (or one partial) at the Gauss points; returns a view into the
/// per-thread scratch that stays valid until the next call.
std::span<const double> gauss_samples(const Pointwise& f, Partial which, const FemOperators& ops,
                                      const Field& x, const Field* u) {
  const std::size_t q = ops.quadrature_points();
  const std::span<double> buf = quadrature_scratch(3 * q);
  const std::span<double> xq = buf.subspan(0, q), out = buf.subspan(2 * q, q);
  std::span<double> uq;
  ops.trace(x.values(), xq);
  if (u) {
    uq = buf.subspan(q, q);
    ops.trace(u->values(), uq);
  }
  switch (which) {
    case Partial::Value: f.eval(xq, uq, out); break;
    case Partial::Dx: f.eval_dx(xq, uq, out); break;
    case Partial::Du: f.eval_du(xq, uq, out); break;
  }
  return out;
}

Field representer(const FemOperators& ops, std::span<const double> samples) {
  Field r(ops.dofs());
  ops.load(samples, r.values());
  ops.solve_mass_in_place(r.values());
  return r;
}

}  // namespace

double running_cost(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u) {
  return ops.integrate(gauss_samples(spec.running, Partial::Value, ops, x, &u));
}

double terminal_cost(const ModelSpec& spec, const FemOperators& ops, const Field& x) {
  return ops.integrate(gauss_samples(spec.terminal, Partial::Value, ops, x, nullptr));
}

Field running_cost_dx(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u) {
  return representer(ops, gauss_samples(spec.running, Partial::Dx, ops, x, &u));
}

Field running_cost_du(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u) {
  return representer(ops, gauss_samples(spec.running, Partial::Du, ops, x, &u));
}

Field terminal_cost_dx(const ModelSpec& spec, const FemOperators& ops, const Field& x) {
  return representer(ops, gauss_samples(spec.terminal, Partial::Dx, ops, x, nullptr));
}

void running_cost_loads(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u,
                        std::span<double> load_x, std::span<double> load_u) {
  const std::size_t q = ops.quadrature_points();
  const std::span<double> buf = quadrature_scratch(3 * q);
  const std::span<double> xq = buf.subspan(0, q), uq = buf.subspan(q, q), fq = buf.subspan(2 * q, q);
  ops.trace(x.values(), xq);
  ops.trace(u.values(), uq);
  if (!load_x.empty()) {
    spec.running.eval_dx(xq, uq, fq);
    ops.load(fq, load_x);
  }
  if (!load_u.empty()) {
    spec.running.eval_du(xq, uq, fq);
    ops.load(fq, load_u);
  }
}

namespace {

class DerivativeChecker {
 public:
  explicit DerivativeChecker(double eps) : eps_(eps) {}

  void compare(const std::string& term, double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / scale;
    if (rel > report.worst_relative_error) {
      report.worst_relative_error = rel;
      report.worst_term = term;
    }
  }

  void pointwise(const std::string& name, const Pointwise& f, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 16; ++trial) {
      const double x = normal(rng), u = normal(rng);
      compare(name + "_x", f.dx(x, u), (f.value(x + eps_, u) - f.value(x - eps_, u)) / (2 * eps_));
      compare(name + "_u", f.du(x, u), (f.value(x, u + eps_) - f.value(x, u - eps_)) / (2 * eps_));
    }
  }

  double eps() const { return eps_; }
  DerivativeReport report;

 private:
  double eps_;
};

Field random_field(const FemOperators& ops, std::mt19937_64& rng) {
  // A few smooth modes keep the probes in the regime the solver actually sees.
  std::normal_distribution<double> normal;
  Field f(ops.dofs());
  for (std::size_t k = 1; k <= 4; ++k) f.axpy(normal(rng) / static_cast<double>(k), sine_mode(ops, k));
  return f;
}

}  // namespace

DerivativeReport validate_model(const ModelSpec& spec, const FemOperators& ops, std::uint64_t seed,
                                double tolerance) {
  std::mt19937_64 rng(seed);
  DerivativeChecker check(1e-5);
  const double eps = check.eps();

  check.pointwise("b", spec.drift, rng);
  for (std::size_t i = 0; i < spec.sigma.size(); ++i) {
    check.pointwise("sigma" + std::to_string(i), spec.sigma[i].amplitude, rng);
  }
  for (std::size_t j = 0; j < spec.g.size(); ++j) {
    check.pointwise("g" + std::to_string(j), spec.g[j].amplitude, rng);
  }
  check.pointwise("l", spec.running, rng);
  check.pointwise("m", spec.terminal, rng);

  for (int trial = 0; trial < 4; ++trial) {
    const Field x = random_field(ops, rng);
    const Field u = random_field(ops, rng);
    const Field dx = random_field(ops, rng);
    const Field du = random_field(ops, rng);

    const auto grad = observation_gradient(spec, x, u);
    const auto hp_x = observe(spec, x + eps * dx, u);
    const auto hm_x = observe(spec, x - eps * dx, u);
    const auto hp_u = observe(spec, x, u + eps * du);
    const auto hm_u = observe(spec, x, u - eps * du);
    for (std::size_t j = 0; j < grad.hx.size(); ++j) {
      check.compare("h_x" + std::to_string(j), ops.inner(grad.hx[j], dx), (hp_x[j] - hm_x[j]) / (2 * eps));
      check.compare("h_u" + std::to_string(j), ops.inner(grad.hu[j], du), (hp_u[j] - hm_u[j]) / (2 * eps));
    }

    check.compare("L_x", ops.inner(running_cost_dx(spec, ops, x, u), dx),
                  (running_cost(spec, ops, x + eps * dx, u) - running_cost(spec, ops, x - eps * dx, u)) / (2 * eps));
    check.compare("L_u", ops.inner(running_cost_du(spec, ops, x, u), du),
                  (running_cost(spec, ops, x, u + eps * du) - running_cost(spec, ops, x, u - eps * du)) / (2 * eps));
    check.compare("m_x", ops.inner(terminal_cost_dx(spec, ops, x), dx),
                  (terminal_cost(spec, ops, x + eps * dx) - terminal_cost(spec, ops, x - eps * dx)) / (2 * eps));
  }

  if (check.report.worst_relative_error > tolerance) {
    throw ConfigError("derivative of '" + check.report.worst_term + "' disagrees with finite differences (relative error " +
                          std::to_string(check.report.worst_relative_error) + ")",
                      "preset");
  }
  return check.report;
}

}  // namespace spoc
