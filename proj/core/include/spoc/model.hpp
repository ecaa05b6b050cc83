#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spoc/fem.hpp"
#include "spoc/field.hpp"

namespace spoc {

/// A scalar map f(x, u) applied node by node (a Nemytskii operator), with its
/// two partial derivatives. Maps that do not depend on u simply ignore it.
struct Pointwise {
  using Fn = std::function<double(double x, double u)>;
  /// Whole-array form: out[i] = f(x[i], u[i]), with u empty meaning u = 0.
  using BatchFn = std::function<void(std::span<const double> x, std::span<const double> u, std::span<double> out)>;

  Fn value;
  Fn dx;
  Fn du;
  /// Optional array kernels. When set they replace the per-node calls through
  /// `value`/`dx`/`du`, which dominate the cost of a time step otherwise.
  BatchFn value_batch;
  BatchFn dx_batch;
  BatchFn du_batch;
  /// Set when f is constant; enables the fill fast path and lets the adjoint
  /// skip terms whose x-derivative vanishes.
  std::optional<double> constant;

  static Pointwise constant_map(double c);
  static Pointwise make(Fn value, Fn dx, Fn du);

  /// Like make(), but also compiles the three maps into array kernels so the
  /// per-node evaluation is inlined.
  template <class V, class DX, class DU>
  static Pointwise inlined(V value, DX dx, DU du) {
    Pointwise p = make(value, dx, du);
    p.value_batch = batch(value);
    p.dx_batch = batch(dx);
    p.du_batch = batch(du);
    return p;
  }

  bool has_x_dependence() const noexcept { return !constant.has_value(); }

  void eval(std::span<const double> x, std::span<const double> u, std::span<double> out) const;
  void eval_dx(std::span<const double> x, std::span<const double> u, std::span<double> out) const;
  void eval_du(std::span<const double> x, std::span<const double> u, std::span<double> out) const;

 private:
  template <class F>
  static BatchFn batch(F f) {
    return [f](std::span<const double> x, std::span<const double> u, std::span<double> out) {
      const std::size_t n = x.size();
      if (u.empty()) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], 0.0);
      } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], u[i]);
      }
    };
  }
};

/// One noise channel: a pointwise amplitude a(x) times a fixed spatial
/// direction, so the channel contributes a(x(l)) * direction(l) * dW.
struct NoiseChannel {
  Pointwise amplitude;
  Field direction;
};

/// Finite-dimensional observation functional h : (x, u) -> R^d together with
/// the L2 representers of its Frechet derivatives.
class ObservationMap {
 public:
  virtual ~ObservationMap() = default;

  virtual std::size_t dimension() const noexcept = 0;
  virtual void observe(const Field& x, const Field& u, std::span<double> out) const = 0;
  /// Fills hx[j], hu[j] with the representers of dh^j/dx and dh^j/du.
  virtual void gradient(const Field& x, const Field& u, std::vector<Field>& hx,
                        std::vector<Field>& hu) const = 0;
  /// out += sum_j weights[j] * hx[j], without materializing the representers.
  virtual void add_state_gradient(const Field& x, const Field& u, std::span<const double> weights,
                                  std::span<double> out) const;
  /// out += sum_j weights[j] * hu[j].
  virtual void add_control_gradient(const Field& x, const Field& u, std::span<const double> weights,
                                    std::span<double> out) const;
  /// Uniform bound on |h^j|; infinity when h is unbounded.
  virtual double bound() const noexcept { return std::numeric_limits<double>::infinity(); }
  /// True if h is identically zero (lets the pipeline drop observation terms).
  virtual bool is_trivial() const noexcept { return false; }
};

/// h^j(x, u) = gain * link(<cx*x + cu*u, s_j>) for fixed sensor fields s_j.
/// The link is either arctan (bounded) or the identity (linear observations).
class ProjectionObservation final : public ObservationMap {
 public:
  enum class Link { Arctan, Identity };

  ProjectionObservation(const FemOperators& ops, std::vector<Field> sensors, Link link,
                        double gain, double x_coefficient, double u_coefficient);

  std::size_t dimension() const noexcept override { return sensors_.size(); }
  void observe(const Field& x, const Field& u, std::span<double> out) const override;
  void gradient(const Field& x, const Field& u, std::vector<Field>& hx,
                std::vector<Field>& hu) const override;
  void add_state_gradient(const Field& x, const Field& u, std::span<const double> weights,
                          std::span<double> out) const override;
  void add_control_gradient(const Field& x, const Field& u, std::span<const double> weights,
                            std::span<double> out) const override;
  double bound() const noexcept override;
  bool is_trivial() const noexcept override { return gain_ == 0.0 || sensors_.empty(); }

  const std::vector<Field>& sensors() const noexcept { return sensors_; }
  /// The inner products <cx*x + cu*u, s_j> that feed the link.
  void arguments(const Field& x, const Field& u, std::span<double> out) const;

 private:
  void add_weighted_sensors(const Field& x, const Field& u, std::span<const double> weights, double coefficient,
                            std::span<double> out) const;

  std::vector<Field> sensors_;
  std::vector<Field> weighted_;  // M s_j, so pairings are plain dot products
  Link link_;
  double gain_;
  double cx_;
  double cu_;
};

/// Metric projection onto the admissible control set: either the whole space
/// or a nodewise box [lower, upper].
class ControlSet {
 public:
  ControlSet() = default;
  static ControlSet box(double lower, double upper);

  bool is_unconstrained() const noexcept { return !bounded_; }
  Field project(Field u) const;
  void project_in_place(Field& u) const;
  bool contains(const Field& u) const;

 private:
  bool bounded_ = false;
  double lower_ = 0.0;
  double upper_ = 0.0;
};

/// Initial law x0 = mean + sum_i xi_i * modes[i] with xi_i standard normal.
/// An empty mode list makes the initial condition deterministic.
struct InitialLaw {
  Field mean;
  std::vector<Field> modes;

  bool is_deterministic() const noexcept { return modes.empty(); }
  Field sample(std::span<const double> standard_normals) const;
};

/// Full coefficient set of the controlled state equation
///   dx = [Laplacian x + b(x,u)] dt + sigma^i(x) e_i dW^i + g^j(x) dB^j,
/// the observation map, the cost integrands and the admissible set.
struct ModelSpec {
  std::string name;
  Pointwise drift;                                 // b(x, u)
  std::vector<NoiseChannel> sigma;                 // N_W cylindrical channels
  std::vector<NoiseChannel> g;                     // d channels shared with the observation noise
  std::shared_ptr<const ObservationMap> h;         // dimension d
  Pointwise running;                               // l(x, u)
  Pointwise terminal;                              // m(x), u ignored
  ControlSet control_set;
  InitialLaw initial;

  std::size_t d() const noexcept { return g.size(); }
  std::size_t n_w() const noexcept { return sigma.size(); }
  bool sigma_is_additive() const noexcept;
  bool g_is_zero() const noexcept;
};

/// Pure-sine Dirichlet eigenfunction sqrt(2/L) sin(k pi l / L) on the mesh.
Field sine_mode(const FemOperators& ops, std::size_t k);

/// Unit-L2-norm Gaussian bump centred at `centre` with standard deviation `width`.
Field gaussian_sensor(const FemOperators& ops, double centre, double width);

struct HeatBenchmarkParams {
  std::size_t d = 5;
  std::size_t n_w = 50;
  double sigma_amplitude = 0.05;
  double g_amplitude = 0.03;
  double observation_gain = 1.0;
  double sensor_width = 0.5;
};

/// Controlled stochastic heat equation: b = u, additive cylindrical noise,
/// g^j = g_amplitude (x + 1) e_j, h^j = arctan(<x + u, s_j>), l = (x^2 + u^2)/2,
/// m = x^2/2 and x0 = sin(pi l / L).
ModelSpec heat_benchmark(const FemOperators& ops, const HeatBenchmarkParams& params = {});

struct LinearGaussianParams {
  std::size_t d = 3;
  std::size_t n_w = 4;
  double sigma_amplitude = 0.3;
  double observation_gain = 4.0;
  double sensor_width = 0.1;
  std::size_t initial_modes = 3;
  double initial_spread = 0.5;
};

/// Linear model with Gaussian initial law: b = u, additive noise, g = 0 and
/// linear observations h^j = gain <x, s_j>. Its filter is exactly Kalman.
ModelSpec linear_gaussian_test(const FemOperators& ops, const LinearGaussianParams& params = {});

/// Nodewise f(x_i, u_i).
Field apply_nemytskii(const Pointwise& f, const Field& x, const Field& u);

std::vector<double> observe(const ModelSpec& spec, const Field& x, const Field& u);

struct ObservationGradient {
  std::vector<Field> hx;
  std::vector<Field> hu;
};
ObservationGradient observation_gradient(const ModelSpec& spec, const Field& x, const Field& u);

/// Integral of l(x, u) over the domain, two-point Gauss quadrature per element.
double running_cost(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u);
/// Integral of m(x) over the domain.
double terminal_cost(const ModelSpec& spec, const FemOperators& ops, const Field& x);

/// L2 representers of the derivatives of the integrated costs, i.e. the fields
/// r with d/de cost(x + e v) = <r, v>.
Field running_cost_dx(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u);
Field running_cost_du(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u);
Field terminal_cost_dx(const ModelSpec& spec, const FemOperators& ops, const Field& x);

/// Load-vector forms G_i = integral of l_x phi_i (resp. l_u phi_i); the
/// representers above are M^{-1} G. An empty output span skips that partial.
void running_cost_loads(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u,
                        std::span<double> load_x, std::span<double> load_u);

struct DerivativeReport {
  std::string worst_term;
  double worst_relative_error = 0.0;
};

/// Compares every supplied derivative against central differences of its
/// primitive on randomized probes. Throws ConfigError when the worst relative
/// error exceeds `tolerance`.
DerivativeReport validate_model(const ModelSpec& spec, const FemOperators& ops,
                                std::uint64_t seed, double tolerance = 1e-5);

}  // namespace spoc
