#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "spoc/fem.hpp"
#include "spoc/field.hpp"
#include "spoc/model.hpp"
#include "spoc/noise.hpp"

namespace spoc {

/// Scratch buffers for the steppers so hot loops do not allocate.
class StepWorkspace {
 public:
  explicit StepWorkspace(std::size_t dofs = 0, std::size_t d = 0)
      : rhs(dofs), scratch(dofs), mass_rhs(dofs), h(d), coeff(d) {}

  std::vector<double> rhs;
  std::vector<double> scratch;
  std::vector<double> mass_rhs;
  std::vector<double> h;
  std::vector<double> coeff;
};

/// One semi-implicit Euler step
///   (M + dt A) x_next = M [x + dt b(x,u) + sum_i sigma^i(x) e_i dW^i + sum_j g^j(x) c_j].
/// Both stepping modes reduce to this kernel: the truth uses c_j = dB^j, the
/// particle dynamics use c_j = dY^j - dt h^j(x,u).
void advance(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u,
             std::span<const double> dw_row, std::span<const double> coeff, Field& out,
             StepWorkspace& ws);

/// State equation under the reference measure, driven by (dW, dB).
Field step_truth(const Field& x, const Field& u, std::span<const double> dw_row,
                 std::span<const double> db_row, const ModelSpec& spec, const FemOperators& ops,
                 std::size_t step_index = 0);

/// Particle dynamics driven by the observed increment dY: the correction
/// drift -g h dt and the g dY forcing enter through c_j = dY^j - dt h^j.
Field step_particle(const Field& x, const Field& u, std::span<const double> dw_row,
                    std::span<const double> dy_row, const ModelSpec& spec, const FemOperators& ops,
                    std::size_t step_index = 0);

/// Throws BlowUpError when `x` holds a non-finite entry.
void check_finite(const Field& x, const char* what, std::size_t step,
                  std::optional<std::size_t> particle = std::nullopt);

struct StatePath {
  std::size_t first_step = 0;  // time index of x.front()
  std::vector<Field> x;

  std::size_t n_steps() const noexcept { return x.empty() ? 0 : x.size() - 1; }
};

/// Truth trajectory from x0 at time index `noise`'s first row; controls[k]
/// is applied over the k-th step.
StatePath simulate_truth(const ModelSpec& spec, const FemOperators& ops, const Field& x0,
                         std::span<const Field> controls, const NoisePath& noise,
                         std::size_t first_step = 0);

struct ObservationPath {
  std::size_t d = 0;
  std::size_t n_steps = 0;
  std::vector<double> dy;  // n_steps x d
  std::vector<double> y;   // (n_steps + 1) x d, y[0] = 0

  std::span<const double> dy_row(std::size_t k) const { return {dy.data() + k * d, d}; }
  std::span<const double> y_row(std::size_t k) const { return {y.data() + k * d, d}; }
};

/// dY_k = h(x_k, u_k) dt + dB_k and Y the running sum started at 0.
ObservationPath synthesize_observation(const StatePath& truth, std::span<const Field> controls,
                                       const NoisePath& noise, const ModelSpec& spec);

}  // namespace spoc
