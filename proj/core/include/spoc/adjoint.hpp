#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spoc/fem.hpp"
#include "spoc/field.hpp"
#include "spoc/model.hpp"

namespace spoc {

/// How the term g^j h_x^j p of the adjoint drift is composed.
enum class HxpMode {
  Adjoint,        // r_j <g^j, p>: the transpose of the linearized particle drift
  ScalarPairing,  // g^j <r_j, p>
  Pointwise,      // g^j * r_j * p, node by node
};

/// Which z2 enters the control gradient.
enum class Z2Mode {
  Shifted,  // z2^j - <g^j, p>: the exact derivative of the discrete cost
  Raw,      // z2^j as produced by the martingale estimator
};

/// One forward realization on steps k = 0..K-1 of a (possibly shifted) time
/// grid. `innovation` holds the increments that drive both the g^j terms and
/// the z2 estimator: dB for the truth dynamics, dY - h dt for particles.
struct Trajectory {
  double dt = 0.0;
  std::size_t n_w = 0;
  std::size_t d = 0;
  std::vector<Field> x;            // K + 1 states
  std::vector<Field> u;            // K controls
  std::vector<double> dw;          // K x n_w
  std::vector<double> innovation;  // K x d

  std::size_t n_steps() const noexcept { return x.empty() ? 0 : x.size() - 1; }
  std::span<const double> dw_row(std::size_t k) const { return {dw.data() + k * n_w, n_w}; }
  std::span<const double> innovation_row(std::size_t k) const {
    return {innovation.data() + k * d, d};
  }
};

/// Backward scalar cost-to-go z and its martingale integrands.
struct BsdePath {
  std::vector<double> z;   // K + 1 values, z[K] = integral of m(x_K)
  std::vector<double> z1;  // K x n_w
  std::vector<double> z2;  // K x d
  std::size_t n_w = 0;
  std::size_t d = 0;

  std::span<const double> z2_row(std::size_t k) const { return {z2.data() + k * d, d}; }
  std::span<const double> z1_row(std::size_t k) const { return {z1.data() + k * n_w, n_w}; }
};

/// Backward adjoint state along one trajectory.
///
/// p[k] is the adjoint at t_k; p_bar[k] = (M + dt A)^{-1} M p[k+1] is p[k+1]
/// carried back through the implicit solve and is what the step-k gradient
/// pairs with. g_pairing[k*d + j] = <g^j(x_k), p_bar[k]>.
struct AdjointPath {
  std::size_t d = 0;
  std::vector<Field> p;
  std::vector<Field> p_bar;
  std::vector<double> g_pairing;
  std::vector<Field> q1;  // K x n_w, filled only when requested and sigma is multiplicative
  std::vector<Field> q2;  // K x d, filled only when requested

  std::span<const double> g_pairing_row(std::size_t k) const { return {g_pairing.data() + k * d, d}; }
};

struct AdjointOptions {
  HxpMode hxp_mode = HxpMode::Adjoint;
  /// Subtracted from z_{k+1} in z2 (a control variate; keeps the mean).
  double z2_baseline = 0.0;
  /// Materialize q1/q2 (they are folded into the recursion either way).
  bool keep_integrands = false;
  /// Evaluate the sigma_x q1 pairing even when every sigma^i is constant.
  bool force_q1_term = false;
};

/// z_K = integral m(x_K); z2_k = (z_{k+1} - baseline) c_k / dt, z1_k = z_{k+1} dW_k / dt,
/// z_k = z_{k+1} + dt L(x_k, u_k).
BsdePath solve_bsde_z(const Trajectory& traj, const ModelSpec& spec, const FemOperators& ops,
                      double z2_baseline = 0.0);

/// Discrete adjoint of the semi-implicit scheme. With p~ = p_bar[k] and
/// w = M p~, each step assembles
///   p[k] = p~ + M^{-1}[(dt b_x + sum_i sigma^i_x e_i dW^i + sum_j g^j_x e_j c^j) * w]
///        + dt M^{-1} G(l_x) + dt sum_j (r_j z2^j - [g^j h_x^j p~])
/// where r_j is the representer of h_x^j and the bracket follows `hxp_mode`.
AdjointPath solve_bspde_p(const Trajectory& traj, const BsdePath& bsde, const ModelSpec& spec,
                          const FemOperators& ops, const AdjointOptions& options = {});

/// z2 with the <g^j, p> shift applied according to `mode`.
std::vector<double> effective_z2(const BsdePath& bsde, const AdjointPath& adj, std::size_t k, Z2Mode mode);

/// H = <p, b> + sum_i <q1^i, sigma^i e_i> + sum_j <q2^j, g^j> + L(x, u) + sum_j z2^j h^j.
double hamiltonian(const ModelSpec& spec, const FemOperators& ops, const Field& x, const Field& u,
                   const Field& p, std::span<const Field> q1, std::span<const Field> q2,
                   std::span<const double> z2);

/// min over candidates v of <grad, v - u_hat>. Non-negative at a point that
/// satisfies the variational inequality of the maximum principle.
double pontryagin_residual(const FemOperators& ops, const Field& u_hat,
                           std::span<const Field> candidates, const Field& grad);

/// Same, with the gradient assembled from adjoint values at (x, u_hat).
double pontryagin_residual(const ModelSpec& spec, const FemOperators& ops, const Field& x,
                           const Field& u_hat, std::span<const Field> candidates, const Field& p,
                           std::span<const double> z2);

}  // namespace spoc
