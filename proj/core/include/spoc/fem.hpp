#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "spoc/field.hpp"

namespace spoc {

/// Uniform partition of [0, L]. Boundary nodes carry homogeneous Dirichlet
/// values, so the discrete space has `elements() - 1` degrees of freedom.
class Mesh1D {
 public:
  Mesh1D(double length, std::size_t elements);

  double length() const noexcept { return length_; }
  std::size_t elements() const noexcept { return elements_; }
  std::size_t dofs() const noexcept { return elements_ - 1; }
  double spacing() const noexcept { return length_ / static_cast<double>(elements_); }

  /// Coordinate of mesh node `i` in 0..elements (0 and L are boundary nodes).
  double node(std::size_t i) const noexcept;
  /// Coordinate of degree of freedom `i` (mesh node i + 1).
  double dof_coordinate(std::size_t i) const noexcept { return node(i + 1); }
  std::vector<double> node_coordinates() const;

  bool operator==(const Mesh1D&) const = default;

 private:
  double length_;
  std::size_t elements_;
};

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
class SymmetricTridiagonal {
 public:
  SymmetricTridiagonal() = default;
  SymmetricTridiagonal(std::vector<double> diagonal, std::vector<double> off_diagonal);

  std::size_t size() const noexcept { return diag_.size(); }
  std::span<const double> diagonal() const noexcept { return diag_; }
  std::span<const double> off_diagonal() const noexcept { return off_; }

  /// out = A * in. `in` and `out` must not alias.
  void apply(std::span<const double> in, std::span<double> out) const;
  Field apply(const Field& x) const;
  double quadratic_form(std::span<const double> a, std::span<const double> b) const;

  /// this + s * other
  SymmetricTridiagonal plus_scaled(double s, const SymmetricTridiagonal& other) const;

 private:
  std::vector<double> diag_;
  std::vector<double> off_;
};

/// LDL^T factorization of an SPD tridiagonal matrix; O(n) solves.
class TridiagonalFactor {
 public:
  TridiagonalFactor() = default;
  explicit TridiagonalFactor(const SymmetricTridiagonal& a);

  std::size_t size() const noexcept { return d_.size(); }
  void solve_in_place(std::span<double> rhs) const;

 private:
  std::vector<double> d_;  // pivots
  std::vector<double> l_;  // unit lower bidiagonal multipliers
};

/// Consistent P1 mass and stiffness operators on a uniform mesh together with
/// the factorization of M + dt*A used by the semi-implicit Euler step.
///
/// Immutable after assembly; safe to share across threads.
class FemOperators {
 public:
  /// Constant-coefficient Laplacian.
  static FemOperators assemble(double length, std::size_t elements, double dt);
  /// Divergence-form operator -d/dl(a(l) d/dl) with a(l) sampled at element
  /// midpoints. `diffusivity` must stay bounded away from zero.
  static FemOperators assemble(const Mesh1D& mesh, double dt,
                               const std::function<double(double)>& diffusivity);

  const Mesh1D& mesh() const noexcept { return mesh_; }
  std::size_t dofs() const noexcept { return mesh_.dofs(); }
  double dt() const noexcept { return dt_; }
  const SymmetricTridiagonal& mass() const noexcept { return mass_; }
  const SymmetricTridiagonal& stiffness() const noexcept { return stiffness_; }

  /// Discrete L2 pairing a^T M b.
  double inner(const Field& a, const Field& b) const;
  double norm(const Field& a) const;
  Field apply_mass(const Field& x) const;
  void apply_mass(std::span<const double> in, std::span<double> out) const;

  /// Solves (M + dt*A) x = rhs.
  Field solve_implicit(const Field& rhs) const;
  void solve_implicit_in_place(std::span<double> rhs) const;
  /// Solves M x = rhs; maps a load vector to its L2 Riesz representer.
  Field solve_mass(const Field& rhs) const;
  void solve_mass_in_place(std::span<double> rhs) const;

  Field interpolate(const std::function<double(double)>& f) const;
  Field zeros() const { return Field(dofs()); }

  /// Number of two-point Gauss samples (two per element).
  std::size_t quadrature_points() const noexcept { return 2 * mesh_.elements(); }
  /// Values of the P1 function `x` at every Gauss point, element by element.
  void trace(std::span<const double> x, std::span<double> out) const;
  /// Integral of a function given by its Gauss-point samples.
  double integrate(std::span<const double> samples) const;
  /// Load vector G_i = integral(f * phi_i) for f given at the Gauss points.
  void load(std::span<const double> samples, std::span<double> out) const;

 private:
  FemOperators(Mesh1D mesh, double dt, SymmetricTridiagonal mass, SymmetricTridiagonal stiffness);

  Mesh1D mesh_;
  double dt_;
  SymmetricTridiagonal mass_;
  SymmetricTridiagonal stiffness_;
  TridiagonalFactor implicit_factor_;
  TridiagonalFactor mass_factor_;
};

inline FemOperators assemble(double length, std::size_t elements, double dt) {
  return FemOperators::assemble(length, elements, dt);
}

double inner_product(const Field& a, const Field& b, const FemOperators& ops);
Field solve_implicit(const Field& rhs, const FemOperators& ops);

}  // namespace spoc
