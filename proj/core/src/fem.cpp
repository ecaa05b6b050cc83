#include "spoc/fem.hpp"

#include <cmath>
#include <string>

#include "spoc/errors.hpp"

namespace spoc {
namespace {

// Two-point Gauss rule on the reference element [0, 1].
constexpr double kGaussLeft = 0.21132486540518711775;   // 1/2 - sqrt(3)/6
constexpr double kGaussRight = 0.78867513459481288225;  // 1/2 + sqrt(3)/6

void check_span(std::size_t expected, std::size_t actual, const char* what) {
  if (expected != actual) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) +
                     " entries, got " + std::to_string(actual));
  }
}

}  // namespace

Mesh1D::Mesh1D(double length, std::size_t elements) : length_(length), elements_(elements) {
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw ConfigError("domain length must be positive", "L");
  }
  if (elements < 2) throw ConfigError("need at least two elements", "n_elems");
}

double Mesh1D::node(std::size_t i) const noexcept {
  if (i == elements_) return length_;
  return static_cast<double>(i) * spacing();
}

std::vector<double> Mesh1D::node_coordinates() const {
  std::vector<double> out(elements_ + 1);
  for (std::size_t i = 0; i <= elements_; ++i) out[i] = node(i);
  return out;
}

SymmetricTridiagonal::SymmetricTridiagonal(std::vector<double> diagonal,
                                           std::vector<double> off_diagonal)
    : diag_(std::move(diagonal)), off_(std::move(off_diagonal)) {
  if (!diag_.empty() && off_.size() + 1 != diag_.size()) {
    throw ShapeError("SymmetricTridiagonal: off-diagonal must have n-1 entries");
  }
}

void SymmetricTridiagonal::apply(std::span<const double> in, std::span<double> out) const {
  const std::size_t n = diag_.size();
  check_span(n, in.size(), "SymmetricTridiagonal::apply");
  check_span(n, out.size(), "SymmetricTridiagonal::apply");
  if (n == 0) return;
  if (n == 1) {
    out[0] = diag_[0] * in[0];
    return;
  }
  out[0] = diag_[0] * in[0] + off_[0] * in[1];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    out[i] = off_[i - 1] * in[i - 1] + diag_[i] * in[i] + off_[i] * in[i + 1];
  }
  out[n - 1] = off_[n - 2] * in[n - 2] + diag_[n - 1] * in[n - 1];
}

Field SymmetricTridiagonal::apply(const Field& x) const {
  Field out(x.size());
  apply(x.values(), out.values());
  return out;
}

double SymmetricTridiagonal::quadratic_form(std::span<const double> a,
                                            std::span<const double> b) const {
  const std::size_t n = diag_.size();
  check_span(n, a.size(), "quadratic_form");
  check_span(n, b.size(), "quadratic_form");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * diag_[i] * b[i];
  for (std::size_t i = 0; i + 1 < n; ++i) s += off_[i] * (a[i] * b[i + 1] + a[i + 1] * b[i]);
  return s;
}

SymmetricTridiagonal SymmetricTridiagonal::plus_scaled(double s,
                                                       const SymmetricTridiagonal& other) const {
  if (other.size() != size()) throw ShapeError("plus_scaled: size mismatch");
  std::vector<double> d(diag_), o(off_);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * other.diag_[i];
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s * other.off_[i];
  return {std::move(d), std::move(o)};
}

TridiagonalFactor::TridiagonalFactor(const SymmetricTridiagonal& a) {
  const std::size_t n = a.size();
  const auto diag = a.diagonal();
  const auto off = a.off_diagonal();
  d_.resize(n);
  l_.resize(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    double pivot = diag[i];
    if (i > 0) pivot -= l_[i - 1] * off[i - 1];
    if (!(pivot > 0.0)) throw Error("TridiagonalFactor: matrix is not positive definite");
    d_[i] = pivot;
    if (i + 1 < n) l_[i] = off[i] / pivot;
  }
}

void TridiagonalFactor::solve_in_place(std::span<double> rhs) const {
  const std::size_t n = d_.size();
  check_span(n, rhs.size(), "TridiagonalFactor::solve");
  for (std::size_t i = 1; i < n; ++i) rhs[i] -= l_[i - 1] * rhs[i - 1];
  for (std::size_t i = 0; i < n; ++i) rhs[i] /= d_[i];
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= l_[i] * rhs[i + 1];
}

FemOperators::FemOperators(Mesh1D mesh, double dt, SymmetricTridiagonal mass,
                           SymmetricTridiagonal stiffness)
    : mesh_(mesh),
      dt_(dt),
      mass_(std::move(mass)),
      stiffness_(std::move(stiffness)),
      implicit_factor_(mass_.plus_scaled(dt, stiffness_)),
      mass_factor_(mass_) {}

FemOperators FemOperators::assemble(double length, std::size_t elements, double dt) {
  return assemble(Mesh1D(length, elements), dt, [](double) { return 1.0; });
}

FemOperators FemOperators::assemble(const Mesh1D& mesh, double dt,
                                    const std::function<double(double)>& diffusivity) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive", "dt");
  const std::size_t n = mesh.dofs();
  const double h = mesh.spacing();

  std::vector<double> mass_diag(n, 2.0 * h / 3.0);
  std::vector<double> mass_off(n - 1, h / 6.0);

  // Element e spans nodes e and e+1; dof i is node i+1.
  std::vector<double> a(mesh.elements());
  for (std::size_t e = 0; e < a.size(); ++e) {
    a[e] = diffusivity(0.5 * (mesh.node(e) + mesh.node(e + 1)));
    if (!(a[e] > 0.0)) throw ConfigError("diffusivity must be positive", "diffusivity");
  }
  std::vector<double> stiff_diag(n), stiff_off(n - 1);
  for (std::size_t i = 0; i < n; ++i) stiff_diag[i] = (a[i] + a[i + 1]) / h;
  for (std::size_t i = 0; i + 1 < n; ++i) stiff_off[i] = -a[i + 1] / h;

  return FemOperators(mesh, dt, SymmetricTridiagonal(std::move(mass_diag), std::move(mass_off)),
                      SymmetricTridiagonal(std::move(stiff_diag), std::move(stiff_off)));
}

double FemOperators::inner(const Field& a, const Field& b) const {
  require_same_size(a, b, "inner");
  return mass_.quadratic_form(a.values(), b.values());
}

double FemOperators::norm(const Field& a) const { return std::sqrt(inner(a, a)); }

Field FemOperators::apply_mass(const Field& x) const { return mass_.apply(x); }

void FemOperators::apply_mass(std::span<const double> in, std::span<double> out) const {
  mass_.apply(in, out);
}

Field FemOperators::solve_implicit(const Field& rhs) const {
  Field x = rhs;
  implicit_factor_.solve_in_place(x.values());
  return x;
}

void FemOperators::solve_implicit_in_place(std::span<double> rhs) const {
  implicit_factor_.solve_in_place(rhs);
}

Field FemOperators::solve_mass(const Field& rhs) const {
  Field x = rhs;
  mass_factor_.solve_in_place(x.values());
  return x;
}

void FemOperators::solve_mass_in_place(std::span<double> rhs) const {
  mass_factor_.solve_in_place(rhs);
}

Field FemOperators::interpolate(const std::function<double(double)>& f) const {
  std::vector<double> v(dofs());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(mesh_.dof_coordinate(i));
  return Field(std::move(v));
}

void FemOperators::trace(std::span<const double> x, std::span<double> out) const {
  const std::size_t n = dofs();
  check_span(n, x.size(), "trace");
  check_span(quadrature_points(), out.size(), "trace");
  for (std::size_t e = 0; e < mesh_.elements(); ++e) {
    const double left = e == 0 ? 0.0 : x[e - 1];
    const double right = e == n ? 0.0 : x[e];
    out[2 * e] = left + kGaussLeft * (right - left);
    out[2 * e + 1] = left + kGaussRight * (right - left);
  }
}

double FemOperators::integrate(std::span<const double> samples) const {
  check_span(quadrature_points(), samples.size(), "integrate");
  double s = 0.0;
  for (double v : samples) s += v;
  return 0.5 * mesh_.spacing() * s;
}

void FemOperators::load(std::span<const double> samples, std::span<double> out) const {
  const std::size_t n = dofs();
  check_span(quadrature_points(), samples.size(), "load");
  check_span(n, out.size(), "load");
  const double w = 0.5 * mesh_.spacing();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t e = 0; e < mesh_.elements(); ++e) {
    const double f0 = samples[2 * e];
    const double f1 = samples[2 * e + 1];
    // phi_left = 1 - xi, phi_right = xi on the element.
    if (e > 0) out[e - 1] += w * (f0 * (1.0 - kGaussLeft) + f1 * (1.0 - kGaussRight));
    if (e < n) out[e] += w * (f0 * kGaussLeft + f1 * kGaussRight);
  }
}

double inner_product(const Field& a, const Field& b, const FemOperators& ops) {
  if (a.size() != ops.dofs()) throw ShapeError("inner_product: field does not match mesh");
  return ops.inner(a, b);
}

Field solve_implicit(const Field& rhs, const FemOperators& ops) {
  if (rhs.size() != ops.dofs()) throw ShapeError("solve_implicit: field does not match mesh");
  return ops.solve_implicit(rhs);
}

}  // namespace spoc
