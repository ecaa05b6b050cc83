#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spoc {

/// Nodal coefficients of an element of the P1 space on the interior nodes of a
/// mesh (boundary values are zero and not stored).
///
/// The vector constructor rejects NaN/Inf. Arithmetic does not re-check; the
/// time steppers test their outputs instead.
class Field {
 public:
  Field() = default;
  explicit Field(std::size_t size, double value = 0.0) : values_(size, value) {}
  explicit Field(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  bool all_finite() const noexcept;
  void fill(double value) noexcept;

  /// this += a * x
  Field& axpy(double a, const Field& x);

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double s) noexcept;

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(Field a, double s) { return a *= s; }
  friend Field operator*(double s, Field a) { return a *= s; }

  bool operator==(const Field&) const = default;

 private:
  std::vector<double> values_;
};

void require_same_size(const Field& a, const Field& b, const char* context);

/// Plain Euclidean dot product of nodal coefficients.
double dot(std::span<const double> a, std::span<const double> b);

/// Largest absolute nodal difference.
double max_abs_difference(const Field& a, const Field& b);

}  // namespace spoc
