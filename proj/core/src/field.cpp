#include "spoc/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spoc/errors.hpp"

namespace spoc {

Field::Field(std::vector<double> values) : values_(std::move(values)) {
  if (!all_finite()) throw Error("Field: non-finite nodal value");
}

bool Field::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Field::fill(double value) noexcept { std::fill(values_.begin(), values_.end(), value); }

Field& Field::axpy(double a, const Field& x) {
  require_same_size(*this, x, "axpy");
  const double* src = x.data();
  double* dst = values_.data();
  const std::size_t n = values_.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] += a * src[i];
  return *this;
}

Field& Field::operator+=(const Field& other) {
  require_same_size(*this, other, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Field& Field::operator-=(const Field& other) {
  require_same_size(*this, other, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Field& Field::operator*=(double s) noexcept {
  for (double& v : values_) v *= s;
  return *this;
}

void require_same_size(const Field& a, const Field& b, const char* context) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(context) + ": field sizes differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs_difference(const Field& a, const Field& b) {
  require_same_size(a, b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace spoc
