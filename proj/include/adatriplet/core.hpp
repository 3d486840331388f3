#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adatriplet/errors.hpp"

namespace adatriplet {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Pre-normalization vector (e.g. a raw encoder output). Entries must be finite.
class RawVector {
 public:
  explicit RawVector(std::vector<double> values) : values_(std::move(values)) {
    for (double x : values_) {
      if (!std::isfinite(x)) throw std::invalid_argument("RawVector: non-finite entry");
    }
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> span() const { return values_; }

 private:
  std::vector<double> values_;
};

// Embedding on the unit hypersphere: ||values||_2 = 1 within 1e-9, D >= 2.
class UnitVector {
 public:
  explicit UnitVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw std::invalid_argument("UnitVector: dimension must be >= 2");
    const double n = l2_norm(values_);
    if (!(std::abs(n - 1.0) <= 1e-9))
      throw std::invalid_argument("UnitVector: norm " + std::to_string(n) + " is not 1");
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> span() const { return values_; }

 private:
  std::vector<double> values_;
};

inline UnitVector normalize(const RawVector& v) {
  const double n = l2_norm(v.span());
  if (n <= 1e-12) throw ZeroVectorError("normalize: vector norm below 1e-12");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return UnitVector(std::move(out));
}

// Clamped to [-1, 1] so downstream margin logic never sees |phi| > 1.
inline double cosine_sim(const UnitVector& u, const UnitVector& v) {
  if (u.size() != v.size())
    throw DimensionMismatchError("cosine_sim: dimensions differ");
  return std::clamp(dot(u.span(), v.span()), -1.0, 1.0);
}

inline double squared_l2(const UnitVector& u, const UnitVector& v) {
  if (u.size() != v.size())
    throw DimensionMismatchError("squared_l2: dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return s;
}

// J^T * upstream for g = v/||v||, where J = (I - g g^T)/||v||. The result is
// orthogonal to g.
inline std::vector<double> normalize_vjp(const RawVector& v, std::span<const double> upstream) {
  if (v.size() != upstream.size())
    throw DimensionMismatchError("normalize_vjp: dimensions differ");
  const double n = l2_norm(v.span());
  if (n <= 1e-12) throw ZeroVectorError("normalize_vjp: vector norm below 1e-12");
  double proj = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) proj += (v[i] / n) * upstream[i];
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (upstream[i] - (v[i] / n) * proj) / n;
  return out;
}

}  // namespace adatriplet
