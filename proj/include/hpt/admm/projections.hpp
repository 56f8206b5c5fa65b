#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace hpt::admm {

/// Elementwise clamp to the unit box.
inline std::vector<double> project_box(std::span<const double> e) {
  std::vector<double> out(e.begin(), e.end());
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

/// Euclidean projection onto the sphere ||z - 1/2||^2 = n/4 (which passes
/// through every binary vector). The centre itself maps to c + r * e_1.
inline std::vector<double> project_sphere(std::span<const double> e) {
  const std::size_t n = e.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  const double radius = std::sqrt(static_cast<double>(n)) / 2.0;
  double norm2 = 0.0;
  for (double v : e) norm2 += (v - 0.5) * (v - 0.5);
  const double norm = std::sqrt(norm2);
  if (norm == 0.0) {
    std::fill(out.begin(), out.end(), 0.5);
    out[0] += radius;
    return out;
  }
  const double s = radius / norm;
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 + s * (e[i] - 0.5);
  return out;
}

inline double project_nonneg(double s) { return std::max(0.0, s); }

/// ||z - 1/2||^2 - n/4, zero on the sphere.
inline double sphere_residual(std::span<const double> z) {
  double norm2 = 0.0;
  for (double v : z) norm2 += (v - 0.5) * (v - 0.5);
  return norm2 - static_cast<double>(z.size()) / 4.0;
}

}  // namespace hpt::admm
