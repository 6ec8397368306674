#pragma once

// Shared test helpers and independent oracles. Everything here stays free of
// the library code paths it is used to check: rotations go through the
// Rodrigues formula, matrices are built by rotating basis vectors.

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "handik/rotmath.hpp"

namespace testutil {

// Rodrigues rotation formula.
inline Eigen::Vector3d rotate_axis_angle(const Eigen::Vector3d& axis_angle, const Eigen::Vector3d& v) {
  const double theta = axis_angle.norm();
  if (theta < 1e-14) return v;
  const Eigen::Vector3d k = axis_angle / theta;
  return v * std::cos(theta) + k.cross(v) * std::sin(theta) + k * k.dot(v) * (1.0 - std::cos(theta));
}

inline Eigen::Matrix3d matrix_from_axis_angle(const Eigen::Vector3d& axis_angle) {
  Eigen::Matrix3d m;
  for (int c = 0; c < 3; ++c) m.col(c) = rotate_axis_angle(axis_angle, Eigen::Vector3d::Unit(c));
  return m;
}

inline Eigen::Vector3d random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline handik::Quaternion random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  handik::Quaternion q;
  double norm;
  do {
    q = {n(rng), n(rng), n(rng), n(rng)};
    norm = q.norm();
  } while (norm < 1e-6);
  return {q.w / norm, q.x / norm, q.y / norm, q.z / norm};
}

inline double quat_diff(const handik::Quaternion& a, const handik::Quaternion& b) {
  const double direct = std::max({std::abs(a.w - b.w), std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
  const double flipped = std::max({std::abs(a.w + b.w), std::abs(a.x + b.x), std::abs(a.y + b.y), std::abs(a.z + b.z)});
  return std::min(direct, flipped);
}

}  // namespace testutil
