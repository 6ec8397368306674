#pragma once

#include <Eigen/Dense>

namespace handik {

// Rotation quaternion, Hamilton convention, scalar-first storage (w, x, y, z).
// This convention is used everywhere in the toolkit.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }

  double norm_sq() const { return w * w + x * x + y * y + z * z; }
  double norm() const;
  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  Quaternion negated() const { return {-w, -x, -y, -z}; }
  bool is_unit(double tol = 1e-9) const;
};

// Rotation as angle * unit-axis; magnitude is the rotation angle in radians.
struct AxisAngle {
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;

  double angle() const;
};

using RotMatrix = Eigen::Matrix3d;

// Hamilton product a*b (apply b first, then a).
Quaternion quat_mul(const Quaternion& a, const Quaternion& b);

// General inverse conj(q)/|q|^2; equals the conjugate for unit q.
// Throws std::domain_error for the zero quaternion.
Quaternion quat_inverse(const Quaternion& q);

// Throws std::domain_error when |q| <= 1e-12.
Quaternion quat_normalize(const Quaternion& q);

// Hemisphere-canonical representative of the same rotation: w >= 0
// (first nonzero of x,y,z made positive when w == 0).
Quaternion quat_canonical(const Quaternion& q);

// Requires |q| == 1 within 1e-6, else std::invalid_argument.
// q and -q map to the same matrix.
RotMatrix quat_to_matrix(const Quaternion& q);

Quaternion axis_angle_to_quat(const AxisAngle& a);

// Canonicalizes the angle to [0, pi]. Requires unit q within 1e-6.
AxisAngle quat_to_axis_angle(const Quaternion& q);

// Shortest-arc spherical interpolation between unit quaternions; falls back
// to normalized lerp when the inputs are nearly identical or antipodal.
Quaternion slerp(const Quaternion& a, const Quaternion& b, double t);

// Rotation angle between two unit quaternions, in [0, pi].
double geodesic_angle(const Quaternion& a, const Quaternion& b);

}  // namespace handik
