#include "handik/rotmath.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace handik {

double Quaternion::norm() const { return std::sqrt(norm_sq()); }

bool Quaternion::is_unit(double tol) const { return std::abs(norm() - 1.0) <= tol; }

double AxisAngle::angle() const { return std::sqrt(rx * rx + ry * ry + rz * rz); }

Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quaternion quat_inverse(const Quaternion& q) {
  const double n2 = q.norm_sq();
  if (n2 < 1e-24) throw std::domain_error("quat_inverse: zero quaternion has no inverse");
  return {q.w / n2, -q.x / n2, -q.y / n2, -q.z / n2};
}

Quaternion quat_normalize(const Quaternion& q) {
  const double n = q.norm();
  if (n <= 1e-12) throw std::domain_error("quat_normalize: norm below 1e-12");
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Quaternion quat_canonical(const Quaternion& q) {
  if (q.w > 0.0) return q;
  if (q.w < 0.0) return q.negated();
  // w == 0: fix the sign on the first nonzero vector component.
  for (double c : {q.x, q.y, q.z}) {
    if (c > 0.0) return q;
    if (c < 0.0) return q.negated();
  }
  return q;
}

RotMatrix quat_to_matrix(const Quaternion& q) {
  if (!q.is_unit(1e-6)) throw std::invalid_argument("quat_to_matrix: input is not a unit quaternion");
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  RotMatrix r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Quaternion axis_angle_to_quat(const AxisAngle& a) {
  const double theta = a.angle();
  const double half = 0.5 * theta;
  // sin(theta/2)/theta -> 1/2 as theta -> 0
  const double k = theta < 1e-9 ? 0.5 : std::sin(half) / theta;
  return {std::cos(half), a.rx * k, a.ry * k, a.rz * k};
}

AxisAngle quat_to_axis_angle(const Quaternion& q) {
  if (!q.is_unit(1e-6)) throw std::invalid_argument("quat_to_axis_angle: input is not a unit quaternion");
  const Quaternion c = quat_canonical(q);
  const double s = std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
  const double theta = 2.0 * std::atan2(s, c.w);  // in [0, pi] since c.w >= 0
  if (s < 1e-12) return {};
  const double k = theta / s;
  return {c.x * k, c.y * k, c.z * k};
}

Quaternion slerp(const Quaternion& a, const Quaternion& b, double t) {
  Quaternion bb = b;
  double d = a.dot(b);
  if (d < 0.0) {  // shortest arc
    bb = b.negated();
    d = -d;
  }
  if (d > 1.0 - 1e-8) {
    // nearly identical rotations; slerp weights degenerate, lerp instead
    Quaternion r{a.w + t * (bb.w - a.w), a.x + t * (bb.x - a.x),
                 a.y + t * (bb.y - a.y), a.z + t * (bb.z - a.z)};
    return quat_normalize(r);
  }
  const double theta = std::acos(std::clamp(d, -1.0, 1.0));
  const double s = std::sin(theta);
  const double ka = std::sin((1.0 - t) * theta) / s;
  const double kb = std::sin(t * theta) / s;
  Quaternion r{ka * a.w + kb * bb.w, ka * a.x + kb * bb.x,
               ka * a.y + kb * bb.y, ka * a.z + kb * bb.z};
  return quat_normalize(r);
}

double geodesic_angle(const Quaternion& a, const Quaternion& b) {
  const double d = std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
  return 2.0 * std::acos(d);
}

}  // namespace handik
