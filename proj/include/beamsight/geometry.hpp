#ifndef BEAMSIGHT_GEOMETRY_HPP
#define BEAMSIGHT_GEOMETRY_HPP

/**
 * @file geometry.hpp
 * @brief Quaternion algebra, plane mirroring, and the spatial-to-channel
 *        geometric transformation.
 *
 * All functions are pure; angles are radians, distances meters.
 */

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace beamsight {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

/// Wrapped absolute difference between two azimuths, in [0, pi].
inline double angle_distance(double a, double b) {
  return std::abs(wrap_angle(a - b));
}

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quaternion() = default;
  Quaternion(double w_, double x_, double y_, double z_)
      : w(w_), x(x_), y(y_), z(z_) {}

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quaternion normalized() const {
    const double n = norm();
    if (n == 0.0) throw std::invalid_argument("cannot normalize zero quaternion");
    return {w / n, x / n, y / n, z / n};
  }

  Quaternion conjugate() const { return {w, -x, -y, -z}; }

  bool is_unit(double tol = 1e-6) const { return std::abs(norm() - 1.0) <= tol; }

  static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

  /// Rotation by `angle` around a (not necessarily unit) axis.
  static Quaternion from_axis_angle(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (n == 0.0) throw std::invalid_argument("zero rotation axis");
    const double h = 0.5 * angle;
    const double s = std::sin(h) / n;
    return {std::cos(h), s * axis.x(), s * axis.y(), s * axis.z()};
  }

  static Quaternion z_rotation(double angle) {
    return {std::cos(0.5 * angle), 0.0, 0.0, std::sin(0.5 * angle)};
  }
};

namespace detail {
inline void require_unit(const Quaternion& q, const char* what) {
  if (!q.is_unit()) throw std::invalid_argument(std::string(what) + ": non-unit quaternion");
}
}  // namespace detail

/// Rotation matrix of a unit quaternion.
///
/// Entry layout follows the convention where the composed rotation satisfies
/// rotmat(quat_multiply(a, b)) == rotmat(a) * rotmat(b).
inline Mat3 quat_to_rotmat(const Quaternion& q) {
  const double a0 = q.w, a1 = q.x, a2 = q.y, a3 = q.z;
  Mat3 r;
  r(0, 0) = a0 * a0 + a1 * a1 - a2 * a2 - a3 * a3;
  r(0, 1) = 2 * a1 * a2 + 2 * a0 * a3;
  r(0, 2) = 2 * a1 * a3 - 2 * a0 * a2;
  r(1, 0) = 2 * a1 * a2 - 2 * a0 * a3;
  r(1, 1) = a0 * a0 - a1 * a1 + a2 * a2 - a3 * a3;
  r(1, 2) = 2 * a2 * a3 + 2 * a0 * a1;
  r(2, 0) = 2 * a1 * a3 + 2 * a0 * a2;
  r(2, 1) = 2 * a2 * a3 - 2 * a0 * a1;
  r(2, 2) = a0 * a0 - a1 * a1 - a2 * a2 + a3 * a3;
  return r;
}

/// Quaternion composition. The product represents the rotation whose matrix
/// is rotmat(a) * rotmat(b); both inputs must be unit.
inline Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
  detail::require_unit(a, "quat_multiply lhs");
  detail::require_unit(b, "quat_multiply rhs");
  // Hamilton product b * a matches the matrix convention above.
  const Quaternion& p = b;
  const Quaternion& q = a;
  // Grouped so mutually-cancelling pairs cancel exactly in floating point
  // (the product of q with +/-q^-1 comes out as exactly (+/-1, 0, 0, 0)).
  return {p.w * q.w - p.x * q.x - p.y * q.y - p.z * q.z,
          (p.w * q.x + p.x * q.w) + (p.y * q.z - p.z * q.y),
          (p.w * q.y + p.y * q.w) + (p.z * q.x - p.x * q.z),
          (p.w * q.z + p.z * q.w) + (p.x * q.y - p.y * q.x)};
}

/// Shortest rotation angle between two attitudes, in [0, pi].
/// q and -q describe the same rotation, so the result for (q, -q) is zero.
inline double quat_error_angle(const Quaternion& true_q, const Quaternion& est_q) {
  detail::require_unit(true_q, "quat_error_angle true_q");
  detail::require_unit(est_q, "quat_error_angle est_q");
  const Quaternion d = quat_multiply(true_q, est_q.conjugate());
  // atan2 form: exact for est_q = +/-true_q and accurate for small angles,
  // unlike acos near |w| = 1.
  const double vec_norm = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  return 2.0 * std::atan2(vec_norm, std::abs(d.w));
}

/// A reflecting plane in Hessian form: {p : normal . p = offset}.
struct Plane {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;  // meters

  enum class MirrorClass { Horizontal, Vertical };

  Plane() = default;
  Plane(const Vec3& n, double d) : normal(n), offset(d) {
    if (std::abs(normal.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("plane normal must be unit length");
  }

  static Plane through_point(const Vec3& n, const Vec3& point) {
    const Vec3 un = n.normalized();
    return Plane(un, un.dot(point));
  }

  /// Vertical walls mirror azimuths (horizontal mirroring); ceiling/floor
  /// mirror elevations (vertical mirroring).
  MirrorClass mirror_class() const {
    const double nz = std::abs(normal.z());
    if (nz < 1e-9) return MirrorClass::Horizontal;
    if (std::abs(nz - 1.0) < 1e-9) return MirrorClass::Vertical;
    throw std::domain_error("plane is neither a vertical wall nor a ceiling/floor");
  }

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

/// Reflection of a point across a plane (involution; fixed points on plane).
inline Vec3 mirror_point(const Vec3& p, const Plane& plane) {
  return p - 2.0 * plane.signed_distance(p) * plane.normal;
}

struct Pose {
  Vec3 position = Vec3::Zero();
  Quaternion orientation = Quaternion::identity();
};

/// Channel-side path parameters produced by the geometric transformation.
struct PathAngles {
  double toa = 0.0;     // seconds
  double aoa_az = 0.0;  // receiver frame azimuth, (-pi, pi]
  double aoa_el = 0.0;  // receiver frame elevation, [0, pi]
  double aod_az = 0.0;  // transmitter frame azimuth, (-pi, pi]
  double aod_el = 0.0;  // transmitter frame elevation, [0, pi]
};

inline constexpr double kDegenerateDistance = 1e-6;  // meters

/// Spatial parameters -> channel parameters for one path.
///
/// `v_l` is the (virtual) transmit source, `v_0` the physical one; the mirror
/// flags select the corrected AoD branches for sources mirrored by a vertical
/// wall (`mirror_h`) or by the ceiling/floor (`mirror_v`).
inline PathAngles geometric_transform(const Vec3& v_l, const Vec3& v_0,
                                      const Pose& ue,
                                      const Quaternion& bs_orientation,
                                      bool mirror_h, bool mirror_v) {
  const Vec3 d = v_l - ue.position;
  if (d.norm() < kDegenerateDistance)
    throw std::domain_error("degenerate geometry: UE coincides with transmit source");

  const Mat3 r_ue = quat_to_rotmat(ue.orientation);
  const Mat3 r_bs = quat_to_rotmat(bs_orientation);

  const Vec3 vp = r_ue.transpose() * d;                   // receiver frame
  const Vec3 pp = r_bs.transpose() * (ue.position - v_l); // transmitter frame

  PathAngles out;
  out.toa = vp.norm() / kSpeedOfLight;
  out.aoa_az = std::atan2(vp.y(), vp.x());
  out.aoa_el = std::acos(std::clamp(vp.z() / vp.norm(), -1.0, 1.0));

  const double aod_az_direct = std::atan2(pp.y(), pp.x());
  const double aod_el_direct = std::acos(std::clamp(pp.z() / pp.norm(), -1.0, 1.0));

  if (!mirror_h && !mirror_v) {
    out.aod_az = aod_az_direct;
    out.aod_el = aod_el_direct;
    return out;
  }

  const Vec3 vl = r_bs.transpose() * (v_l - v_0);
  if (vl.norm() < kDegenerateDistance)
    throw std::domain_error("degenerate geometry: mirrored source coincides with BS");

  out.aod_az = mirror_h
                   ? wrap_angle(2.0 * std::atan2(vl.y(), vl.x()) - aod_az_direct - kPi)
                   : aod_az_direct;
  out.aod_el = mirror_v
                   ? wrap_angle(2.0 * std::acos(std::clamp(vl.z() / vl.norm(), -1.0, 1.0)) -
                                aod_el_direct - kPi)
                   : aod_el_direct;
  // A negative wrapped elevation denotes the same ray with the azimuth
  // flipped by pi; canonicalize so elevation stays in [0, pi].
  if (out.aod_el < 0.0) {
    out.aod_el = -out.aod_el;
    out.aod_az = wrap_angle(out.aod_az + kPi);
  }
  return out;
}

/// Unit direction for (azimuth, elevation) in the usual spherical convention.
inline Vec3 direction_from_angles(double az, double el) {
  return {std::cos(az) * std::sin(el), std::sin(az) * std::sin(el), std::cos(el)};
}

}  // namespace beamsight

#endif  // BEAMSIGHT_GEOMETRY_HPP
