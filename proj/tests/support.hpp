#ifndef BEAMSIGHT_TESTS_SUPPORT_HPP
#define BEAMSIGHT_TESTS_SUPPORT_HPP

// Shared oracles for the unit and acceptance suites: finite-difference
// references for the channel FIM and the spatial Jacobians, plus small
// scenario helpers. Everything here is independent of the library's analytic
// derivative code paths.

#include <random>

#include "beamsight/io.hpp"

namespace testsupport {

using namespace beamsight;

// ---------------------------------------------------------------------------
// Finite-difference channel FIM oracle
// ---------------------------------------------------------------------------

struct Psi {
  double aoa_az, aoa_el, aod_az, aod_el, toa, gr, gi;

  static Psi from_path(const PathParams& p) {
    return {p.angles.aoa_az, p.angles.aoa_el, p.angles.aod_az,
            p.angles.aod_el, p.angles.toa,    p.gain.real(),
            p.gain.imag()};
  }

  double& operator[](int i) {
    double* f[7] = {&aoa_az, &aoa_el, &aod_az, &aod_el, &toa, &gr, &gi};
    return *f[i];
  }
};

/// Single-path effective channel stacked over (rx beam, tx beam, subcarrier),
/// written directly from the model definition (no shared code with the
/// analytic FIM).
inline Eigen::VectorXcd channel_vec(const Psi& psi,
                                    const MeasurementSchedule& sched,
                                    const TxFrontEnd& tx, const UePanel& panel,
                                    const Codebook& cb) {
  const double lambda = sched.wavelength();
  const double scale =
      std::sqrt(static_cast<double>(tx.array.size()) * panel.geometry.size());
  const Complex g(psi.gr, psi.gi);
  const CVector a_r = steering_vector(panel.geometry, psi.aoa_az, psi.aoa_el, lambda);
  const CVector a_t = steering_vector(tx.array, psi.aod_az, psi.aod_el, lambda);
  const double rho_r = element_gain(panel.pattern, psi.aoa_az, psi.aoa_el);
  const double rho_t = element_gain(tx.pattern, psi.aod_az, psi.aod_el);

  const int m_r = static_cast<int>(sched.rx_beam_angles.size());
  const int m_t = static_cast<int>(sched.tx_beam_indices.size());
  Eigen::VectorXcd out(m_r * m_t * sched.n_subcarriers);
  int idx = 0;
  for (int ir = 0; ir < m_r; ++ir) {
    const CVector w_r =
        steering_vector(panel.geometry, sched.rx_beam_angles[ir], 0.5 * kPi, lambda);
    const Complex b_r = (w_r.adjoint() * a_r)(0, 0);
    for (int it = 0; it < m_t; ++it) {
      const TxBeam beam = cb.tx_beams[sched.tx_beam_indices[it]];
      const CVector w_t = steering_vector(tx.array, beam.az, beam.el, lambda);
      const Complex b_t = (a_t.adjoint() * w_t)(0, 0);
      for (int n = 0; n < sched.n_subcarriers; ++n) {
        const double ph = -2.0 * kPi * n * sched.subcarrier_spacing * psi.toa;
        out(idx++) = scale * g * rho_r * b_r * rho_t * b_t *
                     Complex(std::cos(ph), std::sin(ph));
      }
    }
  }
  return out;
}

/// Central-difference FIM over the 7 channel parameters of one path.
inline Eigen::Matrix<double, 7, 7> fd_fim(const Psi& psi,
                                          const MeasurementSchedule& sched,
                                          const TxFrontEnd& tx,
                                          const UePanel& panel,
                                          const Codebook& cb) {
  const double steps[7] = {1e-6, 1e-6, 1e-6, 1e-6, 1e-13, 1e-6, 1e-6};
  std::vector<Eigen::VectorXcd> d(7);
  for (int i = 0; i < 7; ++i) {
    Psi hi = psi, lo = psi;
    hi[i] += steps[i];
    lo[i] -= steps[i];
    d[i] = (channel_vec(hi, sched, tx, panel, cb) -
            channel_vec(lo, sched, tx, panel, cb)) /
           (2.0 * steps[i]);
  }
  Eigen::Matrix<double, 7, 7> f;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j)
      f(i, j) = (2.0 / sched.noise_var) * d[i].dot(d[j]).real();
  return f;
}

/// Entrywise relative disagreement, normalized by the diagonal scales.
inline double fim_rel_error(const Eigen::Matrix<double, 7, 7>& a,
                            const Eigen::Matrix<double, 7, 7>& b) {
  const double floor_scale = 1e-12 * std::max(a.cwiseAbs().maxCoeff(),
                                              b.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      const double denom =
          std::sqrt(std::abs(a(i, i)) * std::abs(a(j, j))) + floor_scale;
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Spatial-transformation reference (for Jacobian finite differences)
// ---------------------------------------------------------------------------

/// Channel parameters [aoa_az, aoa_el, toa, aod_az, aod_el] as an explicit
/// function of the spatial parameters, with the orientation bias passed as an
/// unnormalized 4-vector (its quadratic rotation-matrix map extends smoothly
/// off the unit sphere, with the angles invariant to the norm).
inline Eigen::Matrix<double, 5, 1> ref_channel_params(
    const Eigen::Vector4d& da, const Vec3& v_l, const Vec3& v_0, const Vec3& p,
    const Mat3& r_rel, const Quaternion& bs_q, bool mh, bool mv) {
  const Mat3 r_bs = quat_to_rotmat(bs_q);
  const Mat3 r_da = quat_to_rotmat(Quaternion{da(0), da(1), da(2), da(3)});
  const Vec3 vp = r_bs.transpose() * r_da * r_rel.transpose() * (v_l - p);

  Eigen::Matrix<double, 5, 1> out;
  out(0) = std::atan2(vp.y(), vp.x());
  out(1) = std::acos(std::clamp(vp.z() / vp.norm(), -1.0, 1.0));
  out(2) = (v_l - p).norm() / kSpeedOfLight;

  double aod_az, aod_el;
  if (mv) {
    // Elevation mirror: reflect the departure direction across the plane
    // implied by the mirror axis (smooth in the axis, unlike the
    // elevation-angle chart of the axis, which is singular when the axis is
    // vertical -- the generic case for floor/ceiling mirrors).
    const Vec3 nh = (v_l - v_0).normalized();
    const Vec3 q = p - v_l;
    const Vec3 u = r_bs.transpose() * (q - 2.0 * nh.dot(q) * nh);
    aod_az = std::atan2(u.y(), u.x());
    aod_el = std::acos(std::clamp(u.z() / u.norm(), -1.0, 1.0));
  } else {
    const Vec3 pp = r_bs.transpose() * (p - v_l);
    aod_az = std::atan2(pp.y(), pp.x());
    aod_el = std::acos(std::clamp(pp.z() / pp.norm(), -1.0, 1.0));
    if (mh) {
      const Vec3 vq = r_bs.transpose() * (v_l - v_0);
      aod_az = wrap_angle(2.0 * std::atan2(vq.y(), vq.x()) - aod_az - kPi);
    }
  }
  out(3) = aod_az;
  out(4) = aod_el;
  return out;
}

/// Central differences of ref_channel_params along one input direction; angle
/// rows are differenced in the wrapped metric.
template <typename Bump>
Eigen::Matrix<double, 5, 1> fd_direction(Bump&& bump, double h) {
  const Eigen::Matrix<double, 5, 1> hi = bump(h);
  const Eigen::Matrix<double, 5, 1> lo = bump(-h);
  Eigen::Matrix<double, 5, 1> d;
  for (int r = 0; r < 5; ++r) {
    const double diff = (r == 2) ? hi(r) - lo(r) : wrap_angle(hi(r) - lo(r));
    d(r) = diff / (2.0 * h);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Small scenario helpers
// ---------------------------------------------------------------------------

inline Scenario calibrated_room(SnrTier tier = SnrTier::kMedium,
                                uint64_t seed = 1) {
  Scenario sc = Scenario::standard_room();
  sc.tier = tier;
  sc.seed = seed;
  calibrate_noise(sc);
  return sc;
}

inline Pose random_pose_in(const Scenario& sc, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Vector4d b = sc.region_bbox();
  Pose p;
  do {
    p.position.x() = b(0) + (b(1) - b(0)) * u(rng);
    p.position.y() = b(2) + (b(3) - b(2)) * u(rng);
  } while (!sc.in_region(p.position.x(), p.position.y()));
  p.position.z() = sc.h_min + (sc.h_max - sc.h_min) * u(rng);
  p.orientation = Quaternion::z_rotation(2.0 * kPi * u(rng) - kPi);
  return p;
}

}  // namespace testsupport

#endif  // BEAMSIGHT_TESTS_SUPPORT_HPP
