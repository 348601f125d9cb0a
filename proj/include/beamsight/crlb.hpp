#ifndef BEAMSIGHT_CRLB_HPP
#define BEAMSIGHT_CRLB_HPP

/**
 * @file crlb.hpp
 * @brief Fisher information engine: channel-parameter FIM, EFIM reduction,
 *        spatial transformation, quaternion-constrained CRLB and the
 *        PEB/OEB/AEB bounds.
 *
 * Parameter orderings (the wire contract for exported matrices):
 *  - channel parameters per path:
 *      [aoa_az, aoa_el, aod_az, aod_el, toa, Re(g), Im(g)]
 *  - available channel parameters per path: [aoa_az, aoa_el, toa]
 *  - spatial parameters: [delta_alpha (4), v_0 (3), ..., v_{L-1} (3)]
 */

#include <algorithm>
#include <limits>
#include <vector>

#include "beamsight/radio.hpp"

namespace beamsight {

// ---------------------------------------------------------------------------
// Symmetric pseudo-inverse
// ---------------------------------------------------------------------------

/// Pseudo-inverse of a symmetric PSD matrix via eigendecomposition.
/// Eigenvalues below rel_tol * max eigenvalue are treated as an unobservable
/// subspace. If `rank` is non-null it receives the numerical rank.
inline Eigen::MatrixXd pinv_sym(const Eigen::MatrixXd& m,
                                double rel_tol = 1e-10, int* rank = nullptr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double cutoff = rel_tol * std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
  int r = 0;
  for (int i = 0; i < vals.size(); ++i)
    if (vals(i) > cutoff) {
      inv(i) = 1.0 / vals(i);
      ++r;
    }
  if (rank) *rank = r;
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

/// Diagonally equilibrated generalized inverse of a symmetric PSD matrix:
/// X = D^-1 (D^-1 M D^-1)^+ D^-1 with D = sqrt(diag M). X is a reflexive
/// g-inverse of M (M X M = M), so it is interchangeable with the
/// pseudo-inverse inside Schur-complement reductions and in-range quadratic
/// forms, but far better conditioned when the parameters carry mixed
/// physical units (radians, meters, seconds). The reported rank is the rank
/// of the unit-diagonal scaled matrix, which is the scale-free notion of
/// observability.
inline Eigen::MatrixXd scaled_pinv(const Eigen::MatrixXd& m, int* rank = nullptr) {
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) d(i) = m(i, i) > 0.0 ? std::sqrt(m(i, i)) : 1.0;
  const Eigen::VectorXd di = d.cwiseInverse();
  const Eigen::MatrixXd g = di.asDiagonal() * m * di.asDiagonal();
  const Eigen::MatrixXd g_inv = pinv_sym(g, 1e-10, rank);
  return di.asDiagonal() * g_inv * di.asDiagonal();
}

// ---------------------------------------------------------------------------
// Channel-parameter FIM
// ---------------------------------------------------------------------------

using Matrix7d = Eigen::Matrix<double, 7, 7>;

/// Per-path 7x7 FIM blocks over the channel parameters. The assembled FIM is
/// block-diagonal across paths (resolvable-path assumption).
struct ChannelFim {
  std::vector<Matrix7d> blocks;
};

/// Analytic channel FIM for one sensing instance.
///
/// Each entry is (2/sigma_z^2) Re sum_{m_r,m_t,n} dH~*/dpsi_i dH~/dpsi_j with
/// analytic derivatives of the factored effective channel. With
/// `block_diag_approx` the even-pattern approximation is applied, keeping
/// only the {AoA 2x2, AoD 2x2, toa, Re g, Im g} diagonal blocks.
inline ChannelFim fim_channel(const std::vector<PathParams>& paths,
                              const MeasurementSchedule& schedule,
                              const TxFrontEnd& tx, const UePanel& panel,
                              const Codebook& codebook,
                              bool block_diag_approx = false) {
  if (schedule.tx_beam_indices.empty() || schedule.rx_beam_angles.empty() ||
      schedule.n_subcarriers <= 0)
    throw std::invalid_argument("fim_channel: empty measurement schedule");

  const double lambda = schedule.wavelength();
  const double scale = std::sqrt(static_cast<double>(tx.array.size()) * panel.geometry.size());

  // Subcarrier sums: the delay phasor cancels in conjugate products, so only
  // moments of w_n = 2 pi n df survive.
  const double df = schedule.subcarrier_spacing;
  double s1 = 0.0, s2 = 0.0;
  for (int n = 0; n < schedule.n_subcarriers; ++n) {
    const double w = 2.0 * kPi * n * df;
    s1 += w;
    s2 += w * w;
  }
  const double s0 = schedule.n_subcarriers;
  const double noise_scale = 2.0 / schedule.noise_var;

  std::vector<CVector> w_rx, w_tx;
  for (double a : schedule.rx_beam_angles)
    w_rx.push_back(steering_vector(panel.geometry, a, 0.5 * kPi, lambda));
  for (int idx : schedule.tx_beam_indices) {
    const TxBeam b = codebook.tx_beams.at(idx);
    w_tx.push_back(steering_vector(tx.array, b.az, b.el, lambda));
  }

  ChannelFim out;
  for (const PathParams& p : paths) {
    const SteeringWithDerivs ar = steering_vector_derivs(
        panel.geometry, p.angles.aoa_az, p.angles.aoa_el, lambda);
    const SteeringWithDerivs at = steering_vector_derivs(
        tx.array, p.angles.aod_az, p.angles.aod_el, lambda);
    const GainWithDerivs rho_r =
        element_gain_derivs(panel.pattern, p.angles.aoa_az, p.angles.aoa_el);
    const GainWithDerivs rho_t =
        element_gain_derivs(tx.pattern, p.angles.aod_az, p.angles.aod_el);

    Matrix7d f = Matrix7d::Zero();
    for (const CVector& wr : w_rx) {
      const Complex b_r = (wr.adjoint() * ar.value)(0, 0);
      const Complex db_r_az = (wr.adjoint() * ar.d_az)(0, 0);
      const Complex db_r_el = (wr.adjoint() * ar.d_el)(0, 0);
      for (const CVector& wt : w_tx) {
        const Complex b_t = (at.value.adjoint() * wt)(0, 0);
        const Complex db_t_az = (at.d_az.adjoint() * wt)(0, 0);
        const Complex db_t_el = (at.d_el.adjoint() * wt)(0, 0);

        const Complex rx_part = rho_r.value * b_r;
        const Complex tx_part = rho_t.value * b_t;
        const Complex c0 = scale * rx_part * tx_part;

        // Derivative coefficients of H~ (delay phasor factored out).
        Complex d[7];
        d[0] = p.gain * scale * (rho_r.d_az * b_r + rho_r.value * db_r_az) * tx_part;
        d[1] = p.gain * scale * (rho_r.d_el * b_r + rho_r.value * db_r_el) * tx_part;
        d[2] = p.gain * scale * rx_part * (rho_t.d_az * b_t + rho_t.value * db_t_az);
        d[3] = p.gain * scale * rx_part * (rho_t.d_el * b_t + rho_t.value * db_t_el);
        d[4] = p.gain * c0;  // multiplied by -j w_n per subcarrier
        d[5] = c0;
        d[6] = Complex(0.0, 1.0) * c0;

        for (int i = 0; i < 7; ++i)
          for (int j = i; j < 7; ++j) {
            double val;
            if (i == 4 && j == 4)
              val = s2 * std::norm(d[4]);
            else if (i == 4 || j == 4)
              val = s1 * std::imag(std::conj(d[i == 4 ? j : i]) * d[4]);
            else
              val = s0 * std::real(std::conj(d[i]) * d[j]);
            f(i, j) += noise_scale * val;
            if (i != j) f(j, i) = f(i, j);
          }
      }
    }

    if (block_diag_approx) {
      Matrix7d mask = Matrix7d::Zero();
      mask.block<2, 2>(0, 0).setOnes();
      mask.block<2, 2>(2, 2).setOnes();
      mask(4, 4) = mask(5, 5) = mask(6, 6) = 1.0;
      f = f.cwiseProduct(mask);
    }
    out.blocks.push_back(f);
  }
  return out;
}

/// Largest discarded cross-entry magnitude of the even-pattern approximation,
/// relative to the largest kept entry (diagnostic).
inline double block_diag_residual(const Matrix7d& exact) {
  Matrix7d mask = Matrix7d::Zero();
  mask.block<2, 2>(0, 0).setOnes();
  mask.block<2, 2>(2, 2).setOnes();
  mask(4, 4) = mask(5, 5) = mask(6, 6) = 1.0;
  const Matrix7d kept = exact.cwiseProduct(mask);
  const Matrix7d dropped = exact - kept;
  const double denom = std::max(kept.cwiseAbs().maxCoeff(), 1e-300);
  return dropped.cwiseAbs().maxCoeff() / denom;
}

// ---------------------------------------------------------------------------
// EFIM for the available channel parameters
// ---------------------------------------------------------------------------

/// Per-path 3x3 EFIM over [aoa_az, aoa_el, toa]; AoD and gain are
/// marginalized by Schur complement.
struct AvailableFim {
  std::vector<Eigen::Matrix3d> blocks;
  std::vector<bool> observable;  // false if the nuisance block was singular
};

inline AvailableFim efim_available(const ChannelFim& fim) {
  static const int kKeep[3] = {0, 1, 4};
  static const int kNuis[4] = {2, 3, 5, 6};
  AvailableFim out;
  for (const Matrix7d& f : fim.blocks) {
    Eigen::Matrix3d a;
    Eigen::Matrix<double, 3, 4> c;
    Eigen::Matrix4d n;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) a(i, j) = f(kKeep[i], kKeep[j]);
      for (int j = 0; j < 4; ++j) c(i, j) = f(kKeep[i], kNuis[j]);
    }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) n(i, j) = f(kNuis[i], kNuis[j]);
    int rank = 0;
    const Eigen::MatrixXd n_inv = scaled_pinv(n, &rank);
    out.blocks.push_back(a - c * n_inv * c.transpose());
    out.observable.push_back(rank == 4);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial transformation Jacobians
// ---------------------------------------------------------------------------

/// Partial derivative of the rotation-matrix entries with respect to one
/// quaternion component (the matrix entries are quadratic in the components).
inline Mat3 rotmat_quat_deriv(const Quaternion& q, int component) {
  const double a0 = q.w, a1 = q.x, a2 = q.y, a3 = q.z;
  Mat3 d;
  switch (component) {
    case 0:
      d << a0, a3, -a2, -a3, a0, a1, a2, -a1, a0;
      break;
    case 1:
      d << a1, a2, a3, a2, -a1, a0, a3, -a0, -a1;
      break;
    case 2:
      d << -a2, a1, -a0, a1, a2, a3, a0, a3, -a2;
      break;
    case 3:
      d << -a3, a0, a1, -a0, -a3, a2, a1, a2, a3;
      break;
    default:
      throw std::invalid_argument("quaternion component out of range");
  }
  return 2.0 * d;
}

/// Derivatives of one path's channel parameters with respect to the spatial
/// parameters, evaluated at a given UE pose.
struct PathJacobians {
  Eigen::Matrix<double, 3, 4> dpsi_dalpha =
      Eigen::Matrix<double, 3, 4>::Zero();          // rows: aoa_az, aoa_el, toa
  Eigen::Matrix3d dpsi_dv = Eigen::Matrix3d::Zero();  // same rows, w.r.t. v_l
  Vec3 daod_az_dv = Vec3::Zero();
  Vec3 daod_el_dv = Vec3::Zero();
  Vec3 daod_az_dv0 = Vec3::Zero();  // nonzero only for mirrored azimuth branch
  Vec3 daod_el_dv0 = Vec3::Zero();  // nonzero only for mirrored elevation branch
};

/// `r_rel` is the UE's relative rotation at instance k with respect to the
/// initial instance (identity when k = 0), assumed known from odometry. The
/// UE attitude entering the AoA derivatives is reconstructed from
/// (delta_alpha, r_rel, bs_orientation).
inline PathJacobians transform_jacobian(const Vec3& v_l, const Vec3& v_0,
                                        const Vec3& ue_pos,
                                        const Quaternion& delta_alpha,
                                        const Mat3& r_rel,
                                        const Quaternion& bs_orientation,
                                        bool mirror_h, bool mirror_v) {
  const Mat3 r_bs = quat_to_rotmat(bs_orientation);
  const Mat3 r_dq = quat_to_rotmat(delta_alpha);
  const Mat3 r_ue = r_rel * r_dq.transpose() * r_bs;

  const Vec3 d = v_l - ue_pos;
  if (d.norm() < kDegenerateDistance)
    throw std::domain_error("transform_jacobian: degenerate geometry");

  const Vec3 vp = r_ue.transpose() * d;
  const double rho2 = vp.x() * vp.x() + vp.y() * vp.y();
  if (rho2 < kDegenerateDistance * kDegenerateDistance)
    throw std::domain_error("transform_jacobian: path aligned with the z-axis");
  const double rho = std::sqrt(rho2);

  PathJacobians jac;

  // d v'_i / d delta_alpha_m, a 3x4 sensitivity of the rotated LoS vector.
  Eigen::Matrix<double, 3, 4> dvp;
  for (int m = 0; m < 4; ++m) {
    const Mat3 dr = rotmat_quat_deriv(delta_alpha, m);
    // row i of R_ue^T is r_bs,i^T R(da) r_rel^T
    const Vec3 col = (r_bs.transpose() * dr * r_rel.transpose()) * d;
    dvp.col(m) = col;
  }

  jac.dpsi_dalpha.row(0) = (vp.x() * dvp.row(1) - vp.y() * dvp.row(0)) / rho2;
  // Elevation depends on the direction of v' only; remove the radial
  // component of the sensitivity so the gradient is exactly orthogonal to
  // the quaternion's scale direction.
  const Eigen::Matrix<double, 1, 4> vp_dot_dvp = vp.transpose() * dvp;
  jac.dpsi_dalpha.row(1) =
      -(dvp.row(2) - (vp.z() / vp.squaredNorm()) * vp_dot_dvp) / rho;
  // toa does not depend on the orientation bias (rotations preserve norms).

  jac.dpsi_dv.row(0) = (vp.x() * r_ue.col(1) - vp.y() * r_ue.col(0)).transpose() / rho2;
  jac.dpsi_dv.row(1) =
      -(r_ue.col(2) - (vp.z() / d.squaredNorm()) * d).transpose() / rho;
  jac.dpsi_dv.row(2) = d.transpose() / (kSpeedOfLight * d.norm());

  // AoD partials (transmitter side).
  const Vec3 pp = r_bs.transpose() * (ue_pos - v_l);
  const double prho2 = pp.x() * pp.x() + pp.y() * pp.y();
  if (prho2 < kDegenerateDistance * kDegenerateDistance)
    throw std::domain_error("transform_jacobian: departure aligned with the z-axis");
  const double prho = std::sqrt(prho2);
  const Vec3 rb1 = r_bs.col(0), rb2 = r_bs.col(1), rb3 = r_bs.col(2);

  const Vec3 daz_direct = (pp.y() * rb1 - pp.x() * rb2) / prho2;
  const Vec3 del_direct =
      (rb3 - (pp.z() / d.squaredNorm()) * (ue_pos - v_l)) / prho;

  if (mirror_v) {
    // Elevation-mirrored branch. The mirror axis v_l - v_0 is (near-)vertical
    // here, where the elevation-angle chart of the axis is singular, so the
    // derivatives are taken through the smooth Householder reflection across
    // the plane implied by the axis: u = (I - 2 n n^T) (p - v_l). Both
    // departure angles pick up sensitivity to axis tilts.
    const Vec3 vq = v_l - v_0;
    const double s = vq.norm();
    if (s < kDegenerateDistance)
      throw std::domain_error("transform_jacobian: degenerate mirror axis");
    const Vec3 nh = vq / s;
    const Vec3 q_dep = ue_pos - v_l;
    const Mat3 refl = Mat3::Identity() - 2.0 * nh * nh.transpose();
    const Mat3 proj = Mat3::Identity() - nh * nh.transpose();
    const Vec3 u = refl * q_dep;
    const Vec3 ut = r_bs.transpose() * u;
    const double urho2 = ut.x() * ut.x() + ut.y() * ut.y();
    if (urho2 < kDegenerateDistance * kDegenerateDistance)
      throw std::domain_error("transform_jacobian: departure aligned with the z-axis");
    const double urho = std::sqrt(urho2);

    // du = refl dq + axis_sens dvq, with dq/dv_l = -I, dvq/dv_l = I,
    // dvq/dv_0 = -I.
    const Mat3 axis_sens =
        (-2.0 / s) * (nh.dot(q_dep) * proj + nh * (proj * q_dep).transpose());
    const Mat3 du_dvl = -refl + axis_sens;
    const Mat3 du_dv0 = -axis_sens;

    const Vec3 g_az = (ut.x() * rb2 - ut.y() * rb1) / urho2;
    const Vec3 g_el = -(rb3 - (ut.z() / u.squaredNorm()) * u) / urho;
    jac.daod_az_dv = du_dvl.transpose() * g_az;
    jac.daod_az_dv0 = du_dv0.transpose() * g_az;
    jac.daod_el_dv = du_dvl.transpose() * g_el;
    jac.daod_el_dv0 = du_dv0.transpose() * g_el;
  } else {
    if (!mirror_h) {
      jac.daod_az_dv = daz_direct;
    } else {
      const Vec3 vq = r_bs.transpose() * (v_l - v_0);
      const double vrho2 = vq.x() * vq.x() + vq.y() * vq.y();
      const Vec3 t = (vq.x() * rb2 - vq.y() * rb1) / vrho2;
      jac.daod_az_dv = 2.0 * t - daz_direct;
      jac.daod_az_dv0 = -2.0 * t;
    }
    jac.daod_el_dv = del_direct;
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Spatial FIM
// ---------------------------------------------------------------------------

/// FIM over the spatial parameters [delta_alpha, v_0, ..., v_{L-1}],
/// accumulated additively over sensing instances. Cross-blocks between
/// distinct sources are structurally zero.
class SpatialFim {
 public:
  explicit SpatialFim(int num_sources)
      : num_sources_(num_sources),
        m_(Eigen::MatrixXd::Zero(4 + 3 * num_sources, 4 + 3 * num_sources)) {}

  int num_sources() const { return num_sources_; }
  const Eigen::MatrixXd& full() const { return m_; }

  Eigen::Matrix4d f_alpha() const { return m_.topLeftCorner<4, 4>(); }
  Eigen::Matrix3d f_v(int l) const { return m_.block<3, 3>(4 + 3 * l, 4 + 3 * l); }
  Eigen::Matrix<double, 3, 4> f_v_alpha(int l) const {
    return m_.block<3, 4>(4 + 3 * l, 0);
  }

  /// Adds one path's contribution T F T^T for a single sensing instance.
  void add_path_instance(int l, const Eigen::Matrix3d& efim,
                         const PathJacobians& jac) {
    const Eigen::Matrix<double, 4, 3> t_a = jac.dpsi_dalpha.transpose();
    const Eigen::Matrix3d t_v = jac.dpsi_dv.transpose();
    m_.topLeftCorner<4, 4>() += t_a * efim * t_a.transpose();
    m_.block<3, 3>(4 + 3 * l, 4 + 3 * l) += t_v * efim * t_v.transpose();
    const Eigen::Matrix<double, 3, 4> cross = t_v * efim * t_a.transpose();
    m_.block<3, 4>(4 + 3 * l, 0) += cross;
    m_.block<4, 3>(0, 4 + 3 * l) += cross.transpose();
  }

  SpatialFim& operator+=(const SpatialFim& other) {
    if (other.num_sources_ != num_sources_)
      throw std::invalid_argument("SpatialFim size mismatch");
    m_ += other.m_;
    return *this;
  }

 private:
  int num_sources_;
  Eigen::MatrixXd m_;
};

// ---------------------------------------------------------------------------
// Quaternion-constrained CRLB
// ---------------------------------------------------------------------------

struct ConstrainedFim {
  Eigen::MatrixXd u;                 // (4+3L) x (3+3L), U^T U = I
  Eigen::Matrix<double, 4, 3> u0;    // orthonormal null-space of grad ||a||^2
  Eigen::MatrixXd constrained;       // U^T F U
  bool full_rank = false;            // constrained FIM numerically full rank
};

/// Projects the spatial FIM onto the tangent space of the unit-quaternion
/// manifold at delta_alpha. The null-space basis is orthonormalized, so the
/// resulting CRLB is invariant to the particular basis choice.
inline ConstrainedFim constrain(const SpatialFim& fim, const Quaternion& delta_alpha) {
  detail::require_unit(delta_alpha, "constrain");
  Eigen::Vector4d a(delta_alpha.w, delta_alpha.x, delta_alpha.y, delta_alpha.z);
  const Eigen::Matrix4d q = Eigen::HouseholderQR<Eigen::Vector4d>(a).householderQ();
  ConstrainedFim out;
  out.u0 = q.rightCols<3>();
  const int n = static_cast<int>(fim.full().rows());
  out.u = Eigen::MatrixXd::Zero(n, n - 1);
  out.u.topLeftCorner<4, 3>() = out.u0;
  out.u.bottomRightCorner(n - 4, n - 4).setIdentity();
  out.constrained = out.u.transpose() * fim.full() * out.u;
  int rank = 0;
  scaled_pinv(out.constrained, &rank);
  out.full_rank = rank == n - 1;
  return out;
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

struct SourceBound {
  double peb = std::numeric_limits<double>::infinity();  // meters
  bool observable = false;
};

namespace detail {
/// Constrained orientation-bias EFIM with every source except `exclude_a`
/// and `exclude_b` marginalized out (pass -1 to exclude nothing).
inline Eigen::Matrix3d alpha_efim_constrained(const SpatialFim& fim,
                                              const Eigen::Matrix<double, 4, 3>& u0,
                                              int exclude_a, int exclude_b) {
  Eigen::Matrix3d a = u0.transpose() * fim.f_alpha() * u0;
  for (int l = 0; l < fim.num_sources(); ++l) {
    if (l == exclude_a || l == exclude_b) continue;
    const Eigen::Matrix3d b = fim.f_v_alpha(l) * u0;
    a -= b.transpose() * scaled_pinv(fim.f_v(l)) * b;
  }
  return a;
}

/// Unconstrained 4x4 analogue used by the angle error bounds.
inline Eigen::Matrix4d alpha_efim(const SpatialFim& fim, int exclude_a,
                                  int exclude_b) {
  Eigen::Matrix4d a = fim.f_alpha();
  for (int l = 0; l < fim.num_sources(); ++l) {
    if (l == exclude_a || l == exclude_b) continue;
    const Eigen::Matrix<double, 3, 4> b = fim.f_v_alpha(l);
    a -= b.transpose() * scaled_pinv(fim.f_v(l)) * b;
  }
  return a;
}

/// Quadratic form w^T M^+ w, flagged unobservable when w has a component
/// outside the range of M.
inline double bounded_quadratic(const Eigen::MatrixXd& m, const Eigen::VectorXd& w,
                                bool* observable) {
  // Equilibrate to unit diagonal first; the quadratic form is invariant under
  // the congruence whenever w lies in the range of m, and the range test is
  // meaningful only on the scale-free matrix.
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) d(i) = m(i, i) > 0.0 ? std::sqrt(m(i, i)) : 1.0;
  const Eigen::VectorXd di = d.cwiseInverse();
  const Eigen::MatrixXd g = di.asDiagonal() * m * di.asDiagonal();
  const Eigen::VectorXd wg = di.asDiagonal() * w;
  const Eigen::MatrixXd g_inv = pinv_sym(g);
  const Eigen::VectorXd residual = wg - g * (g_inv * wg);
  const bool obs = residual.norm() <= 1e-6 * std::max(wg.norm(), 1e-300);
  if (observable) *observable = obs;
  if (!obs) return std::numeric_limits<double>::infinity();
  return wg.dot(g_inv * wg);
}
}  // namespace detail

/// Position error bound for source l: sqrt(trace of the inverse constrained
/// EFIM), with the orientation bias and every other source marginalized.
inline SourceBound peb(const SpatialFim& fim, const ConstrainedFim& cons, int l) {
  // Before the constrained FIM reaches full rank, pseudo-inverse based
  // reductions silently drop unobservable directions and can report
  // misleadingly small (and non-monotone) bounds; report unobservable.
  if (!cons.full_rank) return {};
  const Eigen::Matrix3d a = detail::alpha_efim_constrained(fim, cons.u0, l, -1);
  const Eigen::Matrix3d b = fim.f_v_alpha(l) * cons.u0;
  const Eigen::Matrix3d fe = fim.f_v(l) - b * scaled_pinv(a) * b.transpose();
  int rank = 0;
  const Eigen::MatrixXd fe_inv = scaled_pinv(fe, &rank);
  SourceBound out;
  out.observable = (rank == 3);
  if (out.observable) out.peb = std::sqrt(fe_inv.trace());
  return out;
}

/// Orientation error bound in radians: the physical angle error implied by
/// the quaternion-block trace of the constrained CRLB.
inline double oeb(const SpatialFim& fim, const ConstrainedFim& cons) {
  if (!cons.full_rank) return 2.0 * kPi;  // no-information ceiling of the map
  const Eigen::MatrixXd crlb =
      cons.u * scaled_pinv(cons.constrained) * cons.u.transpose();
  double t = crlb.topLeftCorner<4, 4>().trace();
  t = std::clamp(t, 0.0, 4.0);
  return 2.0 * std::acos(std::clamp(1.0 - 0.5 * t, -1.0, 1.0));
}

/// Angle error bounds (variances, rad^2) for one source at a query pose.
struct AngleErrorBounds {
  double aoa_az = std::numeric_limits<double>::infinity();
  double aoa_el = std::numeric_limits<double>::infinity();
  double aod_az = std::numeric_limits<double>::infinity();
  double aod_el = std::numeric_limits<double>::infinity();
  bool observable = false;
};

/// Block-form angle error bounds. AoA bounds couple the source location with
/// the orientation bias; AoD bounds couple the BS and the mirrored source,
/// with the orientation-bias information reduced by all remaining sources.
inline AngleErrorBounds aeb(const SpatialFim& fim, const PathJacobians& jac, int l) {
  AngleErrorBounds out;

  // AoA: omega over (delta_alpha, v_l).
  Eigen::MatrixXd m_r(7, 7);
  m_r.topLeftCorner<4, 4>() = detail::alpha_efim(fim, l, -1);
  m_r.block<3, 4>(4, 0) = fim.f_v_alpha(l);
  m_r.block<4, 3>(0, 4) = fim.f_v_alpha(l).transpose();
  m_r.block<3, 3>(4, 4) = fim.f_v(l);

  bool obs_az = false, obs_el = false, obs_taz = false, obs_tel = false;
  Eigen::VectorXd w(7);
  w << jac.dpsi_dalpha.row(0).transpose(), jac.dpsi_dv.row(0).transpose();
  out.aoa_az = detail::bounded_quadratic(m_r, w, &obs_az);
  w << jac.dpsi_dalpha.row(1).transpose(), jac.dpsi_dv.row(1).transpose();
  out.aoa_el = detail::bounded_quadratic(m_r, w, &obs_el);

  if (l == 0) {
    // LoS: the departure angles depend on v_0 alone.
    const Eigen::Matrix4d a = detail::alpha_efim(fim, 0, -1);
    const Eigen::Matrix<double, 3, 4> b = fim.f_v_alpha(0);
    const Eigen::Matrix3d m_t = fim.f_v(0) - b * scaled_pinv(a) * b.transpose();
    out.aod_az = detail::bounded_quadratic(m_t, jac.daod_az_dv, &obs_taz);
    out.aod_el = detail::bounded_quadratic(m_t, jac.daod_el_dv, &obs_tel);
  } else {
    const Eigen::Matrix4d a = detail::alpha_efim(fim, 0, l);
    const Eigen::MatrixXd a_inv = scaled_pinv(a);
    Eigen::MatrixXd m_t = Eigen::MatrixXd::Zero(6, 6);
    m_t.topLeftCorner<3, 3>() = fim.f_v(0);
    m_t.bottomRightCorner<3, 3>() = fim.f_v(l);
    Eigen::Matrix<double, 6, 4> c;
    c.topRows<3>() = fim.f_v_alpha(0);
    c.bottomRows<3>() = fim.f_v_alpha(l);
    m_t -= c * a_inv * c.transpose();

    Eigen::VectorXd wt(6);
    wt << jac.daod_az_dv0, jac.daod_az_dv;
    out.aod_az = detail::bounded_quadratic(m_t, wt, &obs_taz);
    wt << jac.daod_el_dv0, jac.daod_el_dv;
    out.aod_el = detail::bounded_quadratic(m_t, wt, &obs_tel);
  }
  out.observable = obs_az && obs_el && obs_taz && obs_tel;
  return out;
}

}  // namespace beamsight

#endif  // BEAMSIGHT_CRLB_HPP
