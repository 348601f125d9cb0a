#ifndef BEAMSIGHT_RADIO_HPP
#define BEAMSIGHT_RADIO_HPP

/**
 * @file radio.hpp
 * @brief Antenna arrays, element patterns, OFDM channel synthesis,
 *        beamforming codebooks, and beamforming gain.
 */

#include <algorithm>
#include <complex>
#include <random>
#include <vector>

#include "beamsight/geometry.hpp"

namespace beamsight {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// ---------------------------------------------------------------------------
// Array geometry
// ---------------------------------------------------------------------------

/// Element positions relative to the array center (meters).
struct ArrayGeometry {
  std::vector<Vec3> offsets;

  int size() const { return static_cast<int>(offsets.size()); }

  /// Uniform linear array along `axis`, centered at the origin.
  static ArrayGeometry ula(int n, double spacing, const Vec3& axis) {
    ArrayGeometry g;
    const Vec3 u = axis.normalized();
    for (int m = 0; m < n; ++m)
      g.offsets.push_back(u * spacing * (m - 0.5 * (n - 1)));
    return g;
  }

  /// Uniform planar array spanned by two axes, centered at the origin.
  static ArrayGeometry upa(int n1, int n2, double spacing, const Vec3& axis1,
                           const Vec3& axis2) {
    ArrayGeometry g;
    const Vec3 u1 = axis1.normalized(), u2 = axis2.normalized();
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < n2; ++b)
        g.offsets.push_back(u1 * spacing * (a - 0.5 * (n1 - 1)) +
                            u2 * spacing * (b - 0.5 * (n2 - 1)));
    return g;
  }
};

/// Wave vector for a direction, magnitude 2*pi/lambda.
inline Vec3 wave_vector(double az, double el, double wavelength) {
  return (2.0 * kPi / wavelength) * direction_from_angles(az, el);
}

/// Ideal (isotropic-element) array response, unit norm.
inline CVector steering_vector(const ArrayGeometry& geom, double az, double el,
                               double wavelength) {
  const Vec3 k = wave_vector(az, el, wavelength);
  const double scale = 1.0 / std::sqrt(static_cast<double>(geom.size()));
  CVector a(geom.size());
  for (int m = 0; m < geom.size(); ++m) {
    const double phase = -geom.offsets[m].dot(k);
    a(m) = scale * Complex(std::cos(phase), std::sin(phase));
  }
  return a;
}

/// Steering vector together with its partial derivatives in azimuth and
/// elevation (needed for Fisher-information computations).
struct SteeringWithDerivs {
  CVector value, d_az, d_el;
};

inline SteeringWithDerivs steering_vector_derivs(const ArrayGeometry& geom,
                                                 double az, double el,
                                                 double wavelength) {
  const double c = 2.0 * kPi / wavelength;
  const Vec3 k = c * direction_from_angles(az, el);
  const Vec3 dk_az = c * Vec3(-std::sin(az) * std::sin(el), std::cos(az) * std::sin(el), 0.0);
  const Vec3 dk_el = c * Vec3(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), -std::sin(el));
  const double scale = 1.0 / std::sqrt(static_cast<double>(geom.size()));

  SteeringWithDerivs out;
  out.value.resize(geom.size());
  out.d_az.resize(geom.size());
  out.d_el.resize(geom.size());
  for (int m = 0; m < geom.size(); ++m) {
    const double phase = -geom.offsets[m].dot(k);
    const Complex v = scale * Complex(std::cos(phase), std::sin(phase));
    out.value(m) = v;
    out.d_az(m) = v * Complex(0.0, -geom.offsets[m].dot(dk_az));
    out.d_el(m) = v * Complex(0.0, -geom.offsets[m].dot(dk_el));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Element radiation pattern (parametric single-element model)
// ---------------------------------------------------------------------------

struct RadiationPattern {
  double max_gain_dbi = 8.0;
  double theta_3db_deg = 65.0;
  double sla_v_db = 30.0;
  double a_max_db = 30.0;
  Quaternion boresight = Quaternion::identity();  // local frame of the pattern

  /// Pattern whose boresight points at global azimuth `az` in the horizontal
  /// plane. The local frame has its boresight at (az, el) = (pi/2, pi/2).
  static RadiationPattern facing_azimuth(double az, double max_gain_dbi = 8.0) {
    RadiationPattern p;
    p.max_gain_dbi = max_gain_dbi;
    p.boresight = Quaternion::z_rotation(az - 0.5 * kPi);
    return p;
  }

  /// Attenuation in dB (>= 0) at local angles, before the max-gain offset.
  double attenuation_db(double local_az, double local_el) const {
    const double t3 = theta_3db_deg * kPi / 180.0;
    const double dv = local_el - 0.5 * kPi;
    const double dh = wrap_angle(local_az - 0.5 * kPi);
    const double a_v = std::min(12.0 * (dv / t3) * (dv / t3), sla_v_db);
    const double a_h = std::min(12.0 * (dh / t3) * (dh / t3), a_max_db);
    return std::min(a_v + a_h, a_max_db);
  }
};

struct GainWithDerivs {
  double value = 0.0;  // linear amplitude
  double d_az = 0.0;
  double d_el = 0.0;
};

/// Element amplitude gain (linear) at global angles (az, el), with analytic
/// partial derivatives through the pattern's local frame.
inline GainWithDerivs element_gain_derivs(const RadiationPattern& pattern,
                                          double az, double el) {
  const Mat3 r = quat_to_rotmat(pattern.boresight);
  const Vec3 u = direction_from_angles(az, el);
  const Vec3 du_az(-std::sin(az) * std::sin(el), std::cos(az) * std::sin(el), 0.0);
  const Vec3 du_el(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), -std::sin(el));
  const Vec3 ul = r.transpose() * u;
  const Vec3 dul_az = r.transpose() * du_az;
  const Vec3 dul_el = r.transpose() * du_el;

  const double rho2 = ul.x() * ul.x() + ul.y() * ul.y();
  const double local_az = std::atan2(ul.y(), ul.x());
  const double local_el = std::acos(std::clamp(ul.z(), -1.0, 1.0));

  // Local-angle sensitivities to the global angles.
  double daz_g[2] = {0.0, 0.0}, del_g[2] = {0.0, 0.0};
  if (rho2 > 1e-300) {
    const double rho = std::sqrt(rho2);
    daz_g[0] = (ul.x() * dul_az.y() - ul.y() * dul_az.x()) / rho2;
    daz_g[1] = (ul.x() * dul_el.y() - ul.y() * dul_el.x()) / rho2;
    del_g[0] = -dul_az.z() / rho;
    del_g[1] = -dul_el.z() / rho;
  }

  const double t3 = pattern.theta_3db_deg * kPi / 180.0;
  const double dv = local_el - 0.5 * kPi;
  const double dh = wrap_angle(local_az - 0.5 * kPi);
  const double qv = 12.0 * (dv / t3) * (dv / t3);
  const double qh = 12.0 * (dh / t3) * (dh / t3);
  const double a_v = std::min(qv, pattern.sla_v_db);
  const double a_h = std::min(qh, pattern.a_max_db);
  const double att = std::min(a_v + a_h, pattern.a_max_db);

  const double g_db = pattern.max_gain_dbi - att;
  GainWithDerivs out;
  out.value = std::pow(10.0, g_db / 20.0);

  // Attenuation gradient in local angles; zero on every clamped branch.
  double datt_dlaz = 0.0, datt_dlel = 0.0;
  if (a_v + a_h < pattern.a_max_db) {
    if (qv < pattern.sla_v_db) datt_dlel = 24.0 * dv / (t3 * t3);
    if (qh < pattern.a_max_db) datt_dlaz = 24.0 * dh / (t3 * t3);
  }
  const double amp_factor = out.value * std::log(10.0) / 20.0;
  out.d_az = -amp_factor * (datt_dlaz * daz_g[0] + datt_dlel * del_g[0]);
  out.d_el = -amp_factor * (datt_dlaz * daz_g[1] + datt_dlel * del_g[1]);
  return out;
}

inline double element_gain(const RadiationPattern& pattern, double az, double el) {
  return element_gain_derivs(pattern, az, el).value;
}

// ---------------------------------------------------------------------------
// Codebooks and UE panels
// ---------------------------------------------------------------------------

struct TxBeam {
  double az = 0.0;
  double el = 0.0;
};

/// Pre-assigned beam steering directions. Tx beams are (azimuth, elevation)
/// pairs on a grid; Rx beams are azimuths with elevation fixed at pi/2.
struct Codebook {
  std::vector<TxBeam> tx_beams;   // sorted by (az, el), el fastest
  std::vector<double> rx_beams;   // strictly sorted azimuths (panel-local)
  int tx_az_count = 0;            // grid shape: tx_beams[i*tx_el_count + j]
  int tx_el_count = 0;

  int tx_count() const { return static_cast<int>(tx_beams.size()); }
  int rx_count() const { return static_cast<int>(rx_beams.size()); }

  static Codebook from_grids(const std::vector<double>& tx_az,
                             const std::vector<double>& tx_el,
                             const std::vector<double>& rx_az) {
    Codebook cb;
    cb.tx_az_count = static_cast<int>(tx_az.size());
    cb.tx_el_count = static_cast<int>(tx_el.size());
    for (double a : tx_az)
      for (double e : tx_el) cb.tx_beams.push_back({a, e});
    cb.rx_beams = rx_az;
    for (size_t i = 1; i < cb.rx_beams.size(); ++i)
      if (cb.rx_beams[i] <= cb.rx_beams[i - 1])
        throw std::invalid_argument("rx codebook angles must be strictly sorted");
    return cb;
  }

  /// Angular span [min, max] covered by the Tx beam grid, per axis.
  std::pair<double, double> tx_az_span() const {
    auto [lo, hi] = std::minmax_element(
        tx_beams.begin(), tx_beams.end(),
        [](const TxBeam& a, const TxBeam& b) { return a.az < b.az; });
    return {lo->az, hi->az};
  }
  std::pair<double, double> tx_el_span() const {
    auto [lo, hi] = std::minmax_element(
        tx_beams.begin(), tx_beams.end(),
        [](const TxBeam& a, const TxBeam& b) { return a.el < b.el; });
    return {lo->el, hi->el};
  }
};

/// One of the J edge-mounted UE panels. All panels share the array center
/// (far-field assumption); only the boresight azimuth differs.
struct UePanel {
  ArrayGeometry geometry;
  RadiationPattern pattern;
  double boresight_az = 0.0;  // UE frame
};

struct UePanelSet {
  std::vector<UePanel> panels;

  int count() const { return static_cast<int>(panels.size()); }

  /// Rx beam azimuth of codebook entry m on panel j (1-based j), offset by
  /// (j-1) * pi/2 so the four panels tile the full circle.
  static double panel_beam_az(double codebook_az, int panel_j) {
    return codebook_az + 0.5 * kPi * (panel_j - 1);
  }

  static UePanelSet standard(int j_count, int n_r, double wavelength,
                             const RadiationPattern& base_pattern) {
    UePanelSet set;
    for (int j = 1; j <= j_count; ++j) {
      UePanel p;
      // Panel j covers azimuths around pi/2 + (j-1)*pi/2, the center of its
      // offset beam range; the ULA axis is perpendicular to the boresight.
      p.boresight_az = 0.5 * kPi + 0.5 * kPi * (j - 1);
      p.geometry = ArrayGeometry::ula(
          n_r, 0.5 * wavelength,
          Vec3(std::cos(p.boresight_az + 0.5 * kPi),
               std::sin(p.boresight_az + 0.5 * kPi), 0.0));
      p.pattern = base_pattern;
      p.pattern.boresight = Quaternion::z_rotation(p.boresight_az - 0.5 * kPi);
      set.panels.push_back(std::move(p));
    }
    return set;
  }
};

// ---------------------------------------------------------------------------
// Measurement schedule
// ---------------------------------------------------------------------------

struct MeasurementSchedule {
  enum class Kind { Ssb, CsiRs };

  Kind kind = Kind::Ssb;
  int n_subcarriers = 240;
  double subcarrier_spacing = 60e3;  // Hz
  double carrier_freq = 28e9;        // Hz
  double noise_var = 1.0;
  std::vector<int> tx_beam_indices;    // into Codebook::tx_beams
  std::vector<double> rx_beam_angles;  // absolute azimuths (panel offset applied)

  double wavelength() const { return kSpeedOfLight / carrier_freq; }

  static MeasurementSchedule ssb(const Codebook& cb, int panel_j,
                                 const std::vector<double>& rx_codebook_angles,
                                 double noise_var, double carrier_freq = 28e9,
                                 double scs = 60e3, int n_sub = 240) {
    MeasurementSchedule s;
    s.kind = Kind::Ssb;
    s.n_subcarriers = n_sub;
    s.subcarrier_spacing = scs;
    s.carrier_freq = carrier_freq;
    s.noise_var = noise_var;
    for (int i = 0; i < cb.tx_count(); ++i) s.tx_beam_indices.push_back(i);
    for (double a : rx_codebook_angles)
      s.rx_beam_angles.push_back(UePanelSet::panel_beam_az(a, panel_j));
    return s;
  }

  static MeasurementSchedule csi_rs(int serving_tx_beam, int panel_j,
                                    const std::vector<double>& rx_codebook_angles,
                                    double noise_var, double carrier_freq = 28e9,
                                    double scs = 60e3, int n_sub = 330) {
    MeasurementSchedule s;
    s.kind = Kind::CsiRs;
    s.n_subcarriers = n_sub;
    s.subcarrier_spacing = scs;
    s.carrier_freq = carrier_freq;
    s.noise_var = noise_var;
    s.tx_beam_indices.push_back(serving_tx_beam);
    for (double a : rx_codebook_angles)
      s.rx_beam_angles.push_back(UePanelSet::panel_beam_az(a, panel_j));
    return s;
  }
};

// ---------------------------------------------------------------------------
// Paths and channel synthesis
// ---------------------------------------------------------------------------

/// Per-path channel parameters (angles, delay, complex propagation gain).
/// The gain excludes element patterns; those enter through the array
/// response vectors.
struct PathParams {
  PathAngles angles;
  Complex gain{0.0, 0.0};
  int source_index = 0;             // 0 = physical BS
  bool mirror_h = false;
  bool mirror_v = false;
  Vec3 reflection_point = Vec3::Zero();  // diagnostics; valid for NLoS paths
  bool has_reflection = false;
};

/// Transmit side of a link: array plus embedded element pattern.
struct TxFrontEnd {
  ArrayGeometry array;
  RadiationPattern pattern;
};

/// Full N_r x N_t channel matrix at subcarrier index n.
inline CMatrix channel_matrix(const std::vector<PathParams>& paths,
                              const TxFrontEnd& tx, const UePanel& panel,
                              int n, const MeasurementSchedule& schedule) {
  const double lambda = schedule.wavelength();
  const int n_t = tx.array.size();
  const int n_r = panel.geometry.size();
  CMatrix h = CMatrix::Zero(n_r, n_t);
  const double scale = std::sqrt(static_cast<double>(n_t) * n_r);
  for (const PathParams& p : paths) {
    const double phase = -2.0 * kPi * n * schedule.subcarrier_spacing * p.angles.toa;
    const Complex delay_term(std::cos(phase), std::sin(phase));
    const double rho_r = element_gain(panel.pattern, p.angles.aoa_az, p.angles.aoa_el);
    const double rho_t = element_gain(tx.pattern, p.angles.aod_az, p.angles.aod_el);
    const CVector a_r = rho_r * steering_vector(panel.geometry, p.angles.aoa_az,
                                                p.angles.aoa_el, lambda);
    const CVector a_t = rho_t * steering_vector(tx.array, p.angles.aod_az,
                                                p.angles.aod_el, lambda);
    h += scale * delay_term * p.gain * (a_r * a_t.adjoint());
  }
  return h;
}

/// Effective scalar channel w_rx^H H w_tx.
inline Complex effective_channel(const CMatrix& h, const CVector& w_tx,
                                 const CVector& w_rx) {
  if (h.rows() != w_rx.size() || h.cols() != w_tx.size())
    throw std::invalid_argument("effective_channel: dimension mismatch");
  return (w_rx.adjoint() * h * w_tx)(0, 0);
}

/// Per-path factor of the effective channel: everything except the delay
/// phasor, i.e. H~(f_n) = sum_l amplitude_l * exp(-j 2 pi n df tau_l).
struct PathBeamFactor {
  Complex amplitude{0.0, 0.0};
  double toa = 0.0;
  Complex b_r{0.0, 0.0};  // Rx steering inner product (diagnostic)
  Complex b_t{0.0, 0.0};  // Tx steering inner product (diagnostic)
};

inline PathBeamFactor path_beam_factor(const PathParams& p, const TxFrontEnd& tx,
                                       const UePanel& panel, double tx_beam_az,
                                       double tx_beam_el, double rx_beam_az,
                                       double wavelength) {
  const int n_t = tx.array.size();
  const int n_r = panel.geometry.size();
  const CVector w_t = steering_vector(tx.array, tx_beam_az, tx_beam_el, wavelength);
  const CVector w_r = steering_vector(panel.geometry, rx_beam_az, 0.5 * kPi, wavelength);
  const CVector a_r = steering_vector(panel.geometry, p.angles.aoa_az, p.angles.aoa_el, wavelength);
  const CVector a_t = steering_vector(tx.array, p.angles.aod_az, p.angles.aod_el, wavelength);

  PathBeamFactor f;
  f.toa = p.angles.toa;
  f.b_r = (w_r.adjoint() * a_r)(0, 0);
  f.b_t = (a_t.adjoint() * w_t)(0, 0);
  const double rho_r = element_gain(panel.pattern, p.angles.aoa_az, p.angles.aoa_el);
  const double rho_t = element_gain(tx.pattern, p.angles.aod_az, p.angles.aod_el);
  f.amplitude = std::sqrt(static_cast<double>(n_t) * n_r) * p.gain * rho_r * f.b_r * rho_t * f.b_t;
  return f;
}

/// Effective channel at subcarrier n from the factored per-path form.
inline Complex effective_channel_factored(const std::vector<PathBeamFactor>& factors,
                                          int n, double subcarrier_spacing) {
  Complex h(0.0, 0.0);
  for (const PathBeamFactor& f : factors) {
    const double phase = -2.0 * kPi * n * subcarrier_spacing * f.toa;
    h += f.amplitude * Complex(std::cos(phase), std::sin(phase));
  }
  return h;
}

/// Beamforming gain: sum over subcarriers of |effective channel|.
inline double beamforming_gain(const std::vector<PathParams>& paths,
                               const TxFrontEnd& tx, const UePanel& panel,
                               double tx_beam_az, double tx_beam_el,
                               double rx_beam_az,
                               const MeasurementSchedule& schedule) {
  std::vector<PathBeamFactor> factors;
  factors.reserve(paths.size());
  for (const PathParams& p : paths)
    factors.push_back(path_beam_factor(p, tx, panel, tx_beam_az, tx_beam_el,
                                       rx_beam_az, schedule.wavelength()));
  double bg = 0.0;
  for (int n = 0; n < schedule.n_subcarriers; ++n)
    bg += std::abs(effective_channel_factored(factors, n, schedule.subcarrier_spacing));
  return bg;
}

/// Noisy received pilot matrices, one M_r x M_t matrix per subcarrier.
/// Noise is circularly symmetric complex Gaussian with variance
/// schedule.noise_var per entry, independent across entries and subcarriers.
inline std::vector<CMatrix> observe(const std::vector<PathParams>& paths,
                                    const MeasurementSchedule& schedule,
                                    const TxFrontEnd& tx, const UePanel& panel,
                                    const Codebook& codebook,
                                    std::mt19937_64& rng) {
  const int m_r = static_cast<int>(schedule.rx_beam_angles.size());
  const int m_t = static_cast<int>(schedule.tx_beam_indices.size());
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5 * schedule.noise_var));

  // Per beam pair amplitude factors; the subcarrier loop only adds phasors.
  std::vector<std::vector<std::vector<PathBeamFactor>>> factors(m_r);
  for (int ir = 0; ir < m_r; ++ir) {
    factors[ir].resize(m_t);
    for (int it = 0; it < m_t; ++it) {
      const TxBeam beam = codebook.tx_beams.at(schedule.tx_beam_indices[it]);
      for (const PathParams& p : paths)
        factors[ir][it].push_back(path_beam_factor(
            p, tx, panel, beam.az, beam.el, schedule.rx_beam_angles[ir],
            schedule.wavelength()));
    }
  }

  std::vector<CMatrix> y(schedule.n_subcarriers, CMatrix::Zero(m_r, m_t));
  for (int n = 0; n < schedule.n_subcarriers; ++n)
    for (int ir = 0; ir < m_r; ++ir)
      for (int it = 0; it < m_t; ++it) {
        const Complex noise = schedule.noise_var > 0.0
                                  ? Complex(gauss(rng), gauss(rng))
                                  : Complex(0.0, 0.0);
        y[n](ir, it) =
            effective_channel_factored(factors[ir][it], n, schedule.subcarrier_spacing) +
            noise;
      }
  return y;
}

}  // namespace beamsight

#endif  // BEAMSIGHT_RADIO_HPP
