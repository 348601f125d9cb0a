#ifndef BEAMSIGHT_FORESEE_HPP
#define BEAMSIGHT_FORESEE_HPP

/**
 * @file foresee.hpp
 * @brief Beam prediction from error-bound-calibrated angle beliefs:
 *        von Mises angle models, expected beamforming gain, codebook
 *        quantization and candidate beam selection.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "beamsight/crlb.hpp"

namespace beamsight {

// ---------------------------------------------------------------------------
// von Mises angle beliefs
// ---------------------------------------------------------------------------

/// log I0(x) for x >= 0, series for small arguments and the standard
/// asymptotic expansion for large ones (stable where exp(x) overflows).
inline double log_bessel_i0(double x) {
  x = std::abs(x);
  if (x < 300.0) {
    // I0(x) = sum_k (x^2/4)^k / (k!)^2 ; the sum stays below ~e^300.
    const double q = 0.25 * x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 2000; ++k) {
      term *= q / (static_cast<double>(k) * k);
      sum += term;
      if (term < 1e-18 * sum && k > static_cast<int>(0.5 * x)) break;
    }
    return std::log(sum);
  }
  // Asymptotic expansion; at x >= 300 the truncation error is below 1e-13.
  const double ix = 1.0 / x;
  const double series =
      1.0 + ix * (0.125 +
                  ix * (9.0 / 128.0 +
                        ix * (225.0 / 3072.0 + ix * (11025.0 / 98304.0))));
  return x - 0.5 * std::log(2.0 * kPi * x) + std::log(series);
}

/// Circular density; kappa = +inf is understood as a point mass by callers.
inline double von_mises_pdf(double theta, double mu, double kappa) {
  if (kappa < 0.0) throw std::invalid_argument("von_mises_pdf: negative kappa");
  return std::exp(kappa * std::cos(theta - mu) - std::log(2.0 * kPi) -
                  log_bessel_i0(kappa));
}

/// Angle belief: circular mean plus a von Mises concentration calibrated
/// from an error-bound variance (kappa = 1 / variance).
struct AngleBelief {
  double mean = 0.0;
  double kappa = std::numeric_limits<double>::infinity();

  bool point_mass() const { return std::isinf(kappa); }
};

/// Zero variance means a point mass; infinite (unobservable) variance means a
/// uniform circular belief (kappa = 0).
inline AngleBelief belief_from_variance(double mean, double variance_rad2) {
  AngleBelief b;
  b.mean = mean;
  if (variance_rad2 <= 0.0)
    b.kappa = std::numeric_limits<double>::infinity();
  else if (std::isfinite(variance_rad2))
    b.kappa = 1.0 / variance_rad2;
  else
    b.kappa = 0.0;
  return b;
}

/// Per-path beliefs over the four access angles.
struct BeliefSet {
  AngleBelief aoa_az, aoa_el, aod_az, aod_el;
};

inline BeliefSet beliefs_from_bounds(const PathAngles& predicted,
                                     const AngleErrorBounds& eb) {
  BeliefSet b;
  b.aoa_az = belief_from_variance(predicted.aoa_az, eb.aoa_az);
  b.aoa_el = belief_from_variance(predicted.aoa_el, eb.aoa_el);
  b.aod_az = belief_from_variance(predicted.aod_az, eb.aod_az);
  b.aod_el = belief_from_variance(predicted.aod_el, eb.aod_el);
  return b;
}

/// Channel angles at a forecast pose, for a physical or mirrored source.
inline PathAngles predict_path_angles(const Vec3& v_l, const Vec3& v_0,
                                      const Pose& ue,
                                      const Quaternion& bs_orientation,
                                      bool mirror_h, bool mirror_v) {
  return geometric_transform(v_l, v_0, ue, bs_orientation, mirror_h, mirror_v);
}

// ---------------------------------------------------------------------------
// Beam quantization
// ---------------------------------------------------------------------------

/// Nearest entry of a scalar beam-angle list under the wrapped metric;
/// ties resolve toward the lowest index.
inline int quantize_rx_beam(const std::vector<double>& beam_azimuths, double az) {
  if (beam_azimuths.empty())
    throw std::invalid_argument("quantize_rx_beam: empty beam list");
  int best = 0;
  double best_d = angle_distance(beam_azimuths[0], az);
  for (int i = 1; i < static_cast<int>(beam_azimuths.size()); ++i) {
    const double d = angle_distance(beam_azimuths[i], az);
    if (d < best_d - 1e-15) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

/// Nearest transmit beam in the 2-D codebook by summed squared wrapped
/// angular offsets; ties resolve toward the lowest index.
inline int quantize_tx_beam(const Codebook& cb, double az, double el) {
  if (cb.tx_beams.empty())
    throw std::invalid_argument("quantize_tx_beam: empty codebook");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(cb.tx_beams.size()); ++i) {
    const double da = angle_distance(cb.tx_beams[i].az, az);
    const double de = angle_distance(cb.tx_beams[i].el, el);
    const double d = da * da + de * de;
    if (d < best_d - 1e-15) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Expected beamforming gain
// ---------------------------------------------------------------------------

namespace detail {

/// 1-degree quadrature nodes covering the von Mises mass of a belief,
/// clipped to where the density exceeds ~e^-16 of its mode. A point mass
/// yields the single node at the mean.
inline std::vector<double> belief_nodes(const AngleBelief& b, double max_half_span) {
  if (b.point_mass()) return {b.mean};
  double half = max_half_span;
  if (b.kappa > 16.0 / (1.0 - std::cos(std::min(max_half_span, kPi)))) {
    half = std::acos(std::max(-1.0, 1.0 - 16.0 / b.kappa));
  }
  const double step = kPi / 180.0;
  const int n = std::max(1, static_cast<int>(std::ceil(half / step)));
  std::vector<double> nodes;
  nodes.reserve(2 * n + 1);
  for (int i = -n; i <= n; ++i) nodes.push_back(b.mean + i * step);
  return nodes;
}

}  // namespace detail

/// Expected receive alignment E[rho_r |w_r^H a_r|] over the arrival-azimuth
/// belief, elevation held at its believed mean. Weighted 1-degree quadrature,
/// normalized by the quadrature mass so the point-mass and uniform limits are
/// exact expectations.
inline double expected_rx_term(const UePanel& panel, double rx_az,
                               const AngleBelief& az_belief, double el_mean,
                               double wavelength) {
  const CVector w_r = steering_vector(panel.geometry, rx_az, 0.5 * kPi, wavelength);
  double num = 0.0, den = 0.0;
  for (double a : detail::belief_nodes(az_belief, kPi)) {
    const double p = az_belief.point_mass()
                         ? 1.0
                         : von_mises_pdf(a, az_belief.mean, az_belief.kappa);
    const CVector a_r = steering_vector(panel.geometry, a, el_mean, wavelength);
    num += p * element_gain(panel.pattern, a, el_mean) *
           std::abs((w_r.adjoint() * a_r)(0, 0));
    den += p;
  }
  return den > 0.0 ? num / den : 0.0;
}

/// Expected transmit alignment E[rho_t |a_t^H w_t|] over the 2-D departure
/// belief (independent azimuth and elevation components).
inline double expected_tx_term(const TxFrontEnd& tx, double tx_az, double tx_el,
                               const AngleBelief& az_belief,
                               const AngleBelief& el_belief, double wavelength) {
  const CVector w_t = steering_vector(tx.array, tx_az, tx_el, wavelength);
  const std::vector<double> az_nodes = detail::belief_nodes(az_belief, kPi);
  const std::vector<double> el_nodes = detail::belief_nodes(el_belief, 0.5 * kPi);
  double num = 0.0, den = 0.0;
  for (double e : el_nodes) {
    if (e <= 1e-9 || e >= kPi - 1e-9) continue;  // poles carry no valid beam
    const double pe = el_belief.point_mass()
                          ? 1.0
                          : von_mises_pdf(e, el_belief.mean, el_belief.kappa);
    for (double a : az_nodes) {
      const double pa = az_belief.point_mass()
                            ? 1.0
                            : von_mises_pdf(a, az_belief.mean, az_belief.kappa);
      const CVector a_t = steering_vector(tx.array, a, e, wavelength);
      num += pe * pa * element_gain(tx.pattern, a, e) *
             std::abs((a_t.adjoint() * w_t)(0, 0));
      den += pe * pa;
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

/// Expected per-path beamforming gain of one (tx beam, rx beam) pair under
/// independent von Mises beliefs on the four access angles.
///
/// Per path the per-subcarrier response magnitude is constant, so the gain
/// factors into a receive term (arrival azimuth belief, elevation at its
/// mean) and a transmit term (2-D departure belief).
inline double expected_beam_gain(const PathParams& path, const BeliefSet& beliefs,
                                 const TxFrontEnd& tx, const UePanel& panel,
                                 double tx_az, double tx_el, double rx_az,
                                 const MeasurementSchedule& schedule) {
  const double lambda = schedule.wavelength();
  const double scale =
      std::sqrt(static_cast<double>(tx.array.size()) * panel.geometry.size()) *
      std::abs(path.gain) * schedule.n_subcarriers;
  const double rx =
      expected_rx_term(panel, rx_az, beliefs.aoa_az, beliefs.aoa_el.mean, lambda);
  const double txf =
      expected_tx_term(tx, tx_az, tx_el, beliefs.aod_az, beliefs.aod_el, lambda);
  return scale * rx * txf;
}

// ---------------------------------------------------------------------------
// Candidate selection
// ---------------------------------------------------------------------------

struct CandidateBeam {
  int path_index = -1;
  int tx_beam_index = -1;
  int panel_index = -1;
  int rx_beam_index = -1;  // index into the receive codebook angle list
  double score = 0.0;      // expected beamforming gain
};

/// Selects up to `budget` transmit-beam candidates from per-path angle
/// beliefs:
///  1. paths whose predicted departure azimuth falls outside the codebook
///     sector are dropped;
///  2. each surviving path picks the panel whose boresight is closest to the
///     predicted arrival azimuth, and its quantized receive beam;
///  3. the quantized transmit beam plus its 3x3 codebook neighborhood are
///     scored by expected beamforming gain;
///  4. the highest-scoring distinct transmit beams are kept (ties toward the
///     lower beam index).
inline std::vector<CandidateBeam> select_candidates(
    const std::vector<PathParams>& predicted_paths,
    const std::vector<BeliefSet>& beliefs, const TxFrontEnd& tx,
    const UePanelSet& panels, const Codebook& codebook,
    const MeasurementSchedule& schedule, int budget = 6) {
  if (predicted_paths.size() != beliefs.size())
    throw std::invalid_argument("select_candidates: path/belief size mismatch");

  const auto [az_lo, az_hi] = codebook.tx_az_span();
  const int n_az = codebook.tx_az_count;
  const int n_el = codebook.tx_el_count;

  std::vector<CandidateBeam> scored;
  for (int pi = 0; pi < static_cast<int>(predicted_paths.size()); ++pi) {
    const PathParams& path = predicted_paths[pi];
    const BeliefSet& belief = beliefs[pi];
    const double aod_az = path.angles.aod_az;
    if (aod_az < az_lo - 1e-12 || aod_az > az_hi + 1e-12) continue;

    // Panel with boresight nearest the predicted arrival azimuth.
    int panel_idx = 0;
    double best_off = std::numeric_limits<double>::infinity();
    for (int j = 0; j < static_cast<int>(panels.panels.size()); ++j) {
      const double off =
          angle_distance(panels.panels[j].boresight_az, path.angles.aoa_az);
      if (off < best_off - 1e-15) {
        best_off = off;
        panel_idx = j;
      }
    }
    const UePanel& panel = panels.panels[panel_idx];
    std::vector<double> rx_angles;
    for (double a : codebook.rx_beams)
      rx_angles.push_back(UePanelSet::panel_beam_az(a, panel_idx + 1));
    const int rx_idx = quantize_rx_beam(rx_angles, path.angles.aoa_az);

    const int center = quantize_tx_beam(codebook, aod_az, path.angles.aod_el);
    const int ci = center / n_el, cj = center % n_el;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const int i = ci + di, j = cj + dj;
        if (i < 0 || i >= n_az || j < 0 || j >= n_el) continue;
        const int beam = i * n_el + j;
        CandidateBeam cand;
        cand.path_index = pi;
        cand.tx_beam_index = beam;
        cand.panel_index = panel_idx;
        cand.rx_beam_index = rx_idx;
        cand.score = expected_beam_gain(path, belief, tx, panel,
                                        codebook.tx_beams[beam].az,
                                        codebook.tx_beams[beam].el,
                                        rx_angles[rx_idx], schedule);
        scored.push_back(cand);
      }
  }

  std::stable_sort(scored.begin(), scored.end(),
                   [](const CandidateBeam& a, const CandidateBeam& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.tx_beam_index < b.tx_beam_index;
                   });

  std::vector<CandidateBeam> out;
  for (const CandidateBeam& c : scored) {
    bool dup = false;
    for (const CandidateBeam& kept : out)
      if (kept.tx_beam_index == c.tx_beam_index) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(c);
    if (static_cast<int>(out.size()) >= budget) break;
  }
  return out;
}

}  // namespace beamsight

#endif  // BEAMSIGHT_FORESEE_HPP
