#ifndef BEAMSIGHT_SCENE_HPP
#define BEAMSIGHT_SCENE_HPP

/**
 * @file scene.hpp
 * @brief Scenario model: room and reflecting walls, virtual transmit sources,
 *        path synthesis with a free-space gain model, sensing-instance
 *        accumulation, CSI-RS fusion, the exhaustive-scan benchmark and the
 *        beamforming-gain loss map.
 */

#include <atomic>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "beamsight/foresee.hpp"

namespace beamsight {

// ---------------------------------------------------------------------------
// Deterministic hashing helpers
// ---------------------------------------------------------------------------

inline uint64_t fnv1a_bytes(const void* data, size_t n,
                            uint64_t h = 1469598103934665603ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t hash_i64(uint64_t h, int64_t v) {
  return fnv1a_bytes(&v, sizeof(v), h);
}

/// Uniform double in [0, 1) from a 64-bit hash.
inline double unit_from_hash(uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

enum class SnrTier { kPoor, kMedium, kGood };

inline double tier_target_snr_db(SnrTier t) {
  switch (t) {
    case SnrTier::kPoor:
      return 0.0;
    case SnrTier::kMedium:
      return 10.0;
    case SnrTier::kGood:
      return 20.0;
  }
  throw std::invalid_argument("unknown SNR tier");
}

struct Wall {
  Plane plane;
  double loss_db = 6.0;  // per-bounce material reflection loss
  std::string name;
};

struct Scenario {
  Vec3 room_min = Vec3(-4.0, 0.0, 0.0);
  Vec3 room_max = Vec3(4.0, 8.0, 3.0);
  std::vector<Wall> walls;
  Pose bs;
  std::vector<Eigen::Vector2d> region;  // deployment polygon (x, y)
  double h_min = 0.9, h_max = 1.4;      // deployment height range
  Codebook codebook;
  TxFrontEnd tx;
  UePanelSet panels;
  SnrTier tier = SnrTier::kMedium;
  double carrier_freq = 28e9;
  double scs = 60e3;
  int ssb_subcarriers = 240;
  int csirs_subcarriers = 330;
  double noise_var = 0.0;  // set by calibrate_noise (0 = not yet calibrated)
  uint64_t seed = 1;

  double wavelength() const { return kSpeedOfLight / carrier_freq; }

  bool in_room(const Vec3& p, double tol = 1e-9) const {
    return (p.array() >= room_min.array() - tol).all() &&
           (p.array() <= room_max.array() + tol).all();
  }

  /// Even-odd point-in-polygon test on the deployment region.
  bool in_region(double x, double y) const {
    bool inside = false;
    const int n = static_cast<int>(region.size());
    for (int i = 0, j = n - 1; i < n; j = i++) {
      const auto& a = region[i];
      const auto& b = region[j];
      if ((a.y() > y) != (b.y() > y) &&
          x < (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()) + a.x())
        inside = !inside;
    }
    return inside;
  }

  Eigen::Vector4d region_bbox() const {  // x_min, x_max, y_min, y_max
    Eigen::Vector4d b(region[0].x(), region[0].x(), region[0].y(), region[0].y());
    for (const auto& v : region) {
      b(0) = std::min(b(0), v.x());
      b(1) = std::max(b(1), v.x());
      b(2) = std::min(b(2), v.y());
      b(3) = std::max(b(3), v.y());
    }
    return b;
  }

  Pose median_pose() const {
    const Eigen::Vector4d b = region_bbox();
    Pose p;
    p.position = Vec3(0.5 * (b(0) + b(1)), 0.5 * (b(2) + b(3)),
                      0.5 * (h_min + h_max));
    return p;
  }

  /// 8 x 8 m room, BS on the front wall facing +y, five reflecting surfaces
  /// (the wall behind the BS array does not reflect toward it), 64-beam Tx
  /// codebook and four 4-element UE panels.
  static Scenario standard_room() {
    Scenario sc;
    sc.bs.position = Vec3(0.0, 0.2, 2.0);
    sc.bs.orientation = Quaternion::identity();  // array facing +y

    sc.walls.push_back({Plane::through_point(Vec3(-1, 0, 0), Vec3(4, 0, 0)), 6.0, "wall_x_pos"});
    sc.walls.push_back({Plane::through_point(Vec3(1, 0, 0), Vec3(-4, 0, 0)), 6.0, "wall_x_neg"});
    sc.walls.push_back({Plane::through_point(Vec3(0, -1, 0), Vec3(0, 8, 0)), 6.0, "wall_y_far"});
    sc.walls.push_back({Plane::through_point(Vec3(0, 0, -1), Vec3(0, 0, 3)), 6.0, "ceiling"});
    sc.walls.push_back({Plane::through_point(Vec3(0, 0, 1), Vec3(0, 0, 0)), 6.0, "floor"});

    sc.region = {{-3.0, 2.0}, {3.0, 2.0}, {3.0, 7.0}, {-3.0, 7.0}};

    std::vector<double> tx_grid, rx_grid;
    for (int a = 20; a <= 160; a += 20) tx_grid.push_back(a * kPi / 180.0);
    for (int a = 30; a <= 150; a += 15) rx_grid.push_back(a * kPi / 180.0);
    sc.codebook = Codebook::from_grids(tx_grid, tx_grid, rx_grid);

    const double lambda = sc.wavelength();
    sc.tx.array = ArrayGeometry::upa(8, 8, 0.5 * lambda, Vec3::UnitX(), Vec3::UnitZ());
    sc.tx.pattern = RadiationPattern::facing_azimuth(0.5 * kPi);
    sc.panels = UePanelSet::standard(4, 4, lambda, RadiationPattern::facing_azimuth(0.0));
    return sc;
  }
};

// ---------------------------------------------------------------------------
// Virtual sources
// ---------------------------------------------------------------------------

struct VirtualSource {
  int index = 0;  // l; 0 is the physical BS
  Vec3 position = Vec3::Zero();
  std::optional<int> wall;  // into Scenario::walls
  bool mirror_h = false;
  bool mirror_v = false;
  bool visible = true;
};

/// BS boresight direction in world coordinates (the array faces local +y).
inline Vec3 bs_boresight(const Scenario& sc) {
  return quat_to_rotmat(sc.bs.orientation) * Vec3::UnitY();
}

/// One source per wall plus the physical BS. A source strictly behind the
/// unidirectional BS array plane is marked invisible.
inline std::vector<VirtualSource> build_virtual_sources(const Scenario& sc) {
  std::vector<VirtualSource> out;
  VirtualSource bs;
  bs.index = 0;
  bs.position = sc.bs.position;
  out.push_back(bs);

  const Vec3 b = bs_boresight(sc);
  for (int w = 0; w < static_cast<int>(sc.walls.size()); ++w) {
    VirtualSource v;
    v.index = static_cast<int>(out.size());
    v.position = mirror_point(sc.bs.position, sc.walls[w].plane);
    v.wall = w;
    const Plane::MirrorClass mc = sc.walls[w].plane.mirror_class();
    v.mirror_h = (mc == Plane::MirrorClass::Horizontal);
    v.mirror_v = (mc == Plane::MirrorClass::Vertical);
    v.visible = b.dot(v.position - sc.bs.position) > -1e-12;
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Path synthesis
// ---------------------------------------------------------------------------

/// Path phase in [0, 2 pi), a seeded hash of the source and UE positions.
/// Positions enter through (|x|, y, z) so that scenes mirrored across the
/// x = 0 plane receive identical phases.
inline double path_phase(uint64_t seed, const Vec3& source, const Vec3& ue) {
  auto q = [](double v) { return static_cast<int64_t>(std::llround(v * 1e6)); };
  uint64_t h = hash_i64(fnv1a_bytes(&seed, sizeof(seed)), q(std::abs(source.x())));
  h = hash_i64(h, q(source.y()));
  h = hash_i64(h, q(source.z()));
  h = hash_i64(h, q(std::abs(ue.x())));
  h = hash_i64(h, q(ue.y()));
  h = hash_i64(h, q(ue.z()));
  return 2.0 * kPi * unit_from_hash(h);
}

/// Reflection point of the straight segment from a mirrored source to the UE
/// on the generating plane, or nullopt when the segment misses the plane
/// inside the room (the path is then geometrically invalid).
inline std::optional<Vec3> reflection_point(const Scenario& sc,
                                            const VirtualSource& src,
                                            const Vec3& ue) {
  const Plane& pl = sc.walls[*src.wall].plane;
  const double dv = pl.signed_distance(src.position);
  const double du = pl.signed_distance(ue);
  if (std::abs(dv - du) < 1e-15) return std::nullopt;  // segment parallel
  const double t = dv / (dv - du);
  if (t <= 1e-9 || t >= 1.0 - 1e-9) return std::nullopt;
  const Vec3 s = src.position + t * (ue - src.position);
  if (!sc.in_room(s)) return std::nullopt;
  return s;
}

/// Channel paths at one UE pose. Gains follow the free-space amplitude
/// lambda / (4 pi c tau) attenuated by the wall's reflection loss, with a
/// seeded random phase. `blockage` zeroes the LoS gain. Invisible sources
/// and geometrically invalid reflections produce no path.
inline std::vector<PathParams> synthesize_paths(
    const Scenario& sc, const std::vector<VirtualSource>& sources,
    const Pose& ue, bool blockage = false) {
  const double lambda = sc.wavelength();
  std::vector<PathParams> out;
  for (const VirtualSource& src : sources) {
    if (!src.visible) continue;
    PathParams p;
    p.source_index = src.index;
    p.mirror_h = src.mirror_h;
    p.mirror_v = src.mirror_v;
    try {
      p.angles = geometric_transform(src.position, sc.bs.position, ue,
                                     sc.bs.orientation, src.mirror_h, src.mirror_v);
    } catch (const std::domain_error&) {
      continue;
    }
    double loss_db = 0.0;
    if (src.wall) {
      const std::optional<Vec3> s = reflection_point(sc, src, ue.position);
      if (!s) continue;
      p.reflection_point = *s;
      p.has_reflection = true;
      loss_db = sc.walls[*src.wall].loss_db;
    }
    const double amp = lambda / (4.0 * kPi * kSpeedOfLight * p.angles.toa) *
                       std::pow(10.0, -loss_db / 20.0);
    const double phase = path_phase(sc.seed, src.position, ue.position);
    p.gain = (blockage && src.index == 0)
                 ? Complex(0.0, 0.0)
                 : amp * Complex(std::cos(phase), std::sin(phase));
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive scan
// ---------------------------------------------------------------------------

struct ScanResult {
  int panel = -1;    // 0-based
  int tx_beam = -1;  // into Codebook::tx_beams
  int rx_beam = -1;  // into Codebook::rx_beams
  double bg = 0.0;
  long evaluations = 0;
};

/// Receive beam azimuths of panel j (0-based) for a codebook angle list.
inline std::vector<double> panel_rx_azimuths(const std::vector<double>& angles,
                                             int panel) {
  std::vector<double> out;
  for (double a : angles) out.push_back(UePanelSet::panel_beam_az(a, panel + 1));
  return out;
}

/// Beamforming gain of one (panel, tx beam, rx beam) triple over the Tx grid
/// codebook, from precomputable per-path factors.
inline double scan_bg(const std::vector<PathParams>& paths, const TxFrontEnd& tx,
                      const UePanel& panel, double tx_az, double tx_el,
                      double rx_az, int n_sub, double scs_hz, double lambda) {
  std::vector<PathBeamFactor> f;
  for (const PathParams& p : paths)
    f.push_back(path_beam_factor(p, tx, panel, tx_az, tx_el, rx_az, lambda));
  double bg = 0.0;
  for (int n = 0; n < n_sub; ++n)
    bg += std::abs(effective_channel_factored(f, n, scs_hz));
  return bg;
}

/// Maximizes the beamforming gain over all panel / tx / rx combinations.
/// Ties break toward the lowest (panel, tx, rx) triple.
inline ScanResult exhaustive_scan(const Scenario& sc,
                                  const std::vector<PathParams>& paths) {
  const double lambda = sc.wavelength();
  const int n_paths = static_cast<int>(paths.size());
  ScanResult best;

  // Per-path tx-side factors, shared across panels.
  std::vector<std::vector<Complex>> tx_fac(n_paths);  // [path][tx beam]
  for (int i = 0; i < n_paths; ++i) {
    const PathParams& p = paths[i];
    const SteeringWithDerivs at = steering_vector_derivs(
        sc.tx.array, p.angles.aod_az, p.angles.aod_el, lambda);
    const double rho_t =
        element_gain(sc.tx.pattern, p.angles.aod_az, p.angles.aod_el);
    for (const TxBeam& b : sc.codebook.tx_beams) {
      const CVector w_t = steering_vector(sc.tx.array, b.az, b.el, lambda);
      tx_fac[i].push_back(rho_t * (at.value.adjoint() * w_t)(0, 0));
    }
  }
  // Per-path delay phasors.
  std::vector<std::vector<Complex>> phasor(n_paths);
  for (int i = 0; i < n_paths; ++i)
    for (int n = 0; n < sc.ssb_subcarriers; ++n) {
      const double ph = -2.0 * kPi * n * sc.scs * paths[i].angles.toa;
      phasor[i].push_back(Complex(std::cos(ph), std::sin(ph)));
    }

  for (int j = 0; j < sc.panels.count(); ++j) {
    const UePanel& panel = sc.panels.panels[j];
    const double scale =
        std::sqrt(static_cast<double>(sc.tx.array.size()) * panel.geometry.size());
    const std::vector<double> rx_az = panel_rx_azimuths(sc.codebook.rx_beams, j);
    // Per-path rx-side factors for this panel.
    std::vector<std::vector<Complex>> rx_fac(n_paths);
    for (int i = 0; i < n_paths; ++i) {
      const PathParams& p = paths[i];
      const CVector a_r = steering_vector(panel.geometry, p.angles.aoa_az,
                                          p.angles.aoa_el, lambda);
      const double rho_r =
          element_gain(panel.pattern, p.angles.aoa_az, p.angles.aoa_el);
      for (double a : rx_az) {
        const CVector w_r = steering_vector(panel.geometry, a, 0.5 * kPi, lambda);
        rx_fac[i].push_back(rho_r * (w_r.adjoint() * a_r)(0, 0));
      }
    }
    for (int mt = 0; mt < sc.codebook.tx_count(); ++mt)
      for (int mr = 0; mr < sc.codebook.rx_count(); ++mr) {
        double bg = 0.0;
        for (int n = 0; n < sc.ssb_subcarriers; ++n) {
          Complex h(0.0, 0.0);
          for (int i = 0; i < n_paths; ++i)
            h += scale * paths[i].gain * rx_fac[i][mr] * tx_fac[i][mt] *
                 phasor[i][n];
          bg += std::abs(h);
        }
        ++best.evaluations;
        if (bg > best.bg + 1e-15 * std::max(1.0, best.bg)) {
          best.bg = bg;
          best.panel = j;
          best.tx_beam = mt;
          best.rx_beam = mr;
        }
      }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Noise calibration (SNR tiers)
// ---------------------------------------------------------------------------

/// Noise variance realizing the tier's best-beam per-subcarrier SNR target at
/// the scenario's median pose.
inline double calibrate_noise_var(const Scenario& sc,
                                  const std::vector<VirtualSource>& sources) {
  const std::vector<PathParams> paths =
      synthesize_paths(sc, sources, sc.median_pose());
  if (paths.empty()) throw std::runtime_error("noise calibration: no paths");
  const ScanResult best = exhaustive_scan(sc, paths);
  const double per_sub_amp = best.bg / sc.ssb_subcarriers;
  const double p = per_sub_amp * per_sub_amp;
  return p * std::pow(10.0, -tier_target_snr_db(sc.tier) / 10.0);
}

inline void calibrate_noise(Scenario& sc) {
  sc.noise_var = calibrate_noise_var(sc, build_virtual_sources(sc));
}

// ---------------------------------------------------------------------------
// Experiment plan and pose sampling
// ---------------------------------------------------------------------------

struct ExperimentPlan {
  int k_instances = 50;
  int rx_beam_count = 4;  // sensing-mode Rx beams: 2, 3 or 4
  bool mirrored_sampling = false;
  bool fuse_csi_rs = false;
  bool blockage = false;
  bool kappa_inf = false;
  int grid_nx = 20, grid_ny = 20;
  double grid_height = 1.2;
  uint64_t seed = 1;
};

/// Sensing-mode receive-beam angle sets by beam count.
inline std::vector<double> rx_sensing_angles(int count) {
  auto deg = [](std::initializer_list<double> v) {
    std::vector<double> out;
    for (double d : v) out.push_back(d * kPi / 180.0);
    return out;
  };
  switch (count) {
    case 2:
      return deg({60, 90});
    case 3:
      return deg({60, 90, 120});
    case 4:
      return deg({45, 75, 105, 135});
    default:
      throw std::invalid_argument("rx_sensing_angles: count must be 2, 3 or 4");
  }
}

inline Pose mirror_pose_x(const Pose& p) {
  Pose m;
  m.position = Vec3(-p.position.x(), p.position.y(), p.position.z());
  m.orientation = {p.orientation.w, p.orientation.x, -p.orientation.y,
                   -p.orientation.z};
  return m;
}

/// Seeded i.i.d. poses in the deployment region (uniform position, uniform
/// yaw). With mirrored sampling, consecutive poses form exact mirror pairs
/// across the x = 0 plane (K must be even).
inline std::vector<Pose> sample_poses(const Scenario& sc, const ExperimentPlan& plan) {
  if (plan.k_instances < 1)
    throw std::invalid_argument("sample_poses: need at least one instance");
  if (plan.mirrored_sampling && plan.k_instances % 2 != 0)
    throw std::invalid_argument("sample_poses: mirrored sampling needs even K");

  std::mt19937_64 rng(plan.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Vector4d b = sc.region_bbox();

  const int draws = plan.mirrored_sampling ? plan.k_instances / 2 : plan.k_instances;
  std::vector<Pose> out;
  for (int i = 0; i < draws; ++i) {
    Pose p;
    do {
      p.position.x() = b(0) + (b(1) - b(0)) * unit(rng);
      p.position.y() = b(2) + (b(3) - b(2)) * unit(rng);
    } while (!sc.in_region(p.position.x(), p.position.y()));
    p.position.z() = sc.h_min + (sc.h_max - sc.h_min) * unit(rng);
    p.orientation = Quaternion::z_rotation(2.0 * kPi * unit(rng) - kPi);
    out.push_back(p);
    if (plan.mirrored_sampling) out.push_back(mirror_pose_x(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sensing runner
// ---------------------------------------------------------------------------

struct BoundReport {
  int k = 0;
  std::vector<SourceBound> peb;         // per source
  double oeb = 0.0;
  std::vector<AngleErrorBounds> aeb;    // per source, at the query pose
};

struct SensingResult {
  std::vector<VirtualSource> sources;
  SpatialFim fim;
  std::vector<BoundReport> trace;
  std::vector<Pose> poses;
  Quaternion delta_alpha = Quaternion::identity();
  Pose query;  // pose at which trace AEBs are evaluated
  double noise_var = 0.0;
};

/// Active-panel choice by received power (noiseless, at subcarrier 0) over
/// the given receive angle set; ties go to the lowest panel index.
inline int pick_panel(const Scenario& sc, const std::vector<PathParams>& paths,
                      const std::vector<double>& rx_codebook_angles) {
  const double lambda = sc.wavelength();
  int best = 0;
  double best_p = -1.0;
  for (int j = 0; j < sc.panels.count(); ++j) {
    const UePanel& panel = sc.panels.panels[j];
    double power = 0.0;
    for (double a : panel_rx_azimuths(rx_codebook_angles, j))
      for (const TxBeam& beam : sc.codebook.tx_beams) {
        std::vector<PathBeamFactor> f;
        for (const PathParams& p : paths)
          f.push_back(path_beam_factor(p, sc.tx, panel, beam.az, beam.el, a, lambda));
        power += std::norm(effective_channel_factored(f, 0, sc.scs));
      }
    if (power > best_p * (1.0 + 1e-12)) {
      best_p = power;
      best = j;
    }
  }
  return best;
}

/// Jacobians of every source's channel parameters at a pose, or nullopt per
/// source when its geometry is degenerate there.
inline std::vector<std::optional<PathJacobians>> pose_jacobians(
    const Scenario& sc, const std::vector<VirtualSource>& sources,
    const Pose& pose, const Quaternion& delta_alpha, const Mat3& r_rel) {
  std::vector<std::optional<PathJacobians>> out(sources.size());
  for (size_t l = 0; l < sources.size(); ++l) {
    if (!sources[l].visible) continue;
    try {
      out[l] = transform_jacobian(sources[l].position, sc.bs.position,
                                  pose.position, delta_alpha, r_rel,
                                  sc.bs.orientation, sources[l].mirror_h,
                                  sources[l].mirror_v);
    } catch (const std::domain_error&) {
    }
  }
  return out;
}

/// Runs the sensing mode: K seeded poses, per-instance panel selection,
/// channel-FIM accumulation into the spatial FIM, and per-K bound reports
/// (PEB/OEB per source plus AEBs at the scenario's median pose).
inline SensingResult run_sensing(const Scenario& sc, const ExperimentPlan& plan) {
  if (sc.noise_var <= 0.0)
    throw std::invalid_argument("run_sensing: scenario noise not calibrated");

  SensingResult res{build_virtual_sources(sc),
                    SpatialFim(0),
                    {},
                    sample_poses(sc, plan),
                    Quaternion::identity(),
                    sc.median_pose(),
                    sc.noise_var};
  res.fim = SpatialFim(static_cast<int>(res.sources.size()));
  res.delta_alpha = quat_multiply(sc.bs.orientation,
                                  res.poses[0].orientation.conjugate())
                        .normalized();

  const Mat3 r0 = quat_to_rotmat(res.poses[0].orientation);
  const std::vector<double> rx_set = rx_sensing_angles(plan.rx_beam_count);
  const Mat3 r_rel_query = quat_to_rotmat(res.query.orientation) * r0.transpose();
  const auto query_jac =
      pose_jacobians(sc, res.sources, res.query, res.delta_alpha, r_rel_query);

  for (int k = 0; k < plan.k_instances; ++k) {
    const Pose& pose = res.poses[k];
    std::vector<PathParams> paths =
        synthesize_paths(sc, res.sources, pose, plan.blockage);
    paths.erase(std::remove_if(paths.begin(), paths.end(),
                               [](const PathParams& p) {
                                 return std::abs(p.gain) == 0.0;
                               }),
                paths.end());
    if (!paths.empty()) {
      // Panel choice uses the full receive codebook so it does not depend on
      // the sensing beam subset (per-instance information then nests across
      // beam counts).
      const int j = pick_panel(sc, paths, sc.codebook.rx_beams);
      const MeasurementSchedule sched = MeasurementSchedule::ssb(
          sc.codebook, j + 1, rx_set, sc.noise_var, sc.carrier_freq, sc.scs,
          sc.ssb_subcarriers);
      const AvailableFim av = efim_available(
          fim_channel(paths, sched, sc.tx, sc.panels.panels[j], sc.codebook));
      const Mat3 r_rel = quat_to_rotmat(pose.orientation) * r0.transpose();
      for (size_t i = 0; i < paths.size(); ++i) {
        const int l = paths[i].source_index;
        try {
          const PathJacobians jac = transform_jacobian(
              res.sources[l].position, sc.bs.position, pose.position,
              res.delta_alpha, r_rel, sc.bs.orientation, paths[i].mirror_h,
              paths[i].mirror_v);
          res.fim.add_path_instance(l, av.blocks[i], jac);
        } catch (const std::domain_error&) {
        }
      }
    }

    BoundReport rep;
    rep.k = k + 1;
    const ConstrainedFim cons = constrain(res.fim, res.delta_alpha);
    for (size_t l = 0; l < res.sources.size(); ++l)
      rep.peb.push_back(peb(res.fim, cons, static_cast<int>(l)));
    rep.oeb = oeb(res.fim, cons);
    for (size_t l = 0; l < res.sources.size(); ++l)
      rep.aeb.push_back(query_jac[l]
                            ? aeb(res.fim, *query_jac[l], static_cast<int>(l))
                            : AngleErrorBounds{});
    res.trace.push_back(std::move(rep));
  }
  return res;
}

// ---------------------------------------------------------------------------
// CSI-RS fusion
// ---------------------------------------------------------------------------

/// Adds one CSI-RS instance (serving beam fixed by exhaustive scan, panel by
/// power detector) at `pose` to a copy of `base`. Pass a zero FIM for the
/// CSI-RS-only mode.
inline SpatialFim fuse_csirs(const Scenario& sc, const SpatialFim& base,
                             const std::vector<VirtualSource>& sources,
                             const Pose& pose, const Pose& reference,
                             const Quaternion& delta_alpha, int rx_beam_count,
                             double noise_var) {
  SpatialFim out = base;
  std::vector<PathParams> paths = synthesize_paths(sc, sources, pose);
  paths.erase(std::remove_if(paths.begin(), paths.end(),
                             [](const PathParams& p) {
                               return std::abs(p.gain) == 0.0;
                             }),
              paths.end());
  if (paths.empty()) return out;

  const ScanResult serving = exhaustive_scan(sc, paths);
  const std::vector<double> rx_set = rx_sensing_angles(rx_beam_count);
  const int j = pick_panel(sc, paths, rx_set);
  const MeasurementSchedule sched = MeasurementSchedule::csi_rs(
      serving.tx_beam, j + 1, rx_set, noise_var, sc.carrier_freq, sc.scs,
      sc.csirs_subcarriers);
  const AvailableFim av = efim_available(
      fim_channel(paths, sched, sc.tx, sc.panels.panels[j], sc.codebook));
  const Mat3 r_rel = quat_to_rotmat(pose.orientation) *
                     quat_to_rotmat(reference.orientation).transpose();
  for (size_t i = 0; i < paths.size(); ++i) {
    const int l = paths[i].source_index;
    try {
      const PathJacobians jac = transform_jacobian(
          sources[l].position, sc.bs.position, pose.position, delta_alpha,
          r_rel, sc.bs.orientation, paths[i].mirror_h, paths[i].mirror_v);
      out.add_path_instance(l, av.blocks[i], jac);
    } catch (const std::domain_error&) {
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic parallel map
// ---------------------------------------------------------------------------

/// Index-parallel map; results must be written to per-index slots so the
/// output is independent of scheduling. jobs = 0 uses hardware concurrency.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  if (jobs <= 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  for (int t = 0; t < jobs; ++t)
    workers.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (std::thread& w : workers) w.join();
}

// ---------------------------------------------------------------------------
// Von Mises sampling (Best–Fisher rejection scheme)
// ---------------------------------------------------------------------------

inline double sample_von_mises(std::mt19937_64& rng, double mu, double kappa) {
  if (std::isinf(kappa)) return mu;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (kappa < 1e-9) return wrap_angle(mu + 2.0 * kPi * unit(rng) - kPi);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  while (true) {
    const double z = std::cos(kPi * unit(rng));
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u = unit(rng);
    if (c * (2.0 - c) - u > 0.0 || std::log(c / u) + 1.0 - c >= 0.0) {
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      return wrap_angle(mu + sign * std::acos(std::clamp(f, -1.0, 1.0)));
    }
  }
}

// ---------------------------------------------------------------------------
// Beam foreseeing over a grid: BG loss map
// ---------------------------------------------------------------------------

enum class ForeseeMode { kStandard, kOptimal };

struct GridCell {
  double x = 0.0, y = 0.0;
  bool inside = false;
  double bg_es = 0.0, bg_fs = 0.0;
  double loss_db = 0.0;
  int panel_es = -1, panel_fs = -1;
  long evals_es = 0, evals_fs = 0;  // true-BG evaluations spent
};

struct BgLossMap {
  int nx = 0, ny = 0;
  std::vector<GridCell> cells;  // row-major, y outer
  double max_loss_db = 0.0;
  double mean_loss_db = 0.0;
  double panel_agreement = 1.0;  // fraction of valid cells
  long foresee_evaluations = 0;  // true-BG evaluations spent by foreseeing
  long scan_evaluations = 0;
};

namespace detail {

/// True beamforming gain of one triple, shared by both foresee modes.
inline double triple_bg(const Scenario& sc, const std::vector<PathParams>& paths,
                        int panel, int tx_beam, double rx_az) {
  const TxBeam b = sc.codebook.tx_beams[tx_beam];
  return scan_bg(paths, sc.tx, sc.panels.panels[panel], b.az, b.el, rx_az,
                 sc.ssb_subcarriers, sc.scs, sc.wavelength());
}

}  // namespace detail

/// Foreseeing decision at one pose given per-path beliefs; returns the chosen
/// triple and its true beamforming gain on `paths`.
///
/// Standard mode tracks the LoS path only and plays its quantized beams.
/// Optimal mode scores candidates by expected gain, then refines the at most
/// `budget` distinct Tx candidates by measuring the true gain over every
/// panel and receive beam.
struct ForeseeDecision {
  int panel = -1, tx_beam = -1, rx_beam = -1;
  double bg = 0.0;
  long evaluations = 0;
};

inline ForeseeDecision foresee_pose(const Scenario& sc,
                                    const std::vector<PathParams>& paths,
                                    const std::vector<PathParams>& predicted,
                                    const std::vector<BeliefSet>& beliefs,
                                    ForeseeMode mode, int budget = 6) {
  ForeseeDecision dec;

  // The quantized LoS triple doubles as the standard mode and the fallback.
  auto quantized_los = [&]() -> ForeseeDecision {
    ForeseeDecision d;
    int los = -1;
    for (size_t i = 0; i < predicted.size(); ++i)
      if (predicted[i].source_index == 0) los = static_cast<int>(i);
    if (los < 0) return d;
    const PathAngles& a = predicted[los].angles;
    int panel = 0;
    double best_off = std::numeric_limits<double>::infinity();
    for (int j = 0; j < sc.panels.count(); ++j) {
      const double off = angle_distance(sc.panels.panels[j].boresight_az, a.aoa_az);
      if (off < best_off - 1e-15) {
        best_off = off;
        panel = j;
      }
    }
    d.panel = panel;
    d.tx_beam = quantize_tx_beam(sc.codebook, a.aod_az, a.aod_el);
    d.rx_beam =
        quantize_rx_beam(panel_rx_azimuths(sc.codebook.rx_beams, panel), a.aoa_az);
    d.bg = detail::triple_bg(sc, paths, d.panel, d.tx_beam,
                             UePanelSet::panel_beam_az(sc.codebook.rx_beams[d.rx_beam],
                                                       d.panel + 1));
    d.evaluations = 1;
    return d;
  };

  if (mode == ForeseeMode::kStandard) return quantized_los();

  MeasurementSchedule score_sched;  // carries wavelength/subcarriers for scoring
  score_sched.carrier_freq = sc.carrier_freq;
  score_sched.subcarrier_spacing = sc.scs;
  score_sched.n_subcarriers = sc.ssb_subcarriers;
  const std::vector<CandidateBeam> cands = select_candidates(
      predicted, beliefs, sc.tx, sc.panels, sc.codebook, score_sched, budget);
  if (cands.empty()) return quantized_los();

  // Refinement: measure the true gain of every candidate Tx beam against all
  // panels and receive beams; ties toward the lowest (panel, tx, rx).
  for (int j = 0; j < sc.panels.count(); ++j) {
    const std::vector<double> rx_az = panel_rx_azimuths(sc.codebook.rx_beams, j);
    for (const CandidateBeam& c : cands)
      for (int mr = 0; mr < sc.codebook.rx_count(); ++mr) {
        const double bg = detail::triple_bg(sc, paths, j, c.tx_beam_index, rx_az[mr]);
        ++dec.evaluations;
        if (bg > dec.bg + 1e-15 * std::max(1.0, dec.bg)) {
          dec.bg = bg;
          dec.panel = j;
          dec.tx_beam = c.tx_beam_index;
          dec.rx_beam = mr;
        }
      }
  }
  if (dec.panel < 0) return quantized_los();
  return dec;
}

/// Per-cell BG loss (dB) of foreseeing versus the exhaustive scan on a grid
/// at fixed height and identity orientation. With `sensing` null (or
/// plan.kappa_inf), beliefs are point masses at the true angles; otherwise
/// belief means are perturbed by von Mises errors with bound-derived
/// concentrations. Deterministic for a fixed plan seed.
inline BgLossMap bg_loss_map(const Scenario& sc, const ExperimentPlan& plan,
                             ForeseeMode mode,
                             const SensingResult* sensing = nullptr,
                             int jobs = 1) {
  const std::vector<VirtualSource> sources =
      sensing ? sensing->sources : build_virtual_sources(sc);
  const Eigen::Vector4d bb = sc.region_bbox();

  BgLossMap map;
  map.nx = plan.grid_nx;
  map.ny = plan.grid_ny;
  map.cells.resize(static_cast<size_t>(plan.grid_nx) * plan.grid_ny);

  const bool exact = plan.kappa_inf || sensing == nullptr;
  parallel_for(static_cast<int>(map.cells.size()), jobs, [&](int idx) {
    GridCell& cell = map.cells[idx];
    const int iy = idx / plan.grid_nx, ix = idx % plan.grid_nx;
    cell.x = bb(0) + (bb(1) - bb(0)) * (plan.grid_nx == 1 ? 0.5 : ix / (plan.grid_nx - 1.0));
    cell.y = bb(2) + (bb(3) - bb(2)) * (plan.grid_ny == 1 ? 0.5 : iy / (plan.grid_ny - 1.0));
    if (!sc.in_region(cell.x, cell.y)) return;

    Pose pose;
    pose.position = Vec3(cell.x, cell.y, plan.grid_height);
    const std::vector<PathParams> paths =
        synthesize_paths(sc, sources, pose, plan.blockage);
    bool any_power = false;
    for (const PathParams& p : paths) any_power |= std::abs(p.gain) > 0.0;
    if (!any_power) return;

    const ScanResult es = exhaustive_scan(sc, paths);
    if (es.bg <= 0.0) return;

    // Beliefs: exact, or perturbed by bound-calibrated errors.
    std::vector<PathParams> predicted = paths;
    std::vector<BeliefSet> beliefs(paths.size());
    if (exact) {
      AngleErrorBounds zero;  // zero variance = point mass at the true angles
      zero.aoa_az = zero.aoa_el = zero.aod_az = zero.aod_el = 0.0;
      zero.observable = true;
      for (size_t i = 0; i < paths.size(); ++i)
        beliefs[i] = beliefs_from_bounds(paths[i].angles, zero);
    } else {
      std::mt19937_64 rng(hash_i64(fnv1a_bytes(&plan.seed, sizeof(plan.seed)), idx));
      const Mat3 r_rel =
          quat_to_rotmat(pose.orientation) *
          quat_to_rotmat(sensing->poses[0].orientation).transpose();
      for (size_t i = 0; i < paths.size(); ++i) {
        AngleErrorBounds eb;
        try {
          const PathJacobians jac = transform_jacobian(
              sources[paths[i].source_index].position, sc.bs.position,
              pose.position, sensing->delta_alpha, r_rel, sc.bs.orientation,
              paths[i].mirror_h, paths[i].mirror_v);
          eb = aeb(sensing->fim, jac, paths[i].source_index);
        } catch (const std::domain_error&) {
        }
        PathAngles a = paths[i].angles;
        auto perturb = [&](double mean, double var) {
          if (!std::isfinite(var) || var <= 0.0) return mean;
          return sample_von_mises(rng, mean, 1.0 / var);
        };
        a.aoa_az = perturb(a.aoa_az, eb.aoa_az);
        a.aoa_el = perturb(a.aoa_el, eb.aoa_el);
        a.aod_az = perturb(a.aod_az, eb.aod_az);
        a.aod_el = perturb(a.aod_el, eb.aod_el);
        predicted[i].angles = a;
        beliefs[i] = beliefs_from_bounds(a, eb);
      }
    }

    const ForeseeDecision dec = foresee_pose(sc, paths, predicted, beliefs, mode);
    cell.inside = dec.panel >= 0;
    if (!cell.inside) return;
    cell.bg_es = es.bg;
    cell.bg_fs = dec.bg;
    cell.loss_db = dec.bg > 0.0 ? 10.0 * std::log10(es.bg / dec.bg) : 99.0;
    cell.panel_es = es.panel;
    cell.panel_fs = dec.panel;
    cell.evals_es = es.evaluations;
    cell.evals_fs = dec.evaluations;
  });

  // Summary statistics over valid cells.
  int valid = 0, agree = 0;
  double sum = 0.0;
  for (const GridCell& c : map.cells) {
    if (!c.inside) continue;
    ++valid;
    sum += c.loss_db;
    map.max_loss_db = std::max(map.max_loss_db, c.loss_db);
    if (c.panel_es == c.panel_fs) ++agree;
    map.scan_evaluations += c.evals_es;
    map.foresee_evaluations += c.evals_fs;
  }
  if (valid > 0) {
    map.mean_loss_db = sum / valid;
    map.panel_agreement = static_cast<double>(agree) / valid;
  }
  return map;
}

}  // namespace beamsight

#endif  // BEAMSIGHT_SCENE_HPP
