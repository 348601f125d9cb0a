#ifndef BEAMSIGHT_IO_HPP
#define BEAMSIGHT_IO_HPP

/**
 * @file io.hpp
 * @brief Scenario configuration loading/validation and CSV/JSON exports.
 */

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "beamsight/scene.hpp"

namespace beamsight {

using Json = nlohmann::json;

struct LoadedConfig {
  Scenario scenario;
  ExperimentPlan plan;
  std::vector<std::string> errors;  // validation diagnostics (empty = valid)

  bool valid() const { return errors.empty(); }
};

namespace detail {

inline Vec3 vec3_from(const Json& j) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument("expected a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline std::vector<double> deg_list(const Json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.get<double>() * kPi / 180.0);
  return out;
}

}  // namespace detail

inline SnrTier tier_from_string(const std::string& s) {
  if (s == "poor") return SnrTier::kPoor;
  if (s == "medium") return SnrTier::kMedium;
  if (s == "good") return SnrTier::kGood;
  throw std::invalid_argument("unknown SNR tier '" + s + "'");
}

inline std::string tier_to_string(SnrTier t) {
  switch (t) {
    case SnrTier::kPoor:
      return "poor";
    case SnrTier::kMedium:
      return "medium";
    case SnrTier::kGood:
      return "good";
  }
  return "?";
}

/// Parses and validates a scenario configuration. Parse failures throw;
/// semantic problems are collected into `errors` so a validator can report
/// them all at once.
inline LoadedConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }

  LoadedConfig cfg;
  Scenario& sc = cfg.scenario;
  auto fail = [&](const std::string& m) { cfg.errors.push_back(m); };

  try {
    sc.room_min = detail::vec3_from(j.at("room").at("min"));
    sc.room_max = detail::vec3_from(j.at("room").at("max"));
    if ((sc.room_max.array() <= sc.room_min.array()).any())
      fail("room: max must exceed min on every axis");

    sc.bs.position = detail::vec3_from(j.at("bs").at("position"));
    const double bs_az = j.at("bs").value("facing_az_deg", 90.0) * kPi / 180.0;
    sc.bs.orientation = Quaternion::z_rotation(bs_az - 0.5 * kPi);
    if (!sc.in_room(sc.bs.position)) fail("bs: position outside the room");

    sc.walls.clear();
    for (const auto& w : j.at("walls")) {
      const std::string name = w.value("name", "wall");
      try {
        Wall wall;
        const Vec3 n = detail::vec3_from(w.at("normal"));
        if (std::abs(n.norm() - 1.0) > 1e-9)
          fail("wall '" + name + "': normal is not unit length");
        wall.plane = Plane::through_point(n, detail::vec3_from(w.at("point")));
        wall.loss_db = w.value("loss_db", 6.0);
        wall.name = name;
        wall.plane.mirror_class();  // rejects oblique planes
        sc.walls.push_back(wall);
      } catch (const std::exception& e) {
        fail("wall '" + name + "': " + e.what());
      }
    }

    sc.region.clear();
    for (const auto& v : j.at("region").at("polygon")) {
      sc.region.push_back({v[0].get<double>(), v[1].get<double>()});
      const Vec3 p3(v[0].get<double>(), v[1].get<double>(), sc.room_min.z());
      if (!sc.in_room(p3)) fail("region: polygon vertex outside the room");
    }
    if (sc.region.size() < 3) fail("region: polygon needs at least 3 vertices");
    sc.h_min = j.at("region").value("h_min", 0.9);
    sc.h_max = j.at("region").value("h_max", 1.4);
    if (sc.h_min >= sc.h_max) fail("region: h_min must be below h_max");

    const Json& cb = j.at("codebook");
    try {
      sc.codebook = Codebook::from_grids(detail::deg_list(cb.at("tx_az_deg")),
                                         detail::deg_list(cb.at("tx_el_deg")),
                                         detail::deg_list(cb.at("rx_deg")));
    } catch (const std::exception& e) {
      fail(std::string("codebook: ") + e.what());
    }

    sc.carrier_freq = j.at("radio").value("carrier_freq_hz", 28e9);
    sc.scs = j.at("radio").value("scs_hz", 60e3);
    sc.ssb_subcarriers = j.at("radio").value("ssb_subcarriers", 240);
    sc.csirs_subcarriers = j.at("radio").value("csirs_subcarriers", 330);

    const Json& pat = j.value("pattern", Json::object());
    RadiationPattern base;
    base.max_gain_dbi = pat.value("max_gain_dbi", 8.0);
    base.theta_3db_deg = pat.value("theta_3db_deg", 65.0);
    base.sla_v_db = pat.value("sla_v_db", 30.0);
    base.a_max_db = pat.value("a_max_db", 30.0);

    const Json& arr = j.at("arrays");
    const double lambda = sc.wavelength();
    sc.tx.array = ArrayGeometry::upa(arr.value("tx_n1", 8), arr.value("tx_n2", 8),
                                     0.5 * lambda, Vec3::UnitX(), Vec3::UnitZ());
    sc.tx.pattern = base;
    sc.tx.pattern.boresight = sc.bs.orientation;
    sc.panels = UePanelSet::standard(arr.value("panels", 4),
                                     arr.value("panel_n", 4), lambda, base);

    sc.tier = tier_from_string(j.value("tier", "medium"));
    sc.seed = j.value("seed", uint64_t{1});

    const Json& plan = j.value("plan", Json::object());
    cfg.plan.k_instances = plan.value("k", 50);
    cfg.plan.rx_beam_count = plan.value("rx_beams", 4);
    cfg.plan.mirrored_sampling = plan.value("mirrored_sampling", false);
    cfg.plan.grid_nx = plan.value("grid_nx", 20);
    cfg.plan.grid_ny = plan.value("grid_ny", 20);
    cfg.plan.grid_height = plan.value("grid_height", 1.2);
    cfg.plan.seed = sc.seed;
    if (cfg.plan.k_instances < 1) fail("plan: k must be >= 1");
    if (cfg.plan.rx_beam_count < 2 || cfg.plan.rx_beam_count > 4)
      fail("plan: rx_beams must be 2, 3 or 4");
  } catch (const Json::exception& e) {
    fail(std::string("config structure: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// CSV map of the BG loss grid. Header names units and column meaning.
inline void write_bg_loss_csv(const BgLossMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# beam-foreseeing BG loss map; x,y in meters; loss in dB "
         "(10*log10(BG_exhaustive/BG_foreseeing)); panels 0-based; "
         "cells outside the deployment region have inside=0\n";
  out << "x,y,inside,bg_es,bg_fs,loss_db,panel_es,panel_fs\n";
  for (const GridCell& c : map.cells) {
    out << format_double(c.x) << ',' << format_double(c.y) << ','
        << (c.inside ? 1 : 0) << ',' << format_double(c.bg_es) << ','
        << format_double(c.bg_fs) << ',' << format_double(c.loss_db) << ','
        << c.panel_es << ',' << c.panel_fs << '\n';
  }
}

/// CSV of per-instance bound traces: one row per sensing instance.
inline void write_bounds_csv(const SensingResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# bound traces; peb_l in meters per transmit source l (0 = physical "
         "BS); oeb in radians; aeb_* in rad^2 for the LoS source at the query "
         "pose; inf = unobservable\n";
  out << "k";
  for (size_t l = 0; l < res.sources.size(); ++l) out << ",peb_" << l;
  out << ",oeb,aeb_aoa_az_0,aeb_aoa_el_0,aeb_aod_az_0,aeb_aod_el_0\n";
  for (const BoundReport& r : res.trace) {
    out << r.k;
    for (const SourceBound& b : r.peb) out << ',' << format_double(b.peb);
    out << ',' << format_double(r.oeb);
    out << ',' << format_double(r.aeb[0].aoa_az) << ','
        << format_double(r.aeb[0].aoa_el) << ','
        << format_double(r.aeb[0].aod_az) << ','
        << format_double(r.aeb[0].aod_el) << '\n';
  }
}

/// JSON bound traces with explicit units and parameter orderings.
inline Json bounds_json(const SensingResult& res) {
  Json j;
  j["units"] = {{"peb", "m"}, {"oeb", "rad"}, {"aeb", "rad^2"}};
  j["parameter_order"] = "delta_alpha[4], v_0[3], ..., v_{L-1}[3]";
  j["sources"] = Json::array();
  for (const VirtualSource& s : res.sources)
    j["sources"].push_back({{"index", s.index},
                            {"position", {s.position.x(), s.position.y(), s.position.z()}},
                            {"mirror_h", s.mirror_h},
                            {"mirror_v", s.mirror_v},
                            {"visible", s.visible}});
  j["trace"] = Json::array();
  for (const BoundReport& r : res.trace) {
    Json rec;
    rec["k"] = r.k;
    rec["oeb_rad"] = r.oeb;
    rec["peb_m"] = Json::array();
    rec["peb_observable"] = Json::array();
    for (const SourceBound& b : r.peb) {
      rec["peb_m"].push_back(std::isfinite(b.peb) ? Json(b.peb) : Json("inf"));
      rec["peb_observable"].push_back(b.observable);
    }
    rec["aeb_rad2"] = Json::array();
    for (const AngleErrorBounds& a : r.aeb) {
      auto v = [](double x) { return std::isfinite(x) ? Json(x) : Json("inf"); };
      rec["aeb_rad2"].push_back({{"aoa_az", v(a.aoa_az)},
                                 {"aoa_el", v(a.aoa_el)},
                                 {"aod_az", v(a.aod_az)},
                                 {"aod_el", v(a.aod_el)},
                                 {"observable", a.observable}});
    }
    j["trace"].push_back(std::move(rec));
  }
  return j;
}

/// JSON candidate list (beams in indices, expected BG in dB).
inline Json candidates_json(const std::vector<CandidateBeam>& cands) {
  Json j = Json::array();
  for (const CandidateBeam& c : cands)
    j.push_back({{"path", c.path_index},
                 {"panel", c.panel_index},
                 {"tx_beam", c.tx_beam_index},
                 {"rx_beam", c.rx_beam_index},
                 {"expected_bg_db", c.score > 0.0 ? 10.0 * std::log10(c.score)
                                                  : -std::numeric_limits<double>::infinity()}});
  return j;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a hash of a file's bytes, hex-encoded.
inline std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const uint64_t h = fnv1a_bytes(bytes.data(), bytes.size());
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

struct RunManifest {
  std::string command;
  std::string config_path;
  uint64_t seed = 0;
  std::string out_dir;
  std::string config_hash;

  Json to_json() const {
    return Json{{"command", command},
                {"config", config_path},
                {"seed", seed},
                {"out_dir", out_dir},
                {"tool_version", kToolVersion},
                {"config_hash_fnv1a64", config_hash}};
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json().dump(2) << '\n';
  }
};

}  // namespace beamsight

#endif  // BEAMSIGHT_IO_HPP
