/**
 * @file beamsight_main.cpp
 * @brief Command-line entry point: scenario validation, bound traces, and
 *        beam-foreseeing BG loss maps.
 */

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "beamsight/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

bool verbose_logging() {
  const char* v = std::getenv("BEAMSIGHT_LOG");
  return v != nullptr && std::string(v) != "0" && std::string(v) != "";
}

void log_line(const std::string& msg) {
  if (verbose_logging()) std::cerr << "[beamsight] " << msg << '\n';
}

struct CommonArgs {
  std::string config;
  std::string out = ".";
  uint64_t seed = 0;  // 0 = keep config seed
  int jobs = 0;
};

beamsight::LoadedConfig load_or_die(const CommonArgs& args) {
  beamsight::LoadedConfig cfg = beamsight::load_config(args.config);
  if (!cfg.valid()) {
    for (const std::string& e : cfg.errors) std::cerr << "error: " << e << '\n';
    std::exit(kExitValidation);
  }
  if (args.seed != 0) {
    cfg.scenario.seed = args.seed;
    cfg.plan.seed = args.seed;
  }
  return cfg;
}

beamsight::RunManifest make_manifest(const std::string& command,
                                     const CommonArgs& args, uint64_t seed) {
  beamsight::RunManifest m;
  m.command = command;
  m.config_path = args.config;
  m.seed = seed;
  m.out_dir = args.out;
  m.config_hash = beamsight::file_hash_hex(args.config);
  return m;
}

int cmd_validate(const CommonArgs& args) {
  beamsight::LoadedConfig cfg = beamsight::load_config(args.config);
  if (!cfg.valid()) {
    for (const std::string& e : cfg.errors) std::cerr << "error: " << e << '\n';
    return kExitValidation;
  }
  const auto sources = beamsight::build_virtual_sources(cfg.scenario);
  std::cout << "config OK: " << sources.size() << " transmit sources\n";
  for (const auto& s : sources) {
    std::cout << "  v_" << s.index << " = [" << s.position.x() << ", "
              << s.position.y() << ", " << s.position.z() << "]"
              << (s.wall ? " (" + cfg.scenario.walls[*s.wall].name + ")"
                         : " (physical BS)")
              << (s.visible ? "" : " [invisible]") << '\n';
  }
  std::cout << "codebook: " << cfg.scenario.codebook.tx_count() << " tx beams, "
            << cfg.scenario.codebook.rx_count() << " rx beams, "
            << cfg.scenario.panels.count() << " panels\n";
  return kExitOk;
}

int cmd_bounds(const CommonArgs& args, int k, const std::string& tier,
               int rx_beams) {
  beamsight::LoadedConfig cfg = load_or_die(args);
  if (k > 0) cfg.plan.k_instances = k;
  if (!tier.empty()) cfg.scenario.tier = beamsight::tier_from_string(tier);
  if (rx_beams > 0) cfg.plan.rx_beam_count = rx_beams;

  log_line("calibrating noise for tier " +
           beamsight::tier_to_string(cfg.scenario.tier));
  beamsight::calibrate_noise(cfg.scenario);
  log_line("running " + std::to_string(cfg.plan.k_instances) +
           " sensing instances");
  const beamsight::SensingResult res =
      beamsight::run_sensing(cfg.scenario, cfg.plan);

  std::filesystem::create_directories(args.out);
  beamsight::write_bounds_csv(res, args.out + "/bounds.csv");
  std::ofstream jf(args.out + "/bounds.json");
  jf << beamsight::bounds_json(res).dump(2) << '\n';
  make_manifest("bounds", args, cfg.plan.seed).write(args.out + "/manifest.json");

  const beamsight::BoundReport& last = res.trace.back();
  std::cout << "K=" << last.k << " oeb=" << last.oeb << " rad\n";
  for (size_t l = 0; l < last.peb.size(); ++l)
    std::cout << "  peb_" << l << " = "
              << (last.peb[l].observable ? std::to_string(last.peb[l].peb) + " m"
                                         : std::string("unobservable"))
              << '\n';
  return kExitOk;
}

int cmd_foresee(const CommonArgs& args, const std::string& mode, bool blockage,
                bool kappa_inf, int k, const std::string& tier) {
  beamsight::LoadedConfig cfg = load_or_die(args);
  if (k > 0) cfg.plan.k_instances = k;
  if (!tier.empty()) cfg.scenario.tier = beamsight::tier_from_string(tier);
  cfg.plan.blockage = blockage;
  cfg.plan.kappa_inf = kappa_inf;

  const beamsight::ForeseeMode fm = mode == "optimal"
                                        ? beamsight::ForeseeMode::kOptimal
                                        : beamsight::ForeseeMode::kStandard;

  beamsight::calibrate_noise(cfg.scenario);
  std::unique_ptr<beamsight::SensingResult> sensing;
  if (!kappa_inf) {
    log_line("running sensing phase (K=" + std::to_string(cfg.plan.k_instances) + ")");
    sensing = std::make_unique<beamsight::SensingResult>(
        beamsight::run_sensing(cfg.scenario, cfg.plan));
  }
  log_line("computing BG loss map (" + mode + ")");
  const beamsight::BgLossMap map = beamsight::bg_loss_map(
      cfg.scenario, cfg.plan, fm, sensing.get(), args.jobs);

  std::filesystem::create_directories(args.out);
  beamsight::write_bg_loss_csv(map, args.out + "/bg_loss.csv");
  beamsight::Json summary{
      {"mode", mode},
      {"blockage", blockage},
      {"kappa_inf", kappa_inf},
      {"max_loss_db", map.max_loss_db},
      {"mean_loss_db", map.mean_loss_db},
      {"panel_agreement", map.panel_agreement},
      {"foresee_bg_evaluations", map.foresee_evaluations},
      {"exhaustive_bg_evaluations", map.scan_evaluations}};
  std::ofstream sf(args.out + "/summary.json");
  sf << summary.dump(2) << '\n';
  make_manifest("foresee", args, cfg.plan.seed).write(args.out + "/manifest.json");

  std::cout << "max loss " << map.max_loss_db << " dB, mean "
            << map.mean_loss_db << " dB, panel agreement "
            << 100.0 * map.panel_agreement << "%\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beamsight: bound-driven mmWave beam foreseeing simulator"};
  app.require_subcommand(1);

  CommonArgs common;
  int k = 0, rx_beams = 0;
  std::string tier, mode = "optimal";
  bool blockage = false, kappa_inf = false;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", common.config, "scenario config (JSON)")
        ->required();
    if (needs_out) {
      sub->add_option("--seed", common.seed, "override config seed");
      sub->add_option("--out", common.out, "output directory");
      sub->add_option("--jobs", common.jobs, "worker threads (0 = auto)");
    }
  };

  CLI::App* validate = app.add_subcommand("validate", "check a scenario config");
  add_common(validate, false);

  CLI::App* bounds = app.add_subcommand("bounds", "PEB/OEB/AEB traces vs K");
  add_common(bounds, true);
  bounds->add_option("--k", k, "sensing instances");
  bounds->add_option("--tier", tier, "SNR tier: poor|medium|good");
  bounds->add_option("--rx-beams", rx_beams, "sensing Rx beams: 2|3|4");

  CLI::App* foresee = app.add_subcommand("foresee", "BG loss map vs exhaustive scan");
  add_common(foresee, true);
  foresee->add_option("--mode", mode, "standard|optimal");
  foresee->add_flag("--blockage", blockage, "zero the LoS gain");
  foresee->add_flag("--kappa-inf", kappa_inf, "exact angles (skip sensing)");
  foresee->add_option("--k", k, "sensing instances before foreseeing");
  foresee->add_option("--tier", tier, "SNR tier: poor|medium|good");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(common);
    if (bounds->parsed()) return cmd_bounds(common, k, tier, rx_beams);
    if (foresee->parsed())
      return cmd_foresee(common, mode, blockage, kappa_inf, k, tier);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
