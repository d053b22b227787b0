#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"

#include "dpcam/patterns.hpp"
#include "dpcam/pipeline.hpp"

namespace {

using dpcam::ExperimentConfig;

// key=value overlay onto a config; same keys the manifest hash canonicalizes.
void apply_config_file(ExperimentConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dpcam::io_error("cannot open config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config file line " + std::to_string(lineno) +
                                  ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "side")
        config.side = std::stoul(value);
      else if (key == "basis")
        config.basis = dpcam::basis_from_name(value);
      else if (key == "pump_width")
        config.params.pump_width = std::stod(value);
      else if (key == "corr_width")
        config.params.corr_width = std::stod(value);
      else if (key == "pitch_x")
        config.pitch_x = std::stod(value);
      else if (key == "pitch_k")
        config.pitch_k = std::stod(value);
      else if (key == "m")
        config.m = std::stoul(value);
      else if (key == "flux_rate")
        config.flux_rate = std::stod(value);
      else if (key == "t_aq")
        config.t_aq = std::stod(value);
      else if (key == "tau")
        config.solver.tau = std::stod(value);
      else if (key == "max_iters")
        config.solver.max_iters = std::stoul(value);
      else if (key == "rel_obj_tol")
        config.solver.rel_obj_tol = std::stod(value);
      else if (key == "nonneg")
        config.solver.nonneg = std::stoi(value) != 0;
      else if (key == "debias")
        config.solver.debias = std::stoi(value) != 0;
      else if (key == "forced_threshold")
        config.forced_threshold = std::stod(value);
      else if (key == "replicas")
        config.replicas = std::stoul(value);
      else if (key == "master_seed")
        config.master_seed = std::stoull(value);
      else if (key == "quad_nodes")
        config.quad_nodes = std::stoi(value);
      else if (key == "out")
        config.out_dir = value;
      else
        throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("config file line " + std::to_string(lineno) + ": bad entry '" +
                                  line + "'");
    }
  }
  config.preset_name = "custom";
}

struct CommonFlags {
  std::string preset_name;
  std::string config_file;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double flux = 0.0;
  bool flux_set = false;
  std::size_t m = 0;
  bool m_set = false;
  double tau = 0.0;
  bool tau_set = false;
  double threshold = -1.0;
  bool threshold_set = false;
  std::size_t replicas = 0;
  bool replicas_set = false;
  std::string out_dir;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--preset", flags.preset_name, "named experiment configuration");
  cmd->add_option("--config", flags.config_file, "key=value configuration file");
  cmd->add_option("--seed", flags.seed, "master seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  cmd->add_option("--flux", flags.flux, "detected photons per second")
      ->each([&](const std::string&) { flags.flux_set = true; });
  cmd->add_option("--m", flags.m, "number of pattern pairs")->each([&](const std::string&) {
    flags.m_set = true;
  });
  cmd->add_option("--tau", flags.tau, "l1 weight; 0 = auto")->each([&](const std::string&) {
    flags.tau_set = true;
  });
  cmd->add_option("--threshold", flags.threshold, "pin the reporting threshold fraction")
      ->each([&](const std::string&) { flags.threshold_set = true; });
  cmd->add_option("--replicas", flags.replicas, "independent noise replicas")
      ->each([&](const std::string&) { flags.replicas_set = true; });
  cmd->add_option("--out", flags.out_dir, "output directory");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig config =
      flags.preset_name.empty() ? ExperimentConfig{} : dpcam::preset(flags.preset_name);
  if (!flags.config_file.empty()) apply_config_file(config, flags.config_file);
  if (flags.seed_set) config.master_seed = flags.seed;
  if (flags.flux_set) config.flux_rate = flags.flux;
  if (flags.m_set) config.m = flags.m;
  if (flags.tau_set) config.solver.tau = flags.tau;
  if (flags.threshold_set) config.forced_threshold = flags.threshold;
  if (flags.replicas_set) config.replicas = flags.replicas;
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  return config;
}

void print_manifest_summary(const dpcam::RunManifest& manifest, const std::string& out_dir) {
  std::cout << "config " << manifest.config_hash << ", artifacts in " << out_dir << ":\n";
  for (const std::string& name : manifest.artifacts) std::cout << "  " << name << "\n";
  if (!manifest.solver_converged)
    std::cout << "warning: solver stopped before reaching its tolerance\n";
}

int exit_code_for(const dpcam::RunManifest& manifest) {
  return manifest.solver_converged ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compressive double-pixel correlation imaging"};
  app.require_subcommand(1);

#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(dpcam::worker_count()));
#endif

  CommonFlags flags;

  CLI::App* cmd_run = app.add_subcommand("run", "full pipeline in one basis");
  add_common_flags(cmd_run, flags);

  CLI::App* cmd_sweep = app.add_subcommand("sweep", "reconstruction quality versus flux");
  add_common_flags(cmd_sweep, flags);
  double flux_min = 50.0, flux_max = 5e4;
  std::size_t sweep_points = 8;
  cmd_sweep->add_option("--flux-min", flux_min, "lowest photon budget");
  cmd_sweep->add_option("--flux-max", flux_max, "highest photon budget");
  cmd_sweep->add_option("--points", sweep_points, "log-spaced grid size");

  CLI::App* cmd_steering = app.add_subcommand("steering", "position + momentum against the bound");
  add_common_flags(cmd_steering, flags);

  CLI::App* cmd_patterns = app.add_subcommand("patterns", "write a mask-pair file");
  std::size_t pat_m = 100, pat_n = 256;
  std::uint64_t pat_seed = 1;
  std::string pat_out = "patterns.txt";
  cmd_patterns->add_option("--m", pat_m, "number of pattern pairs");
  cmd_patterns->add_option("--n", pat_n, "pixels per detector");
  cmd_patterns->add_option("--seed", pat_seed, "pattern seed");
  cmd_patterns->add_option("--out", pat_out, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_run->parsed()) {
      const ExperimentConfig config = resolve_config(flags);
      const dpcam::RunManifest manifest = dpcam::run_pipeline(config);
      print_manifest_summary(manifest, config.out_dir);
      return exit_code_for(manifest);
    }
    if (cmd_sweep->parsed()) {
      const ExperimentConfig config = resolve_config(flags);
      if (!(flux_min > 0.0) || !(flux_max >= flux_min) || sweep_points < 2)
        throw std::invalid_argument("sweep: need 0 < flux-min <= flux-max and >= 2 points");
      std::vector<double> grid(sweep_points);
      for (std::size_t j = 0; j < sweep_points; ++j)
        grid[j] = flux_min * std::pow(flux_max / flux_min,
                                      static_cast<double>(j) /
                                          static_cast<double>(sweep_points - 1));
      const dpcam::RunManifest manifest = dpcam::run_flux_sweep(config, grid);
      print_manifest_summary(manifest, config.out_dir);
      return exit_code_for(manifest);
    }
    if (cmd_steering->parsed()) {
      ExperimentConfig config_x = resolve_config(flags);
      config_x.basis = dpcam::Basis::position;
      ExperimentConfig config_k = config_x;
      config_k.basis = dpcam::Basis::momentum;
      dpcam::SteeringReport report;
      const dpcam::RunManifest manifest = dpcam::run_steering(config_x, config_k, &report);
      print_manifest_summary(manifest, config_x.out_dir);
      std::cout << "thresholded: " << report.thresholded.i_x + report.thresholded.i_k << " vs "
                << report.thresholded.bound << " bits ("
                << (report.thresholded.violated ? "violated" : "not violated") << ")\n"
                << "fitted: " << report.fitted.i_x + report.fitted.i_k << " vs "
                << report.fitted.bound << " bits ("
                << (report.fitted.violated ? "violated" : "not violated") << ")\n";
      return exit_code_for(manifest);
    }
    if (cmd_patterns->parsed()) {
      const dpcam::PatternSet patterns = dpcam::generate_patterns(pat_seed, pat_m, pat_n);
      patterns.save(pat_out);
      std::cout << "wrote " << pat_out << " (" << pat_m << " pairs, " << pat_n
                << " pixels, ones fraction " << patterns.ones_fraction() << ")\n";
      return 0;
    }
  } catch (const dpcam::io_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
