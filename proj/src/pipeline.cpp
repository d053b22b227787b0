#include "dpcam/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "json.hpp"

#include "dpcam/model.hpp"
#include "dpcam/operators.hpp"
#include "dpcam/patterns.hpp"
#include "dpcam/rng.hpp"

namespace dpcam {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string format17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class StageClock {
 public:
  explicit StageClock(RunManifest& manifest) : manifest_(manifest) {}

  template <typename F>
  auto run(const std::string& stage, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        record(stage, start);
      } else {
        auto value = body();
        record(stage, start);
        return value;
      }
    } catch (...) {
      record(stage, start);
      if (manifest_.failed_stage.empty()) manifest_.failed_stage = stage;
      throw;
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    for (StageTiming& t : manifest_.timings)
      if (t.stage == stage) {
        t.seconds += elapsed.count();
        return;
      }
    manifest_.timings.push_back({stage, elapsed.count()});
  }

  RunManifest& manifest_;
};

json report_to_json(const AnalysisReport& report) {
  return json{{"mi_x", report.mi_x},
              {"mi_k", report.mi_k},
              {"bound", report.bound},
              {"margin", report.margin},
              {"sigma_ce", report.sigma_ce},
              {"sigma_pe", report.sigma_pe},
              {"fedorov_bits", report.fedorov_bits},
              {"mse", report.mse},
              {"snr", report.snr},
              {"threshold_used", report.threshold_used}};
}

json verdict_to_json(const SteeringVerdict& verdict) {
  return json{{"i_x", verdict.i_x},
              {"i_k", verdict.i_k},
              {"bound", verdict.bound},
              {"violated", verdict.violated},
              {"margin", verdict.margin}};
}

std::string replica_name(const std::string& base, const std::string& ext, std::size_t r) {
  if (r == 0) return base + ext;
  return base + "_r" + std::to_string(r) + ext;
}

std::uint64_t replica_noise_seed(std::uint64_t master, std::size_t r, std::uint64_t stream) {
  return rng::seed_for(rng::seed_for(master, rng::role::replica, r), rng::role::noise, stream);
}

JointDistribution build_truth(const ExperimentConfig& config) {
  const GridSpec grid = config.grid(config.basis);
  return config.basis == Basis::position
             ? position_joint_pdf(config.params, grid, config.quad_nodes)
             : momentum_joint_pdf(config.params, grid, config.quad_nodes);
}

// Normalize, pick the reporting threshold, and fill the analysis summary.
std::pair<AnalysisReport, JointDistribution> analyze_recon(const ExperimentConfig& config,
                                                           const JointDistribution& truth,
                                                           const std::vector<double>& x_hat) {
  const JointDistribution normalized = normalize(x_hat, truth.grid_signal, truth.grid_idler,
                                                 truth.basis, NormalizeMode::unit_sum);
  const ThresholdCurve curve = threshold_sweep(normalized, config.thresholds());
  const double threshold =
      config.forced_threshold >= 0.0 ? config.forced_threshold : optimal_threshold(curve);
  JointDistribution reported = apply_threshold(normalized, threshold);

  AnalysisReport report;
  report.threshold_used = threshold;
  report.mse = mse(normalized, truth);
  report.snr = snr_estimate(static_cast<double>(truth.n()), report.mse);
  const double mi = mutual_information(reported);
  if (config.basis == Basis::position)
    report.mi_x = mi;
  else
    report.mi_k = mi;
  report.bound = steering_bound(static_cast<double>(truth.n()), config.pitch_x,
                                config.momentum_pitch());
  report.margin = report.mi_x + report.mi_k - report.bound;
  const GaussianFit fit = fit_double_gaussian(reported);
  report.sigma_ce = fit.sigma_ce;
  report.sigma_pe = fit.sigma_pe;
  report.fedorov_bits = fedorov_capacity({fit.sigma_pe, fit.sigma_ce}, Dims::two);
  return {report, std::move(reported)};
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

double mean_of(const std::vector<double>& values) {
  double acc = 0.0;
  for (double v : values) acc += v;
  return values.empty() ? 0.0 : acc / static_cast<double>(values.size());
}

}  // namespace

double ExperimentConfig::momentum_pitch() const {
  if (pitch_k > 0.0) return pitch_k;
  return 2.0 * M_PI / (static_cast<double>(side) * pitch_x);
}

GridSpec ExperimentConfig::grid(Basis b) const {
  GridSpec g;
  g.side = side;
  g.basis = b;
  g.pitch = b == Basis::position ? pitch_x : momentum_pitch();
  return g;
}

std::vector<double> ExperimentConfig::thresholds() const {
  if (!threshold_grid.empty()) return threshold_grid;
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(0.05 * i);
  return grid;
}

void ExperimentConfig::validate() const {
  if (side < 2) throw std::invalid_argument("config: side must be >= 2");
  if (m < 1) throw std::invalid_argument("config: m must be >= 1");
  if (replicas < 1) throw std::invalid_argument("config: replicas must be >= 1");
  if (!(flux_rate > 0.0)) throw std::invalid_argument("config: flux rate must be positive");
  if (!(t_aq > 0.0)) throw std::invalid_argument("config: acquisition time must be positive");
  if (!(pitch_x > 0.0)) throw std::invalid_argument("config: pitch must be positive");
  if (pitch_k < 0.0) throw std::invalid_argument("config: momentum pitch must be >= 0");
  if (quad_nodes < 2) throw std::invalid_argument("config: quadrature nodes must be >= 2");
  if (forced_threshold > 1.0) throw std::invalid_argument("config: threshold outside [0,1]");
  params.validate();
  solver.validate();
  const std::vector<double> grid = thresholds();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || grid[i] > 1.0)
      throw std::invalid_argument("config: threshold fractions must lie in [0,1]");
    if (i > 0 && grid[i] < grid[i - 1])
      throw std::invalid_argument("config: threshold fractions must be ascending");
  }
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream out;
  out << "preset=" << preset_name << "\nside=" << side << "\nbasis=" << basis_name(basis)
      << "\npump_width=" << format17(params.pump_width)
      << "\ncorr_width=" << format17(params.corr_width) << "\npitch_x=" << format17(pitch_x)
      << "\npitch_k=" << format17(pitch_k) << "\nm=" << m
      << "\nflux_rate=" << format17(flux_rate) << "\nt_aq=" << format17(t_aq)
      << "\ntau=" << format17(solver.tau) << "\nmax_iters=" << solver.max_iters
      << "\nrel_obj_tol=" << format17(solver.rel_obj_tol) << "\nnonneg=" << solver.nonneg
      << "\ndebias=" << solver.debias << "\nforced_threshold=" << format17(forced_threshold)
      << "\nreplicas=" << replicas << "\nmaster_seed=" << master_seed
      << "\nquad_nodes=" << quad_nodes << "\nthresholds=";
  for (double t : thresholds()) out << format17(t) << ",";
  out << "\n";
  return out.str();
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig config;
  config.preset_name = name;
  if (name == "paper-16x16-position") {
    config.side = 16;
    config.basis = Basis::position;
    config.params = {4.0, 0.5};
    config.m = 2500;
    config.flux_rate = 5000.0;
    config.t_aq = 1.0;
  } else if (name == "paper-16x16-momentum") {
    config.side = 16;
    config.basis = Basis::momentum;
    config.params = {4.0, 0.5};
    config.m = 2500;
    config.flux_rate = 5000.0;
    config.t_aq = 1.5;
  } else if (name == "paper-24x24") {
    config.side = 24;
    config.basis = Basis::position;
    config.params = {6.0, 0.75};
    config.m = 10000;
    config.flux_rate = 4000.0;
    config.t_aq = 1.0;
  } else if (name == "paper-32x32") {
    config.side = 32;
    config.basis = Basis::position;
    config.params = {8.0, 1.0};
    config.m = 30000;
    config.flux_rate = 4000.0;
    config.t_aq = 1.0;
  } else if (name == "steering-16") {
    config.side = 16;
    config.basis = Basis::position;
    config.params = {4.0, 0.5};
    config.m = 2500;
    config.flux_rate = 5000.0;
    config.t_aq = 1.0;
    // Pixel areas chosen so n * d_x * d_k = 4 * pi * e: classical bound 4 bits.
    config.pitch_x = 1.0;
    config.pitch_k = 4.0 * M_PI * std::exp(1.0) / 256.0;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return config;
}

std::vector<std::string> preset_names() {
  return {"paper-16x16-position", "paper-16x16-momentum", "paper-24x24", "paper-32x32",
          "steering-16"};
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw io_error("cannot rename " + tmp.string() + " -> " + target.string());
}

std::size_t worker_count() {
  const char* env = std::getenv("DPCAM_WORKERS");
  if (!env) return 1;
  const long parsed = std::strtol(env, nullptr, 10);
  return parsed >= 1 ? static_cast<std::size_t>(parsed) : 1;
}

void RunManifest::save(const std::string& path) const {
  json doc;
  doc["config_hash"] = config_hash;
  doc["master_seed"] = master_seed;
  json seed_map = json::object();
  for (const auto& [name, value] : seeds) seed_map[name] = value;
  doc["seeds"] = seed_map;
  doc["artifacts"] = artifacts;
  json timing_map = json::object();
  for (const StageTiming& t : timings) timing_map[t.stage] = t.seconds;
  doc["timings"] = timing_map;
  doc["solver_converged"] = solver_converged;
  doc["failed_stage"] = failed_stage;
  write_file_atomic(path, doc.dump(2) + "\n");
}

ReplicaOutcome run_replica(const ExperimentConfig& config, const JointDistribution& truth,
                           const SensingOperator& op, std::uint64_t noise_seed) {
  ReplicaOutcome outcome;
  outcome.record = simulate_measurements(truth, op, config.flux(), noise_seed, config.t_aq);
  outcome.recon = solve_bpdn(op, outcome.record, config.solver);
  auto [report, reported] = analyze_recon(config, truth, outcome.recon.x_hat);
  outcome.report = report;
  outcome.reported = std::move(reported);
  return outcome;
}

namespace {

// Shared frame of the run_* entry points: out_dir creation, manifest setup,
// manifest persistence on both success and failure.
template <typename Body>
RunManifest with_manifest(const ExperimentConfig& config, const std::string& hash_text,
                          Body&& body) {
  RunManifest manifest;
  manifest.master_seed = config.master_seed;
  manifest.config_hash = fnv1a_hex(hash_text);
  StageClock clock(manifest);

  const fs::path out_dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory " + out_dir.string());

  try {
    body(manifest, clock, out_dir);
  } catch (...) {
    if (manifest.failed_stage.empty()) manifest.failed_stage = "write";
    manifest.save((out_dir / "manifest.json").string());
    throw;
  }
  manifest.artifacts.push_back("manifest.json");
  manifest.save((out_dir / "manifest.json").string());
  return manifest;
}

// Atomic variant of the save_* writers: emit to a temp name, then rename.
template <typename Writer>
void commit_artifact(RunManifest& manifest, const fs::path& out_dir, const std::string& name,
                     Writer&& writer) {
  const fs::path target = out_dir / name;
  fs::path tmp = target;
  tmp += ".tmp";
  writer(tmp.string());
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw io_error("cannot rename " + tmp.string() + " -> " + target.string());
  manifest.artifacts.push_back(name);
}

}  // namespace

RunManifest run_pipeline(const ExperimentConfig& config) {
  config.validate();
  return with_manifest(config, config.canonical_text(),
                       [&](RunManifest& manifest, StageClock& clock, const fs::path& out_dir) {
    const JointDistribution truth = clock.run("model", [&] { return build_truth(config); });
    commit_artifact(manifest, out_dir, "truth.csv",
                    [&](const std::string& p) { save_joint(truth, config.params, p); });

    const std::uint64_t patterns_seed = rng::seed_for(config.master_seed, rng::role::patterns, 0);
    manifest.seeds.emplace_back("patterns", patterns_seed);
    const SensingOperator op(clock.run(
        "patterns", [&] { return generate_patterns(patterns_seed, config.m, truth.n()); }));

    for (std::size_t r = 0; r < config.replicas; ++r) {
      const std::uint64_t noise_seed = replica_noise_seed(config.master_seed, r, 0);
      manifest.seeds.emplace_back("replica_" + std::to_string(r) + "_noise", noise_seed);

      const MeasurementRecord record = clock.run("measure", [&] {
        return simulate_measurements(truth, op, config.flux(), noise_seed, config.t_aq);
      });
      commit_artifact(manifest, out_dir, replica_name("measurements", ".txt", r),
                      [&](const std::string& p) { record.save(p); });

      const ReconResult recon =
          clock.run("reconstruct", [&] { return solve_bpdn(op, record, config.solver); });
      manifest.solver_converged = manifest.solver_converged && recon.converged;

      const auto [report, reported] =
          clock.run("analyze", [&] { return analyze_recon(config, truth, recon.x_hat); });
      commit_artifact(manifest, out_dir, replica_name("recon", ".csv", r),
                      [&](const std::string& p) { save_joint(reported, config.params, p); });
      commit_artifact(manifest, out_dir, replica_name("report", ".json", r),
                      [&](const std::string& p) {
                        std::ofstream out(p, std::ios::binary | std::ios::trunc);
                        if (!out) throw io_error("cannot open " + p);
                        out << report_to_json(report).dump(2) << "\n";
                      });
    }
  });
}

RunManifest run_flux_sweep(const ExperimentConfig& config, const std::vector<double>& flux_grid) {
  config.validate();
  return with_manifest(config, config.canonical_text(),
                       [&](RunManifest& manifest, StageClock& clock, const fs::path& out_dir) {
    const JointDistribution truth = clock.run("model", [&] { return build_truth(config); });
    commit_artifact(manifest, out_dir, "truth.csv",
                    [&](const std::string& p) { save_joint(truth, config.params, p); });

    const std::uint64_t patterns_seed = rng::seed_for(config.master_seed, rng::role::patterns, 0);
    manifest.seeds.emplace_back("patterns", patterns_seed);
    const SensingOperator op(clock.run(
        "patterns", [&] { return generate_patterns(patterns_seed, config.m, truth.n()); }));

    const FluxSweepResult result = clock.run("sweep", [&] {
      return flux_sweep(truth, op, flux_grid, config.solver, config.master_seed);
    });
    commit_artifact(manifest, out_dir, "sweep.csv",
                    [&](const std::string& p) { result.save_csv(p); });
  });
}

RunManifest run_steering(const ExperimentConfig& config_x, const ExperimentConfig& config_k,
                         SteeringReport* out) {
  config_x.validate();
  config_k.validate();
  if (config_x.basis != Basis::position || config_k.basis != Basis::momentum)
    throw std::invalid_argument("run_steering: basis mismatch");
  if (config_x.side != config_k.side)
    throw std::invalid_argument("run_steering: sides must match");
  if (config_x.replicas != config_k.replicas)
    throw std::invalid_argument("run_steering: replica counts must match");

  SteeringReport steering;
  RunManifest manifest = with_manifest(
      config_x, config_x.canonical_text() + config_k.canonical_text(),
      [&](RunManifest& man, StageClock& clock, const fs::path& out_dir) {
    const JointDistribution truth_x = clock.run("model", [&] { return build_truth(config_x); });
    const JointDistribution truth_k = clock.run("model", [&] { return build_truth(config_k); });

    const std::uint64_t patterns_seed = rng::seed_for(config_x.master_seed, rng::role::patterns, 0);
    man.seeds.emplace_back("patterns", patterns_seed);
    const SensingOperator op(clock.run(
        "patterns", [&] { return generate_patterns(patterns_seed, config_x.m, truth_x.n()); }));
    const SensingOperator op_k(config_k.m == config_x.m
                                   ? op.patterns()
                                   : generate_patterns(patterns_seed, config_k.m, truth_k.n()));

    std::vector<double> mi_x_values, mi_k_values;
    for (std::size_t r = 0; r < config_x.replicas; ++r) {
      const ReplicaOutcome px = clock.run("replica_x", [&] {
        return run_replica(config_x, truth_x, op, replica_noise_seed(config_x.master_seed, r, 0));
      });
      const ReplicaOutcome pk = clock.run("replica_k", [&] {
        return run_replica(config_k, truth_k, op_k,
                           replica_noise_seed(config_x.master_seed, r, 1));
      });
      man.solver_converged = man.solver_converged && px.recon.converged && pk.recon.converged;
      mi_x_values.push_back(px.report.mi_x);
      mi_k_values.push_back(pk.report.mi_k);
      if (r == 0) {
        steering.position = px.report;
        steering.momentum = pk.report;
      }
    }

    const double n = static_cast<double>(config_x.side * config_x.side);
    const double bound = steering_bound(n, config_x.pitch_x, config_k.momentum_pitch());
    steering.thresholded = steering_test(mean_of(mi_x_values), mean_of(mi_k_values), bound);
    steering.fitted =
        steering_test(steering.position.fedorov_bits, steering.momentum.fedorov_bits, bound);
    steering.mi_x_std = sample_std(mi_x_values);
    steering.mi_k_std = sample_std(mi_k_values);

    json doc;
    doc["bound"] = bound;
    doc["thresholded"] = verdict_to_json(steering.thresholded);
    doc["fitted"] = verdict_to_json(steering.fitted);
    doc["position_report"] = report_to_json(steering.position);
    doc["momentum_report"] = report_to_json(steering.momentum);
    doc["mi_x_std"] = steering.mi_x_std;
    doc["mi_k_std"] = steering.mi_k_std;
    write_file_atomic((out_dir / "steering.json").string(), doc.dump(2) + "\n");
    man.artifacts.push_back("steering.json");
  });
  if (out) *out = steering;
  return manifest;
}

}  // namespace dpcam
