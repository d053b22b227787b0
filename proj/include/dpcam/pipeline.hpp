#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpcam/analysis.hpp"
#include "dpcam/measure.hpp"
#include "dpcam/recon.hpp"
#include "dpcam/types.hpp"

namespace dpcam {

struct ExperimentConfig {
  std::string preset_name = "custom";
  std::size_t side = 16;
  Basis basis = Basis::position;
  BiphotonParams params{4.0, 0.5};
  double pitch_x = 1.0;       // position-basis pixel width
  double pitch_k = 0.0;       // momentum-basis pixel width; 0 = conjugate default
  std::size_t m = 2500;
  double flux_rate = 5000.0;  // detected photons per second of acquisition
  double t_aq = 1.0;          // seconds per pattern; photon budget = rate * t_aq
  SolverConfig solver;
  std::vector<double> threshold_grid;   // sweep fractions; default 0:0.05:0.5
  double forced_threshold = -1.0;       // >= 0 pins threshold_used
  std::size_t replicas = 1;
  std::uint64_t master_seed = 1;
  std::string out_dir = "out";
  int quad_nodes = 16;

  double flux() const { return flux_rate * t_aq; }
  double momentum_pitch() const;
  GridSpec grid(Basis b) const;
  std::vector<double> thresholds() const;
  void validate() const;
  std::string canonical_text() const;  // hashed into the manifest
};

ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Per-run analysis summary; serialized as the report JSON.
struct AnalysisReport {
  double mi_x = 0.0;
  double mi_k = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  double sigma_ce = 0.0;
  double sigma_pe = 0.0;
  double fedorov_bits = 0.0;
  double mse = 0.0;
  double snr = 0.0;
  double threshold_used = 0.0;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::string> artifacts;
  std::vector<StageTiming> timings;
  bool solver_converged = true;
  std::string failed_stage;  // empty on success

  void save(const std::string& path) const;
};

struct ReplicaOutcome {
  AnalysisReport report;
  ReconResult recon;
  JointDistribution reported;  // thresholded reconstruction the report analyzes
  MeasurementRecord record;
};

// model -> patterns -> measure -> reconstruct -> analyze; writes truth,
// reconstruction, measurement record, report, and manifest under out_dir.
RunManifest run_pipeline(const ExperimentConfig& config);

// Single replica in memory; the pipeline and tests share this path.
ReplicaOutcome run_replica(const ExperimentConfig& config, const JointDistribution& truth,
                           const SensingOperator& op, std::uint64_t noise_seed);

RunManifest run_flux_sweep(const ExperimentConfig& config, const std::vector<double>& flux_grid);

struct SteeringReport {
  SteeringVerdict thresholded;
  SteeringVerdict fitted;
  AnalysisReport position;
  AnalysisReport momentum;
  double mi_x_std = 0.0;  // over replicas
  double mi_k_std = 0.0;
};

// Full pipeline in both bases; verdicts from replica-mean MI (thresholded)
// and from fitted widths. Configs must agree on side and replicas.
RunManifest run_steering(const ExperimentConfig& config_x, const ExperimentConfig& config_k,
                         SteeringReport* out = nullptr);

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& content);

std::size_t worker_count();  // DPCAM_WORKERS, default 1

}  // namespace dpcam
