#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "dpcam/model.hpp"
#include "dpcam/operators.hpp"
#include "dpcam/patterns.hpp"
#include "dpcam/pipeline.hpp"
#include "dpcam/rng.hpp"
#include "test_util.hpp"

using namespace dpcam;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Small, fast end-to-end configuration: 4x4 detectors, 256-dimensional joint.
ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig config;
  config.preset_name = "custom";
  config.side = 4;
  config.params = {1.5, 0.4};
  config.m = 120;
  config.flux_rate = 2000.0;
  config.t_aq = 1.0;
  config.quad_nodes = 8;
  config.solver.max_iters = 4000;
  config.master_seed = 11;
  config.out_dir = out_dir;
  return config;
}

const std::vector<std::string> run_artifacts = {"truth.csv", "measurements.txt", "recon.csv",
                                                "report.json", "manifest.json"};

const std::vector<std::string> report_keys = {
    "mi_x", "mi_k",     "bound", "margin", "sigma_ce",
    "sigma_pe", "fedorov_bits", "mse", "snr", "threshold_used"};

json load_json(const std::string& path) { return json::parse(testutil::read_file(path)); }

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("presets carry the published operating points") {
    const std::vector<std::string> names = preset_names();
    REQUIRE(names.size() == 5);
    for (const std::string& name : names) CHECK(preset(name).preset_name == name);
    CHECK_THROWS_AS(preset("nope"), std::invalid_argument);

    const ExperimentConfig pos = preset("paper-16x16-position");
    CHECK(pos.side == 16);
    CHECK(pos.basis == Basis::position);
    CHECK(pos.params.pump_width == 4.0);
    CHECK(pos.params.corr_width == 0.5);
    CHECK(pos.m == 2500);
    CHECK(pos.flux() == 5000.0);

    const ExperimentConfig mom = preset("paper-16x16-momentum");
    CHECK(mom.basis == Basis::momentum);
    CHECK(mom.flux() == 7500.0);  // longer acquisition per pattern

    CHECK(preset("paper-24x24").side == 24);
    CHECK(preset("paper-24x24").m == 10000);
    CHECK(preset("paper-32x32").side == 32);
    CHECK(preset("paper-32x32").m == 30000);

    // The steering preset pins the pixel areas so the classical ceiling on
    // summed conjugate-basis information is exactly 4 bits.
    const ExperimentConfig steer = preset("steering-16");
    CHECK(steering_bound(256.0, steer.pitch_x, steer.momentum_pitch()) ==
          doctest::Approx(4.0).epsilon(1e-12));
  }

  TEST_CASE("config derived quantities") {
    ExperimentConfig config;
    config.side = 16;
    config.pitch_x = 1.0;
    CHECK(config.momentum_pitch() == doctest::Approx(2.0 * M_PI / 16.0).epsilon(1e-15));
    config.pitch_k = 0.7;
    CHECK(config.momentum_pitch() == 0.7);

    const GridSpec gx = config.grid(Basis::position);
    CHECK(gx.side == 16);
    CHECK(gx.pitch == 1.0);
    CHECK(gx.basis == Basis::position);
    const GridSpec gk = config.grid(Basis::momentum);
    CHECK(gk.pitch == 0.7);
    CHECK(gk.basis == Basis::momentum);

    const std::vector<double> grid = config.thresholds();
    REQUIRE(grid.size() == 11);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == doctest::Approx(0.5).epsilon(1e-15));
    for (std::size_t i = 0; i < grid.size(); ++i)
      CHECK(grid[i] == doctest::Approx(0.05 * static_cast<double>(i)).epsilon(1e-12));

    config.flux_rate = 4000.0;
    config.t_aq = 0.25;
    CHECK(config.flux() == 1000.0);
  }

  TEST_CASE("config validation") {
    auto broken = [](auto&& mutate) {
      ExperimentConfig config = tiny_config("unused");
      mutate(config);
      return config;
    };
    CHECK_NOTHROW(tiny_config("unused").validate());
    CHECK_THROWS_AS(broken([](auto& c) { c.side = 1; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.m = 0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.replicas = 0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.flux_rate = 0.0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.t_aq = -1.0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.pitch_x = 0.0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.quad_nodes = 1; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.forced_threshold = 1.5; }).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.params.corr_width = 0.0; }).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.solver.max_iters = 0; }).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.threshold_grid = {0.2, 0.1}; }).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(broken([](auto& c) { c.threshold_grid = {0.5, 1.2}; }).validate(),
                    std::invalid_argument);
  }

  TEST_CASE("canonical text covers parameters but not the output path") {
    ExperimentConfig a = tiny_config("dir_one");
    ExperimentConfig b = tiny_config("dir_two");
    CHECK(a.canonical_text() == b.canonical_text());
    b.m += 1;
    CHECK(a.canonical_text() != b.canonical_text());
  }

  TEST_CASE("worker count env override") {
    const char* saved = std::getenv("DPCAM_WORKERS");
    const std::string restore = saved ? saved : "";

    unsetenv("DPCAM_WORKERS");
    CHECK(worker_count() == 1);
    setenv("DPCAM_WORKERS", "3", 1);
    CHECK(worker_count() == 3);
    setenv("DPCAM_WORKERS", "0", 1);
    CHECK(worker_count() == 1);
    setenv("DPCAM_WORKERS", "abc", 1);
    CHECK(worker_count() == 1);

    if (saved)
      setenv("DPCAM_WORKERS", restore.c_str(), 1);
    else
      unsetenv("DPCAM_WORKERS");
  }

  TEST_CASE("atomic file writes") {
    testutil::TempDir dir("atomic");
    const std::string path = dir.file("note.txt");
    write_file_atomic(path, "first\n");
    CHECK(testutil::read_file(path) == "first\n");
    write_file_atomic(path, "second\n");
    CHECK(testutil::read_file(path) == "second\n");
    CHECK_FALSE(fs::exists(path + ".tmp"));
    CHECK_THROWS_AS(write_file_atomic(dir.file("missing/sub/note.txt"), "x"), io_error);
  }

  TEST_CASE("single replica reconstructs the small scene") {
    ExperimentConfig config;
    config.side = 8;
    config.params = {2.0, 0.3};
    config.m = 600;
    config.flux_rate = 3000.0;
    config.solver.max_iters = 4000;
    config.master_seed = 5;

    const JointDistribution truth =
        position_joint_pdf(config.params, config.grid(Basis::position), config.quad_nodes);
    const std::uint64_t patterns_seed = rng::seed_for(config.master_seed, rng::role::patterns, 0);
    const SensingOperator op(generate_patterns(patterns_seed, config.m, truth.n()));
    const std::uint64_t noise_seed =
        rng::seed_for(rng::seed_for(config.master_seed, rng::role::replica, 0), rng::role::noise, 0);

    const ReplicaOutcome outcome = run_replica(config, truth, op, noise_seed);

    CHECK(outcome.record.m() == 600);
    CHECK(outcome.record.flux == 3000.0);
    CHECK(outcome.record.seed == noise_seed);
    CHECK(outcome.recon.converged);
    CHECK(outcome.recon.x_hat.size() == truth.x.size());

    const AnalysisReport& report = outcome.report;
    CHECK(report.mse > 0.0);
    CHECK(report.mse < 1e-4);
    CHECK(report.mi_x > 2.5);
    CHECK(report.mi_x < 5.0);
    CHECK(report.mi_k == 0.0);
    CHECK(report.threshold_used >= 0.0);
    CHECK(report.threshold_used <= 0.5);
    CHECK(report.snr ==
          doctest::Approx(snr_estimate(static_cast<double>(truth.n()), report.mse)).epsilon(1e-12));
    CHECK(report.bound ==
          doctest::Approx(steering_bound(64.0, 1.0, config.momentum_pitch())).epsilon(1e-12));
    CHECK(report.margin == doctest::Approx(report.mi_x - report.bound).epsilon(1e-12));
    CHECK(report.sigma_ce > 0.0);
    CHECK(report.sigma_pe > report.sigma_ce);
    CHECK(report.fedorov_bits ==
          doctest::Approx(fedorov_capacity({report.sigma_pe, report.sigma_ce}, Dims::two))
              .epsilon(1e-12));

    // The thresholded table the report scores is normalized and nonnegative.
    outcome.reported.validate();
  }

  TEST_CASE("forced threshold pins the reported fraction") {
    testutil::TempDir dir("forced");
    ExperimentConfig config = tiny_config(dir.file("out"));
    config.forced_threshold = 0.2;
    const JointDistribution truth =
        position_joint_pdf(config.params, config.grid(Basis::position), config.quad_nodes);
    const SensingOperator op(generate_patterns(
        rng::seed_for(config.master_seed, rng::role::patterns, 0), config.m, truth.n()));
    const ReplicaOutcome outcome = run_replica(config, truth, op, 99);
    CHECK(outcome.report.threshold_used == 0.2);
  }

  TEST_CASE("pipeline writes the full artifact set") {
    testutil::TempDir dir("pipe");
    const ExperimentConfig config = tiny_config(dir.file("out"));
    const RunManifest manifest = run_pipeline(config);

    CHECK(manifest.solver_converged);
    CHECK(manifest.failed_stage.empty());
    REQUIRE(manifest.artifacts == run_artifacts);
    for (const std::string& name : run_artifacts)
      CHECK(fs::exists(fs::path(config.out_dir) / name));

    // Seeds are derived, not ad hoc: one pattern seed, one per-replica noise seed.
    REQUIRE(manifest.seeds.size() == 2);
    CHECK(manifest.seeds[0].first == "patterns");
    CHECK(manifest.seeds[0].second == rng::seed_for(config.master_seed, rng::role::patterns, 0));
    CHECK(manifest.seeds[1].first == "replica_0_noise");
    CHECK(manifest.seeds[1].second ==
          rng::seed_for(rng::seed_for(config.master_seed, rng::role::replica, 0),
                        rng::role::noise, 0));

    // The report JSON carries exactly the summary fields.
    const json report = load_json((fs::path(config.out_dir) / "report.json").string());
    CHECK(report.size() == report_keys.size());
    for (const std::string& key : report_keys) {
      REQUIRE(report.contains(key));
      CHECK(report[key].is_number());
    }
    CHECK(std::isfinite(report["mse"].get<double>()));
    CHECK(report["mse"].get<double>() >= 0.0);

    const json man = load_json((fs::path(config.out_dir) / "manifest.json").string());
    CHECK(man["config_hash"].get<std::string>().size() == 16);
    CHECK(man["failed_stage"].get<std::string>().empty());
    CHECK(man["solver_converged"].get<bool>());
    for (const std::string& stage : {"model", "patterns", "measure", "reconstruct", "analyze"})
      CHECK(man["timings"].contains(stage));

    // The persisted truth is the model on the configured grid.
    BiphotonParams params_out{0.0, 0.0};
    const JointDistribution truth =
        load_joint((fs::path(config.out_dir) / "truth.csv").string(), &params_out);
    CHECK(truth.n() == 16);
    CHECK(params_out.pump_width == config.params.pump_width);
    CHECK(params_out.corr_width == config.params.corr_width);
  }

  TEST_CASE("identical configs reproduce artifacts byte for byte") {
    testutil::TempDir dir("repeat");
    ExperimentConfig first = tiny_config(dir.file("a"));
    ExperimentConfig second = tiny_config(dir.file("b"));
    const RunManifest ma = run_pipeline(first);
    const RunManifest mb = run_pipeline(second);

    CHECK(ma.config_hash == mb.config_hash);
    for (const std::string& name : {"truth.csv", "measurements.txt", "recon.csv", "report.json"})
      CHECK(testutil::read_file(dir.file("a/" + std::string(name))) ==
            testutil::read_file(dir.file("b/" + std::string(name))));

    json man_a = load_json(dir.file("a/manifest.json"));
    json man_b = load_json(dir.file("b/manifest.json"));
    man_a.erase("timings");
    man_b.erase("timings");
    CHECK(man_a == man_b);
  }

  TEST_CASE("replicas get their own artifacts and seeds") {
    testutil::TempDir dir("replicas");
    ExperimentConfig config = tiny_config(dir.file("out"));
    config.replicas = 2;
    const RunManifest manifest = run_pipeline(config);

    const std::vector<std::string> expected = {
        "truth.csv",       "measurements.txt", "recon.csv",    "report.json",
        "measurements_r1.txt", "recon_r1.csv", "report_r1.json", "manifest.json"};
    CHECK(manifest.artifacts == expected);
    REQUIRE(manifest.seeds.size() == 3);
    CHECK(manifest.seeds[1].first == "replica_0_noise");
    CHECK(manifest.seeds[2].first == "replica_1_noise");
    CHECK(manifest.seeds[1].second != manifest.seeds[2].second);
  }

  TEST_CASE("flux sweep run writes the curve") {
    testutil::TempDir dir("sweep");
    const ExperimentConfig config = tiny_config(dir.file("out"));
    const RunManifest manifest = run_flux_sweep(config, {200.0, 2000.0});

    const std::vector<std::string> expected = {"truth.csv", "sweep.csv", "manifest.json"};
    CHECK(manifest.artifacts == expected);

    const std::string csv = testutil::read_file(dir.file("out/sweep.csv"));
    REQUIRE(csv.rfind("flux,mse,beta_margin\n", 0) == 0);
    std::size_t rows = 0;
    for (char c : csv)
      if (c == '\n') ++rows;
    CHECK(rows == 3);
    CHECK(csv.find("\n200,") != std::string::npos);
    CHECK(csv.find("\n2000,") != std::string::npos);
  }

  TEST_CASE("steering run probes both bases against the bound") {
    testutil::TempDir dir("steer");
    ExperimentConfig config_x;
    config_x.side = 8;
    config_x.params = {2.0, 0.25};
    config_x.pitch_x = 1.0;
    config_x.pitch_k = 4.0 * M_PI * std::exp(1.0) / 64.0;  // classical ceiling: 4 bits
    config_x.m = 400;
    config_x.flux_rate = 3000.0;
    config_x.solver.max_iters = 3000;
    config_x.replicas = 2;
    config_x.master_seed = 9;
    config_x.out_dir = dir.file("out");
    ExperimentConfig config_k = config_x;
    config_k.basis = Basis::momentum;

    SteeringReport report;
    const RunManifest manifest = run_steering(config_x, config_k, &report);

    CHECK(std::find(manifest.artifacts.begin(), manifest.artifacts.end(), "steering.json") !=
          manifest.artifacts.end());
    CHECK(report.thresholded.bound == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(report.position.mi_x > 2.0);
    CHECK(report.momentum.mi_k > 2.0);
    // Conjugate-basis information totals beat any classical source comfortably
    // at this correlation strength, by both scoring routes.
    CHECK(report.thresholded.violated);
    CHECK(report.fitted.violated);
    CHECK(report.fitted.margin ==
          doctest::Approx(report.fitted.i_x + report.fitted.i_k - 4.0).epsilon(1e-9));
    CHECK(report.mi_x_std >= 0.0);
    CHECK(report.mi_k_std >= 0.0);

    const json doc = load_json(dir.file("out/steering.json"));
    for (const std::string& key : {"bound", "thresholded", "fitted", "position_report",
                                   "momentum_report", "mi_x_std", "mi_k_std"})
      CHECK(doc.contains(key));
    CHECK(doc["thresholded"]["violated"].get<bool>() == report.thresholded.violated);

    // Mismatched runs are rejected before any work happens.
    CHECK_THROWS_AS(run_steering(config_x, config_x), std::invalid_argument);
    ExperimentConfig wrong_side = config_k;
    wrong_side.side = 4;
    CHECK_THROWS_AS(run_steering(config_x, wrong_side), std::invalid_argument);
    ExperimentConfig wrong_replicas = config_k;
    wrong_replicas.replicas = 1;
    CHECK_THROWS_AS(run_steering(config_x, wrong_replicas), std::invalid_argument);
  }

  TEST_CASE("failed stage is recorded in the manifest") {
    testutil::TempDir dir("fail");
    ExperimentConfig config = tiny_config(dir.file("out"));
    config.params.pump_width = 1e-300;  // model vanishes on any grid
    CHECK_THROWS_AS(run_pipeline(config), std::runtime_error);

    const json man = load_json(dir.file("out/manifest.json"));
    CHECK(man["failed_stage"].get<std::string>() == "model");
    CHECK(man["artifacts"].empty());
  }
}
