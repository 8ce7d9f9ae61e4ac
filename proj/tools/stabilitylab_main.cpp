// Command-line surface for the stability toolkit. All heavy lifting lives in
// the headers; this file only maps flags to library calls and library errors
// to exit codes:
//   0  success
//   2  configuration, parse, or dimension errors (the input is at fault)
//   3  unexpected runtime failures
//   4  well-formed input whose analysis cannot proceed (degenerate data,
//      fits that do not converge, not enough points or replicas)

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "stabilitylab/stabilitylab.hpp"

namespace fs = std::filesystem;
using namespace stabilitylab;

namespace {

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("STABILITYLAB_LOG");
    if (env == nullptr) return 0;
    const std::string v(env);
    if (v == "info") return 1;
    if (v == "debug") return 2;
    try {
      return std::stoi(v);
    } catch (const std::exception&) {
      return 0;
    }
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[stabilitylab] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[stabilitylab] " << msg << "\n";
}

int classify(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr ||
      dynamic_cast<const IoError*>(&e) != nullptr ||
      dynamic_cast<const DimensionMismatch*>(&e) != nullptr) {
    return 2;
  }
  if (dynamic_cast<const DegenerateMap*>(&e) != nullptr ||
      dynamic_cast<const DegenerateCalibration*>(&e) != nullptr ||
      dynamic_cast<const ConvergenceFailure*>(&e) != nullptr ||
      dynamic_cast<const InsufficientPoints*>(&e) != nullptr ||
      dynamic_cast<const InsufficientSpan*>(&e) != nullptr ||
      dynamic_cast<const InsufficientReplicas*>(&e) != nullptr ||
      dynamic_cast<const NonPositiveT1*>(&e) != nullptr ||
      dynamic_cast<const EmptySession*>(&e) != nullptr) {
    return 4;
  }
  return 3;
}

std::string fixed6(double v) {
  // Values that round to zero print without a stray minus sign.
  if (std::abs(v) < 5e-7) v = 0.0;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double stddev_from(const std::array<double, 9>& covariance, int index) {
  const double var = covariance[std::size_t(index) * 3 + std::size_t(index)];
  return var > 0.0 ? std::sqrt(var) : 0.0;
}

// Replica pairs on disk: <stem>_a.csv next to <stem>_b.csv, sorted by stem
// so calibration does not depend on directory enumeration order.
std::vector<std::pair<Spectrogram, Spectrogram>> collect_replica_pairs(
    const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("calibration dir '" + dir + "' is not a directory");
  }
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const std::string tail = "_a.csv";
    if (name.size() > tail.size() &&
        name.compare(name.size() - tail.size(), tail.size(), tail) == 0) {
      stems.push_back(name.substr(0, name.size() - tail.size()));
    }
  }
  std::sort(stems.begin(), stems.end());
  std::vector<std::pair<Spectrogram, Spectrogram>> pairs;
  for (const std::string& stem : stems) {
    const fs::path a = fs::path(dir) / (stem + "_a.csv");
    const fs::path b = fs::path(dir) / (stem + "_b.csv");
    if (!fs::exists(b)) continue;
    log_debug("replica pair: " + stem);
    pairs.emplace_back(read_spectrogram_file(a.string()),
                       read_spectrogram_file(b.string()));
  }
  log_info("collected " + std::to_string(pairs.size()) +
           " replica pairs from " + dir);
  return pairs;
}

int run_simulate(const std::string& config_path, bool seed_given,
                 std::uint64_t seed, const std::string& out_dir,
                 double alpha_flag) {
  RunConfig rc = load_config(config_path);
  if (seed_given) override_seed(rc, seed);
  const std::string config_hash = fnv1a64_hex(read_text_file(config_path));
  log_info("config " + config_path + " (" + config_hash + "), seed " +
           std::to_string(rc.plan.root_seed));

  double alpha = alpha_flag > 0.0 ? alpha_flag : rc.alpha;
  if (alpha <= 0.0) {
    log_info("no alpha given, calibrating the replica divergence floor");
    alpha = calibrate_plan_alpha(rc.plan);
  }
  log_info("alpha = " + detail::fmt_g9(alpha));

  const AnalysisConfig cfg(alpha, rc.delta_floor);
  log_info("simulating " + std::to_string(rc.plan.qubits.size()) +
           " qubits x " + std::to_string(rc.plan.n_cycles) + " cycles x " +
           std::to_string(rc.plan.session_hours.size()) + " sessions");
  const ExperimentRecord record = run_longitudinal(rc.plan);

  int missing = 0;
  for (const QubitRecord& q : record.qubits) {
    for (const CycleRecord& c : q.cycles) {
      for (const SessionRecord& s : c.sessions) {
        if (!s.missing) continue;
        ++missing;
        std::cerr << "warning: session skipped: " << s.failure << "\n";
      }
    }
  }

  const StfMatrix matrix = stf_matrix(record, cfg, InterPairs::adjacent);
  const RunManifest manifest =
      write_run_dir(out_dir, record, matrix, alpha, config_hash);

  std::cout << "wrote " << manifest.files.size() << " files to " << out_dir;
  if (missing > 0) std::cout << " (" << missing << " sessions missing)";
  std::cout << "\n";
  return 0;
}

int run_stf(const std::string& path_a, const std::string& path_b,
            double alpha_flag, const std::string& calibration_dir) {
  double alpha = alpha_flag;
  if (!calibration_dir.empty()) {
    alpha = calibrate_alpha(collect_replica_pairs(calibration_dir));
    log_info("calibrated alpha = " + detail::fmt_g9(alpha));
  }
  if (alpha <= 0.0) {
    throw ConfigError("need --alpha > 0 or --calibration-dir");
  }
  const NormalizedMap a = zscore_normalize(read_spectrogram_file(path_a));
  const NormalizedMap b = zscore_normalize(read_spectrogram_file(path_b));
  const StfReport rep = stf(a, b, AnalysisConfig(alpha));
  std::cout << "delta,rho,pearson\n";
  std::cout << detail::fmt_g9(rep.delta) << "," << detail::fmt_g9(rep.rho)
            << "," << detail::fmt_g9(rep.pearson) << "\n";
  return 0;
}

int run_calibrate(const std::string& dir, const std::string& config_path,
                  int n_pairs) {
  double alpha = 0.0;
  if (!dir.empty()) {
    alpha = calibrate_alpha(collect_replica_pairs(dir));
  } else if (!config_path.empty()) {
    const RunConfig rc = load_config(config_path);
    log_info("calibrating from config with " + std::to_string(n_pairs) +
             " synthetic replica pairs");
    alpha = calibrate_plan_alpha(rc.plan, n_pairs);
  } else {
    throw ConfigError("need --dir or --config");
  }
  std::cout << "alpha " << detail::fmt_g9(alpha) << "\n";
  return 0;
}

int run_fit_arch(const std::string& data_path) {
  const ArchScan scan = read_arch_scan_file(data_path);
  const ArchFit fit = fit_arch(scan);
  std::cout << "f01_max_ghz " << detail::fmt_g9(fit.f01_max_ghz) << " +- "
            << detail::fmt_g9(stddev_from(fit.covariance, 0)) << "\n";
  std::cout << "bias_at_max_ma " << detail::fmt_g9(fit.bias_at_max_ma)
            << " +- " << detail::fmt_g9(stddev_from(fit.covariance, 1))
            << "\n";
  std::cout << "ec_ghz " << detail::fmt_g9(fit.ec_ghz) << " +- "
            << detail::fmt_g9(stddev_from(fit.covariance, 2)) << "\n";
  std::cout << "residual_rms_mhz " << detail::fmt_g9(fit.residual_rms_mhz)
            << "\n";
  std::cout << "iterations " << fit.iterations << "\n";
  return 0;
}

int run_fit_t1(const std::string& data_path) {
  const T1Trace trace = read_t1_trace_file(data_path);
  const T1Fit fit = fit_t1(trace.delay_us, trace.probability);
  std::cout << "t1_us " << fixed6(fit.t1_us) << " +- "
            << fixed6(stddev_from(fit.covariance, 0)) << "\n";
  std::cout << "contrast " << fixed6(fit.contrast) << "\n";
  std::cout << "floor " << fixed6(fit.floor) << "\n";
  std::cout << "residual_rms " << detail::fmt_g9(fit.residual_rms) << "\n";
  std::cout << "iterations " << fit.iterations << "\n";
  return 0;
}

int run_report(const std::string& run_dir, const std::string& out_flag) {
  const std::string out_dir = out_flag.empty() ? run_dir : out_flag;
  const std::vector<std::string> written =
      write_report_tables(run_dir, out_dir);
  for (const std::string& name : written) {
    std::cout << out_dir << "/" << name << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transmon stability simulator and analysis toolkit",
               "stabilitylab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version));

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  double alpha = 0.0;

  CLI::App* sim = app.add_subcommand(
      "simulate", "run a longitudinal experiment and write a run directory");
  sim->add_option("--config", config_path, "configuration file (json)")
      ->required();
  CLI::Option* seed_opt =
      sim->add_option("--seed", seed, "override the configured root seed");
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--alpha", alpha,
                  "replica divergence floor (skips auto-calibration)");

  std::string map_a;
  std::string map_b;
  std::string calibration_dir;
  CLI::App* stf_cmd = app.add_subcommand(
      "stf", "compare two spectrogram files and print delta, rho, pearson");
  stf_cmd->add_option("map_a", map_a, "first spectrogram file")->required();
  stf_cmd->add_option("map_b", map_b, "second spectrogram file")->required();
  stf_cmd->add_option("--alpha", alpha, "replica divergence floor");
  stf_cmd->add_option("--calibration-dir", calibration_dir,
                      "directory of *_a.csv / *_b.csv replica pairs");

  std::string calib_dir;
  int n_pairs = 50;
  CLI::App* calib = app.add_subcommand(
      "calibrate", "estimate the replica divergence floor alpha");
  calib->add_option("--dir", calib_dir,
                    "directory of *_a.csv / *_b.csv replica pairs");
  calib->add_option("--config", config_path,
                    "config to draw synthetic replica pairs from");
  calib->add_option("--pairs", n_pairs, "synthetic replica pair count")
      ->check(CLI::PositiveNumber);

  std::string fit_data;
  CLI::App* fit = app.add_subcommand("fit", "fit measurement data");
  fit->require_subcommand(1);
  CLI::App* fit_arch_cmd =
      fit->add_subcommand("arch", "fit a flux arch scan file");
  fit_arch_cmd->add_option("data", fit_data, "arch scan file")->required();
  CLI::App* fit_t1_cmd =
      fit->add_subcommand("t1", "fit an energy decay trace file");
  fit_t1_cmd->add_option("data", fit_data, "decay trace file")->required();

  std::string run_dir;
  std::string report_out;
  CLI::App* report =
      app.add_subcommand("report", "emit plot-ready tables from a run dir");
  report->add_option("run_dir", run_dir, "run directory with a manifest")
      ->required();
  report->add_option("--out", report_out,
                     "report output directory (default: run_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) {
      return run_simulate(config_path, seed_opt->count() > 0, seed, out_dir,
                          alpha);
    }
    if (stf_cmd->parsed()) {
      return run_stf(map_a, map_b, alpha, calibration_dir);
    }
    if (calib->parsed()) {
      return run_calibrate(calib_dir, config_path, n_pairs);
    }
    if (fit->parsed()) {
      return fit_arch_cmd->parsed() ? run_fit_arch(fit_data)
                                    : run_fit_t1(fit_data);
    }
    if (report->parsed()) {
      return run_report(run_dir, report_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
