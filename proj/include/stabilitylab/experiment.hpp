#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stabilitylab/analysis.hpp"
#include "stabilitylab/errors.hpp"
#include "stabilitylab/measure.hpp"
#include "stabilitylab/model.hpp"
#include "stabilitylab/rng.hpp"
#include "stabilitylab/stats.hpp"

namespace stabilitylab {

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

struct QubitConfig {
  std::string label = "Q01";
  TransmonParams params{};
  FluxLine flux_line{};
};

inline void validate(const QubitConfig& q) {
  if (q.label.empty()) throw ConfigError("qubit label must be non-empty");
  validate(q.params);
  validate(q.flux_line);
}

// Full description of a longitudinal run: which devices, how many thermal
// cycles, the in-cycle measurement cadence, and all acquisition settings.
struct ExperimentPlan {
  std::vector<QubitConfig> qubits;
  BathPrior bath_prior{};
  SpectroscopyGrid grid = make_grid(4.17, 4.47, 101, 0.5, 150.0, 51);
  ReadoutModel map_readout{100, 0.9, 0.03, 0.02, 0.005};
  ReadoutModel t1_readout{2000, 0.9, 0.03, 0.02, 0.005};
  std::vector<double> session_hours{1.0, 2.0, 10.0, 100.0, 500.0, 1501.0};
  int n_cycles = 4;
  CyclePerturbation perturbation{};
  int arch_points = 41;
  double arch_flux_span_phi0 = 0.3;
  double arch_sigma_f_mhz = 1.0;
  std::uint64_t root_seed = 20260816;
};

inline void validate(const ExperimentPlan& plan) {
  if (plan.qubits.empty()) throw ConfigError("plan needs at least one qubit");
  std::set<std::string> labels;
  for (const QubitConfig& q : plan.qubits) {
    validate(q);
    if (!labels.insert(q.label).second) {
      throw ConfigError("duplicate qubit label '" + q.label + "'");
    }
  }
  validate(plan.bath_prior);
  validate(plan.grid);
  validate(plan.map_readout);
  validate(plan.t1_readout);
  validate(plan.perturbation);
  if (plan.n_cycles < 1) throw ConfigError("n_cycles must be >= 1");
  if (plan.session_hours.empty()) {
    throw ConfigError("session_hours must be non-empty");
  }
  if (!(plan.session_hours.front() >= 0.0)) {
    throw ConfigError("session_hours must be non-negative");
  }
  for (std::size_t i = 1; i < plan.session_hours.size(); ++i) {
    if (!(plan.session_hours[i] > plan.session_hours[i - 1])) {
      throw ConfigError("session_hours must be strictly increasing");
    }
  }
  if (plan.arch_points < 5) {
    throw ConfigError("arch_points must be >= 5 for the arch fit");
  }
  if (!(plan.arch_flux_span_phi0 >= 0.1 && plan.arch_flux_span_phi0 <= 0.9)) {
    throw ConfigError(
        "arch_flux_span_phi0 must lie in [0.1, 0.9] (fit span floor, flux "
        "domain ceiling)");
  }
  if (!(plan.arch_sigma_f_mhz >= 0.0)) {
    throw ConfigError("arch_sigma_f_mhz must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// Record
// ---------------------------------------------------------------------------

// One measurement session. On a data-quality failure (fit divergence,
// unreachable grid) the session is kept as a flagged placeholder so the rest
// of the run survives; `failure` carries the qubit/cycle/session context.
struct SessionRecord {
  int session = 1;
  double session_hour = 0.0;
  double clock_hours = 0.0;
  bool missing = false;
  std::string failure;
  ArchFit arch{};
  SessionStats stats{};
  Spectrogram map{};
};

struct CycleRecord {
  int cycle = 1;
  double start_clock_hours = 0.0;
  double gamma0_per_us = 0.0;
  std::vector<SessionRecord> sessions;
};

// Per-cycle drift of the fitted arch parameters relative to cycle 1. The
// bias shift is expressed in flux quanta via the qubit's mutual inductance.
struct DeviationRow {
  std::string qubit;
  int cycle = 1;
  double delta_f01max_mhz = 0.0;
  double abs_delta_ibmax_phi0 = 0.0;
  bool valid = true;
};

struct QubitRecord {
  std::string label;
  double mutual_phi0_per_ma = 0.0;
  std::vector<CycleRecord> cycles;
};

struct ExperimentRecord {
  std::vector<QubitRecord> qubits;
  std::vector<double> session_hours;
  bool clocks_reset = true;
  std::uint64_t root_seed = 0;
  std::vector<DeviationRow> deviations;
};

// ---------------------------------------------------------------------------
// Longitudinal runner
// ---------------------------------------------------------------------------

namespace detail {

// Reference arch fit for deviation rows: the first session of a cycle that
// produced a fit. Returns nullptr when the whole cycle is flagged missing.
inline const SessionRecord* first_complete_session(const CycleRecord& cycle) {
  for (const SessionRecord& s : cycle.sessions) {
    if (!s.missing) return &s;
  }
  return nullptr;
}

}  // namespace detail

inline ExperimentRecord run_longitudinal(const ExperimentPlan& plan) {
  validate(plan);
  const std::uint64_t root = plan.root_seed;
  ExperimentRecord record;
  record.session_hours = plan.session_hours;
  record.clocks_reset = plan.perturbation.reset_clock;
  record.root_seed = root;

  for (std::size_t qi = 0; qi < plan.qubits.size(); ++qi) {
    const QubitConfig& cfg = plan.qubits[qi];
    DeviceState device;
    device.label = cfg.label;
    device.params = cfg.params;
    device.flux_line = cfg.flux_line;
    {
      std::mt19937_64 eng =
          make_engine(derive_seed(root, Stream::bath_init, qi));
      device.bath = sample_bath(plan.bath_prior, eng);
    }

    QubitRecord qrec;
    qrec.label = cfg.label;
    qrec.mutual_phi0_per_ma = cfg.flux_line.mutual_phi0_per_ma;

    for (int c = 1; c <= plan.n_cycles; ++c) {
      if (c > 1) {
        device = apply_thermal_cycle(
            device, plan.perturbation,
            derive_seed(root, Stream::thermal_cycle, qi, std::uint64_t(c)));
      }
      CycleRecord crec;
      crec.cycle = c;
      crec.start_clock_hours = device.clock_hours;
      crec.gamma0_per_us = device.params.gamma0_per_us;
      const double t0 = device.clock_hours;

      for (std::size_t si = 0; si < plan.session_hours.size(); ++si) {
        const double target = t0 + plan.session_hours[si];
        device = advance_bath(device, target - device.clock_hours,
                              derive_seed(root, Stream::bath_advance, qi,
                                          std::uint64_t(c), si));

        SessionRecord srec;
        srec.session = int(si) + 1;
        srec.session_hour = plan.session_hours[si];
        srec.clock_hours = device.clock_hours;
        try {
          const ArchScan scan = simulate_arch_scan(
              device,
              arch_bias_points(device, plan.arch_points,
                               plan.arch_flux_span_phi0),
              plan.arch_sigma_f_mhz,
              derive_seed(root, Stream::arch_scan, qi, std::uint64_t(c), si));
          srec.arch = fit_arch(scan);

          std::mt19937_64 t1_eng = make_engine(
              derive_seed(root, Stream::t1_session, qi, std::uint64_t(c), si));
          std::vector<double> t1s;
          t1s.reserve(plan.grid.freq_ghz.size());
          for (double f : plan.grid.freq_ghz) {
            const std::vector<double> trace = simulate_t1_trace(
                device, f, plan.grid.delay_us, plan.t1_readout, t1_eng);
            t1s.push_back(fit_t1(plan.grid.delay_us, trace).t1_us);
          }
          srec.stats = session_stats(t1s);

          srec.map = simulate_spectrogram(
              device, plan.grid, plan.map_readout,
              derive_seed(root, Stream::spectrogram, qi, std::uint64_t(c), si));
        } catch (const Error& e) {
          srec.missing = true;
          srec.failure = cfg.label + "/cycle" + std::to_string(c) +
                         "/session" + std::to_string(si + 1) + ": " + e.what();
          srec.arch = ArchFit{};
          srec.stats = SessionStats{};
          srec.map = Spectrogram{};
        }
        crec.sessions.push_back(std::move(srec));
      }
      qrec.cycles.push_back(std::move(crec));
    }

    // Deviation rows against the cycle-1 arch fit. Cycle 1 compares with
    // itself, pinning its rows to exactly zero.
    const SessionRecord* ref = detail::first_complete_session(qrec.cycles[0]);
    for (const CycleRecord& crec : qrec.cycles) {
      DeviationRow row;
      row.qubit = cfg.label;
      row.cycle = crec.cycle;
      const SessionRecord* cur = detail::first_complete_session(crec);
      if (ref == nullptr || cur == nullptr) {
        row.valid = false;
      } else if (crec.cycle == 1) {
        row.delta_f01max_mhz = 0.0;
        row.abs_delta_ibmax_phi0 = 0.0;
      } else {
        row.delta_f01max_mhz =
            (cur->arch.f01_max_ghz - ref->arch.f01_max_ghz) * 1e3;
        row.abs_delta_ibmax_phi0 =
            std::abs((cur->arch.bias_at_max_ma - ref->arch.bias_at_max_ma) *
                     cfg.flux_line.mutual_phi0_per_ma);
      }
      record.deviations.push_back(std::move(row));
    }

    record.qubits.push_back(std::move(qrec));
  }
  return record;
}

// ---------------------------------------------------------------------------
// Pairwise fidelity matrix
// ---------------------------------------------------------------------------

using StfMatrix = std::vector<StfReport>;

enum class InterPairs { adjacent, all };

// Scores every same-qubit session pair. Inter-cycle pairs default to
// adjacent cycles only; InterPairs::all includes every cycle combination.
// When cycle clocks reset on a thermal cycle, the wall-time gap between
// sessions in different cycles is reconstructed from the planned cadence:
// remaining time in the earlier cycle, plus any skipped full cycles, plus
// the elapsed time in the later cycle.
inline StfMatrix stf_matrix(const ExperimentRecord& record,
                            const AnalysisConfig& cfg,
                            InterPairs inter = InterPairs::adjacent) {
  StfMatrix out;
  const double cycle_span =
      record.session_hours.empty() ? 0.0 : record.session_hours.back();

  struct Entry {
    int cycle;
    int session;
    double session_hour;
    NormalizedMap map;
  };

  for (const QubitRecord& qrec : record.qubits) {
    std::vector<Entry> entries;
    for (const CycleRecord& crec : qrec.cycles) {
      for (const SessionRecord& srec : crec.sessions) {
        if (srec.missing) continue;
        entries.push_back(Entry{crec.cycle, srec.session, srec.session_hour,
                                zscore_normalize(srec.map)});
      }
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      for (std::size_t j = i + 1; j < entries.size(); ++j) {
        const Entry& a = entries[i];
        const Entry& b = entries[j];
        const int gap = b.cycle - a.cycle;
        if (gap != 0 && inter == InterPairs::adjacent && gap != 1) continue;
        StfReport rep = stf(a.map, b.map, cfg);
        rep.session_a = a.session;
        rep.session_b = b.session;
        if (gap != 0 && record.clocks_reset) {
          rep.dt_hours = (cycle_span - a.session_hour) +
                         double(gap - 1) * cycle_span + b.session_hour;
        }
        out.push_back(std::move(rep));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decay summary
// ---------------------------------------------------------------------------

struct DecayBin {
  double median_log10_dt = 0.0;
  double median_rho = 0.0;
  std::size_t n_pairs = 0;
};

// Intra-cycle fidelity decay against log time, plus the inter-cycle floor.
// slope_per_decade and spearman are computed over the bin medians.
struct DecaySummary {
  std::vector<DecayBin> bins;
  double slope_per_decade = 0.0;
  double spearman_rho_vs_log_dt = 0.0;
  std::size_t n_intra = 0;
  std::size_t n_inter = 0;
  double inter_median_rho = std::numeric_limits<double>::quiet_NaN();
  double inter_mean_rho = std::numeric_limits<double>::quiet_NaN();
};

inline DecaySummary summarize_decay(const StfMatrix& matrix) {
  // Bin width in decades; half-decade bins resolve a cadence of a few
  // sessions per decade without leaving gaps.
  constexpr double bin_width = 0.5;

  std::vector<double> log_dt;
  std::vector<double> rho;
  std::vector<double> inter_rho;
  for (const StfReport& rep : matrix) {
    if (rep.kind == "inter") {
      inter_rho.push_back(rep.rho);
    } else if (rep.dt_hours > 0.0) {
      log_dt.push_back(std::log10(rep.dt_hours));
      rho.push_back(rep.rho);
    }
  }

  if (log_dt.size() < 5) {
    throw InsufficientSpan("decay summary needs >= 5 intra-cycle pairs, got " +
                           std::to_string(log_dt.size()));
  }
  const auto [lo_it, hi_it] = std::minmax_element(log_dt.begin(), log_dt.end());
  const double span = *hi_it - *lo_it;
  if (span < 2.0 - 1e-9) {
    throw InsufficientSpan(
        "decay summary needs >= 2 decades of intra-cycle dt, got " +
        std::to_string(span));
  }

  std::map<long, std::pair<std::vector<double>, std::vector<double>>> binned;
  for (std::size_t k = 0; k < log_dt.size(); ++k) {
    const long idx = long(std::floor((log_dt[k] - *lo_it) / bin_width));
    binned[idx].first.push_back(log_dt[k]);
    binned[idx].second.push_back(rho[k]);
  }

  DecaySummary summary;
  summary.n_intra = log_dt.size();
  summary.n_inter = inter_rho.size();
  std::vector<double> bin_x, bin_y;
  for (auto& [idx, data] : binned) {
    DecayBin bin;
    bin.median_log10_dt = median(data.first);
    bin.median_rho = median(data.second);
    bin.n_pairs = data.first.size();
    bin_x.push_back(bin.median_log10_dt);
    bin_y.push_back(bin.median_rho);
    summary.bins.push_back(bin);
  }
  summary.slope_per_decade = ols_slope(bin_x, bin_y);
  summary.spearman_rho_vs_log_dt = spearman(bin_x, bin_y);
  if (!inter_rho.empty()) {
    summary.inter_median_rho = median(inter_rho);
    summary.inter_mean_rho = mean(inter_rho);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Plan-level noise-floor calibration
// ---------------------------------------------------------------------------

// Replica divergence floor for the plan's acquisition settings: one device
// with a freshly sampled bath is measured n_pairs times twice, and alpha is
// the median divergence between the twins. Deterministic in the plan's root
// seed; independent of the longitudinal streams.
inline double calibrate_plan_alpha(const ExperimentPlan& plan,
                                   int n_pairs = 50) {
  validate(plan);
  const std::uint64_t root = plan.root_seed;
  DeviceState device;
  device.label = plan.qubits[0].label;
  device.params = plan.qubits[0].params;
  device.flux_line = plan.qubits[0].flux_line;
  {
    std::mt19937_64 eng = make_engine(derive_seed(root, Stream::calibration));
    device.bath = sample_bath(plan.bath_prior, eng);
  }
  std::vector<std::pair<Spectrogram, Spectrogram>> pairs;
  pairs.reserve(std::size_t(std::max(n_pairs, 0)));
  for (int i = 0; i < n_pairs; ++i) {
    pairs.emplace_back(
        simulate_spectrogram(device, plan.grid, plan.map_readout,
                             derive_seed(root, Stream::calibration,
                                         std::uint64_t(i), 1)),
        simulate_spectrogram(device, plan.grid, plan.map_readout,
                             derive_seed(root, Stream::calibration,
                                         std::uint64_t(i), 2)));
  }
  return calibrate_alpha(pairs);
}

// ---------------------------------------------------------------------------
// Default plan factory
// ---------------------------------------------------------------------------

// Fleet of nominally identical transmons with per-device fabrication spread:
// junction energy within +-0.4%, line offsets spanning the typical setup
// range. Labels run Q01, Q02, ...
inline std::vector<QubitConfig> draw_default_qubits(std::uint64_t root_seed,
                                                    int n_qubits) {
  if (n_qubits < 1) throw ConfigError("qubit count must be >= 1");
  std::mt19937_64 eng = make_engine(derive_seed(root_seed, Stream::qubit_init));
  std::uniform_real_distribution<double> ej_spread(-0.004, 0.004);
  std::uniform_real_distribution<double> bias_offset(0.7, 1.3);
  std::uniform_real_distribution<double> flux_offset(-0.12, 0.12);
  std::vector<QubitConfig> qubits;
  qubits.reserve(std::size_t(n_qubits));
  for (int i = 0; i < n_qubits; ++i) {
    QubitConfig q;
    char label[16];
    std::snprintf(label, sizeof(label), "Q%02d", i + 1);
    q.label = label;
    q.params.ej_ghz = 14.0 * (1.0 + ej_spread(eng));
    q.params.ec_ghz = 0.2;
    q.params.gamma0_per_us = 1.0 / 70.0;
    q.flux_line.mutual_phi0_per_ma = 0.1;
    q.flux_line.bias_offset_ma = bias_offset(eng);
    q.flux_line.flux_offset_phi0 = flux_offset(eng);
    qubits.push_back(std::move(q));
  }
  return qubits;
}

inline ExperimentPlan default_plan(std::uint64_t root_seed, int n_qubits = 27,
                                   int n_cycles = 4) {
  ExperimentPlan plan;
  plan.root_seed = root_seed;
  plan.n_cycles = n_cycles;
  plan.qubits = draw_default_qubits(root_seed, n_qubits);
  validate(plan);
  return plan;
}

}  // namespace stabilitylab
