#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stabilitylab/errors.hpp"
#include "stabilitylab/matrix.hpp"
#include "stabilitylab/model.hpp"
#include "stabilitylab/rng.hpp"

namespace stabilitylab {

// ---------------------------------------------------------------------------
// Measurement domain types
// ---------------------------------------------------------------------------

// Frequency/delay axes shared by every map that will be compared. Both axes
// strictly increasing, at least 2 points each.
struct SpectroscopyGrid {
  std::vector<double> freq_ghz;
  std::vector<double> delay_us;
};

inline void validate(const SpectroscopyGrid& g) {
  if (g.freq_ghz.size() < 2) throw ConfigError("grid needs >= 2 frequencies");
  if (g.delay_us.size() < 2) throw ConfigError("grid needs >= 2 delays");
  for (std::size_t i = 1; i < g.freq_ghz.size(); ++i) {
    if (!(g.freq_ghz[i] > g.freq_ghz[i - 1])) {
      throw ConfigError("grid frequencies must be strictly increasing");
    }
  }
  for (std::size_t i = 1; i < g.delay_us.size(); ++i) {
    if (!(g.delay_us[i] > g.delay_us[i - 1])) {
      throw ConfigError("grid delays must be strictly increasing");
    }
  }
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) {
    v[i] = lo + (hi - lo) * double(i) / double(n - 1);
  }
  return v;
}

inline std::vector<double> logspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i) {
    v[i] = std::exp(llo + (lhi - llo) * double(i) / double(n - 1));
  }
  return v;
}

inline SpectroscopyGrid make_grid(double freq_lo_ghz, double freq_hi_ghz,
                                  int n_freq, double delay_lo_us,
                                  double delay_hi_us, int n_delay) {
  SpectroscopyGrid g{linspace(freq_lo_ghz, freq_hi_ghz, n_freq),
                     logspace(delay_lo_us, delay_hi_us, n_delay)};
  validate(g);
  return g;
}

struct MapMeta {
  std::string qubit = "Q00";
  int cycle = 1;
  double clock_hours = 0.0;
};

// Raw decay map: rows follow the delay axis, columns the frequency axis.
// Every value lies in [0, 1].
struct Spectrogram {
  SpectroscopyGrid grid;
  Matrix values;
  MapMeta meta;
};

// shots == 0 selects the analytic (infinite-shot) limit: exact ideal values,
// no contrast/floor drift. Jitter fields give the half-width of the
// per-acquisition readout drift; the drift is constant within one map.
struct ReadoutModel {
  int shots = 100;
  double contrast = 0.9;       // multiplicative visibility, in (0, 1]
  double floor = 0.03;         // additive offset, in [0, 0.2]
  double contrast_jitter = 0.0;  // relative half-width of the contrast draw
  double floor_jitter = 0.0;     // absolute half-width of the floor draw
};

inline void validate(const ReadoutModel& r) {
  if (r.shots < 0) throw ConfigError("readout shots must be >= 0");
  if (!(r.contrast > 0.0 && r.contrast <= 1.0)) {
    throw ConfigError("readout contrast must lie in (0, 1]");
  }
  if (!(r.floor >= 0.0 && r.floor <= 0.2)) {
    throw ConfigError("readout floor must lie in [0, 0.2]");
  }
  if (!(r.contrast + r.floor <= 1.0)) {
    throw ConfigError("readout contrast + floor must be <= 1");
  }
  if (r.contrast_jitter < 0.0 || r.floor_jitter < 0.0) {
    throw ConfigError("readout jitters must be >= 0");
  }
  if (!(r.contrast * (1.0 + r.contrast_jitter) + r.floor + r.floor_jitter <=
        1.0)) {
    throw ConfigError("readout drift can push contrast + floor above 1");
  }
  if (!(r.floor - r.floor_jitter >= 0.0)) {
    throw ConfigError("readout drift can push the floor below 0");
  }
}

// Flux-arch scan: measured frequency per bias point, plus the bias-to-flux
// scale the fit needs to convert bias into flux.
struct ArchScan {
  std::vector<double> bias_ma;
  std::vector<double> freq_ghz;
  double sigma_f_mhz = 0.0;
  double mutual_phi0_per_ma = 0.1;
};

// ---------------------------------------------------------------------------
// Simulated acquisitions
// ---------------------------------------------------------------------------

namespace detail {

// Per-acquisition readout drift: contrast scales, floor shifts, both uniform
// within their jitter half-widths. Analytic mode never drifts.
struct EffectiveReadout {
  double contrast;
  double floor;
};

inline EffectiveReadout draw_readout(const ReadoutModel& r,
                                     std::mt19937_64& eng) {
  double c = r.contrast, f = r.floor;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  if (r.contrast_jitter > 0.0) c *= 1.0 + r.contrast_jitter * u(eng);
  if (r.floor_jitter > 0.0) f += r.floor_jitter * u(eng);
  return {c, f};
}

inline double sample_probability(double p_ideal, int shots,
                                 std::mt19937_64& eng) {
  // Binomial sampling needs p in [0, 1]; rounding at the contrast + floor
  // boundary may land epsilon outside.
  const double p = std::min(1.0, std::max(0.0, p_ideal));
  std::binomial_distribution<int> bin(shots, p);
  return double(bin(eng)) / double(shots);
}

inline void require_reachable(const DeviceState& device,
                              const std::vector<double>& freqs_ghz) {
  const FrequencyBand band = reachable_band(device.params);
  for (double f : freqs_ghz) {
    if (f > band.hi_ghz + 1e-12 || f < band.lo_ghz - 1e-12) {
      throw GridUnreachable("scan frequency " + std::to_string(f) +
                            " GHz outside the reachable band [" +
                            std::to_string(band.lo_ghz) + ", " +
                            std::to_string(band.hi_ghz) + "]");
    }
  }
}

}  // namespace detail

// Full decay map at the device's current landscape. Ideal value per cell is
// contrast * exp(-delay / T1(freq)) + floor; shot noise is binomial.
inline Spectrogram simulate_spectrogram(const DeviceState& device,
                                        const SpectroscopyGrid& grid,
                                        const ReadoutModel& readout,
                                        std::uint64_t rng_seed) {
  validate(grid);
  detail::require_reachable(device, grid.freq_ghz);
  const std::size_t n_tau = grid.delay_us.size();
  const std::size_t n_omega = grid.freq_ghz.size();

  std::vector<double> t1(n_omega);
  for (std::size_t j = 0; j < n_omega; ++j) {
    t1[j] = t1_at_frequency(device, grid.freq_ghz[j]);
  }

  Spectrogram out;
  out.grid = grid;
  out.values = Matrix(n_tau, n_omega);
  out.meta = {device.label, device.cycle_index, device.clock_hours};

  const bool analytic = (readout.shots == 0);
  std::mt19937_64 eng = make_engine(rng_seed);
  const detail::EffectiveReadout eff =
      analytic ? detail::EffectiveReadout{readout.contrast, readout.floor}
               : detail::draw_readout(readout, eng);
  for (std::size_t i = 0; i < n_tau; ++i) {
    for (std::size_t j = 0; j < n_omega; ++j) {
      const double p =
          eff.contrast * std::exp(-grid.delay_us[i] / t1[j]) + eff.floor;
      out.values(i, j) =
          analytic ? p : detail::sample_probability(p, readout.shots, eng);
    }
  }
  return out;
}

// Single-frequency decay trace; one column of the spectrogram model with its
// own drift draw. The engine overload lets a session stream many traces from
// one RNG stream.
inline std::vector<double> simulate_t1_trace(const DeviceState& device,
                                             double f_ghz,
                                             const std::vector<double>& delay_us,
                                             const ReadoutModel& readout,
                                             std::mt19937_64& eng) {
  for (std::size_t i = 1; i < delay_us.size(); ++i) {
    if (!(delay_us[i] > delay_us[i - 1])) {
      throw Error("t1 trace delays must be strictly increasing");
    }
  }
  detail::require_reachable(device, {f_ghz});
  const double t1 = t1_at_frequency(device, f_ghz);
  const bool analytic = (readout.shots == 0);
  const detail::EffectiveReadout eff =
      analytic ? detail::EffectiveReadout{readout.contrast, readout.floor}
               : detail::draw_readout(readout, eng);
  std::vector<double> trace(delay_us.size());
  for (std::size_t i = 0; i < delay_us.size(); ++i) {
    const double p = eff.contrast * std::exp(-delay_us[i] / t1) + eff.floor;
    trace[i] = analytic ? p : detail::sample_probability(p, readout.shots, eng);
  }
  return trace;
}

inline std::vector<double> simulate_t1_trace(const DeviceState& device,
                                             double f_ghz,
                                             const std::vector<double>& delay_us,
                                             const ReadoutModel& readout,
                                             std::uint64_t rng_seed) {
  std::mt19937_64 eng = make_engine(rng_seed);
  return simulate_t1_trace(device, f_ghz, delay_us, readout, eng);
}

// Flux-arch acquisition: model frequency at each bias plus Gaussian noise of
// std sigma_f. Every bias must map to a flux inside the validity domain.
inline ArchScan simulate_arch_scan(const DeviceState& device,
                                   const std::vector<double>& bias_ma,
                                   double sigma_f_mhz, std::uint64_t rng_seed) {
  ArchScan scan;
  scan.bias_ma = bias_ma;
  scan.sigma_f_mhz = sigma_f_mhz;
  scan.mutual_phi0_per_ma = device.flux_line.mutual_phi0_per_ma;
  scan.freq_ghz.resize(bias_ma.size());
  std::mt19937_64 eng = make_engine(rng_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < bias_ma.size(); ++i) {
    const double flux = flux_from_bias(device.flux_line, bias_ma[i]);
    double f = f01_at_flux(device.params, flux);
    if (sigma_f_mhz > 0.0) f += noise(eng) * sigma_f_mhz * 1e-3;
    scan.freq_ghz[i] = f;
  }
  return scan;
}

// Bias points for an arch scan: n points whose fluxes span
// [-span/2, +span/2] centered on the sweet spot.
inline std::vector<double> arch_bias_points(const DeviceState& device, int n,
                                            double flux_span_phi0) {
  const double center = bias_at_sweet_spot(device.flux_line);
  const double half =
      0.5 * flux_span_phi0 / device.flux_line.mutual_phi0_per_ma;
  return linspace(center - half, center + half, n);
}

}  // namespace stabilitylab
