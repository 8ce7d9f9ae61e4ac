#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "stabilitylab/errors.hpp"
#include "stabilitylab/rng.hpp"

namespace stabilitylab {

// Flux values beyond this magnitude (in Phi0) are rejected: the tuning
// formula collapses unphysically near half a flux quantum.
inline constexpr double flux_domain_limit = 0.45;

// ---------------------------------------------------------------------------
// Static device parameters
// ---------------------------------------------------------------------------

struct TransmonParams {
  double ej_ghz = 14.0;            // Josephson energy
  double ec_ghz = 0.2;             // charging energy
  double gamma0_per_us = 1.0 / 70.0;  // relaxation floor from non-TLS loss
};

// Valid parameters satisfy ej > 0, ec > 0, ej/ec >= 20 and gamma0 > 0.
// Enforced at configuration boundaries, not in the formulas themselves, so
// degenerate corners of the formulas stay testable.
inline void validate(const TransmonParams& p) {
  if (!(p.ej_ghz > 0.0)) throw ConfigError("ej_ghz must be > 0");
  if (!(p.ec_ghz > 0.0)) throw ConfigError("ec_ghz must be > 0");
  if (!(p.ej_ghz / p.ec_ghz >= 20.0)) {
    throw ConfigError("ej/ec must be >= 20 (transmon regime), got " +
                      std::to_string(p.ej_ghz / p.ec_ghz));
  }
  if (!(p.gamma0_per_us > 0.0)) throw ConfigError("gamma0_per_us must be > 0");
}

// Linear map from bias current on the flux line to flux through the loop.
struct FluxLine {
  double mutual_phi0_per_ma = 0.1;  // must be nonzero
  double bias_offset_ma = 0.0;      // bias at which the applied flux is zero
  double flux_offset_phi0 = 0.0;    // trapped-flux background, |.| <= 0.5
};

inline void validate(const FluxLine& line) {
  if (line.mutual_phi0_per_ma == 0.0) {
    throw ConfigError("mutual_phi0_per_ma must be nonzero");
  }
  if (!(std::abs(line.flux_offset_phi0) <= 0.5)) {
    throw ConfigError("flux_offset_phi0 must lie in [-0.5, 0.5]");
  }
}

// ---------------------------------------------------------------------------
// Defect bath
// ---------------------------------------------------------------------------

// Two-state switcher driving spectral diffusion of the defects coupled to it.
struct Fluctuator {
  double rate_per_hour = 1.0;  // > 0
  bool state = false;
};

struct FluctuatorCoupling {
  std::size_t fluctuator = 0;  // index into TlsBath::fluctuators
  double shift_ghz = 0.0;      // applied with sign +1 for state true, -1 false
};

// One Lorentzian relaxation channel. center_freq_ghz is derived state:
// base_freq_ghz plus the signed sum of coupled fluctuator shifts.
struct TlsDefect {
  double center_freq_ghz = 0.0;
  double base_freq_ghz = 0.0;
  double gamma_max_per_us = 0.0;  // added relaxation rate on resonance, >= 0
  double width_ghz = 1e-3;        // full width at half maximum, > 0
  std::vector<FluctuatorCoupling> couplings;
};

// Prior from which baths are drawn, both at first cooldown and when a
// thermal cycle re-seeds the defect configuration. Rates are log-uniform;
// the slow band carries shifts of defect-width scale (it decides how fast
// the landscape decorrelates over hundreds of hours) while the fast band
// only jiggles centers by a few percent of a width.
struct BathPrior {
  double window_lo_ghz = 4.15;
  double window_hi_ghz = 4.49;
  double density_per_mhz = 0.10;

  double gamma_max_lo_per_us = 0.04;
  double gamma_max_hi_per_us = 0.30;
  double width_lo_mhz = 0.8;
  double width_hi_mhz = 2.0;

  int slow_per_defect = 4;
  int fast_per_defect = 2;
  double slow_rate_lo_per_hour = 1e-4;
  double slow_rate_hi_per_hour = 1e-2;  // also the lower edge of the fast band
  double fast_rate_hi_per_hour = 1e2;
  double slow_shift_lo_widths = 1.5;
  double slow_shift_hi_widths = 4.0;
  double fast_shift_widths = 0.06;
};

inline void validate(const BathPrior& p) {
  if (!(p.window_hi_ghz > p.window_lo_ghz)) {
    throw ConfigError("bath window_hi_ghz must exceed window_lo_ghz");
  }
  if (!(p.density_per_mhz >= 0.0)) {
    throw ConfigError("bath density_per_mhz must be >= 0");
  }
  if (!(0.0 < p.gamma_max_lo_per_us &&
        p.gamma_max_lo_per_us <= p.gamma_max_hi_per_us)) {
    throw ConfigError("bath gamma_max bounds must satisfy 0 < lo <= hi");
  }
  if (!(0.0 < p.width_lo_mhz && p.width_lo_mhz <= p.width_hi_mhz)) {
    throw ConfigError("bath width bounds must satisfy 0 < lo <= hi");
  }
  if (p.slow_per_defect < 0 || p.fast_per_defect < 0) {
    throw ConfigError("fluctuator counts must be >= 0");
  }
  if (!(0.0 < p.slow_rate_lo_per_hour &&
        p.slow_rate_lo_per_hour <= p.slow_rate_hi_per_hour &&
        p.slow_rate_hi_per_hour <= p.fast_rate_hi_per_hour)) {
    throw ConfigError("fluctuator rate bands must satisfy 0 < lo <= mid <= hi");
  }
}

inline int defect_count(const BathPrior& p) {
  return static_cast<int>(std::lround(
      p.density_per_mhz * (p.window_hi_ghz - p.window_lo_ghz) * 1e3));
}

struct TlsBath {
  BathPrior prior;
  std::vector<TlsDefect> defects;
  std::vector<Fluctuator> fluctuators;
};

// ---------------------------------------------------------------------------
// Device state
// ---------------------------------------------------------------------------

struct DeviceState {
  std::string label = "Q00";
  TransmonParams params;
  FluxLine flux_line;
  TlsBath bath;
  double clock_hours = 0.0;  // elapsed cold time within the current cycle
  int cycle_index = 1;
};

// What a thermal cycle randomizes. reset_clock exists for control runs that
// disable the perturbation entirely; a physical cycle always resets.
struct CyclePerturbation {
  double sigma_f01_mhz = 3.0;        // std of the maximum-frequency shift
  double flux_offset_dist_phi0 = 0.12;  // uniform half-width, in [0, 0.5]
  bool reseed_tls = true;
  bool reset_clock = true;
};

inline void validate(const CyclePerturbation& p) {
  if (!(p.sigma_f01_mhz >= 0.0)) {
    throw ConfigError("sigma_f01_mhz must be >= 0");
  }
  if (!(0.0 <= p.flux_offset_dist_phi0 && p.flux_offset_dist_phi0 <= 0.5)) {
    throw ConfigError("flux_offset_dist_phi0 must lie in [0, 0.5]");
  }
}

// ---------------------------------------------------------------------------
// Frequency formulas
// ---------------------------------------------------------------------------

// Sweet-spot transition frequency sqrt(8 ej ec) - ec.
inline double f01_max(const TransmonParams& p) {
  return std::sqrt(8.0 * p.ej_ghz * p.ec_ghz) - p.ec_ghz;
}

// Inverts f01_max at fixed ec.
inline double ej_for_f01_max(double f01_max_ghz, double ec_ghz) {
  const double s = f01_max_ghz + ec_ghz;
  return s * s / (8.0 * ec_ghz);
}

// Transition frequency at a given flux (Phi0 units), |flux| <= 0.45.
inline double f01_at_flux(const TransmonParams& p, double flux_phi0) {
  if (!(std::abs(flux_phi0) <= flux_domain_limit)) {
    throw FluxOutOfRange("flux " + std::to_string(flux_phi0) +
                         " Phi0 outside validity domain |flux| <= 0.45");
  }
  const double c = std::abs(std::cos(std::numbers::pi * flux_phi0));
  return std::sqrt(8.0 * p.ej_ghz * p.ec_ghz * c) - p.ec_ghz;
}

inline double flux_from_bias(const FluxLine& line, double bias_ma) {
  return line.mutual_phi0_per_ma * (bias_ma - line.bias_offset_ma) +
         line.flux_offset_phi0;
}

// Bias current that puts the device at zero effective flux (the sweet spot).
inline double bias_at_sweet_spot(const FluxLine& line) {
  return line.bias_offset_ma - line.flux_offset_phi0 / line.mutual_phi0_per_ma;
}

// ---------------------------------------------------------------------------
// Relaxation
// ---------------------------------------------------------------------------

// T1 at a probe frequency: baseline rate plus a Lorentzian term per defect.
// Bounded above by 1/gamma0; strictly positive.
inline double t1_at_frequency(const DeviceState& device, double f_ghz) {
  double rate = device.params.gamma0_per_us;
  for (const TlsDefect& d : device.bath.defects) {
    const double hw = 0.5 * d.width_ghz;
    const double det = f_ghz - d.center_freq_ghz;
    rate += d.gamma_max_per_us * hw * hw / (det * det + hw * hw);
  }
  return 1.0 / rate;
}

// Band of frequencies the device can be tuned to within the flux domain.
struct FrequencyBand {
  double lo_ghz;
  double hi_ghz;
};

inline FrequencyBand reachable_band(const TransmonParams& p) {
  return {f01_at_flux(p, flux_domain_limit), f01_max(p)};
}

// ---------------------------------------------------------------------------
// Bath sampling and dynamics
// ---------------------------------------------------------------------------

namespace detail {

// Draws one defect's intrinsic fields and its couplings into the fluctuator
// block [first, first + slow + fast). Rates are drawn by the caller; slow
// couplings occupy the front of the block.
inline TlsDefect draw_defect(const BathPrior& p, std::size_t first_fluctuator,
                             std::mt19937_64& eng) {
  TlsDefect d;
  std::uniform_real_distribution<double> upos(p.window_lo_ghz, p.window_hi_ghz);
  d.base_freq_ghz = upos(eng);
  d.gamma_max_per_us =
      log_uniform(eng, p.gamma_max_lo_per_us, p.gamma_max_hi_per_us);
  d.width_ghz = log_uniform(eng, p.width_lo_mhz, p.width_hi_mhz) * 1e-3;
  std::uniform_real_distribution<double> uslow(p.slow_shift_lo_widths,
                                               p.slow_shift_hi_widths);
  std::uniform_real_distribution<double> ufast(0.5, 1.5);
  for (int k = 0; k < p.slow_per_defect; ++k) {
    d.couplings.push_back({first_fluctuator + static_cast<std::size_t>(k),
                           uslow(eng) * d.width_ghz});
  }
  for (int k = 0; k < p.fast_per_defect; ++k) {
    d.couplings.push_back(
        {first_fluctuator + static_cast<std::size_t>(p.slow_per_defect + k),
         p.fast_shift_widths * ufast(eng) * d.width_ghz});
  }
  d.center_freq_ghz = d.base_freq_ghz;
  return d;
}

}  // namespace detail

inline void recompute_centers(TlsBath& bath) {
  for (TlsDefect& d : bath.defects) {
    double f = d.base_freq_ghz;
    for (const FluctuatorCoupling& c : d.couplings) {
      f += bath.fluctuators[c.fluctuator].state ? c.shift_ghz : -c.shift_ghz;
    }
    d.center_freq_ghz = f;
  }
}

// Fresh bath from the prior: defects, private fluctuator blocks (slow band
// first within each block), rates, and states.
inline TlsBath sample_bath(const BathPrior& prior, std::mt19937_64& eng) {
  TlsBath bath;
  bath.prior = prior;
  const int n_def = defect_count(prior);
  const int per = prior.slow_per_defect + prior.fast_per_defect;
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < n_def; ++i) {
    const std::size_t first = static_cast<std::size_t>(i) *
                              static_cast<std::size_t>(per);
    bath.defects.push_back(detail::draw_defect(prior, first, eng));
    for (int k = 0; k < prior.slow_per_defect; ++k) {
      bath.fluctuators.push_back({log_uniform(eng, prior.slow_rate_lo_per_hour,
                                               prior.slow_rate_hi_per_hour),
                                  coin(eng)});
    }
    for (int k = 0; k < prior.fast_per_defect; ++k) {
      bath.fluctuators.push_back({log_uniform(eng, prior.slow_rate_hi_per_hour,
                                               prior.fast_rate_hi_per_hour),
                                  coin(eng)});
    }
  }
  recompute_centers(bath);
  return bath;
}

// Thermal-cycle re-seed: defects and fluctuator states are redrawn from the
// prior; fluctuator switching rates persist (they belong to the material,
// not to the cooldown).
inline void reseed_defects(TlsBath& bath, std::mt19937_64& eng) {
  const BathPrior& prior = bath.prior;
  const int per = prior.slow_per_defect + prior.fast_per_defect;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < bath.defects.size(); ++i) {
    bath.defects[i] = detail::draw_defect(
        prior, i * static_cast<std::size_t>(per), eng);
  }
  for (Fluctuator& fl : bath.fluctuators) fl.state = coin(eng);
  recompute_centers(bath);
}

// Evolves the bath for dt hours. Each fluctuator is an independent telegraph
// process: over dt it ends up flipped with probability (1 - exp(-2 r dt))/2,
// the unique form for which advancing by a then b equals advancing by a+b.
inline DeviceState advance_bath(const DeviceState& device, double dt_hours,
                                std::uint64_t rng_seed) {
  if (!(dt_hours >= 0.0)) throw Error("advance_bath needs dt >= 0");
  if (dt_hours == 0.0) return device;
  DeviceState out = device;
  std::mt19937_64 eng = make_engine(rng_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (Fluctuator& fl : out.bath.fluctuators) {
    const double p_flip =
        0.5 * (1.0 - std::exp(-2.0 * fl.rate_per_hour * dt_hours));
    if (u01(eng) < p_flip) fl.state = !fl.state;
  }
  recompute_centers(out.bath);
  out.clock_hours += dt_hours;
  return out;
}

// Stochastic reset applied by warming up and cooling back down. gamma0 is
// never touched: the baseline quality of the device survives every cycle.
inline DeviceState apply_thermal_cycle(const DeviceState& device,
                                       const CyclePerturbation& pert,
                                       std::uint64_t rng_seed) {
  DeviceState out = device;
  std::mt19937_64 eng = make_engine(rng_seed);
  if (pert.sigma_f01_mhz > 0.0) {
    std::normal_distribution<double> shift(0.0, pert.sigma_f01_mhz * 1e-3);
    const double new_f01 = f01_max(out.params) + shift(eng);
    out.params.ej_ghz = ej_for_f01_max(new_f01, out.params.ec_ghz);
  }
  if (pert.flux_offset_dist_phi0 > 0.0) {
    std::uniform_real_distribution<double> off(-pert.flux_offset_dist_phi0,
                                               pert.flux_offset_dist_phi0);
    out.flux_line.flux_offset_phi0 = off(eng);
  }
  if (pert.reseed_tls) reseed_defects(out.bath, eng);
  out.cycle_index += 1;
  if (pert.reset_clock) out.clock_hours = 0.0;
  return out;
}

}  // namespace stabilitylab
