#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "stabilitylab/errors.hpp"
#include "stabilitylab/levmar.hpp"
#include "stabilitylab/matrix.hpp"
#include "stabilitylab/measure.hpp"
#include "stabilitylab/stats.hpp"

namespace stabilitylab {

// ---------------------------------------------------------------------------
// Z-score normalization
// ---------------------------------------------------------------------------

// A map standardized to global mean 0 and global population std 1.
struct NormalizedMap {
  Matrix values;
  MapMeta meta;
};

// Population-std z-scoring of a raw matrix. Removes any affine (contrast,
// offset) component while preserving the rank order of elements.
inline Matrix zscore_normalize(const Matrix& m) {
  if (m.empty()) throw DegenerateMap("cannot normalize an empty map");
  const double mu = mean(m.flat());
  const double sd = population_std(m.flat());
  if (sd <= 1e-12) {
    throw DegenerateMap("map is constant (population std " +
                        std::to_string(sd) + "), cannot normalize");
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t k = 0; k < m.size(); ++k) {
    out.flat()[k] = (m.flat()[k] - mu) / sd;
  }
  return out;
}

inline NormalizedMap zscore_normalize(const Spectrogram& s) {
  return {zscore_normalize(s.values), s.meta};
}

// ---------------------------------------------------------------------------
// Divergence, correlation, and the fidelity score
// ---------------------------------------------------------------------------

// Normalized spectral divergence: sqrt(sum of squared differences) / N for
// N = rows * cols. Symmetric; bounded by 2/sqrt(N) for z-scored inputs.
inline double spectral_divergence(const NormalizedMap& a,
                                  const NormalizedMap& b) {
  require_same_shape(a.values, b.values);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double d = a.values.flat()[k] - b.values.flat()[k];
    acc += d * d;
  }
  return std::sqrt(acc) / double(a.values.size());
}

// Pearson correlation specialized to zero-mean unit-std maps: (1/N) sum a*b.
inline double pearson(const NormalizedMap& a, const NormalizedMap& b) {
  require_same_shape(a.values, b.values);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    acc += a.values.flat()[k] * b.values.flat()[k];
  }
  return std::clamp(acc / double(a.values.size()), -1.0, 1.0);
}

// alpha maps divergence onto the fidelity scale; divergences at or below
// delta_floor are reported as the cap alpha/delta_floor so that identical
// maps score a finite maximum instead of dividing by zero.
struct AnalysisConfig {
  double alpha;
  double delta_floor;

  explicit AnalysisConfig(double alpha_, double delta_floor_ = 0.0)
      : alpha(alpha_),
        delta_floor(delta_floor_ > 0.0 ? delta_floor_ : alpha_ / 100.0) {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (!(delta_floor > 0.0)) throw ConfigError("delta_floor must be > 0");
  }

  double rho_cap() const { return alpha / delta_floor; }
};

// One pairwise comparison. session_a/session_b are filled by the experiment
// layer (-1 when the pair was not produced by a session grid).
struct StfReport {
  std::string qubit;
  int cycle_a = 1;
  int cycle_b = 1;
  int session_a = -1;
  int session_b = -1;
  double dt_hours = 0.0;
  double delta = 0.0;
  double rho = 0.0;
  double pearson = 0.0;
  std::string kind = "intra";  // "intra" or "inter"
};

inline StfReport stf(const NormalizedMap& a, const NormalizedMap& b,
                     const AnalysisConfig& cfg) {
  StfReport rep;
  rep.qubit = a.meta.qubit;
  rep.cycle_a = a.meta.cycle;
  rep.cycle_b = b.meta.cycle;
  rep.dt_hours = std::abs(b.meta.clock_hours - a.meta.clock_hours);
  rep.delta = spectral_divergence(a, b);
  rep.pearson = pearson(a, b);
  rep.rho = rep.delta > cfg.delta_floor ? cfg.alpha / rep.delta : cfg.rho_cap();
  rep.kind = (rep.cycle_a == rep.cycle_b) ? "intra" : "inter";
  return rep;
}

// Noise-floor calibration: median divergence over pairs that share a
// landscape and differ only by acquisition noise. Requires >= 10 pairs.
inline double calibrate_alpha(
    const std::vector<std::pair<Spectrogram, Spectrogram>>& replica_pairs) {
  if (replica_pairs.size() < 10) {
    throw InsufficientReplicas("calibration needs >= 10 replica pairs, got " +
                               std::to_string(replica_pairs.size()));
  }
  std::vector<double> deltas;
  deltas.reserve(replica_pairs.size());
  for (const auto& [a, b] : replica_pairs) {
    deltas.push_back(
        spectral_divergence(zscore_normalize(a), zscore_normalize(b)));
  }
  const double alpha = median(deltas);
  if (alpha <= 1e-12) {
    throw DegenerateCalibration(
        "replica pairs are noiseless (median divergence " +
        std::to_string(alpha) + "); alpha would be degenerate");
  }
  return alpha;
}

// ---------------------------------------------------------------------------
// Session statistics
// ---------------------------------------------------------------------------

struct SessionStats {
  double mean_t1_us = 0.0;
  double max_t1_us = 0.0;
  std::size_t n_fits = 0;
};

inline SessionStats session_stats(const std::vector<double>& t1_samples_us) {
  if (t1_samples_us.empty()) {
    throw EmptySession("session statistics over an empty sample");
  }
  SessionStats s;
  s.n_fits = t1_samples_us.size();
  s.mean_t1_us = mean(t1_samples_us);
  s.max_t1_us = *std::max_element(t1_samples_us.begin(), t1_samples_us.end());
  return s;
}

// ---------------------------------------------------------------------------
// Flux-arch fit
// ---------------------------------------------------------------------------

struct ArchFit {
  double f01_max_ghz = 0.0;
  double bias_at_max_ma = 0.0;
  double ec_ghz = 0.0;
  double residual_rms_mhz = 0.0;
  std::array<double, 9> covariance{};  // over (f01_max, bias_at_max, ec)
  int iterations = 0;
};

namespace detail {

// Arch model m(b) = (F + E) sqrt(|cos(pi M (b - B))|) - E with the known
// bias-to-flux scale M; parameters p = (F, B, E).
struct ArchModel {
  const std::vector<double>& bias;
  const std::vector<double>& freq;
  double mutual;

  void operator()(const std::array<double, 3>& p, std::size_t i, double& r,
                  std::array<double, 3>& g) const {
    const double u = std::numbers::pi * mutual * (bias[i] - p[1]);
    const double c = std::cos(u);
    const double ac = std::max(std::abs(c), 1e-12);
    const double root = std::sqrt(ac);
    const double sgn = c < 0.0 ? -1.0 : 1.0;
    r = (p[0] + p[2]) * root - p[2] - freq[i];
    g[0] = root;
    g[2] = root - 1.0;
    g[1] = (p[0] + p[2]) * sgn * std::numbers::pi * mutual * std::sin(u) /
           (2.0 * root);
  }
};

}  // namespace detail

// Weighted least-squares fit of (f01_max, bias_at_max, ec) to an arch scan.
// Multi-start on the bias offset resolves the reflection ambiguity around
// the sweet spot; best start by residual RMS wins.
inline ArchFit fit_arch(const ArchScan& scan) {
  const std::size_t n = scan.bias_ma.size();
  if (n != scan.freq_ghz.size()) {
    throw DimensionMismatch("arch scan bias and frequency lengths differ");
  }
  if (n < 5) {
    throw InsufficientPoints("arch fit needs >= 5 points, got " +
                             std::to_string(n));
  }
  const auto [bmin, bmax] =
      std::minmax_element(scan.bias_ma.begin(), scan.bias_ma.end());
  const double span_phi0 =
      std::abs(scan.mutual_phi0_per_ma) * (*bmax - *bmin);
  if (span_phi0 < 0.1) {
    throw InsufficientPoints("arch fit needs >= 0.1 Phi0 of flux span, got " +
                             std::to_string(span_phi0));
  }

  const std::size_t i_top = static_cast<std::size_t>(
      std::max_element(scan.freq_ghz.begin(), scan.freq_ghz.end()) -
      scan.freq_ghz.begin());
  const double f_top = scan.freq_ghz[i_top];
  const double b_top = scan.bias_ma[i_top];
  const double b_quarter = 0.25 * (*bmax - *bmin);

  detail::ArchModel model{scan.bias_ma, scan.freq_ghz,
                          scan.mutual_phi0_per_ma};
  auto accept = [&](const std::array<double, 3>& p) {
    // Keep ec positive and the fitted sweet spot within half a period of the
    // scanned window so sqrt|cos| stays away from its cusp.
    if (!(p[2] > 1e-6 && p[0] > 0.0)) return false;
    const double worst =
        std::max(std::abs(*bmin - p[1]), std::abs(*bmax - p[1]));
    return std::abs(scan.mutual_phi0_per_ma) * worst < 0.499;
  };

  CurveFitResult<3> best;
  bool have = false;
  std::string last_failure;
  for (const double b0 : {b_top, b_top - b_quarter, b_top + b_quarter}) {
    const std::array<double, 3> p0{f_top, b0, 0.2};
    if (!accept(p0)) continue;
    try {
      const CurveFitResult<3> r = levmar_fit<3>(n, model, p0, accept);
      if (!have || r.rss < best.rss) {
        best = r;
        have = true;
      }
    } catch (const ConvergenceFailure& e) {
      last_failure = e.what();
    }
  }
  if (!have) {
    throw ConvergenceFailure("arch fit failed from every start: " +
                             last_failure);
  }

  ArchFit fit;
  fit.f01_max_ghz = best.params[0];
  fit.bias_at_max_ma = best.params[1];
  fit.ec_ghz = best.params[2];
  fit.residual_rms_mhz = best.rms * 1e3;
  fit.covariance = best.covariance;
  fit.iterations = best.iterations;
  return fit;
}

// ---------------------------------------------------------------------------
// Exponential T1 fit
// ---------------------------------------------------------------------------

struct T1Fit {
  double t1_us = 0.0;
  double contrast = 0.0;
  double floor = 0.0;
  double residual_rms = 0.0;
  std::array<double, 9> covariance{};  // over (t1, contrast, floor)
  int iterations = 0;
};

namespace detail {

struct DecayModel {
  const std::vector<double>& delay;
  const std::vector<double>& prob;

  void operator()(const std::array<double, 3>& p, std::size_t i, double& r,
                  std::array<double, 3>& g) const {
    const double e = std::exp(-delay[i] / p[0]);
    r = p[1] * e + p[2] - prob[i];
    g[0] = p[1] * e * delay[i] / (p[0] * p[0]);
    g[1] = e;
    g[2] = 1.0;
  }
};

}  // namespace detail

// Least-squares fit of p(tau) = contrast * exp(-tau/t1) + floor.
inline T1Fit fit_t1(const std::vector<double>& delay_us,
                    const std::vector<double>& probability) {
  const std::size_t n = delay_us.size();
  if (n != probability.size()) {
    throw DimensionMismatch("t1 trace delay and probability lengths differ");
  }
  if (n < 4) {
    throw InsufficientPoints("t1 fit needs >= 4 points, got " +
                             std::to_string(n));
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(delay_us[i] > delay_us[i - 1])) {
      throw Error("t1 fit delays must be strictly increasing");
    }
  }
  if (population_std(probability) <= 1e-9) {
    throw ConvergenceFailure("trace is constant; no decay to fit");
  }

  // Start values: floor from the trace tail, contrast from the head, t1 from
  // the first crossing of the 1/e level.
  const std::size_t tail = std::max<std::size_t>(1, n / 5);
  double floor0 = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) floor0 += probability[i];
  floor0 /= double(tail);
  const double contrast0 = std::max(probability.front() - floor0, 1e-3);
  const double target = floor0 + contrast0 * std::exp(-1.0);
  double t10 = delay_us.back();
  for (std::size_t i = 0; i < n; ++i) {
    if (probability[i] <= target) {
      t10 = std::max(delay_us[i], delay_us.front() > 0.0 ? delay_us.front()
                                                         : delay_us[1]);
      break;
    }
  }

  detail::DecayModel model{delay_us, probability};
  auto accept = [](const std::array<double, 3>& p) { return p[0] > 0.0; };
  const CurveFitResult<3> r =
      levmar_fit<3>(n, model, {t10, contrast0, floor0}, accept);

  if (!(r.params[0] > 0.0)) {
    throw NonPositiveT1("t1 fit converged to " + std::to_string(r.params[0]) +
                        " us");
  }
  T1Fit fit;
  fit.t1_us = r.params[0];
  fit.contrast = r.params[1];
  fit.floor = r.params[2];
  fit.residual_rms = r.rms;
  fit.covariance = r.covariance;
  fit.iterations = r.iterations;
  return fit;
}

}  // namespace stabilitylab
