#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "stabilitylab/errors.hpp"

namespace stabilitylab {

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Population (divide-by-N) standard deviation.
inline double population_std(const std::vector<double>& v) {
  const double mu = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / double(v.size()));
}

// Median with the even-count midpoint convention; input is copied.
inline double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of empty sample");
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

// Pearson correlation of two equal-length samples (sample form, for rank
// vectors and regression diagnostics; the map-level zero-mean variant lives
// in analysis).
inline double pearson_samples(const std::vector<double>& x,
                              const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw Error("pearson_samples needs equal-length non-empty inputs");
  }
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson_samples on constant input");
  return sxy / std::sqrt(sxx * syy);
}

// Midrank ranks (ties get the average rank).
inline std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * (double(i) + double(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x,
                       const std::vector<double>& y) {
  return pearson_samples(midranks(x), midranks(y));
}

// Ordinary least-squares slope of y on x.
inline double ols_slope(const std::vector<double>& x,
                        const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error("ols_slope needs >= 2 paired points");
  }
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw Error("ols_slope on constant x");
  return sxy / sxx;
}

struct KsResult {
  double statistic;  // sup |F1 - F2|
  double p_value;    // asymptotic two-sample Kolmogorov-Smirnov p
};

// Asymptotic survival function of the Kolmogorov distribution.
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * double(k) * double(k) * lambda * lambda);
    sum += (k % 2 == 1) ? term : -term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("ks_two_sample needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size();
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < n && j < m) {
    const double x = std::min(a[i], b[j]);
    while (i < n && a[i] <= x) ++i;
    while (j < m && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / double(n) - double(j) / double(m)));
  }
  const double ne = double(n) * double(m) / double(n + m);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  return {d, kolmogorov_sf(lambda)};
}

}  // namespace stabilitylab
