#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "stabilitylab/errors.hpp"

namespace stabilitylab {

struct CurveFitOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-10;  // convergence: max |J^T r| below this
  double step_tol = 1e-14;      // convergence: relative step below this
  double lambda0 = 1e-3;
  double lambda_max = 1e14;     // damping beyond this means a stalled fit
};

template <std::size_t N>
struct CurveFitResult {
  std::array<double, N> params{};
  double rss = 0.0;  // residual sum of squares
  double rms = 0.0;  // per-point root mean square residual
  int iterations = 0;
  bool converged = false;
  std::array<double, N * N> covariance{};  // sigma^2 (J^T J)^-1, row-major
};

namespace detail {

// Gaussian elimination with partial pivoting for the tiny (N <= 3) normal
// equations. Returns false on a singular system.
template <std::size_t N>
bool solve_small(std::array<double, N * N> a, std::array<double, N>& b) {
  std::array<std::size_t, N> piv;
  for (std::size_t i = 0; i < N; ++i) piv[i] = i;
  for (std::size_t col = 0; col < N; ++col) {
    std::size_t best = col;
    for (std::size_t r = col + 1; r < N; ++r) {
      if (std::abs(a[r * N + col]) > std::abs(a[best * N + col])) best = r;
    }
    if (a[best * N + col] == 0.0) return false;
    if (best != col) {
      for (std::size_t c = 0; c < N; ++c) std::swap(a[col * N + c], a[best * N + c]);
      std::swap(b[col], b[best]);
    }
    for (std::size_t r = col + 1; r < N; ++r) {
      const double f = a[r * N + col] / a[col * N + col];
      for (std::size_t c = col; c < N; ++c) a[r * N + c] -= f * a[col * N + c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = N; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < N; ++c) s -= a[i * N + c] * b[c];
    b[i] = s / a[i * N + i];
  }
  return true;
}

template <std::size_t N>
bool invert_small(const std::array<double, N * N>& a,
                  std::array<double, N * N>& inv) {
  for (std::size_t col = 0; col < N; ++col) {
    std::array<double, N> e{};
    e[col] = 1.0;
    if (!solve_small<N>(a, e)) return false;
    for (std::size_t r = 0; r < N; ++r) inv[r * N + col] = e[r];
  }
  return true;
}

}  // namespace detail

// Damped least squares (Levenberg-Marquardt with Marquardt diagonal
// scaling). eval(p, i, r, g) must set r to the i-th residual and g to its
// gradient with respect to the parameters. accept(p) rejects parameter
// vectors outside the model's domain before they are ever evaluated.
template <std::size_t N, class Eval, class Accept>
CurveFitResult<N> levmar_fit(std::size_t n_points, Eval&& eval,
                             std::array<double, N> p0, Accept&& accept,
                             const CurveFitOptions& opt = {}) {
  auto rss_of = [&](const std::array<double, N>& p) {
    double rss = 0.0;
    std::array<double, N> g;
    double r;
    for (std::size_t i = 0; i < n_points; ++i) {
      eval(p, i, r, g);
      rss += r * r;
    }
    return rss;
  };

  CurveFitResult<N> out;
  out.params = p0;
  double rss = rss_of(p0);
  double lambda = opt.lambda0;

  std::array<double, N * N> jtj{};
  std::array<double, N> jtr{};

  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    jtj.fill(0.0);
    jtr.fill(0.0);
    double r;
    std::array<double, N> g;
    for (std::size_t i = 0; i < n_points; ++i) {
      eval(out.params, i, r, g);
      for (std::size_t a = 0; a < N; ++a) {
        jtr[a] += g[a] * r;
        for (std::size_t b = a; b < N; ++b) jtj[a * N + b] += g[a] * g[b];
      }
    }
    for (std::size_t a = 0; a < N; ++a) {
      for (std::size_t b = 0; b < a; ++b) jtj[a * N + b] = jtj[b * N + a];
    }

    double gmax = 0.0;
    for (std::size_t a = 0; a < N; ++a) gmax = std::max(gmax, std::abs(jtr[a]));
    if (gmax <= opt.gradient_tol) {
      out.converged = true;
      break;
    }

    bool stepped = false;
    while (lambda <= opt.lambda_max) {
      std::array<double, N * N> damped = jtj;
      for (std::size_t a = 0; a < N; ++a) {
        damped[a * N + a] += lambda * std::max(jtj[a * N + a], 1e-30);
      }
      std::array<double, N> step = jtr;
      for (double& s : step) s = -s;
      if (!detail::solve_small<N>(damped, step)) {
        lambda *= 4.0;
        continue;
      }
      std::array<double, N> trial = out.params;
      double step_norm = 0.0, p_norm = 0.0;
      for (std::size_t a = 0; a < N; ++a) {
        trial[a] += step[a];
        step_norm += step[a] * step[a];
        p_norm += out.params[a] * out.params[a];
      }
      if (accept(trial)) {
        const double trial_rss = rss_of(trial);
        if (trial_rss < rss) {
          out.params = trial;
          rss = trial_rss;
          lambda = std::max(lambda / 3.0, 1e-12);
          stepped = true;
          if (step_norm <= opt.step_tol * opt.step_tol * std::max(p_norm, 1.0)) {
            out.converged = true;
          }
          break;
        }
      }
      // A rejected step this small means the residual floor is reached: no
      // representable move along the damped direction improves the fit.
      if (step_norm <= opt.step_tol * opt.step_tol * std::max(p_norm, 1.0)) {
        out.converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped) {
      // Either converged at the numerical floor (flag set above) or no
      // admissible descent direction is left at any damping: a true stall.
      break;
    }
    if (out.converged) {
      ++iter;
      break;
    }
  }

  out.iterations = iter;
  out.rss = rss;
  out.rms = std::sqrt(rss / double(n_points));

  if (!out.converged) {
    throw ConvergenceFailure("fit did not converge after " +
                             std::to_string(out.iterations) +
                             " iterations (cap " +
                             std::to_string(opt.max_iterations) + ")");
  }

  // Covariance from the undamped normal equations at the solution.
  jtj.fill(0.0);
  {
    double r;
    std::array<double, N> g;
    for (std::size_t i = 0; i < n_points; ++i) {
      eval(out.params, i, r, g);
      for (std::size_t a = 0; a < N; ++a) {
        for (std::size_t b = a; b < N; ++b) jtj[a * N + b] += g[a] * g[b];
      }
    }
    for (std::size_t a = 0; a < N; ++a) {
      for (std::size_t b = 0; b < a; ++b) jtj[a * N + b] = jtj[b * N + a];
    }
  }
  std::array<double, N * N> inv{};
  if (n_points > N && detail::invert_small<N>(jtj, inv)) {
    const double sigma2 = rss / double(n_points - N);
    for (std::size_t k = 0; k < N * N; ++k) out.covariance[k] = sigma2 * inv[k];
  }
  return out;
}

}  // namespace stabilitylab
