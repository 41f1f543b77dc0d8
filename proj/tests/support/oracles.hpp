// Independent reference computations used by the tests. Nothing here calls
// into the library, so a shared bug cannot make both sides agree.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

/// Adaptive Gauss-Kronrod integral of f over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate(f, a, b, 15, tol);
}

/// Double-exponential quadrature; tolerates integrable endpoint singularities
/// such as the derivative of t^k at 0 for k < 1.
inline double integrate_endpoint_singular(const std::function<double(double)>& f, double a, double b,
                                          double tol = 1e-13) {
  static boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(f, a, b, tol);
}

/// Central difference with step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic sup|F_n - F|.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic Kolmogorov tail P(K > sqrt(n) d) with the Stephens
/// small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lam = (sn + 0.12 + 0.11 / sn) * d;
  if (lam < 1e-3) return 1.0;
  double p = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * lam * lam);
    p += (j % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

/// Failure age of a power-law subsystem with rate a and shape k, conditional
/// on survival to t0, by inverting exp(-a (t^k - t0^k)) = v for uniform v.
inline double weibull_tail_draw(double a, double k, double t0, std::mt19937_64& g) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double v = U(g);
  while (v <= 0.0) v = U(g);
  if (a <= 0.0) return INFINITY;
  return std::pow(std::pow(t0, k) - std::log(v) / a, 1.0 / k);
}

/// Binomial standard error of a frequency estimate.
inline double binomial_se(double p, std::size_t n) {
  return std::sqrt(std::max(p * (1.0 - p), 1e-300) / static_cast<double>(n));
}

}  // namespace oracle

#include <boost/math/tools/roots.hpp>

namespace oracle {

/// Integral of |f - g| over [a, b]; the sign change (at most one) is located
/// by bracketing root search before integrating each piece.
inline double integrate_abs_diff(const std::function<double(double)>& f,
                                 const std::function<double(double)>& g, double a, double b) {
  auto d = [&](double x) { return f(x) - g(x); };
  std::vector<double> cuts{a};
  const int n = 2000;
  double prev_x = a + (b - a) * 1e-9, prev = d(prev_x);
  for (int i = 1; i <= n; ++i) {
    const double x = a + (b - a) * i / n;
    const double v = d(x);
    if ((prev < 0.0 && v > 0.0) || (prev > 0.0 && v < 0.0)) {
      std::uintmax_t iters = 200;
      auto r = boost::math::tools::toms748_solve(d, prev_x, x, prev, v,
                                                 boost::math::tools::eps_tolerance<double>(52), iters);
      cuts.push_back(0.5 * (r.first + r.second));
    }
    prev_x = x;
    prev = v;
  }
  cuts.push_back(b);
  double total = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    total += std::abs(integrate_endpoint_singular(d, cuts[i - 1], cuts[i]));
  }
  return total;
}

}  // namespace oracle
