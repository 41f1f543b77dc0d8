// Interval likelihood under partial coverage, its analytic gradient, the MLE
// of (alpha, k), and expected Fisher information of single test intervals.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "partial_al/coverage.hpp"
#include "partial_al/dataset.hpp"
#include "partial_al/model_core.hpp"
#include "partial_al/system_state.hpp"

namespace partial_al {

using Vec2 = std::array<double, 2>;

/// Symmetric 2x2 matrix over the parameter order (alpha, k).
struct FisherMatrix {
  double aa = 0.0;
  double ak = 0.0;
  double kk = 0.0;

  static constexpr int kDim = 2;

  static FisherMatrix outer(const Vec2& g, double scale) {
    return {scale * g[0] * g[0], scale * g[0] * g[1], scale * g[1] * g[1]};
  }
  static FisherMatrix identity(double s = 1.0) { return {s, 0.0, s}; }

  double trace() const noexcept { return aa + kk; }
  double det() const noexcept { return aa * kk - ak * ak; }

  FisherMatrix& operator+=(const FisherMatrix& o) {
    aa += o.aa;
    ak += o.ak;
    kk += o.kk;
    return *this;
  }
  friend FisherMatrix operator+(FisherMatrix a, const FisherMatrix& b) { return a += b; }
  friend FisherMatrix operator*(double s, FisherMatrix a) { return {s * a.aa, s * a.ak, s * a.kk}; }
  friend bool operator==(const FisherMatrix&, const FisherMatrix&) = default;
};

/// R = exp(-m) for one record, with dm/d(alpha, k).
struct RecordExponent {
  double m = 0.0;
  Vec2 grad{0.0, 0.0};
};

namespace detail {

// t^k ln t, continuous extension 0 at t = 0.
inline double pow_log(double t, double k) { return t > 0.0 ? std::pow(t, k) * std::log(t) : 0.0; }

inline RecordExponent exponent_of(const CoverageConfig& cfg, const PowerLawParams& p,
                                  const PTVector& pt, double t_age,
                                  const std::array<double, 3>& agelt) {
  RecordExponent out;
  const auto a = subsystem_alphas(cfg, p.alpha());
  out.m = coverage_exponent(a, p.k(), pt, t_age, agelt);
  if (out.m == 0.0) return out;
  const auto f = cfg.fractions();
  const double tl = pow_log(t_age, p.k());
  double dk = 0.0;
  for (std::size_t i = 0; i < kNumSubsystems; ++i) {
    if (pt[i] == 1) dk += f[i] * (tl - pow_log(agelt[i], p.k()));
  }
  out.grad = {out.m / p.alpha(), p.alpha() * dk};
  return out;
}

}  // namespace detail

inline RecordExponent record_exponent(const CoverageConfig& cfg, const PowerLawParams& p,
                                      const TestRecord& r) {
  return detail::exponent_of(cfg, p, r.pt, r.t_age, r.agelt);
}

/// Stand-in exponent for a detected failure on an interval the model says is empty.
inline constexpr double kImpossibleDetectionExponent = 1e-12;

/// Negative log-likelihood contribution of one record given its exponent m.
inline double record_nll(int y, double m) {
  if (y == 0) return m;
  if (m <= 0.0) m = kImpossibleDetectionExponent;
  // -ln(1 - e^-m), split at ln 2 to stay accurate at both ends
  return m < M_LN2 ? -std::log(-std::expm1(-m)) : -std::log1p(-std::exp(-m));
}

template <class Records>
double nll(const Records& data, const CoverageConfig& cfg, const PowerLawParams& p) {
  double total = 0.0;
  for (const TestRecord& r : data) total += record_nll(r.y, record_exponent(cfg, p, r).m);
  return total;
}

template <class Records>
Vec2 nll_gradient(const Records& data, const CoverageConfig& cfg, const PowerLawParams& p) {
  Vec2 g{0.0, 0.0};
  for (const TestRecord& r : data) {
    auto e = record_exponent(cfg, p, r);
    double coef = 1.0;
    if (r.y == 1) {
      if (e.m <= 0.0) {
        // Guarded record: m is pinned, so it carries no parameter gradient.
        continue;
      }
      coef = -1.0 / std::expm1(e.m);
    }
    g[0] += coef * e.grad[0];
    g[1] += coef * e.grad[1];
  }
  return g;
}

// ---- MLE ----

struct FitOptions {
  double alpha_min = 1e-8;
  double alpha_max = 1e6;
  double k_min = 1e-8;
  double k_max = 1e6;
  double grad_tol = 1e-8;
  int max_iterations = 200;
};

struct FitResult {
  PowerLawParams params;
  double nll = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Box-constrained quasi-Newton (BFGS on the free variables) in
/// (ln alpha, ln k) with Armijo backtracking.
template <class Records>
FitResult fit_mle(const Records& data, const CoverageConfig& cfg, const PowerLawParams& init,
                  const FitOptions& opt = {}) {
  const Vec2 lo{std::log(opt.alpha_min), std::log(opt.k_min)};
  const Vec2 hi{std::log(opt.alpha_max), std::log(opt.k_max)};
  auto clamp = [&](Vec2 x) {
    for (int i = 0; i < 2; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  };
  auto params_of = [](const Vec2& x) { return PowerLawParams{std::exp(x[0]), std::exp(x[1])}; };
  // objective and log-space gradient; non-finite values mark an unusable point
  auto eval = [&](const Vec2& x, Vec2& g) {
    const auto p = params_of(x);
    const double f = nll(data, cfg, p);
    const Vec2 gp = nll_gradient(data, cfg, p);
    g = {gp[0] * p.alpha(), gp[1] * p.k()};
    return f;
  };
  auto finite = [](double f, const Vec2& g) {
    return std::isfinite(f) && std::isfinite(g[0]) && std::isfinite(g[1]);
  };

  Vec2 x = clamp({std::log(init.alpha()), std::log(init.k())});
  Vec2 g;
  double f = eval(x, g);
  FitResult res{params_of(x), f, false, 0};
  if (!finite(f, g)) return res;

  // inverse Hessian approximation on the free coordinates
  std::array<double, 4> H{};
  bool fresh = true;
  std::array<bool, 2> prev_active{false, false};
  auto reset = [&](double scale) {
    H = {scale, 0.0, 0.0, scale};
    fresh = true;
  };
  reset(1.0 / std::max(1.0, std::max(std::abs(g[0]), std::abs(g[1]))));

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it;
    std::array<bool, 2> active{};
    Vec2 pg = g;
    for (int i = 0; i < 2; ++i) {
      active[i] = (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0);
      if (active[i]) pg[i] = 0.0;
    }
    const double pg_norm = std::max(std::abs(pg[0]), std::abs(pg[1]));
    if (pg_norm < opt.grad_tol) {
      res.converged = true;
      break;
    }
    if (active != prev_active) reset(1.0 / std::max(1.0, pg_norm));
    prev_active = active;

    Vec2 d{-(H[0] * pg[0] + H[1] * pg[1]), -(H[2] * pg[0] + H[3] * pg[1])};
    for (int i = 0; i < 2; ++i) {
      if (active[i]) d[i] = 0.0;
    }
    if (d[0] * pg[0] + d[1] * pg[1] >= 0.0) {
      reset(1.0 / std::max(1.0, pg_norm));
      d = {-H[0] * pg[0], -H[3] * pg[1]};
    }

    bool accepted = false;
    Vec2 x_new{}, g_new{};
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double step = 1.0;
      for (int bt = 0; bt < 60; ++bt, step *= 0.5) {
        x_new = clamp({x[0] + step * d[0], x[1] + step * d[1]});
        const double decrease = g[0] * (x_new[0] - x[0]) + g[1] * (x_new[1] - x[1]);
        if (x_new == x) break;
        f_new = eval(x_new, g_new);
        if (finite(f_new, g_new) && f_new <= f + 1e-4 * decrease) {
          accepted = true;
          break;
        }
      }
      if (!accepted && !fresh) {
        reset(1.0 / std::max(1.0, pg_norm));
        d = {active[0] ? 0.0 : -H[0] * pg[0], active[1] ? 0.0 : -H[3] * pg[1]};
      } else {
        break;
      }
    }
    if (!accepted) {
      // No representable decrease left: stationary to working precision.
      res.converged = pg_norm <= 1e-6 * std::max(1.0, std::abs(f));
      break;
    }

    const Vec2 s{x_new[0] - x[0], x_new[1] - x[1]};
    Vec2 yv{g_new[0] - g[0], g_new[1] - g[1]};
    for (int i = 0; i < 2; ++i) {
      if (active[i]) yv[i] = 0.0;
    }
    const double sy = s[0] * yv[0] + s[1] * yv[1];
    if (sy > 1e-16 * std::sqrt((s[0] * s[0] + s[1] * s[1]) * (yv[0] * yv[0] + yv[1] * yv[1]))) {
      if (fresh) {
        const double yy = yv[0] * yv[0] + yv[1] * yv[1];
        H = {sy / yy, 0.0, 0.0, sy / yy};
        fresh = false;
      }
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      const double rho = 1.0 / sy;
      const Vec2 Hy{H[0] * yv[0] + H[1] * yv[1], H[2] * yv[0] + H[3] * yv[1]};
      const double yHy = yv[0] * Hy[0] + yv[1] * Hy[1];
      std::array<double, 4> Hn{};
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          Hn[2 * i + j] = H[2 * i + j] - rho * (Hy[i] * s[j] + s[i] * Hy[j]) +
                          (rho * rho * yHy + rho) * s[i] * s[j];
        }
      }
      H = Hn;
    }
    x = x_new;
    f = f_new;
    g = g_new;
    res.iterations = it + 1;
  }
  res.params = params_of(x);
  res.nll = f;
  return res;
}

// ---- Fisher information ----

/// Expected information of one Bernoulli interval observation with exponent e.
inline FisherMatrix interval_fim(const RecordExponent& e) {
  if (!(e.m > 0.0) || !std::isfinite(e.m)) return {};
  const double w = 1.0 / std::expm1(e.m);  // R / (1 - R)
  if (!(w > 0.0) || !std::isfinite(e.grad[0]) || !std::isfinite(e.grad[1])) return {};
  return FisherMatrix::outer(e.grad, w);
}

/// Information from running `test` on `state` at age state.t_age + lead_time.
inline FisherMatrix candidate_fim(const CoverageConfig& cfg, const PowerLawParams& p,
                                  DiagnosticTest test, const SystemState& state,
                                  double lead_time) {
  const double t_age = state.t_age + lead_time;
  return interval_fim(detail::exponent_of(cfg, p, pt_vector(cfg, test), t_age, state.agelt));
}

/// Summed expected information of every labeled interval.
template <class Records>
FisherMatrix dataset_fim(const Records& data, const CoverageConfig& cfg, const PowerLawParams& p) {
  FisherMatrix total;
  for (const TestRecord& r : data) total += interval_fim(record_exponent(cfg, p, r));
  return total;
}

}  // namespace partial_al
