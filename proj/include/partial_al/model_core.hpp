// Power-law NHPP primitives: intensity, cumulative intensity, interval
// survival and conditional failure-age sampling.
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace partial_al {

/// Parameters (alpha, k) of the power-law intensity h(t) = alpha k t^(k-1).
/// Both components are strictly positive.
class PowerLawParams {
 public:
  PowerLawParams(double alpha, double k) : alpha_(alpha), k_(k) {
    if (!(alpha > 0.0) || !(k > 0.0) || !std::isfinite(alpha) || !std::isfinite(k)) {
      throw std::invalid_argument("PowerLawParams: alpha and k must be finite and > 0 (got alpha=" +
                                  std::to_string(alpha) + ", k=" + std::to_string(k) + ")");
    }
  }

  /// Builds from a characteristic rate lambda with alpha = lambda^k.
  static PowerLawParams from_rate(double lambda, double k) {
    if (!(lambda > 0.0)) throw std::invalid_argument("PowerLawParams: lambda must be > 0");
    return {alpha_from_rate(lambda, k), k};
  }

  static double alpha_from_rate(double lambda, double k) { return std::pow(lambda, k); }

  double alpha() const noexcept { return alpha_; }
  double k() const noexcept { return k_; }

  friend bool operator==(const PowerLawParams&, const PowerLawParams&) = default;

 private:
  double alpha_;
  double k_;
};

/// h(t) = alpha k t^(k-1). Throws std::domain_error at t = 0 when k < 1.
inline double intensity(const PowerLawParams& p, double t) {
  if (t < 0.0) throw std::domain_error("intensity: t must be >= 0");
  if (t == 0.0) {
    if (p.k() < 1.0) throw std::domain_error("intensity: singular at t = 0 for k < 1");
    return p.k() == 1.0 ? p.alpha() : 0.0;
  }
  return p.alpha() * p.k() * std::pow(t, p.k() - 1.0);
}

/// H(t) = alpha t^k, the expected event count on [0, t].
inline double cumulative_intensity(const PowerLawParams& p, double t) {
  if (t < 0.0) throw std::domain_error("cumulative_intensity: t must be >= 0");
  return p.alpha() * std::pow(t, p.k());
}

/// Probability of no event in [t_from, t_to].
inline double conditional_survival(const PowerLawParams& p, double t_from, double t_to) {
  if (t_from < 0.0 || t_to < t_from) {
    throw std::invalid_argument("conditional_survival: requires 0 <= t_from <= t_to");
  }
  return std::exp(-p.alpha() * (std::pow(t_to, p.k()) - std::pow(t_from, p.k())));
}

/// Inverse-CDF draw of the next event age given no event up to t_prev.
/// `alpha` may be zero (a subsystem carrying no intensity), which yields +inf.
inline double sample_next_failure_age(double alpha, double k, double t_prev, double u) {
  if (alpha <= 0.0) return std::numeric_limits<double>::infinity();
  const double base = std::log1p(-u) / (-alpha) + std::pow(t_prev, k);
  const double t = std::pow(base, 1.0 / k);
  // pow round-off can land a hair below t_prev for u ~ 0
  return t < t_prev ? t_prev : t;
}

inline double sample_next_failure_age(const PowerLawParams& p, double t_prev, double u) {
  return sample_next_failure_age(p.alpha(), p.k(), t_prev, u);
}

}  // namespace partial_al
