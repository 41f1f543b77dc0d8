// Learning-curve metrics: ATEER, parameter MSE, trapezoidal AUC and average
// ranks of acquisition functions across configurations.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "partial_al/model_core.hpp"

namespace partial_al {

namespace detail {

// integral_0^t alpha tau^k d tau
inline double cumulative_integral(double alpha, double k, double t) {
  if (t <= 0.0) return 0.0;
  return std::exp(std::log(alpha) + (k + 1.0) * std::log(t)) / (k + 1.0);
}

inline double abs_diff_integral(double a1, double k1, double a0, double k0, double from,
                                double to) {
  return std::abs((cumulative_integral(a1, k1, to) - cumulative_integral(a1, k1, from)) -
                  (cumulative_integral(a0, k0, to) - cumulative_integral(a0, k0, from)));
}

}  // namespace detail

/// Integral over [0, T] of |H_est(tau) - H_true(tau)|, in closed form.
/// The two power curves cross at most once, at tau* = (a/a_hat)^(1/(k_hat-k)).
inline double ateer(const PowerLawParams& est, const PowerLawParams& truth, double horizon = 100.0) {
  if (!(horizon > 0.0)) throw std::invalid_argument("ateer: horizon must be > 0");
  const double ah = est.alpha(), kh = est.k(), a = truth.alpha(), k = truth.k();
  if (kh == k) return std::abs(ah - a) * detail::cumulative_integral(1.0, k, horizon);
  const double log_cross = (std::log(a) - std::log(ah)) / (kh - k);
  const double cross = std::exp(log_cross);
  if (cross > 0.0 && cross < horizon) {
    return detail::abs_diff_integral(ah, kh, a, k, 0.0, cross) +
           detail::abs_diff_integral(ah, kh, a, k, cross, horizon);
  }
  return detail::abs_diff_integral(ah, kh, a, k, 0.0, horizon);
}

/// Mean of the squared component errors over (alpha, k).
inline double mse(const PowerLawParams& est, const PowerLawParams& truth) {
  const double da = est.alpha() - truth.alpha();
  const double dk = est.k() - truth.k();
  return 0.5 * (da * da + dk * dk);
}

/// (cycle index, metric value) points with strictly increasing indices.
class LearningCurve {
 public:
  LearningCurve() = default;

  /// Values at cycle indices 1..n.
  static LearningCurve from_values(const std::vector<double>& values) {
    LearningCurve c;
    for (std::size_t i = 0; i < values.size(); ++i) c.push(static_cast<double>(i + 1), values[i]);
    return c;
  }

  void push(double index, double value) {
    if (!points_.empty() && !(index > points_.back().first)) {
      throw std::invalid_argument("LearningCurve: indices must be strictly increasing");
    }
    points_.emplace_back(index, value);
  }

  const std::vector<std::pair<double, double>>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  std::vector<std::pair<double, double>> points_;
};

/// Trapezoidal area under the curve.
inline double auc(const LearningCurve& curve) {
  const auto& p = curve.points();
  if (p.size() < 2) throw std::invalid_argument("auc: need at least two points");
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    area += 0.5 * (p[i].second + p[i - 1].second) * (p[i].first - p[i - 1].first);
  }
  return area;
}

/// rows[config][af] = metric (lower is better). Ranks within each configuration
/// ascending with midranks for ties; returns each AF's mean rank.
inline std::map<std::string, double> average_ranks(
    const std::map<std::string, std::map<std::string, double>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::string> afs;
  for (const auto& [af, v] : rows.begin()->second) afs.push_back(af);
  std::map<std::string, double> sum;
  for (const auto& af : afs) sum[af] = 0.0;
  for (const auto& [config, row] : rows) {
    if (row.size() != afs.size()) {
      throw std::invalid_argument("average_ranks: configuration '" + config +
                                  "' does not have one value per acquisition function");
    }
    std::vector<std::pair<double, std::string>> vals;
    for (const auto& af : afs) {
      auto it = row.find(af);
      if (it == row.end()) {
        throw std::invalid_argument("average_ranks: configuration '" + config + "' is missing '" +
                                    af + "'");
      }
      vals.emplace_back(it->second, af);
    }
    std::sort(vals.begin(), vals.end());
    for (std::size_t i = 0; i < vals.size();) {
      std::size_t j = i;
      while (j < vals.size() && vals[j].first == vals[i].first) ++j;
      const double midrank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t t = i; t < j; ++t) sum[vals[t].second] += midrank;
      i = j;
    }
  }
  for (auto& [af, s] : sum) s /= static_cast<double>(rows.size());
  return sum;
}

/// Per-configuration ranks (same convention as average_ranks).
inline std::map<std::string, double> ranks_within(const std::map<std::string, double>& row) {
  return average_ranks({{"_", row}});
}

}  // namespace partial_al
