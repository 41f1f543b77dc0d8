// Acquisition functions over (system, diagnostic test) candidates, the relaxed
// A-optimal design solver and budgeted rounding.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "partial_al/coverage.hpp"
#include "partial_al/inference.hpp"
#include "partial_al/rng.hpp"

namespace partial_al {

/// One selectable (system, test) pair together with what the scoring rules see.
struct Candidate {
  int system_id = 0;
  DiagnosticTest test = DiagnosticTest::Proof;
  double cost = 1.0;
  FisherMatrix fim;
  PTVector pt = PTVector::none();
  double t_age = 0.0;
  std::array<double, 3> agelt{};
};

struct Selection {
  int system_id = 0;
  DiagnosticTest test = DiagnosticTest::Proof;
  double cost = 0.0;

  friend bool operator==(const Selection&, const Selection&) = default;
};

/// q is aligned with the candidate list handed to the acquisition function.
struct SelectionPlan {
  std::vector<double> q;
  std::vector<Selection> selected;
  double spent = 0.0;
};

/// Slack on accumulated cost comparisons.
inline constexpr double kBudgetSlack = 1e-9;

enum class AcquisitionKind { Random, Oldest, MostLikelyFailure, Entropy, FimAOptimal };

inline constexpr std::array<AcquisitionKind, 5> kAllAcquisitions{
    AcquisitionKind::Random, AcquisitionKind::Oldest, AcquisitionKind::MostLikelyFailure,
    AcquisitionKind::Entropy, AcquisitionKind::FimAOptimal};

inline std::string_view to_string(AcquisitionKind a) {
  switch (a) {
    case AcquisitionKind::Random: return "random";
    case AcquisitionKind::Oldest: return "oldest";
    case AcquisitionKind::MostLikelyFailure: return "likely_failure";
    case AcquisitionKind::Entropy: return "entropy";
    case AcquisitionKind::FimAOptimal: return "fim";
  }
  return "?";
}

inline AcquisitionKind parse_acquisition(std::string_view s) {
  for (auto a : kAllAcquisitions) {
    if (s == to_string(a)) return a;
  }
  if (s == "ours" || s == "fim_aoptimal") return AcquisitionKind::FimAOptimal;
  if (s == "most_likely_failure" || s == "likely-failure") return AcquisitionKind::MostLikelyFailure;
  throw std::invalid_argument("unknown acquisition function '" + std::string(s) + "'");
}

namespace detail {

// Lexicographic (system_id, test) order used to break ties.
inline bool lex_less(const Candidate& a, const Candidate& b) {
  if (a.system_id != b.system_id) return a.system_id < b.system_id;
  return static_cast<int>(a.test) < static_cast<int>(b.test);
}

/// Walks `order`, accepting the first affordable candidate of each system.
inline SelectionPlan greedy_accept(const std::vector<Candidate>& cands,
                                   const std::vector<std::size_t>& order, double budget) {
  SelectionPlan plan;
  plan.q.assign(cands.size(), 0.0);
  std::map<int, bool> taken;
  for (std::size_t idx : order) {
    const auto& c = cands[idx];
    if (taken[c.system_id]) continue;
    if (plan.spent + c.cost > budget + kBudgetSlack) continue;
    taken[c.system_id] = true;
    plan.spent += c.cost;
    plan.q[idx] = 1.0;
    plan.selected.push_back({c.system_id, c.test, c.cost});
  }
  return plan;
}

/// Order by score (descending when `high_first`), ties lexicographic.
inline std::vector<std::size_t> rank_by(const std::vector<Candidate>& cands,
                                        const std::vector<double>& score, bool high_first) {
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return high_first ? score[a] > score[b] : score[a] < score[b];
    return lex_less(cands[a], cands[b]);
  });
  return order;
}

inline void check_budget(double budget) {
  if (!(budget >= 0.0)) throw std::invalid_argument("acquisition: budget must be >= 0");
}

}  // namespace detail

// ---- baseline acquisition functions ----

inline SelectionPlan af_random(const std::vector<Candidate>& cands, double budget, Stream& rng) {
  detail::check_budget(budget);
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  return detail::greedy_accept(cands, order, budget);
}

/// Smallest last-test age among the subsystems the candidate covers.
inline double oldest_covered_age(const Candidate& c) {
  double age = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kNumSubsystems; ++i) {
    if (c.pt[i] == 1) age = std::min(age, c.agelt[i]);
  }
  return age;
}

inline SelectionPlan af_oldest(const std::vector<Candidate>& cands, double budget) {
  detail::check_budget(budget);
  std::vector<double> score;
  score.reserve(cands.size());
  for (const auto& c : cands) score.push_back(oldest_covered_age(c));
  return detail::greedy_accept(cands, detail::rank_by(cands, score, false), budget);
}

inline double candidate_reliability(const Candidate& c, const CoverageConfig& cfg,
                                    const PowerLawParams& est) {
  return reliability_partial(cfg, est, c.pt, c.t_age, c.agelt[0], c.agelt[1], c.agelt[2]);
}

inline SelectionPlan af_most_likely_failure(const std::vector<Candidate>& cands, double budget,
                                            const CoverageConfig& cfg, const PowerLawParams& est) {
  detail::check_budget(budget);
  std::vector<double> score;
  score.reserve(cands.size());
  for (const auto& c : cands) score.push_back(1.0 - candidate_reliability(c, cfg, est));
  return detail::greedy_accept(cands, detail::rank_by(cands, score, true), budget);
}

/// Binary entropy in nats with 0 ln 0 = 0.
inline double binary_entropy(double r) {
  if (r <= 0.0 || r >= 1.0) return 0.0;
  return -r * std::log(r) - (1.0 - r) * std::log1p(-r);
}

inline SelectionPlan af_entropy(const std::vector<Candidate>& cands, double budget,
                                const CoverageConfig& cfg, const PowerLawParams& est) {
  detail::check_budget(budget);
  std::vector<double> score;
  score.reserve(cands.size());
  for (const auto& c : cands) score.push_back(binary_entropy(candidate_reliability(c, cfg, est)));
  return detail::greedy_accept(cands, detail::rank_by(cands, score, true), budget);
}

// ---- relaxed A-optimal design ----

struct SolverOptions {
  double rel_tol = 1e-8;
  int max_iterations = 5000;
};

struct RelaxedSolution {
  std::vector<double> q;
  double objective = 0.0;
  double ridge = 0.0;
  /// Objective after every accepted iteration, starting with q = 0.
  std::vector<double> history;
  bool converged = false;
  int iterations = 0;
};

/// Ridge added to the design matrix: 1e-6 (1 + tr(base)/d).
inline double design_ridge(const FisherMatrix& base) {
  return 1e-6 * (1.0 + base.trace() / FisherMatrix::kDim);
}

inline FisherMatrix design_matrix(const std::vector<double>& q, const std::vector<Candidate>& cands,
                                  const FisherMatrix& base, double ridge) {
  FisherMatrix m = base + FisherMatrix::identity(ridge);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (q[i] != 0.0) m += q[i] * cands[i].fim;
  }
  return m;
}

/// tr(M^-1) for a symmetric 2x2 M; +inf when M is not positive definite.
inline double trace_inverse(const FisherMatrix& m) {
  const double det = m.det();
  if (!(det > 0.0) || !(m.aa > 0.0)) return std::numeric_limits<double>::infinity();
  return m.trace() / det;
}

inline double aoptimal_objective(const std::vector<double>& q, const std::vector<Candidate>& cands,
                                 const FisherMatrix& base, double ridge) {
  return trace_inverse(design_matrix(q, cands, base, ridge));
}

namespace detail {

// Euclidean projection onto {0 <= q <= 1, sum q <= 1} for one system's block.
inline void project_block(const double* y, double* out, std::size_t n) {
  auto mass = [&](double nu) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::clamp(y[i] - nu, 0.0, 1.0);
    return s;
  };
  double nu = 0.0;
  if (mass(0.0) > 1.0) {
    // mass(nu) is piecewise linear and decreasing; walk its breakpoints.
    std::vector<double> bp;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] > 0.0) bp.push_back(y[i]);
      if (y[i] - 1.0 > 0.0) bp.push_back(y[i] - 1.0);
    }
    bp.push_back(0.0);
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
    double lo = 0.0, mlo = mass(0.0);
    for (double b : bp) {
      if (b <= lo) continue;
      const double mb = mass(b);
      if (mb <= 1.0) {
        nu = (mlo == mb) ? b : lo + (mlo - 1.0) * (b - lo) / (mlo - mb);
        break;
      }
      lo = b;
      mlo = mb;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(y[i] - nu, 0.0, 1.0);
}

/// Projection onto the relaxed feasible set: per-system capped simplices plus
/// the shared budget sum w q <= B, handled by a multiplier on the budget.
class FeasibleSet {
 public:
  FeasibleSet(const std::vector<Candidate>& cands, double budget) : budget_(budget) {
    cost_.reserve(cands.size());
    std::map<int, std::vector<std::size_t>> by_system;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (!(cands[i].cost > 0.0)) throw std::invalid_argument("candidate cost must be > 0");
      cost_.push_back(cands[i].cost);
      by_system[cands[i].system_id].push_back(i);
    }
    for (auto& [id, idx] : by_system) blocks_.push_back(std::move(idx));
  }

  void project(const std::vector<double>& z, std::vector<double>& out) const {
    out.resize(z.size());
    project_at(z, 0.0, out);
    if (spent(out) <= budget_) return;
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) hi = std::max(hi, z[i] / cost_[i]);
    // spent(mu) - B changes sign on [lo, hi]; regula falsi (Illinois) with
    // bisection fallback.
    std::vector<double> tmp(z.size());
    double flo = spent(out) - budget_;
    project_at(z, hi, tmp);
    double fhi = spent(tmp) - budget_;
    int side = 0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
      double mu = (flo - fhi != 0.0) ? hi - fhi * (hi - lo) / (fhi - flo) : 0.5 * (lo + hi);
      if (!(mu > lo && mu < hi)) mu = 0.5 * (lo + hi);
      project_at(z, mu, tmp);
      const double fm = spent(tmp) - budget_;
      if (std::abs(fm) <= 1e-13 * std::max(1.0, budget_) && fm <= 0.0) {
        hi = mu;
        fhi = fm;
        break;
      }
      if (fm > 0.0) {
        lo = mu;
        flo = fm;
        if (side == -1) fhi *= 0.5;
        side = -1;
      } else {
        hi = mu;
        fhi = fm;
        if (side == 1) flo *= 0.5;
        side = 1;
      }
    }
    project_at(z, hi, out);
  }

 private:
  void project_at(const std::vector<double>& z, double mu, std::vector<double>& out) const {
    double y[8];
    double r[8];
    for (const auto& idx : blocks_) {
      if (idx.size() > 8) throw std::invalid_argument("at most 8 tests per system supported");
      for (std::size_t j = 0; j < idx.size(); ++j) y[j] = z[idx[j]] - mu * cost_[idx[j]];
      project_block(y, r, idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = r[j];
    }
  }

  double spent(const std::vector<double>& q) const {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += cost_[i] * q[i];
    return s;
  }

  double budget_;
  std::vector<double> cost_;
  std::vector<std::vector<std::size_t>> blocks_;
};

}  // namespace detail

/// Minimizes tr((base + ridge I + sum q_c A_c)^-1) over the relaxed selection
/// polytope by projected gradient with Barzilai-Borwein steps and a monotone
/// Armijo line search, starting from q = 0.
inline RelaxedSolution solve_relaxed_aoptimal(const std::vector<Candidate>& cands, double budget,
                                              const FisherMatrix& base,
                                              const SolverOptions& opt = {}) {
  detail::check_budget(budget);
  const std::size_t n = cands.size();
  RelaxedSolution sol;
  sol.ridge = design_ridge(base);
  sol.q.assign(n, 0.0);
  detail::FeasibleSet feasible(cands, budget);

  auto gradient = [&](const std::vector<double>& q, std::vector<double>& g) {
    const FisherMatrix m = design_matrix(q, cands, base, sol.ridge);
    const double det = m.det();
    // N = M^-2
    const double ia = m.kk / det, ib = -m.ak / det, ik = m.aa / det;
    const double na = ia * ia + ib * ib, nb = ia * ib + ib * ik, nk = ib * ib + ik * ik;
    g.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = cands[i].fim;
      g[i] = -(na * a.aa + 2.0 * nb * a.ak + nk * a.kk);
    }
  };

  double f = aoptimal_objective(sol.q, cands, base, sol.ridge);
  sol.history.push_back(f);
  if (n == 0 || budget == 0.0) {
    sol.objective = f;
    sol.converged = true;
    return sol;
  }

  std::vector<double> g, g_prev, q_prev, z(n), trial(n), x(n);
  auto gmax_of = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  // First-order decrease predicted by a projected step of length 1/|g|_inf;
  // small relative to f means q is stationary regardless of the BB history.
  auto stationary = [&]() {
    const double gm = gmax_of(g);
    if (gm == 0.0) return true;
    for (std::size_t i = 0; i < n; ++i) z[i] = sol.q[i] - g[i] / gm;
    feasible.project(z, trial);
    double gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) gd += g[i] * (trial[i] - sol.q[i]);
    return -gd <= opt.rel_tol * std::abs(f);
  };
  gradient(sol.q, g);
  if (gmax_of(g) == 0.0) {
    sol.objective = f;
    sol.converged = true;
    return sol;
  }
  double step = 1.0 / gmax_of(g);

  for (int it = 0; it < opt.max_iterations; ++it) {
    sol.iterations = it + 1;
    for (std::size_t i = 0; i < n; ++i) z[i] = sol.q[i] - step * g[i];
    feasible.project(z, trial);
    double gd = 0.0, dmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = trial[i] - sol.q[i];
      gd += g[i] * d;
      dmax = std::max(dmax, std::abs(d));
    }
    double t = 1.0;
    double f_new = f;
    bool accepted = false;
    if (dmax >= 1e-15 && gd < 0.0) {
      for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) x[i] = sol.q[i] + t * (trial[i] - sol.q[i]);
        f_new = aoptimal_objective(x, cands, base, sol.ridge);
        if (f_new <= f + 1e-4 * t * gd) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      if (stationary()) {
        sol.converged = true;
        break;
      }
      const double reset = 1.0 / gmax_of(g);
      if (step == reset) break;
      step = reset;
      continue;
    }
    q_prev = sol.q;
    g_prev = g;
    sol.q = x;
    const double rel = (f - f_new) / std::max(std::abs(f), std::numeric_limits<double>::min());
    f = f_new;
    sol.history.push_back(f);
    gradient(sol.q, g);
    if (rel < opt.rel_tol && stationary()) {
      sol.converged = true;
      break;
    }
    // Barzilai-Borwein step for the next projection
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = sol.q[i] - q_prev[i];
      ss += s * s;
      sy += s * (g[i] - g_prev[i]);
    }
    step = (sy > 0.0) ? ss / sy : 2.0 * step;
  }
  sol.objective = f;
  return sol;
}

/// Per system keeps the test with the largest q, then accepts systems by
/// descending q while the budget allows. Ties resolve lexicographically.
inline SelectionPlan round_selection(const std::vector<double>& q,
                                     const std::vector<Candidate>& cands, double budget) {
  detail::check_budget(budget);
  if (q.size() != cands.size()) throw std::invalid_argument("round_selection: size mismatch");
  std::map<int, std::size_t> best;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    auto [it, inserted] = best.try_emplace(cands[i].system_id, i);
    if (inserted) continue;
    const std::size_t j = it->second;
    if (q[i] > q[j] || (q[i] == q[j] && detail::lex_less(cands[i], cands[j]))) it->second = i;
  }
  std::vector<std::size_t> order;
  order.reserve(best.size());
  for (const auto& [id, i] : best) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (q[a] != q[b]) return q[a] > q[b];
    return detail::lex_less(cands[a], cands[b]);
  });
  SelectionPlan plan = detail::greedy_accept(cands, order, budget);
  plan.q = q;
  return plan;
}

struct AOptimalPlan {
  SelectionPlan plan;
  RelaxedSolution relaxed;
};

inline AOptimalPlan af_fim_aoptimal(const std::vector<Candidate>& cands, double budget,
                                    const FisherMatrix& base, const SolverOptions& opt = {}) {
  AOptimalPlan out;
  out.relaxed = solve_relaxed_aoptimal(cands, budget, base, opt);
  out.plan = round_selection(out.relaxed.q, cands, budget);
  return out;
}

}  // namespace partial_al
