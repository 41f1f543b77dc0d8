// Ground-truth maintenance world: latent subsystem failure ages, detection,
// minimal-repair updates and the active-learning loop over maintenance cycles.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "partial_al/acquisition.hpp"
#include "partial_al/coverage.hpp"
#include "partial_al/dataset.hpp"
#include "partial_al/inference.hpp"
#include "partial_al/metrics.hpp"
#include "partial_al/model_core.hpp"
#include "partial_al/rng.hpp"
#include "partial_al/system_state.hpp"

namespace partial_al {

/// Cost of each diagnostic test, indexed by DiagnosticTest.
using TestCosts = std::array<double, 3>;

inline constexpr TestCosts kUnitCosts{1.0, 1.0, 1.0};

struct WorldConfig {
  PowerLawParams true_params{PowerLawParams::alpha_from_rate(0.1, 1.3), 1.3};
  CoverageConfig coverage{CoverageMode::Subset, 0.2, 0.6};
  int systems = 50;
  double delta_t = 5.0;
  double budget = 5.0;
  TestCosts costs = kUnitCosts;
  int cycles = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (systems < 1) throw std::invalid_argument("WorldConfig: need at least one system");
    if (cycles < 0) throw std::invalid_argument("WorldConfig: cycles must be >= 0");
    if (!(delta_t > 0.0)) throw std::invalid_argument("WorldConfig: delta_t must be > 0");
    if (!(budget >= 0.0)) throw std::invalid_argument("WorldConfig: budget must be >= 0");
    for (double c : costs) {
      if (!(c > 0.0)) throw std::invalid_argument("WorldConfig: test costs must be > 0");
    }
  }
};

class World {
 public:
  explicit World(const WorldConfig& cfg)
      : cfg_(cfg), alphas_(subsystem_alphas(cfg.coverage, cfg.true_params.alpha())) {
    cfg_.validate();
    states_.resize(static_cast<std::size_t>(cfg_.systems));
    streams_.reserve(states_.size() * kNumSubsystems);
    for (std::size_t j = 0; j < states_.size(); ++j) {
      states_[j].system_id = static_cast<int>(j);
      for (std::size_t i = 0; i < kNumSubsystems; ++i) {
        streams_.emplace_back(cfg_.seed, std::initializer_list<std::uint64_t>{kSubsystemStream, j, i});
      }
    }
    for (auto& s : states_) {
      for (std::size_t i = 0; i < kNumSubsystems; ++i) redraw(s, i, 0.0);
    }
  }

  const WorldConfig& config() const noexcept { return cfg_; }
  const std::vector<SystemState>& states() const noexcept { return states_; }
  const Dataset& dataset() const noexcept { return dataset_; }
  const SubsystemAlphas& subsystem_alpha() const noexcept { return alphas_; }
  int cycle() const noexcept { return cycle_; }

  /// Runs the selected tests, appends their records, repairs covered
  /// subsystems (fresh failure ages conditional on survival to the test age),
  /// then ages every system by delta_t. Returns the appended records.
  std::vector<TestRecord> maintenance_update(const std::vector<Selection>& selection);

 private:
  void redraw(SystemState& s, std::size_t i, double from_age) {
    auto& stream = streams_[static_cast<std::size_t>(s.system_id) * kNumSubsystems + i];
    s.gamma[i] = sample_next_failure_age(alphas_[i], cfg_.true_params.k(), from_age, stream.uniform());
    s.gamma_origin[i] = from_age;
  }

  WorldConfig cfg_;
  SubsystemAlphas alphas_;
  std::vector<SystemState> states_;
  std::vector<Stream> streams_;
  Dataset dataset_;
  int cycle_ = 0;
};

inline World init_world(const WorldConfig& cfg) { return World{cfg}; }

/// y = 1 iff a covered subsystem's latent failure age has been reached.
inline int detect_failure(const SystemState& s, DiagnosticTest test, const CoverageConfig& cov) {
  for (std::size_t i : covered_subsystems(cov, test)) {
    if (s.gamma[i] <= s.t_age) return 1;
  }
  return 0;
}

inline std::vector<TestRecord> World::maintenance_update(const std::vector<Selection>& selection) {
  ++cycle_;
  std::vector<char> seen(states_.size(), 0);
  std::vector<TestRecord> out;
  out.reserve(selection.size());
  for (const auto& sel : selection) {
    if (sel.system_id < 0 || sel.system_id >= cfg_.systems) {
      throw std::invalid_argument("maintenance_update: unknown system " + std::to_string(sel.system_id));
    }
    if (seen[static_cast<std::size_t>(sel.system_id)]++) {
      throw std::invalid_argument("maintenance_update: system selected twice");
    }
    auto& s = states_[static_cast<std::size_t>(sel.system_id)];
    TestRecord r;
    r.y = detect_failure(s, sel.test, cfg_.coverage);
    r.t_age = s.t_age;
    r.agelt = s.agelt;
    r.pt = pt_vector(cfg_.coverage, sel.test);
    r.system_id = s.system_id;
    r.cycle = cycle_;
    dataset_.append(r);
    out.push_back(r);
    for (std::size_t i : covered_subsystems(cfg_.coverage, sel.test)) {
      s.agelt[i] = s.t_age;
      redraw(s, i, s.t_age);
    }
  }
  for (auto& s : states_) s.t_age += cfg_.delta_t;
  return out;
}

/// Every (system, test) pair with its cost and the test-time state. The FIM of
/// each pair is filled at `estimate` when `with_fim` is set.
inline std::vector<Candidate> build_candidates(const World& world, const PowerLawParams& estimate,
                                               bool with_fim) {
  const auto& cfg = world.config();
  std::vector<Candidate> out;
  out.reserve(world.states().size() * kAllTests.size());
  for (const auto& s : world.states()) {
    for (auto t : kAllTests) {
      Candidate c;
      c.system_id = s.system_id;
      c.test = t;
      c.cost = cfg.costs[static_cast<std::size_t>(t)];
      c.pt = pt_vector(cfg.coverage, t);
      c.t_age = s.t_age;
      c.agelt = s.agelt;
      if (with_fim) c.fim = candidate_fim(cfg.coverage, estimate, t, s, 0.0);
      out.push_back(c);
    }
  }
  return out;
}

// ---- the active-learning loop ----

struct CycleResult {
  int cycle = 0;
  PowerLawParams estimate{1.0, 1.0};
  double ateer = 0.0;
  double mse = 0.0;
  double sq_err_alpha = 0.0;
  double sq_err_k = 0.0;
  std::size_t dataset_size = 0;
  bool fit_converged = true;
  std::array<int, 3> tests_run{};
};

struct SelectionLogRow {
  int cycle = 0;
  int system_id = 0;
  DiagnosticTest test = DiagnosticTest::Proof;
  int y = 0;
  double cost = 0.0;
};

struct Trace {
  std::vector<CycleResult> cycles;
  std::vector<SelectionLogRow> selections;

  std::vector<double> ateer_curve() const {
    std::vector<double> v;
    for (const auto& c : cycles) v.push_back(c.ateer);
    return v;
  }
  std::vector<double> mse_curve() const {
    std::vector<double> v;
    for (const auto& c : cycles) v.push_back(c.mse);
    return v;
  }
};

struct ExperimentOptions {
  PowerLawParams init{0.1, 1.0};
  double ateer_horizon = 100.0;
  FitOptions fit;
  SolverOptions solver;
};

/// Chooses this cycle's tests for `af` given the current estimate.
inline std::vector<Selection> select_tests(const World& world, AcquisitionKind af,
                                           const PowerLawParams& estimate, Stream& selection_rng,
                                           const ExperimentOptions& opt) {
  const auto& cfg = world.config();
  const bool fim = af == AcquisitionKind::FimAOptimal;
  const auto cands = build_candidates(world, estimate, fim);
  switch (af) {
    case AcquisitionKind::Random: return af_random(cands, cfg.budget, selection_rng).selected;
    case AcquisitionKind::Oldest: return af_oldest(cands, cfg.budget).selected;
    case AcquisitionKind::MostLikelyFailure:
      return af_most_likely_failure(cands, cfg.budget, cfg.coverage, estimate).selected;
    case AcquisitionKind::Entropy:
      return af_entropy(cands, cfg.budget, cfg.coverage, estimate).selected;
    case AcquisitionKind::FimAOptimal: {
      const FisherMatrix base = dataset_fim(world.dataset(), cfg.coverage, estimate);
      return af_fim_aoptimal(cands, cfg.budget, base, opt.solver).plan.selected;
    }
  }
  throw std::invalid_argument("select_tests: unknown acquisition function");
}

/// Runs cfg.cycles maintenance cycles: select, test and repair, refit.
/// Deterministic given (cfg.seed, af).
inline Trace run_experiment(const WorldConfig& cfg, AcquisitionKind af,
                            const ExperimentOptions& opt = {}) {
  World world{cfg};
  Stream selection_rng(cfg.seed, {kSelectionStream});
  PowerLawParams estimate = opt.init;
  Trace trace;
  for (int c = 1; c <= cfg.cycles; ++c) {
    const auto chosen = select_tests(world, af, estimate, selection_rng, opt);
    const auto records = world.maintenance_update(chosen);
    CycleResult res;
    res.cycle = c;
    for (std::size_t i = 0; i < records.size(); ++i) {
      trace.selections.push_back(
          {c, chosen[i].system_id, chosen[i].test, records[i].y, chosen[i].cost});
      ++res.tests_run[static_cast<std::size_t>(chosen[i].test)];
    }
    auto fit = fit_mle(world.dataset(), cfg.coverage, estimate, opt.fit);
    // A warm start left on the box boundary can pin later fits there; a
    // second start from the default initial point guards against it.
    if (!(estimate == opt.init)) {
      auto cold = fit_mle(world.dataset(), cfg.coverage, opt.init, opt.fit);
      if (cold.nll < fit.nll) fit = cold;
    }
    estimate = fit.params;
    res.estimate = estimate;
    res.fit_converged = fit.converged;
    res.ateer = ateer(estimate, cfg.true_params, opt.ateer_horizon);
    res.mse = mse(estimate, cfg.true_params);
    res.sq_err_alpha = std::pow(estimate.alpha() - cfg.true_params.alpha(), 2);
    res.sq_err_k = std::pow(estimate.k() - cfg.true_params.k(), 2);
    res.dataset_size = world.dataset().size();
    trace.cycles.push_back(res);
  }
  return trace;
}

}  // namespace partial_al
