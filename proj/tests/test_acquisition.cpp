#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "partial_al/acquisition.hpp"

using namespace partial_al;
using Catch::Approx;

namespace {

const CoverageConfig kOverlap{CoverageMode::Overlap, 0.3, 0.8};

// Every (system, test) pair for `systems` fresh systems at age t.
std::vector<Candidate> fresh_candidates(int systems, double t, const CoverageConfig& cfg = kOverlap) {
  std::vector<Candidate> out;
  for (int j = 0; j < systems; ++j) {
    for (auto test : kAllTests) {
      Candidate c;
      c.system_id = j;
      c.test = test;
      c.pt = pt_vector(cfg, test);
      c.t_age = t;
      out.push_back(c);
    }
  }
  return out;
}

// Random rank-1 information per candidate, random costs.
std::vector<Candidate> random_design(int systems, std::mt19937_64& g, bool unit_costs) {
  std::uniform_real_distribution<double> U(-1.0, 1.0), W(0.05, 2.0), C(0.5, 2.0);
  auto cands = fresh_candidates(systems, 5.0);
  for (auto& c : cands) {
    c.fim = FisherMatrix::outer({U(g), U(g)}, W(g));
    c.cost = unit_costs ? 1.0 : C(g);
  }
  return cands;
}

FisherMatrix random_base(std::mt19937_64& g) {
  std::uniform_real_distribution<double> U(-1.0, 1.0), W(0.0, 0.5);
  return FisherMatrix::outer({U(g), U(g)}, W(g)) + FisherMatrix::outer({U(g), U(g)}, W(g));
}

void check_plan(const SelectionPlan& plan, double budget) {
  std::set<int> seen;
  double spent = 0.0;
  for (const auto& s : plan.selected) {
    CHECK(seen.insert(s.system_id).second);
    spent += s.cost;
  }
  CHECK(spent <= budget + kBudgetSlack);
  CHECK(plan.spent == Approx(spent));
}

// Brute-force best over all integer selections (at most one test per system).
double best_integer_objective(const std::vector<Candidate>& cands, int systems, double budget,
                              const FisherMatrix& base, double ridge) {
  double best = INFINITY;
  int combos = 1;
  for (int j = 0; j < systems; ++j) combos *= 4;
  for (int code = 0; code < combos; ++code) {
    std::vector<double> q(cands.size(), 0.0);
    double cost = 0.0;
    int rest = code;
    for (int j = 0; j < systems; ++j, rest /= 4) {
      const int choice = rest % 4;
      if (choice == 3) continue;
      const std::size_t idx = static_cast<std::size_t>(3 * j + choice);
      q[idx] = 1.0;
      cost += cands[idx].cost;
    }
    if (cost > budget + kBudgetSlack) continue;
    best = std::min(best, aoptimal_objective(q, cands, base, ridge));
  }
  return best;
}

}  // namespace

TEST_CASE("acquisition names", "[acquisition]") {
  for (auto a : kAllAcquisitions) CHECK(parse_acquisition(to_string(a)) == a);
  CHECK(parse_acquisition("fim") == AcquisitionKind::FimAOptimal);
  CHECK_THROWS_AS(parse_acquisition("bald"), std::invalid_argument);
}

TEST_CASE("random selection", "[acquisition]") {
  const auto cands = fresh_candidates(10, 5.0);
  Stream rng(1, {kSelectionStream});
  CHECK(af_random(cands, 0.0, rng).selected.empty());

  const auto all = af_random(cands, 100.0, rng);
  CHECK(all.selected.size() == 10);
  check_plan(all, 100.0);

  Stream a(7, {kSelectionStream}), b(7, {kSelectionStream}), c(8, {kSelectionStream});
  const auto pa = af_random(cands, 4.0, a), pb = af_random(cands, 4.0, b), pc = af_random(cands, 4.0, c);
  CHECK(pa.selected == pb.selected);
  CHECK_FALSE(pa.selected == pc.selected);
  CHECK_THROWS_AS(af_random(cands, -1.0, a), std::invalid_argument);
}

TEST_CASE("oldest selection", "[acquisition]") {
  auto cands = fresh_candidates(6, 15.0);
  CHECK(af_oldest(cands, 0.0).selected.empty());
  const auto plan = af_oldest(cands, 3.0);
  REQUIRE(plan.selected.size() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(plan.selected[static_cast<std::size_t>(j)].system_id == j);
    CHECK(plan.selected[static_cast<std::size_t>(j)].test == DiagnosticTest::Partial1);
  }
  // system 4 was last tested three cycles ago, the rest just now
  for (auto& c : cands) {
    c.agelt = c.system_id == 4 ? std::array<double, 3>{0.0, 0.0, 0.0} : std::array<double, 3>{15.0, 15.0, 15.0};
  }
  CHECK(af_oldest(cands, 1.0).selected.front().system_id == 4);
}

TEST_CASE("most likely failure scoring", "[acquisition]") {
  const PowerLawParams est{0.05, 1.3};
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> T(0.0, 20.0);
  for (auto mode : {CoverageMode::Overlap, CoverageMode::Subset}) {
    const CoverageConfig cfg{mode, 0.6, 0.7};
    for (int i = 0; i < 100; ++i) {
      Candidate c;
      const double s = T(g);
      c.t_age = s + T(g);
      c.agelt = {s, s, s};
      c.test = DiagnosticTest::Proof;
      c.pt = pt_vector(cfg, DiagnosticTest::Proof);
      const double proof = 1.0 - candidate_reliability(c, cfg, est);
      for (auto t : {DiagnosticTest::Partial1, DiagnosticTest::Partial2}) {
        c.pt = pt_vector(cfg, t);
        CHECK(proof >= 1.0 - candidate_reliability(c, cfg, est));
      }
    }
  }
  auto zero = fresh_candidates(1, 0.0);
  CHECK(1.0 - candidate_reliability(zero[0], kOverlap, est) == 0.0);
}

TEST_CASE("most likely failure follows the greedy order", "[acquisition]") {
  const PowerLawParams est{0.08, 1.2};
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> T(0.0, 20.0), C(0.5, 2.0), B(1.0, 6.0);
  for (int inst = 0; inst < 10; ++inst) {
    auto cands = fresh_candidates(8, 0.0);
    std::vector<std::array<double, 3>> ages(8);
    std::vector<double> t(8);
    for (std::size_t j = 0; j < 8; ++j) {
      t[j] = 10.0 + T(g);
      ages[j] = {T(g) * t[j] / 20.0, T(g) * t[j] / 20.0, T(g) * t[j] / 20.0};
    }
    for (auto& c : cands) {
      c.t_age = t[static_cast<std::size_t>(c.system_id)];
      c.agelt = ages[static_cast<std::size_t>(c.system_id)];
      c.cost = C(g);
    }
    const double budget = B(g);
    const auto plan = af_most_likely_failure(cands, budget, kOverlap, est);

    // repeatedly take the best remaining affordable candidate of an untaken system
    std::vector<Selection> want;
    std::set<int> taken;
    double spent = 0.0;
    std::vector<bool> dead(cands.size(), false);
    for (;;) {
      long best = -1;
      double best_score = -1.0;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (dead[i] || taken.count(cands[i].system_id)) continue;
        const double s = 1.0 - candidate_reliability(cands[i], kOverlap, est);
        if (s > best_score) {
          best_score = s;
          best = static_cast<long>(i);
        }
      }
      if (best < 0) break;
      const auto& c = cands[static_cast<std::size_t>(best)];
      dead[static_cast<std::size_t>(best)] = true;
      if (spent + c.cost > budget + kBudgetSlack) continue;
      spent += c.cost;
      taken.insert(c.system_id);
      want.push_back({c.system_id, c.test, c.cost});
    }
    CHECK(plan.selected == want);
  }
}

TEST_CASE("binary entropy", "[acquisition]") {
  CHECK(binary_entropy(0.5) == Approx(std::log(2.0)));
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  for (double r = 0.01; r < 1.0; r += 0.01) {
    CHECK(binary_entropy(r) <= binary_entropy(0.5));
    CHECK(binary_entropy(r) == Approx(binary_entropy(1.0 - r)).epsilon(1e-12));
  }
}

TEST_CASE("every plan respects one test per system and the budget", "[acquisition]") {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> B(0.0, 8.0), T(0.0, 10.0);
  const PowerLawParams est{0.1, 1.3};
  for (int i = 0; i < 50; ++i) {
    auto cands = random_design(6, g, false);
    for (auto& c : cands) {
      c.t_age = 10.0 + c.system_id;
      c.agelt = {T(g), T(g), T(g)};
    }
    const double budget = B(g);
    Stream rng(static_cast<std::uint64_t>(i), {kSelectionStream});
    check_plan(af_random(cands, budget, rng), budget);
    check_plan(af_oldest(cands, budget), budget);
    check_plan(af_most_likely_failure(cands, budget, kOverlap, est), budget);
    check_plan(af_entropy(cands, budget, kOverlap, est), budget);
    check_plan(af_fim_aoptimal(cands, budget, random_base(g)).plan, budget);
  }
}

TEST_CASE("relaxed design trivial cases", "[acquisition]") {
  auto one = fresh_candidates(1, 5.0);
  one.resize(1);
  one[0].fim = FisherMatrix::outer({1.0, 0.5}, 1.0);
  const FisherMatrix base = FisherMatrix::outer({0.5, -1.0}, 0.3);
  const auto sol = solve_relaxed_aoptimal(one, 1.0, base);
  CHECK(sol.q[0] == Approx(1.0).margin(1e-9));

  std::mt19937_64 g(1);
  const auto none = af_fim_aoptimal(random_design(3, g, true), 0.0, base);
  for (double q : none.relaxed.q) CHECK(q == 0.0);
  CHECK(none.plan.selected.empty());
}

TEST_CASE("two identical candidates split one unit of budget", "[acquisition]") {
  auto cands = fresh_candidates(1, 5.0);
  cands.resize(2);
  const FisherMatrix a = FisherMatrix::outer({0.8, -0.3}, 1.5);
  cands[0].fim = cands[1].fim = a;
  const FisherMatrix base = FisherMatrix::outer({0.2, 1.0}, 0.4);
  const auto sol = solve_relaxed_aoptimal(cands, 1.0, base);
  CHECK(sol.q[0] + sol.q[1] == Approx(1.0).margin(1e-6));
  const double exact = trace_inverse(base + FisherMatrix::identity(design_ridge(base)) + a);
  CHECK(sol.objective == Approx(exact).epsilon(1e-8));

  double grid = INFINITY;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; i + j <= 100; ++j) {
      grid = std::min(grid, aoptimal_objective({0.01 * i, 0.01 * j}, cands, base, sol.ridge));
    }
  }
  CHECK(std::abs(sol.objective - grid) <= 1e-4 * grid);
}

TEST_CASE("relaxed design bounds every integer selection", "[acquisition]") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> B(0.5, 4.0);
  for (int inst = 0; inst < 200; ++inst) {
    const int systems = 1 + static_cast<int>(g() % 4);
    const auto cands = random_design(systems, g, inst % 2 == 0);
    const auto base = inst % 3 == 0 ? FisherMatrix{} : random_base(g);
    const double budget = B(g);
    const auto sol = solve_relaxed_aoptimal(cands, budget, base);
    const double best = best_integer_objective(cands, systems, budget, base, sol.ridge);
    CHECK(sol.objective <= best * (1.0 + 1e-12));

    // feasibility of q
    std::map<int, double> per_system;
    double spent = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      CHECK(sol.q[i] >= -1e-6);
      CHECK(sol.q[i] <= 1.0 + 1e-6);
      per_system[cands[i].system_id] += sol.q[i];
      spent += cands[i].cost * sol.q[i];
    }
    for (const auto& [id, s] : per_system) CHECK(s <= 1.0 + 1e-6);
    CHECK(spent <= budget + 1e-6);

    for (std::size_t h = 1; h < sol.history.size(); ++h) CHECK(sol.history[h] <= sol.history[h - 1]);
  }
}

TEST_CASE("zero-information candidates do not change the optimum", "[acquisition]") {
  std::mt19937_64 g(13);
  for (int inst = 0; inst < 50; ++inst) {
    auto cands = random_design(3, g, true);
    const auto base = random_base(g);
    const auto before = solve_relaxed_aoptimal(cands, 2.0, base);
    auto extra = fresh_candidates(5, 5.0);
    for (auto& c : extra) {
      c.system_id += 3;
      cands.push_back(c);
    }
    const auto after = solve_relaxed_aoptimal(cands, 2.0, base);
    CHECK(after.objective == Approx(before.objective).epsilon(1e-8));
  }
}

TEST_CASE("rounding", "[acquisition]") {
  auto cands = fresh_candidates(5, 5.0);
  std::vector<double> q(cands.size(), 0.0);
  q[7] = 0.4;  // system 2, Partial2
  const auto single = round_selection(q, cands, 1.0);
  REQUIRE(single.selected.size() == 1);
  CHECK(single.selected[0].system_id == 2);
  CHECK(single.selected[0].test == DiagnosticTest::Partial2);

  std::fill(q.begin(), q.end(), 0.2);
  const auto ties = round_selection(q, cands, 3.0);
  REQUIRE(ties.selected.size() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(ties.selected[static_cast<std::size_t>(j)].system_id == j);
    CHECK(ties.selected[static_cast<std::size_t>(j)].test == DiagnosticTest::Partial1);
  }

  std::mt19937_64 g(17);
  std::uniform_real_distribution<double> U(0.0, 1.0), C(0.5, 2.0), B(0.0, 6.0);
  for (int i = 0; i < 1000; ++i) {
    auto cs = fresh_candidates(6, 5.0);
    for (auto& c : cs) c.cost = C(g);
    std::vector<double> qq(cs.size());
    for (auto& v : qq) v = U(g);
    const double budget = B(g);
    check_plan(round_selection(qq, cs, budget), budget);
  }
}
