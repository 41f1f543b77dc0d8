#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "partial_al/model_core.hpp"
#include "support/oracles.hpp"

using namespace partial_al;
using Catch::Approx;

TEST_CASE("params reject non-positive or non-finite values", "[model_core]") {
  CHECK_THROWS_AS(PowerLawParams(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(PowerLawParams(1.0, -2.0), std::invalid_argument);
  CHECK_THROWS_AS(PowerLawParams(NAN, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(PowerLawParams(1.0, INFINITY), std::invalid_argument);
  const auto p = PowerLawParams::from_rate(0.1, 1.3);
  CHECK(p.alpha() == Approx(std::pow(0.1, 1.3)).epsilon(1e-15));
  CHECK(p.k() == 1.3);
}

TEST_CASE("intensity at fixed points", "[model_core]") {
  CHECK(intensity({0.5, 1.0}, 7.0) == Approx(0.5));
  CHECK(intensity({0.25, 2.0}, 3.0) == Approx(1.5));
  CHECK(intensity({0.5, 1.0}, 0.0) == 0.5);
  CHECK(intensity({0.5, 2.0}, 0.0) == 0.0);
  CHECK_THROWS_AS(intensity({0.5, 0.5}, 0.0), std::domain_error);
  CHECK_THROWS_AS(intensity({0.5, 1.0}, -1.0), std::domain_error);
}

TEST_CASE("intensity is the derivative of the cumulative intensity", "[model_core]") {
  const PowerLawParams p{0.05, 1.3};
  const double fd = oracle::central_diff([&](double t) { return cumulative_intensity(p, t); }, 2.0, 1e-5);
  CHECK(intensity(p, 2.0) == Approx(fd).epsilon(1e-8));

  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> A(0.01, 2.0), K(0.3, 3.0), T(0.05, 50.0);
  for (int i = 0; i < 200; ++i) {
    const PowerLawParams q{A(g), K(g)};
    const double t = T(g);
    const double h = 1e-6 * t;
    const double d = oracle::central_diff([&](double x) { return cumulative_intensity(q, x); }, t, h);
    CHECK(intensity(q, t) == Approx(d).epsilon(1e-6));
  }
}

TEST_CASE("cumulative intensity", "[model_core]") {
  CHECK(cumulative_intensity({0.5, 2.0}, 3.0) == Approx(4.5));
  CHECK(cumulative_intensity({0.7, 0.4}, 0.0) == 0.0);
  const auto p = PowerLawParams::from_rate(0.1, 1.3);
  const double eps = 1e-9;
  const double quad = oracle::integrate([&](double t) { return intensity(p, t); }, eps, 10.0);
  CHECK(cumulative_intensity(p, 10.0) - cumulative_intensity(p, eps) == Approx(quad).epsilon(1e-10));
}

TEST_CASE("cumulative intensity is strictly increasing", "[model_core]") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> A(0.01, 2.0), K(0.3, 3.0), T(0.0, 40.0);
  for (int i = 0; i < 500; ++i) {
    const PowerLawParams p{A(g), K(g)};
    double a = T(g), b = T(g);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    CHECK(cumulative_intensity(p, a) < cumulative_intensity(p, b));
  }
}

TEST_CASE("conditional survival", "[model_core]") {
  CHECK(conditional_survival({0.3, 1.7}, 4.0, 4.0) == 1.0);
  CHECK(conditional_survival({1.0, 1.0}, 0.0, std::log(2.0)) == Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(conditional_survival({1.0, 1.0}, 3.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(conditional_survival({1.0, 1.0}, -1.0, 2.0), std::invalid_argument);
}

TEST_CASE("conditional survival composes over adjacent intervals", "[model_core]") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> A(0.001, 0.5), K(0.3, 3.0), T(0.0, 20.0);
  for (int i = 0; i < 500; ++i) {
    const PowerLawParams p{A(g), K(g)};
    std::array<double, 3> t{T(g), T(g), T(g)};
    std::sort(t.begin(), t.end());
    const double whole = conditional_survival(p, t[0], t[2]);
    const double parts = conditional_survival(p, t[0], t[1]) * conditional_survival(p, t[1], t[2]);
    CHECK(std::abs(whole - parts) <= 1e-12);
  }
}

TEST_CASE("conditional survival matches sampled failure ages", "[model_core]") {
  const PowerLawParams p{0.05, 1.3};
  std::mt19937_64 g(2024);
  const std::size_t n = 1'000'000;
  std::size_t alive = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (oracle::weibull_tail_draw(p.alpha(), p.k(), 2.0, g) > 7.0) ++alive;
  }
  const double freq = static_cast<double>(alive) / n;
  const double r = conditional_survival(p, 2.0, 7.0);
  CHECK(std::abs(freq - r) <= 3.0 * oracle::binomial_se(r, n));
}

TEST_CASE("next failure age sampling", "[model_core]") {
  CHECK(sample_next_failure_age(PowerLawParams{0.4, 2.0}, 5.0, 0.0) == 5.0);
  CHECK(sample_next_failure_age(PowerLawParams{1.0, 1.0}, 0.0, 1.0 - std::exp(-2.0)) ==
        Approx(2.0).epsilon(1e-14));
  CHECK(std::isinf(sample_next_failure_age(0.0, 1.3, 2.0, 0.5)));

  const PowerLawParams p{0.2, 0.7};
  double prev = 3.0;
  for (double u = 0.0; u < 1.0; u += 0.001) {
    const double x = sample_next_failure_age(p, 3.0, u);
    CHECK(x >= prev);
    prev = x;
  }
}

TEST_CASE("sampled failure ages follow the conditional law", "[model_core]") {
  struct Case {
    double lambda, k, t_prev;
  };
  for (const auto& c : {Case{0.1, 1.3, 0.0}, Case{0.5, 0.5, 4.0}, Case{0.25, 2.0, 2.5}}) {
    const auto p = PowerLawParams::from_rate(c.lambda, c.k);
    std::mt19937_64 g(99);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> xs(100'000);
    for (auto& x : xs) x = sample_next_failure_age(p, c.t_prev, U(g));
    const double d = oracle::ks_statistic(xs, [&](double t) {
      return -std::expm1(-p.alpha() * (std::pow(t, p.k()) - std::pow(c.t_prev, p.k())));
    });
    INFO("lambda=" << c.lambda << " k=" << c.k << " D=" << d);
    CHECK(oracle::ks_pvalue(d, xs.size()) > 0.01);
  }
}
