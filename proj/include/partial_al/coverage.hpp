// Diagnostic-coverage algebra for the three-subsystem, two-partial-test
// configurations (overlapping and nested coverage).
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "partial_al/model_core.hpp"

namespace partial_al {

enum class CoverageMode { Overlap, Subset };

/// Partial1 < Partial2 < Proof is also the lexicographic tie-break order.
enum class DiagnosticTest { Partial1 = 0, Partial2 = 1, Proof = 2 };

inline constexpr std::array<DiagnosticTest, 3> kAllTests{DiagnosticTest::Partial1,
                                                         DiagnosticTest::Partial2,
                                                         DiagnosticTest::Proof};

inline constexpr std::size_t kNumSubsystems = 3;

inline std::string_view to_string(CoverageMode m) {
  return m == CoverageMode::Overlap ? "overlap" : "subset";
}

inline CoverageMode parse_coverage_mode(std::string_view s) {
  if (s == "overlap" || s == "Overlap") return CoverageMode::Overlap;
  if (s == "subset" || s == "Subset") return CoverageMode::Subset;
  throw std::invalid_argument("unknown coverage mode '" + std::string(s) + "'");
}

inline std::string_view to_string(DiagnosticTest t) {
  switch (t) {
    case DiagnosticTest::Partial1: return "partial1";
    case DiagnosticTest::Partial2: return "partial2";
    case DiagnosticTest::Proof: return "proof";
  }
  return "?";
}

inline DiagnosticTest parse_diagnostic_test(std::string_view s) {
  if (s == "partial1") return DiagnosticTest::Partial1;
  if (s == "partial2") return DiagnosticTest::Partial2;
  if (s == "proof") return DiagnosticTest::Proof;
  throw std::invalid_argument("unknown diagnostic test '" + std::string(s) + "'");
}

/// Returns an empty string when (mode, c1, c2) is admissible, otherwise the reason.
inline std::string coverage_violation(CoverageMode mode, double c1, double c2) {
  if (!(c1 > 0.0 && c1 < 1.0) || !(c2 > 0.0 && c2 < 1.0)) {
    return "c1 and c2 must lie strictly inside (0, 1)";
  }
  if (mode == CoverageMode::Overlap && c1 + c2 < 1.0) {
    return "overlap coverage requires c1 + c2 >= 1";
  }
  if (mode == CoverageMode::Subset && c1 > c2) {
    return "subset coverage requires c1 <= c2";
  }
  return {};
}

/// Coverage configuration: mode plus the two partial-test DC coefficients.
class CoverageConfig {
 public:
  CoverageConfig(CoverageMode mode, double c1, double c2) : mode_(mode), c1_(c1), c2_(c2) {
    if (auto why = coverage_violation(mode, c1, c2); !why.empty()) {
      throw std::invalid_argument("CoverageConfig(" + std::string(to_string(mode)) +
                                  ", c1=" + std::to_string(c1) + ", c2=" + std::to_string(c2) +
                                  "): " + why);
    }
  }

  CoverageMode mode() const noexcept { return mode_; }
  double c1() const noexcept { return c1_; }
  double c2() const noexcept { return c2_; }

  /// Fractions f_i with a_i = f_i * alpha; they sum to one.
  std::array<double, 3> fractions() const noexcept {
    if (mode_ == CoverageMode::Overlap) return {1.0 - c2_, c1_ + c2_ - 1.0, 1.0 - c1_};
    return {c1_, c2_ - c1_, 1.0 - c2_};
  }

 private:
  CoverageMode mode_;
  double c1_;
  double c2_;
};

/// Per-subsystem shares of the system alpha.
struct SubsystemAlphas {
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  /// System alpha the shares partition; used verbatim when all three subsystems
  /// share one interval so proof-test exponents do not depend on the split.
  double alpha = 0.0;

  double operator[](std::size_t i) const { return i == 0 ? a1 : (i == 1 ? a2 : a3); }
  double total() const noexcept { return a1 + a2 + a3; }
};

inline SubsystemAlphas subsystem_alphas(const CoverageConfig& cfg, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("subsystem_alphas: alpha must be > 0");
  const auto f = cfg.fractions();
  SubsystemAlphas out{alpha * f[0], alpha * f[1], 0.0, alpha};
  // Third share closes the partition so that a1 + a2 + a3 reproduces alpha.
  out.a3 = alpha - out.a1 - out.a2;
  if (out.a3 < 0.0) out.a3 = 0.0;
  return out;
}

/// Inverse map from subsystem shares to (c1, c2).
inline std::pair<double, double> dc_roundtrip(const SubsystemAlphas& a, CoverageMode mode) {
  if (a.a1 < 0.0 || a.a2 < 0.0 || a.a3 < 0.0) {
    throw std::invalid_argument("dc_roundtrip: subsystem alphas must be nonnegative");
  }
  const double sum = a.total();
  if (!(sum > 0.0)) throw std::invalid_argument("dc_roundtrip: total alpha is zero");
  if (mode == CoverageMode::Overlap) return {(a.a1 + a.a2) / sum, (a.a2 + a.a3) / sum};
  return {a.a1 / sum, (a.a1 + a.a2) / sum};
}

/// Binary coverage flags [PT1, PT2, PT3]; only the table rows are constructible.
class PTVector {
 public:
  static PTVector none() { return PTVector{{0, 0, 0}}; }

  static PTVector of(CoverageMode mode, DiagnosticTest test) {
    switch (test) {
      case DiagnosticTest::Partial1:
        return mode == CoverageMode::Overlap ? PTVector{{1, 1, 0}} : PTVector{{1, 0, 0}};
      case DiagnosticTest::Partial2:
        return mode == CoverageMode::Overlap ? PTVector{{0, 1, 1}} : PTVector{{1, 1, 0}};
      case DiagnosticTest::Proof:
        return PTVector{{1, 1, 1}};
    }
    throw std::invalid_argument("PTVector::of: bad test");
  }

  /// Accepts raw flags read back from storage; rejects rows outside the table.
  static PTVector from_flags(int pt1, int pt2, int pt3) {
    const std::array<int, 3> f{pt1, pt2, pt3};
    if (f == std::array<int, 3>{0, 0, 0}) return none();
    for (auto mode : {CoverageMode::Overlap, CoverageMode::Subset}) {
      for (auto t : kAllTests) {
        if (of(mode, t).flags_ == f) return PTVector{f};
      }
    }
    throw std::invalid_argument("PTVector: flags do not match any diagnostic test");
  }

  int operator[](std::size_t i) const { return flags_.at(i); }
  const std::array<int, 3>& flags() const noexcept { return flags_; }

  friend bool operator==(const PTVector&, const PTVector&) = default;

 private:
  explicit PTVector(std::array<int, 3> f) : flags_(f) {}
  std::array<int, 3> flags_;
};

inline PTVector pt_vector(const CoverageConfig& cfg, DiagnosticTest test) {
  return PTVector::of(cfg.mode(), test);
}

/// Zero-based indices of the subsystems a test inspects.
inline std::vector<std::size_t> covered_subsystems(const CoverageConfig& cfg, DiagnosticTest test) {
  const auto pt = pt_vector(cfg, test);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kNumSubsystems; ++i) {
    if (pt[i] == 1) out.push_back(i);
  }
  return out;
}

/// Exponent m of R = exp(-m) for an interval ending at t_age; each subsystem
/// contributes a_i (t_age^k - agelt_i^k) when covered.
/// Subsystems with identical last-test ages are pooled before multiplying.
inline double coverage_exponent(const SubsystemAlphas& a, double k, const PTVector& pt,
                                double t_age, const std::array<double, 3>& agelt) {
  for (double s : agelt) {
    if (s < 0.0 || s > t_age) {
      throw std::invalid_argument("reliability: subsystem last-test age must lie in [0, t_age]");
    }
  }
  const double tk = std::pow(t_age, k);
  std::array<bool, 3> done{};
  double m = 0.0;
  for (std::size_t i = 0; i < kNumSubsystems; ++i) {
    if (pt[i] == 0 || done[i]) continue;
    double share = 0.0;
    int members = 0;
    for (std::size_t j = i; j < kNumSubsystems; ++j) {
      if (pt[j] == 1 && agelt[j] == agelt[i]) {
        share += a[j];
        done[j] = true;
        ++members;
      }
    }
    if (members == 3 && a.alpha > 0.0) share = a.alpha;
    m += share * (tk - std::pow(agelt[i], k));
  }
  return m;
}

/// Probability that no covered subsystem fails between its last test and t_age.
inline double reliability_partial(const CoverageConfig& cfg, const PowerLawParams& p,
                                  const PTVector& pt, double t_age, double agelt1, double agelt2,
                                  double agelt3) {
  const auto a = subsystem_alphas(cfg, p.alpha());
  return std::exp(-coverage_exponent(a, p.k(), pt, t_age, {agelt1, agelt2, agelt3}));
}

}  // namespace partial_al
