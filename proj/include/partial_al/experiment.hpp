// Experiment grids: configuration loading, cell expansion, seeded trial
// execution across a worker pool, and the CSV artifacts each run produces.
#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "partial_al/acquisition.hpp"
#include "partial_al/metrics.hpp"
#include "partial_al/simulator.hpp"

namespace partial_al {

using DcPair = std::pair<double, double>;

/// Overlapping-coverage (c1, c2) settings of the reference grid.
inline const std::vector<DcPair>& default_overlap_dc() {
  static const std::vector<DcPair> v{{0.3, 0.8}, {0.3, 0.9}, {0.4, 0.9}, {0.5, 0.6},
                                     {0.5, 0.8}, {0.5, 0.9}, {0.6, 0.7}, {0.6, 0.8},
                                     {0.6, 0.9}, {0.7, 0.8}, {0.7, 0.9}, {0.8, 0.9}};
  return v;
}

/// Nested-coverage (c1, c2) settings of the reference grid.
inline const std::vector<DcPair>& default_subset_dc() {
  static const std::vector<DcPair> v{{0.1, 0.8}, {0.1, 0.7}, {0.1, 0.6}, {0.2, 0.8}, {0.2, 0.7},
                                     {0.2, 0.6}, {0.3, 0.8}, {0.3, 0.7}, {0.3, 0.6}, {0.4, 0.8},
                                     {0.4, 0.7}, {0.5, 0.8}, {0.5, 0.9}};
  return v;
}

inline const std::vector<DcPair>& default_dc(CoverageMode m) {
  return m == CoverageMode::Overlap ? default_overlap_dc() : default_subset_dc();
}

/// Configuration error carrying every problem found, one message per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid configuration:";
    for (const auto& m : p) s += "\n  - " + m;
    return s;
  }
  std::vector<std::string> problems_;
};

struct ExperimentGrid {
  std::vector<CoverageMode> modes{CoverageMode::Overlap, CoverageMode::Subset};
  /// Per-mode DC settings; a mode without an entry uses the reference table.
  std::map<CoverageMode, std::vector<DcPair>> dc_settings;
  /// (lambda, k) with alpha = lambda^k.
  std::vector<std::pair<double, double>> param_settings{{0.1, 1.3}, {0.5, 0.5}, {0.25, 2.0}};
  std::vector<int> j_values{50, 100};
  std::vector<double> budgets{5.0, 10.0, 25.0};
  std::vector<double> delta_t_values{2.5, 5.0};
  std::vector<AcquisitionKind> afs{kAllAcquisitions.begin(), kAllAcquisitions.end()};
  int trials = 100;
  int cycles = 50;
  std::uint64_t base_seed = 0;
  TestCosts costs = kUnitCosts;
  double ateer_horizon = 100.0;

  const std::vector<DcPair>& dc_for(CoverageMode m) const {
    auto it = dc_settings.find(m);
    return it == dc_settings.end() ? default_dc(m) : it->second;
  }

  friend bool operator==(const ExperimentGrid&, const ExperimentGrid&) = default;
};

struct GridCell {
  int index = 0;
  CoverageMode mode = CoverageMode::Subset;
  double c1 = 0.0;
  double c2 = 0.0;
  double lambda = 0.0;
  double k = 0.0;
  int systems = 0;
  double budget = 0.0;
  double delta_t = 0.0;

  std::string id() const {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "c%04d_%s_c1-%g_c2-%g_lam-%g_k-%g_J-%d_B-%g_dt-%g", index,
                  std::string(to_string(mode)).c_str(), c1, c2, lambda, k, systems, budget,
                  delta_t);
    return buf;
  }
};

/// Cells in a fixed nesting order: mode, DC pair, params, J, budget, delta_t.
inline std::vector<GridCell> expand(const ExperimentGrid& g) {
  std::vector<GridCell> cells;
  for (auto mode : g.modes) {
    for (const auto& [c1, c2] : g.dc_for(mode)) {
      for (const auto& [lambda, k] : g.param_settings) {
        for (int j : g.j_values) {
          for (double b : g.budgets) {
            for (double dt : g.delta_t_values) {
              cells.push_back({static_cast<int>(cells.size()), mode, c1, c2, lambda, k, j, b, dt});
            }
          }
        }
      }
    }
  }
  return cells;
}

/// Seed of the simulated world for (cell, trial); shared by every AF so that
/// all acquisition functions face the same latent failure ages.
inline std::uint64_t world_seed(std::uint64_t base_seed, int cell_index, int trial) {
  return Stream(base_seed, {kWorldSeed, static_cast<std::uint64_t>(cell_index),
                            static_cast<std::uint64_t>(trial)})
      .next();
}

inline WorldConfig world_config(const ExperimentGrid& g, const GridCell& c, int trial) {
  WorldConfig w;
  w.true_params = PowerLawParams::from_rate(c.lambda, c.k);
  w.coverage = CoverageConfig{c.mode, c.c1, c.c2};
  w.systems = c.systems;
  w.delta_t = c.delta_t;
  w.budget = c.budget;
  w.costs = g.costs;
  w.cycles = g.cycles;
  w.seed = world_seed(g.base_seed, c.index, trial);
  return w;
}

// ---- configuration file ----

inline nlohmann::json to_json(const ExperimentGrid& g) {
  using nlohmann::json;
  json j;
  j["modes"] = json::array();
  for (auto m : g.modes) j["modes"].push_back(std::string(to_string(m)));
  j["dc_settings"] = json::object();
  for (auto m : g.modes) {
    json arr = json::array();
    for (const auto& [c1, c2] : g.dc_for(m)) arr.push_back({c1, c2});
    j["dc_settings"][std::string(to_string(m))] = arr;
  }
  j["param_settings"] = json::array();
  for (const auto& [l, k] : g.param_settings) j["param_settings"].push_back({l, k});
  j["J_values"] = g.j_values;
  j["budgets"] = g.budgets;
  j["delta_t_values"] = g.delta_t_values;
  j["afs"] = json::array();
  for (auto a : g.afs) j["afs"].push_back(std::string(to_string(a)));
  j["trials"] = g.trials;
  j["cycles"] = g.cycles;
  j["base_seed"] = g.base_seed;
  j["costs"] = {{"partial1", g.costs[0]}, {"partial2", g.costs[1]}, {"proof", g.costs[2]}};
  j["ateer_horizon"] = g.ateer_horizon;
  return j;
}

namespace detail {

inline std::vector<DcPair> read_pairs(const nlohmann::json& j, const std::string& field,
                                      std::vector<std::string>& errors) {
  std::vector<DcPair> out;
  if (!j.is_array()) {
    errors.push_back(field + ": expected an array of [a, b] pairs");
    return out;
  }
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      errors.push_back(field + "[" + std::to_string(i) + "]: expected [number, number]");
      continue;
    }
    out.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  return out;
}

template <class T>
std::vector<T> read_numbers(const nlohmann::json& j, const std::string& field,
                            std::vector<std::string>& errors) {
  std::vector<T> out;
  if (!j.is_array() || j.empty()) {
    errors.push_back(field + ": expected a non-empty array of numbers");
    return out;
  }
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      errors.push_back(field + "[" + std::to_string(i) + "]: expected a number");
      continue;
    }
    out.push_back(j[i].get<T>());
  }
  return out;
}

}  // namespace detail

/// Builds a grid from parsed JSON. Absent fields keep the reference defaults;
/// every problem found is reported together in one ConfigError.
inline ExperimentGrid grid_from_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  ExperimentGrid g;
  if (!j.is_object()) throw ConfigError({"top level: expected an object"});

  static const std::set<std::string> known{
      "mode",    "modes",  "dc_settings", "param_settings", "J_values", "budgets", "delta_t_values",
      "afs",     "trials", "cycles",      "base_seed",      "costs",    "ateer_horizon"};
  for (const auto& [key, v] : j.items()) {
    if (!known.count(key)) errors.push_back(key + ": unknown field");
  }

  auto parse_modes = [&](const nlohmann::json& v, const std::string& field) {
    std::vector<CoverageMode> modes;
    auto one = [&](const nlohmann::json& e, const std::string& f) {
      try {
        if (!e.is_string()) throw std::invalid_argument("expected \"overlap\" or \"subset\"");
        modes.push_back(parse_coverage_mode(e.get<std::string>()));
      } catch (const std::exception& ex) {
        errors.push_back(f + ": " + ex.what());
      }
    };
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) one(v[i], field + "[" + std::to_string(i) + "]");
    } else {
      one(v, field);
    }
    if (modes.empty() && v.is_array()) errors.push_back(field + ": at least one mode is required");
    return modes;
  };
  if (j.contains("mode") && j.contains("modes")) errors.push_back("mode/modes: give only one");
  if (j.contains("modes")) g.modes = parse_modes(j["modes"], "modes");
  if (j.contains("mode")) g.modes = parse_modes(j["mode"], "mode");

  if (j.contains("dc_settings")) {
    const auto& d = j["dc_settings"];
    if (d.is_object()) {
      for (const auto& [key, v] : d.items()) {
        try {
          const auto m = parse_coverage_mode(key);
          g.dc_settings[m] = detail::read_pairs(v, "dc_settings." + key, errors);
        } catch (const std::invalid_argument& ex) {
          errors.push_back("dc_settings." + key + ": " + ex.what());
        }
      }
    } else {
      const auto pairs = detail::read_pairs(d, "dc_settings", errors);
      for (auto m : g.modes) g.dc_settings[m] = pairs;
    }
  }
  if (j.contains("param_settings")) {
    g.param_settings = detail::read_pairs(j["param_settings"], "param_settings", errors);
  }
  if (j.contains("J_values")) g.j_values = detail::read_numbers<int>(j["J_values"], "J_values", errors);
  if (j.contains("budgets")) g.budgets = detail::read_numbers<double>(j["budgets"], "budgets", errors);
  if (j.contains("delta_t_values")) {
    g.delta_t_values = detail::read_numbers<double>(j["delta_t_values"], "delta_t_values", errors);
  }
  if (j.contains("afs")) {
    g.afs.clear();
    const auto& a = j["afs"];
    if (!a.is_array() || a.empty()) {
      errors.push_back("afs: expected a non-empty array of names");
    } else {
      for (std::size_t i = 0; i < a.size(); ++i) {
        try {
          if (!a[i].is_string()) throw std::invalid_argument("expected a string");
          g.afs.push_back(parse_acquisition(a[i].get<std::string>()));
        } catch (const std::exception& ex) {
          errors.push_back("afs[" + std::to_string(i) + "]: " + ex.what());
        }
      }
    }
  }
  auto read_int = [&](const char* key, int& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) {
      errors.push_back(std::string(key) + ": expected an integer");
      return;
    }
    dst = j[key].get<int>();
  };
  read_int("trials", g.trials);
  read_int("cycles", g.cycles);
  if (j.contains("base_seed")) {
    if (!j["base_seed"].is_number_unsigned()) {
      errors.push_back("base_seed: expected a non-negative integer");
    } else {
      g.base_seed = j["base_seed"].get<std::uint64_t>();
    }
  }
  if (j.contains("ateer_horizon")) {
    if (!j["ateer_horizon"].is_number()) {
      errors.push_back("ateer_horizon: expected a number");
    } else {
      g.ateer_horizon = j["ateer_horizon"].get<double>();
    }
  }
  if (j.contains("costs")) {
    const auto& c = j["costs"];
    if (!c.is_object()) {
      errors.push_back("costs: expected an object with partial1/partial2/proof");
    } else {
      for (const auto& [key, v] : c.items()) {
        try {
          const auto t = parse_diagnostic_test(key);
          if (!v.is_number()) throw std::invalid_argument("expected a number");
          g.costs[static_cast<std::size_t>(t)] = v.get<double>();
        } catch (const std::exception& ex) {
          errors.push_back("costs." + key + ": " + ex.what());
        }
      }
    }
  }

  // invariants
  for (auto m : g.modes) {
    const auto& pairs = g.dc_for(m);
    if (pairs.empty()) errors.push_back("dc_settings." + std::string(to_string(m)) + ": empty");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (auto why = coverage_violation(m, pairs[i].first, pairs[i].second); !why.empty()) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " (c1=%g, c2=%g): ", pairs[i].first, pairs[i].second);
        errors.push_back("dc_settings." + std::string(to_string(m)) + "[" + std::to_string(i) +
                         "]" + buf + why);
      }
    }
  }
  for (std::size_t i = 0; i < g.param_settings.size(); ++i) {
    if (!(g.param_settings[i].first > 0.0) || !(g.param_settings[i].second > 0.0)) {
      errors.push_back("param_settings[" + std::to_string(i) + "]: lambda and k must be > 0");
    }
  }
  if (g.param_settings.empty()) errors.push_back("param_settings: at least one setting is required");
  for (int v : g.j_values) {
    if (v < 1) errors.push_back("J_values: every J must be >= 1");
  }
  for (double v : g.budgets) {
    if (!(v >= 0.0)) errors.push_back("budgets: every budget must be >= 0");
  }
  for (double v : g.delta_t_values) {
    if (!(v > 0.0)) errors.push_back("delta_t_values: every delta_t must be > 0");
  }
  for (double v : g.costs) {
    if (!(v > 0.0)) errors.push_back("costs: every test cost must be > 0");
  }
  if (g.trials < 1) errors.push_back("trials: must be >= 1");
  if (g.cycles < 2) errors.push_back("cycles: must be >= 2 (learning-curve AUC needs two points)");
  if (!(g.ateer_horizon > 0.0)) errors.push_back("ateer_horizon: must be > 0");

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return g;
}

inline ExperimentGrid parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("config: ") + e.what()});
  }
  return grid_from_json(j);
}

inline ExperimentGrid load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path.string() + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline void save_config(const ExperimentGrid& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << to_json(g).dump(2) << '\n';
}

// ---- CSV artifacts ----

inline constexpr const char* kTraceCsvHeader = "cycle,alpha_hat,k_hat,ateer,mse,dataset_size";
inline constexpr const char* kSelectionCsvHeader = "cycle,system_id,test,y,cost";
inline constexpr const char* kTestPctCsvHeader = "cycle,pct_partial1,pct_partial2,pct_proof";
inline constexpr const char* kRanksCsvHeader = "config_id,af,auc_ateer,auc_mse,rank_ateer,rank_mse";
inline constexpr const char* kSummaryCsvHeader =
    "config_id,af,trial,seed,auc_ateer,auc_mse,auc_sq_err_alpha,auc_sq_err_k,alpha_hat,k_hat,"
    "fit_failures";

inline void write_trace_csv(std::ostream& os, const Trace& t) {
  os << kTraceCsvHeader << '\n';
  for (const auto& c : t.cycles) {
    os << c.cycle << ',' << format_real(c.estimate.alpha()) << ',' << format_real(c.estimate.k())
       << ',' << format_real(c.ateer) << ',' << format_real(c.mse) << ',' << c.dataset_size << '\n';
  }
}

inline void write_selection_csv(std::ostream& os, const Trace& t) {
  os << kSelectionCsvHeader << '\n';
  for (const auto& s : t.selections) {
    os << s.cycle << ',' << s.system_id << ',' << to_string(s.test) << ',' << s.y << ','
       << format_real(s.cost) << '\n';
  }
}

/// Rows of a trace CSV, as written (values at 9 significant digits).
struct TraceRow {
  int cycle = 0;
  double alpha_hat = 0.0;
  double k_hat = 0.0;
  double ateer = 0.0;
  double mse = 0.0;
  std::size_t dataset_size = 0;
};

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(std::istream& is, const char* header,
                                                           std::size_t width) {
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw std::runtime_error(std::string("CSV: expected header '") + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != width) {
      throw std::runtime_error("CSV line " + std::to_string(lineno) + ": expected " +
                               std::to_string(width) + " fields");
    }
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace detail

inline std::vector<TraceRow> read_trace_csv(std::istream& is) {
  std::vector<TraceRow> out;
  for (const auto& f : detail::read_csv_rows(is, kTraceCsvHeader, 6)) {
    out.push_back({std::stoi(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]),
                   std::stod(f[4]), static_cast<std::size_t>(std::stoull(f[5]))});
  }
  return out;
}

inline std::vector<SelectionLogRow> read_selection_csv(std::istream& is) {
  std::vector<SelectionLogRow> out;
  for (const auto& f : detail::read_csv_rows(is, kSelectionCsvHeader, 5)) {
    out.push_back({std::stoi(f[0]), std::stoi(f[1]), parse_diagnostic_test(f[2]), std::stoi(f[3]),
                   std::stod(f[4])});
  }
  return out;
}

/// Simple static line chart of a trace's ATEER and MSE curves (log scale).
inline std::string trace_chart_svg(const Trace& t, const std::string& title) {
  const double w = 640, h = 360, pad = 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << pad << "\" y=\"20\" font-size=\"12\">" << title << "</text>\n";
  auto plot = [&](const std::vector<double>& v, const char* color, const char* label, int row) {
    if (v.size() < 2) return;
    double lo = 1e300, hi = -1e300;
    for (double x : v) {
      const double l = std::log10(std::max(x, 1e-300));
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x = pad + (w - 2 * pad) * static_cast<double>(i) / static_cast<double>(v.size() - 1);
      const double l = std::log10(std::max(v[i], 1e-300));
      const double y = h - pad - (h - 2 * pad) * (l - lo) / (hi - lo);
      os << format_real(x) << ',' << format_real(y) << ' ';
    }
    os << "\"/>\n<text x=\"" << w - 3 * pad << "\" y=\"" << 20 + 14 * row << "\" font-size=\"11\" fill=\""
       << color << "\">" << label << " (log)</text>\n";
  };
  plot(t.ateer_curve(), "#1f77b4", "ATEER", 0);
  plot(t.mse_curve(), "#d62728", "MSE", 1);
  os << "</svg>\n";
  return os.str();
}

// ---- grid execution ----

struct SummaryRow {
  std::string config_id;
  AcquisitionKind af = AcquisitionKind::Random;
  int trial = 0;
  std::uint64_t seed = 0;
  double auc_ateer = 0.0;
  double auc_mse = 0.0;
  double auc_sq_err_alpha = 0.0;
  double auc_sq_err_k = 0.0;
  double alpha_hat = 0.0;
  double k_hat = 0.0;
  int fit_failures = 0;
};

inline SummaryRow summarize(const GridCell& cell, AcquisitionKind af, int trial,
                            std::uint64_t seed, const Trace& t) {
  SummaryRow r;
  r.config_id = cell.id();
  r.af = af;
  r.trial = trial;
  r.seed = seed;
  std::vector<double> sa, sk;
  for (const auto& c : t.cycles) {
    sa.push_back(c.sq_err_alpha);
    sk.push_back(c.sq_err_k);
    r.fit_failures += c.fit_converged ? 0 : 1;
  }
  r.auc_ateer = auc(LearningCurve::from_values(t.ateer_curve()));
  r.auc_mse = auc(LearningCurve::from_values(t.mse_curve()));
  r.auc_sq_err_alpha = auc(LearningCurve::from_values(sa));
  r.auc_sq_err_k = auc(LearningCurve::from_values(sk));
  r.alpha_hat = t.cycles.back().estimate.alpha();
  r.k_hat = t.cycles.back().estimate.k();
  return r;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << kSummaryCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.config_id << ',' << to_string(r.af) << ',' << r.trial << ',' << r.seed << ','
       << format_real(r.auc_ateer) << ',' << format_real(r.auc_mse) << ','
       << format_real(r.auc_sq_err_alpha) << ',' << format_real(r.auc_sq_err_k) << ','
       << format_real(r.alpha_hat) << ',' << format_real(r.k_hat) << ',' << r.fit_failures << '\n';
  }
}

inline std::vector<SummaryRow> read_summary_csv(std::istream& is) {
  std::vector<SummaryRow> out;
  for (const auto& f : detail::read_csv_rows(is, kSummaryCsvHeader, 11)) {
    SummaryRow r;
    r.config_id = f[0];
    r.af = parse_acquisition(f[1]);
    r.trial = std::stoi(f[2]);
    r.seed = std::stoull(f[3]);
    r.auc_ateer = std::stod(f[4]);
    r.auc_mse = std::stod(f[5]);
    r.auc_sq_err_alpha = std::stod(f[6]);
    r.auc_sq_err_k = std::stod(f[7]);
    r.alpha_hat = std::stod(f[8]);
    r.k_hat = std::stod(f[9]);
    r.fit_failures = std::stoi(f[10]);
    out.push_back(std::move(r));
  }
  return out;
}

/// Per-configuration mean AUCs of each AF and their within-configuration ranks.
struct RankTable {
  struct Row {
    std::string config_id;
    std::string af;
    double auc_ateer = 0.0;
    double auc_mse = 0.0;
    double rank_ateer = 0.0;
    double rank_mse = 0.0;
  };
  std::vector<Row> rows;
  std::map<std::string, double> mean_rank_ateer;
  std::map<std::string, double> mean_rank_mse;
};

/// Averages AUCs over trials within each configuration, then ranks the AFs.
inline RankTable rank_summary(const std::vector<SummaryRow>& summary) {
  std::map<std::string, std::map<std::string, std::pair<double, int>>> ate, ms;
  std::vector<std::string> order;
  for (const auto& r : summary) {
    if (!ate.count(r.config_id)) order.push_back(r.config_id);
    auto& a = ate[r.config_id][std::string(to_string(r.af))];
    a.first += r.auc_ateer;
    ++a.second;
    auto& m = ms[r.config_id][std::string(to_string(r.af))];
    m.first += r.auc_mse;
    ++m.second;
  }
  std::map<std::string, std::map<std::string, double>> mean_a, mean_m;
  for (const auto& [cfg, row] : ate) {
    for (const auto& [af, v] : row) mean_a[cfg][af] = v.first / v.second;
  }
  for (const auto& [cfg, row] : ms) {
    for (const auto& [af, v] : row) mean_m[cfg][af] = v.first / v.second;
  }
  RankTable t;
  t.mean_rank_ateer = average_ranks(mean_a);
  t.mean_rank_mse = average_ranks(mean_m);
  for (const auto& cfg : order) {
    const auto ra = ranks_within(mean_a[cfg]);
    const auto rm = ranks_within(mean_m[cfg]);
    for (const auto& [af, v] : mean_a[cfg]) {
      t.rows.push_back({cfg, af, v, mean_m[cfg][af], ra.at(af), rm.at(af)});
    }
  }
  return t;
}

inline void write_ranks_csv(std::ostream& os, const RankTable& t) {
  os << kRanksCsvHeader << '\n';
  for (const auto& r : t.rows) {
    os << r.config_id << ',' << r.af << ',' << format_real(r.auc_ateer) << ','
       << format_real(r.auc_mse) << ',' << format_real(r.rank_ateer) << ','
       << format_real(r.rank_mse) << '\n';
  }
}

inline void write_mean_ranks_csv(std::ostream& os, const RankTable& t) {
  os << "af,mean_rank_ateer,mean_rank_mse\n";
  for (const auto& [af, v] : t.mean_rank_ateer) {
    os << af << ',' << format_real(v) << ',' << format_real(t.mean_rank_mse.at(af)) << '\n';
  }
}

struct RunOptions {
  unsigned threads = 1;
  bool charts = false;
  /// Receives progress and per-cell failure messages.
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

struct GridResult {
  std::vector<SummaryRow> summary;
  RankTable ranks;
  std::vector<std::string> failed_cells;
};

/// Runs every cell x AF x trial. Cells are the scheduling unit; each writes
/// only below cells/<cell id>/. Aggregates are written once all cells finish.
inline GridResult run_grid(const ExperimentGrid& grid, const std::filesystem::path& out_dir,
                           const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  const auto cells = expand(grid);
  fs::create_directories(out_dir / "cells");
  save_config(grid, out_dir / "config.json");

  std::vector<std::vector<SummaryRow>> per_cell(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto log = [&](const std::string& m) {
    std::lock_guard lock(log_mu);
    opt.log(m);
  };

  ExperimentOptions eopt;
  eopt.ateer_horizon = grid.ateer_horizon;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& cell = cells[i];
      try {
        const fs::path cell_dir = out_dir / "cells" / cell.id();
        for (auto af : grid.afs) {
          const fs::path af_dir = cell_dir / std::string(to_string(af));
          fs::create_directories(af_dir);
          std::vector<std::array<double, 3>> pct(static_cast<std::size_t>(grid.cycles));
          for (int trial = 0; trial < grid.trials; ++trial) {
            const auto wc = world_config(grid, cell, trial);
            const auto trace = run_experiment(wc, af, eopt);
            char name[32];
            std::snprintf(name, sizeof(name), "t%03d", trial);
            {
              std::ofstream f(af_dir / (std::string("trace_") + name + ".csv"), std::ios::binary);
              write_trace_csv(f, trace);
            }
            {
              std::ofstream f(af_dir / (std::string("selections_") + name + ".csv"), std::ios::binary);
              write_selection_csv(f, trace);
            }
            if (opt.charts) {
              std::ofstream f(af_dir / (std::string("trace_") + name + ".svg"), std::ios::binary);
              f << trace_chart_svg(trace, cell.id() + " " + std::string(to_string(af)) + " " + name);
            }
            for (const auto& c : trace.cycles) {
              const int total = c.tests_run[0] + c.tests_run[1] + c.tests_run[2];
              for (std::size_t t = 0; t < 3; ++t) {
                pct[static_cast<std::size_t>(c.cycle - 1)][t] +=
                    total > 0 ? 100.0 * c.tests_run[t] / total : 0.0;
              }
            }
            per_cell[i].push_back(summarize(cell, af, trial, wc.seed, trace));
          }
          std::ofstream f(af_dir / "test_pct.csv", std::ios::binary);
          f << kTestPctCsvHeader << '\n';
          for (std::size_t c = 0; c < pct.size(); ++c) {
            f << c + 1;
            for (double v : pct[c]) f << ',' << format_real(v / grid.trials);
            f << '\n';
          }
        }
        log("done " + cell.id());
      } catch (const std::exception& e) {
        errors[i] = e.what();
        per_cell[i].clear();
        log("FAILED " + cell.id() + ": " + e.what());
      }
    }
  };

  const unsigned n = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(cells.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  GridResult res;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) res.failed_cells.push_back(cells[i].id());
    for (auto& r : per_cell[i]) res.summary.push_back(std::move(r));
  }
  res.ranks = rank_summary(res.summary);
  {
    std::ofstream f(out_dir / "summary.csv", std::ios::binary);
    write_summary_csv(f, res.summary);
  }
  {
    std::ofstream f(out_dir / "ranks.csv", std::ios::binary);
    write_ranks_csv(f, res.ranks);
  }
  {
    std::ofstream f(out_dir / "mean_ranks.csv", std::ios::binary);
    write_mean_ranks_csv(f, res.ranks);
  }
  return res;
}

}  // namespace partial_al
