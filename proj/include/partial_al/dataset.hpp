// The labeled set: append-only diagnostic-test interval records.
#pragma once

#include <array>
#include <cstdio>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "partial_al/coverage.hpp"

namespace partial_al {

/// One observed test interval. agelt[i] is subsystem i's age at its previous
/// test; t_age is the system age when this test ran.
struct TestRecord {
  int y = 0;
  double t_age = 0.0;
  std::array<double, 3> agelt{};
  PTVector pt = PTVector::none();
  int system_id = 0;
  int cycle = 0;

  friend bool operator==(const TestRecord&, const TestRecord&) = default;
};

inline void validate(const TestRecord& r) {
  if (r.y != 0 && r.y != 1) throw std::invalid_argument("TestRecord: y must be 0 or 1");
  for (double s : r.agelt) {
    if (!(s >= 0.0) || s > r.t_age) {
      throw std::invalid_argument("TestRecord: last-test ages must lie in [0, t_age]");
    }
  }
}

/// Read-only view of the records at the time it was taken.
class DatasetSnapshot {
 public:
  DatasetSnapshot() : records_(std::make_shared<const std::vector<TestRecord>>()) {}
  explicit DatasetSnapshot(std::shared_ptr<const std::vector<TestRecord>> r)
      : records_(std::move(r)) {}

  std::size_t size() const noexcept { return records_->size(); }
  bool empty() const noexcept { return records_->empty(); }
  const TestRecord& operator[](std::size_t i) const { return (*records_)[i]; }
  auto begin() const { return records_->begin(); }
  auto end() const { return records_->end(); }

 private:
  std::shared_ptr<const std::vector<TestRecord>> records_;
};

class Dataset {
 public:
  Dataset() : records_(std::make_shared<std::vector<TestRecord>>()) {}

  /// Throws std::invalid_argument if the record is malformed or does not
  /// advance its system's age.
  void append(const TestRecord& r) {
    validate(r);
    if (auto it = last_age_.find(r.system_id); it != last_age_.end() && !(r.t_age > it->second)) {
      throw std::invalid_argument("Dataset::append: t_age must increase per system (system " +
                                  std::to_string(r.system_id) + ")");
    }
    // copy-on-write: outstanding snapshots keep the old vector
    if (records_.use_count() > 1) records_ = std::make_shared<std::vector<TestRecord>>(*records_);
    records_->push_back(r);
    last_age_[r.system_id] = r.t_age;
  }

  std::size_t size() const noexcept { return records_->size(); }
  bool empty() const noexcept { return records_->empty(); }
  const TestRecord& operator[](std::size_t i) const { return (*records_)[i]; }
  auto begin() const { return std::as_const(*records_).begin(); }
  auto end() const { return std::as_const(*records_).end(); }

  /// Number of records per system.
  std::map<int, std::size_t> counts_by_system() const {
    std::map<int, std::size_t> out;
    for (const auto& r : *records_) ++out[r.system_id];
    return out;
  }

  DatasetSnapshot snapshot() const { return DatasetSnapshot{records_}; }

 private:
  std::shared_ptr<std::vector<TestRecord>> records_;
  std::map<int, double> last_age_;
};

// ---- CSV ----

inline constexpr const char* kRecordCsvHeader =
    "system_id,cycle,y,t_age,agelt1,agelt2,agelt3,pt1,pt2,pt3";

/// 9 significant digits, shortest %g form.
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

template <class Records>
void write_records_csv(std::ostream& os, const Records& records) {
  os << kRecordCsvHeader << '\n';
  for (const TestRecord& r : records) {
    os << r.system_id << ',' << r.cycle << ',' << r.y << ',' << format_real(r.t_age) << ','
       << format_real(r.agelt[0]) << ',' << format_real(r.agelt[1]) << ','
       << format_real(r.agelt[2]) << ',' << r.pt[0] << ',' << r.pt[1] << ',' << r.pt[2] << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Parses the CSV produced by write_records_csv. Records are validated but not
/// re-checked for per-system ordering.
inline std::vector<TestRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kRecordCsvHeader) {
    throw std::runtime_error("records CSV: missing or unexpected header");
  }
  std::vector<TestRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) {
      throw std::runtime_error("records CSV line " + std::to_string(lineno) + ": expected 10 fields");
    }
    try {
      TestRecord r;
      r.system_id = std::stoi(f[0]);
      r.cycle = std::stoi(f[1]);
      r.y = std::stoi(f[2]);
      r.t_age = std::stod(f[3]);
      r.agelt = {std::stod(f[4]), std::stod(f[5]), std::stod(f[6])};
      r.pt = PTVector::from_flags(std::stoi(f[7]), std::stoi(f[8]), std::stoi(f[9]));
      validate(r);
      out.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error("records CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace partial_al
