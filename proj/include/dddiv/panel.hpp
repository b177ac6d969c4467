#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dddiv/common.hpp"

namespace dddiv {

enum class PanelMode { TwoPeriod, Staggered };

// Exposure cohort. Two-period mode reuses it as the exposed-group flag
// (values 0/1); staggered mode allows finite adoption dates >= 2 or the
// never-exposed sentinel. The sentinel is a distinct state, not a large
// integer, so it can never leak into arithmetic.
class Cohort {
 public:
  static Cohort never() { return Cohort(kNeverRaw); }
  static Cohort of(int value) {
    if (value == kNeverRaw) throw Error(ErrorCode::MalformedValue, "reserved cohort value");
    return Cohort(value);
  }

  bool is_never() const { return raw_ == kNeverRaw; }
  int value() const {
    if (is_never()) throw Error(ErrorCode::MalformedValue, "never-exposed cohort has no finite value");
    return raw_;
  }

  friend bool operator==(Cohort lhs, Cohort rhs) { return lhs.raw_ == rhs.raw_; }
  friend bool operator!=(Cohort lhs, Cohort rhs) { return lhs.raw_ != rhs.raw_; }
  // Finite cohorts ascending; never-exposed sorts last.
  friend bool operator<(Cohort lhs, Cohort rhs) {
    if (lhs.is_never()) return false;
    if (rhs.is_never()) return true;
    return lhs.raw_ < rhs.raw_;
  }

  std::string to_string() const { return is_never() ? "inf" : std::to_string(raw_); }

 private:
  static constexpr int kNeverRaw = std::numeric_limits<int>::min();
  explicit Cohort(int raw) : raw_(raw) {}
  int raw_;
};

struct PanelRecord {
  std::string unit_id;
  int time = 0;
  double outcome = 0.0;
  int treatment = 0;
  int instrument = -1;  // -1 = not provided; filled by derive_instrument
  int group_a = 0;
  Cohort cohort = Cohort::never();
};

// Immutable balanced panel in dense unit-major layout. Units are kept in
// lexicographic id order and periods ascending, so any estimator pass over
// the dataset is independent of input row order.
class PanelDataset {
 public:
  static PanelDataset from_records(std::vector<PanelRecord> records, PanelMode mode,
                                   int max_treatment = 1);

  PanelMode mode() const { return mode_; }
  int max_treatment() const { return max_treatment_; }
  bool has_instrument() const { return has_instrument_; }

  std::size_t n_units() const { return unit_ids_.size(); }
  std::size_t n_periods() const { return periods_.size(); }
  const std::vector<int>& periods() const { return periods_; }
  int period_index(int time) const;

  const std::string& unit_id(std::size_t u) const { return unit_ids_[u]; }
  Cohort cohort(std::size_t u) const { return cohorts_[u]; }
  int group_a(std::size_t u) const { return group_a_[u]; }

  double outcome(std::size_t u, std::size_t p) const { return outcome_[u * periods_.size() + p]; }
  int treatment(std::size_t u, std::size_t p) const { return treatment_[u * periods_.size() + p]; }
  int instrument(std::size_t u, std::size_t p) const { return instrument_[u * periods_.size() + p]; }

  std::vector<PanelRecord> to_records() const;

 private:
  PanelDataset() = default;

  PanelMode mode_ = PanelMode::TwoPeriod;
  int max_treatment_ = 1;
  bool has_instrument_ = false;
  std::vector<std::string> unit_ids_;
  std::vector<Cohort> cohorts_;
  std::vector<std::uint8_t> group_a_;
  std::vector<int> periods_;
  // unit-major, period-minor
  std::vector<double> outcome_;
  std::vector<int> treatment_;
  std::vector<int> instrument_;

  friend PanelDataset with_instrument(const PanelDataset&, std::vector<int>);
};

struct ColumnMap {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "y";
  std::string treatment = "d";
  std::string instrument = "z";  // optional column
  std::string group_a = "a";
  std::string cohort = "cohort";
};

// Delimited-text ingestion. Header row required; the never-exposed cohort is
// written "inf" (case-insensitive) or an empty cell. The instrument column
// may be absent, in which case derive_instrument supplies it.
PanelDataset load_panel(std::istream& source, const ColumnMap& schema, PanelMode mode,
                        char delimiter = ',', int max_treatment = 1);

void write_panel_csv(std::ostream& out, const PanelDataset& dataset, char delimiter = ',');

// Sets Z from the design rule: Z=1 exactly when A=1 and the unit's cohort is
// exposed at t (two-period: C=1 and t=1; staggered: finite C=c and t >= c).
PanelDataset derive_instrument(const PanelDataset& dataset);

enum class DesignRule {
  NonZeroFirstPeriod,
  NonMonotoneInstrument,
  InstrumentOutsideDesign,
  InstrumentMissingExposure,
};

const char* design_rule_name(DesignRule rule);

struct DesignViolation {
  DesignRule rule;
  std::string unit;
  int period;
};

// Checks the observed instrument against the design: zero in the first
// period, non-decreasing within unit (staggered), and exactly equal to the
// A-by-cohort assignment rule. Violations are data, not failures.
std::vector<DesignViolation> validate_design(const PanelDataset& dataset);

std::string format_violation(const DesignViolation& v);

struct CohortIndex {
  std::map<Cohort, std::vector<std::size_t>> units;
  bool has_never = false;
  std::optional<int> last_exposed;  // max finite cohort present
};

CohortIndex cohort_index(const PanelDataset& dataset);

}  // namespace dddiv
