#include "dddiv/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace dddiv {

namespace {

bool is_never_token(std::string_view s) {
  if (s.empty()) return true;
  if (s.size() != 3) return false;
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  return lower(s[0]) == 'i' && lower(s[1]) == 'n' && lower(s[2]) == 'f';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == delimiter) {
      out.emplace_back(trim(std::string_view(line).substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

int parse_int(std::string_view s, std::size_t row) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::MalformedValue,
                "integer expected at row " + std::to_string(row) + ", got '" + std::string(s) + "'");
  }
  return v;
}

double parse_real(std::string_view s, std::size_t row) {
  // strtod rather than from_chars<double>: accepts the exponent forms R and
  // Python writers commonly emit.
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || tmp.empty()) {
    throw Error(ErrorCode::MalformedValue,
                "real number expected at row " + std::to_string(row) + ", got '" + tmp + "'");
  }
  return v;
}

// Design instrument value for unit attributes (a, c) at calendar time t.
int design_instrument(PanelMode mode, int a, Cohort c, int t) {
  if (a != 1) return 0;
  if (mode == PanelMode::TwoPeriod) {
    return (!c.is_never() && c.value() == 1 && t == 1) ? 1 : 0;
  }
  return (!c.is_never() && t >= c.value()) ? 1 : 0;
}

}  // namespace

PanelDataset with_instrument(const PanelDataset& dataset, std::vector<int> z) {
  PanelDataset out = dataset;
  out.instrument_ = std::move(z);
  out.has_instrument_ = true;
  return out;
}

PanelDataset PanelDataset::from_records(std::vector<PanelRecord> records, PanelMode mode,
                                        int max_treatment) {
  if (max_treatment < 1) throw Error(ErrorCode::MalformedValue, "max_treatment must be >= 1");
  if (records.empty()) throw Error(ErrorCode::MalformedValue, "no records");

  std::set<int> period_set;
  for (const auto& r : records) period_set.insert(r.time);
  std::vector<int> periods(period_set.begin(), period_set.end());

  if (mode == PanelMode::TwoPeriod) {
    if (periods.size() != 2 || periods[0] != 0 || periods[1] != 1) {
      throw Error(ErrorCode::ModeMismatch, "two-period mode requires periods {0,1}");
    }
  } else {
    if (periods.size() < 2 || periods.front() != 1 ||
        periods.back() != static_cast<int>(periods.size())) {
      throw Error(ErrorCode::ModeMismatch, "staggered mode requires periods {1,...,T}, T >= 2");
    }
  }

  // Group rows per unit, checking attribute constancy and the balance rule.
  struct UnitRows {
    Cohort cohort = Cohort::never();
    int group_a = 0;
    bool seen = false;
    std::vector<const PanelRecord*> rows;
  };
  std::unordered_map<std::string, UnitRows> by_unit;
  for (const auto& r : records) {
    if (r.treatment < 0 || r.treatment > max_treatment) {
      throw Error(ErrorCode::MalformedValue,
                  "treatment out of range [0," + std::to_string(max_treatment) + "] for unit " + r.unit_id);
    }
    if (r.group_a != 0 && r.group_a != 1) {
      throw Error(ErrorCode::MalformedValue, "group flag must be 0/1 for unit " + r.unit_id);
    }
    if (mode == PanelMode::TwoPeriod) {
      if (r.cohort.is_never() || (r.cohort.value() != 0 && r.cohort.value() != 1)) {
        throw Error(ErrorCode::MalformedValue, "two-period cohort flag must be 0/1 for unit " + r.unit_id);
      }
    } else if (!r.cohort.is_never() && r.cohort.value() < 2) {
      throw Error(ErrorCode::MalformedValue, "staggered cohort must be >= 2 or never for unit " + r.unit_id);
    }
    auto& slot = by_unit[r.unit_id];
    if (!slot.seen) {
      slot.cohort = r.cohort;
      slot.group_a = r.group_a;
      slot.seen = true;
    } else if (slot.cohort != r.cohort || slot.group_a != r.group_a) {
      throw Error(ErrorCode::NonConstantUnitAttribute, r.unit_id);
    }
    slot.rows.push_back(&r);
  }

  std::vector<std::string> unit_ids;
  unit_ids.reserve(by_unit.size());
  for (const auto& [id, _] : by_unit) unit_ids.push_back(id);
  std::sort(unit_ids.begin(), unit_ids.end());

  PanelDataset ds;
  ds.mode_ = mode;
  ds.max_treatment_ = max_treatment;
  ds.periods_ = periods;
  ds.unit_ids_ = unit_ids;
  const std::size_t P = periods.size();
  ds.cohorts_.reserve(unit_ids.size());
  ds.group_a_.reserve(unit_ids.size());
  ds.outcome_.assign(unit_ids.size() * P, 0.0);
  ds.treatment_.assign(unit_ids.size() * P, 0);
  ds.instrument_.assign(unit_ids.size() * P, -1);

  bool any_instrument = false, all_instrument = true;
  for (std::size_t u = 0; u < unit_ids.size(); ++u) {
    const auto& slot = by_unit[unit_ids[u]];
    ds.cohorts_.push_back(slot.cohort);
    ds.group_a_.push_back(static_cast<std::uint8_t>(slot.group_a));

    if (slot.rows.size() != P) throw Error(ErrorCode::UnbalancedPanel, unit_ids[u]);
    std::vector<bool> filled(P, false);
    for (const PanelRecord* r : slot.rows) {
      auto it = std::lower_bound(periods.begin(), periods.end(), r->time);
      std::size_t p = static_cast<std::size_t>(it - periods.begin());
      if (filled[p]) throw Error(ErrorCode::UnbalancedPanel, unit_ids[u]);
      filled[p] = true;
      ds.outcome_[u * P + p] = r->outcome;
      ds.treatment_[u * P + p] = r->treatment;
      ds.instrument_[u * P + p] = r->instrument;
      if (r->instrument >= 0) {
        if (r->instrument > 1) throw Error(ErrorCode::MalformedValue, "instrument must be 0/1 for unit " + r->unit_id);
        any_instrument = true;
      } else {
        all_instrument = false;
      }
    }
  }
  if (any_instrument && !all_instrument) {
    throw Error(ErrorCode::MalformedValue, "instrument column partially populated");
  }
  ds.has_instrument_ = all_instrument;
  return ds;
}

int PanelDataset::period_index(int time) const {
  auto it = std::lower_bound(periods_.begin(), periods_.end(), time);
  if (it == periods_.end() || *it != time) {
    throw Error(ErrorCode::MalformedValue, "period " + std::to_string(time) + " not in panel");
  }
  return static_cast<int>(it - periods_.begin());
}

std::vector<PanelRecord> PanelDataset::to_records() const {
  std::vector<PanelRecord> out;
  out.reserve(n_units() * n_periods());
  for (std::size_t u = 0; u < n_units(); ++u) {
    for (std::size_t p = 0; p < n_periods(); ++p) {
      PanelRecord r;
      r.unit_id = unit_ids_[u];
      r.time = periods_[p];
      r.outcome = outcome(u, p);
      r.treatment = treatment(u, p);
      r.instrument = has_instrument_ ? instrument(u, p) : -1;
      r.group_a = group_a_[u];
      r.cohort = cohorts_[u];
      out.push_back(std::move(r));
    }
  }
  return out;
}

PanelDataset load_panel(std::istream& source, const ColumnMap& schema, PanelMode mode,
                        char delimiter, int max_treatment) {
  std::string line;
  if (!std::getline(source, line)) throw Error(ErrorCode::MalformedValue, "empty input");
  auto header = split_line(line, delimiter);

  auto find_col = [&](const std::string& name, bool required) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    if (required) throw Error(ErrorCode::MissingColumn, name);
    return -1;
  };

  const int c_unit = find_col(schema.unit, true);
  const int c_time = find_col(schema.time, true);
  const int c_y = find_col(schema.outcome, true);
  const int c_d = find_col(schema.treatment, true);
  const int c_z = find_col(schema.instrument, false);
  const int c_a = find_col(schema.group_a, true);
  const int c_cohort = find_col(schema.cohort, true);

  std::vector<PanelRecord> records;
  std::size_t row = 1;
  while (std::getline(source, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto fields = split_line(line, delimiter);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::MalformedValue, "wrong field count at row " + std::to_string(row));
    }
    PanelRecord r;
    r.unit_id = fields[c_unit];
    if (r.unit_id.empty()) throw Error(ErrorCode::MalformedValue, "empty unit id at row " + std::to_string(row));
    r.time = parse_int(fields[c_time], row);
    r.outcome = parse_real(fields[c_y], row);
    r.treatment = parse_int(fields[c_d], row);
    if (c_z >= 0) r.instrument = parse_int(fields[c_z], row);
    r.group_a = parse_int(fields[c_a], row);
    const std::string& cf = fields[c_cohort];
    r.cohort = is_never_token(cf) ? Cohort::never() : Cohort::of(parse_int(cf, row));
    records.push_back(std::move(r));
  }
  return PanelDataset::from_records(std::move(records), mode, max_treatment);
}

void write_panel_csv(std::ostream& out, const PanelDataset& dataset, char delimiter) {
  const char d = delimiter;
  out << "unit" << d << "time" << d << "y" << d << "d" << d;
  if (dataset.has_instrument()) out << "z" << d;
  out << "a" << d << "cohort\n";
  for (std::size_t u = 0; u < dataset.n_units(); ++u) {
    for (std::size_t p = 0; p < dataset.n_periods(); ++p) {
      out << dataset.unit_id(u) << d << dataset.periods()[p] << d
          << format_double(dataset.outcome(u, p)) << d << dataset.treatment(u, p) << d;
      if (dataset.has_instrument()) out << dataset.instrument(u, p) << d;
      out << dataset.group_a(u) << d << dataset.cohort(u).to_string() << "\n";
    }
  }
}

PanelDataset derive_instrument(const PanelDataset& dataset) {
  const std::size_t P = dataset.n_periods();
  std::vector<int> z(dataset.n_units() * P, 0);
  for (std::size_t u = 0; u < dataset.n_units(); ++u) {
    for (std::size_t p = 0; p < P; ++p) {
      z[u * P + p] = design_instrument(dataset.mode(), dataset.group_a(u), dataset.cohort(u),
                                       dataset.periods()[p]);
    }
  }
  return with_instrument(dataset, std::move(z));
}

const char* design_rule_name(DesignRule rule) {
  switch (rule) {
    case DesignRule::NonZeroFirstPeriod: return "NonZeroFirstPeriod";
    case DesignRule::NonMonotoneInstrument: return "NonMonotoneInstrument";
    case DesignRule::InstrumentOutsideDesign: return "InstrumentOutsideDesign";
    case DesignRule::InstrumentMissingExposure: return "InstrumentMissingExposure";
  }
  return "UnknownRule";
}

std::vector<DesignViolation> validate_design(const PanelDataset& dataset) {
  if (!dataset.has_instrument()) {
    throw Error(ErrorCode::MalformedValue, "instrument column not populated; derive it first");
  }
  std::vector<DesignViolation> out;
  const auto& periods = dataset.periods();
  for (std::size_t u = 0; u < dataset.n_units(); ++u) {
    if (dataset.instrument(u, 0) != 0) {
      out.push_back({DesignRule::NonZeroFirstPeriod, dataset.unit_id(u), periods[0]});
    }
    if (dataset.mode() == PanelMode::Staggered) {
      for (std::size_t p = 1; p < periods.size(); ++p) {
        if (dataset.instrument(u, p) < dataset.instrument(u, p - 1)) {
          out.push_back({DesignRule::NonMonotoneInstrument, dataset.unit_id(u), periods[p]});
        }
      }
    }
    for (std::size_t p = 0; p < periods.size(); ++p) {
      int want = design_instrument(dataset.mode(), dataset.group_a(u), dataset.cohort(u), periods[p]);
      int got = dataset.instrument(u, p);
      if (got == want) continue;
      out.push_back({got > want ? DesignRule::InstrumentOutsideDesign
                                : DesignRule::InstrumentMissingExposure,
                     dataset.unit_id(u), periods[p]});
    }
  }
  return out;
}

std::string format_violation(const DesignViolation& v) {
  std::ostringstream os;
  os << design_rule_name(v.rule) << " unit=" << v.unit << " t=" << v.period;
  return os.str();
}

CohortIndex cohort_index(const PanelDataset& dataset) {
  if (dataset.mode() != PanelMode::Staggered) {
    throw Error(ErrorCode::ModeMismatch, "cohort_index requires staggered mode");
  }
  CohortIndex idx;
  for (std::size_t u = 0; u < dataset.n_units(); ++u) {
    idx.units[dataset.cohort(u)].push_back(u);
  }
  idx.has_never = idx.units.count(Cohort::never()) > 0;
  for (const auto& [c, _] : idx.units) {
    if (!c.is_never()) {
      idx.last_exposed = idx.last_exposed ? std::max(*idx.last_exposed, c.value()) : c.value();
    }
  }
  return idx;
}

}  // namespace dddiv
