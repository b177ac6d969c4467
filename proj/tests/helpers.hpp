#pragma once

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dddiv/panel.hpp"

namespace testutil {

using namespace dddiv;

inline PanelRecord rec(std::string id, int t, double y, int d, int a, Cohort c, int z = -1) {
  PanelRecord r;
  r.unit_id = std::move(id);
  r.time = t;
  r.outcome = y;
  r.treatment = d;
  r.instrument = z;
  r.group_a = a;
  r.cohort = c;
  return r;
}

inline std::string uid(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%05zu", i);
  return buf;
}

// Two-period dataset with explicit per-unit changes: each spec entry is one
// unit (cohort flag, group flag, y0, dy, d0, dd).
struct UnitSpec {
  int c;
  int a;
  double y0;
  double dy;
  int d0;
  int dd;
};

inline PanelDataset two_period_dataset(const std::vector<UnitSpec>& units, int max_treatment = 1) {
  std::vector<PanelRecord> records;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& s = units[i];
    records.push_back(rec(uid(i), 0, s.y0, s.d0, s.a, Cohort::of(s.c)));
    records.push_back(rec(uid(i), 1, s.y0 + s.dy, s.d0 + s.dd, s.a, Cohort::of(s.c)));
  }
  return PanelDataset::from_records(std::move(records), PanelMode::TwoPeriod, max_treatment);
}

// Randomized two-period dataset with a guaranteed first stage: compliers in
// the exposed (C=1, A=1) cell switch treatment on at t=1.
inline PanelDataset random_two_period(std::mt19937_64& rng, std::size_t per_cell = 12) {
  std::uniform_real_distribution<double> y(-4.0, 4.0);
  std::bernoulli_distribution coin(0.3);
  std::vector<UnitSpec> units;
  for (int c = 0; c <= 1; ++c) {
    for (int a = 0; a <= 1; ++a) {
      for (std::size_t k = 0; k < per_cell; ++k) {
        UnitSpec s;
        s.c = c;
        s.a = a;
        s.y0 = y(rng);
        s.dy = y(rng);
        bool complier = (c == 1 && a == 1 && k < per_cell / 2);
        s.d0 = complier ? 0 : (coin(rng) ? 1 : 0);
        s.dd = complier ? 1 : 0;
        units.push_back(s);
      }
    }
  }
  return two_period_dataset(units);
}

// Outcomes on a dyadic grid with power-of-two cell sizes: every cell mean,
// integer shift, and contrast stays exactly representable, so algebraic
// invariances can be asserted bit for bit.
inline constexpr double kGridStep = 1.0 / (1 << 20);

inline double grid_value(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> m(-(1 << 22), 1 << 22);
  return m(rng) * kGridStep;
}

inline PanelDataset grid_two_period(std::mt19937_64& rng, std::size_t per_cell = 8) {
  std::vector<UnitSpec> units;
  std::bernoulli_distribution d0(0.25);
  for (int c = 0; c <= 1; ++c) {
    for (int a = 0; a <= 1; ++a) {
      for (std::size_t k = 0; k < per_cell; ++k) {
        UnitSpec s;
        s.c = c;
        s.a = a;
        s.y0 = grid_value(rng);
        s.dy = grid_value(rng);
        bool complier = (c == 1 && a == 1 && k < per_cell / 2);
        s.d0 = complier ? 0 : (d0(rng) ? 1 : 0);
        s.dd = complier ? 1 : 0;
        units.push_back(s);
      }
    }
  }
  return two_period_dataset(units);
}

// Staggered dataset from per-unit outcome/treatment paths.
struct StaggeredUnit {
  Cohort cohort;
  int a;
  std::vector<double> y;
  std::vector<int> d;
};

inline PanelDataset staggered_dataset(const std::vector<StaggeredUnit>& units) {
  std::vector<PanelRecord> records;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& s = units[i];
    for (std::size_t p = 0; p < s.y.size(); ++p) {
      records.push_back(rec(uid(i), static_cast<int>(p) + 1, s.y[p], s.d[p], s.a, s.cohort));
    }
  }
  return PanelDataset::from_records(std::move(records), PanelMode::Staggered, 1);
}

// Random staggered dataset with cohorts {2, 3, never} and a real first stage
// for every cohort.
inline PanelDataset random_staggered(std::mt19937_64& rng, int T = 4, std::size_t per_cell = 6) {
  std::uniform_real_distribution<double> y(-3.0, 3.0);
  std::vector<StaggeredUnit> units;
  for (Cohort c : {Cohort::of(2), Cohort::of(3), Cohort::never()}) {
    for (int a = 0; a <= 1; ++a) {
      for (std::size_t k = 0; k < per_cell; ++k) {
        StaggeredUnit su{c, a, {}, {}};
        const int e = c.is_never() ? T + 1 : c.value();
        const bool complier = a == 1 && k < per_cell / 2;
        for (int t = 1; t <= T; ++t) {
          su.y.push_back(y(rng));
          su.d.push_back((complier && t >= e) ? 1 : 0);
        }
        units.push_back(su);
      }
    }
  }
  return staggered_dataset(units);
}

}  // namespace testutil
