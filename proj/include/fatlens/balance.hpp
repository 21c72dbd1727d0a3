#pragma once

#include <string>
#include <vector>

#include "fatlens/econometrics.hpp"

namespace fatlens::corpus {

struct BalanceOutcome {
  std::string outcome;  // "female", "race=black", "age", "cc=<complaint>"
  bool complaint = false;
  econ::Term high;  // coefficient on the high-workload indicator
  std::size_t n = 0;
};

struct BalanceReport {
  std::vector<BalanceOutcome> outcomes;
  std::size_t complaints_tested = 0;
  std::size_t complaints_significant = 0;
  double alpha = 0.05;

  double significant_fraction() const;
  // "10 of 154 (6.5%)"
  std::string summary() const;
  std::string to_csv() const;
};

// Regresses each demographic and each chief-complaint indicator on the
// high-workload indicator over high/low rows, with time and physician controls.
BalanceReport balance_check(const std::vector<econ::AnalysisRow>& rows, double alpha = 0.05);

BalanceReport balance_check(const std::vector<NoteRecord>& notes,
                            const std::vector<Encounter>& encounters,
                            const std::vector<Shift>& shifts,
                            const std::vector<WorkloadLabel>& labels,
                            const TimeZone& tz = TimeZone::utc(), double alpha = 0.05);

}  // namespace fatlens::corpus
