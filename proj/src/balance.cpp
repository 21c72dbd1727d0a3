#include "fatlens/balance.hpp"

#include <cstdio>
#include <set>

#include "fatlens/common.hpp"
#include "fatlens/fileio.hpp"

namespace fatlens::corpus {

double BalanceReport::significant_fraction() const {
  return complaints_tested ? static_cast<double>(complaints_significant) /
                                 static_cast<double>(complaints_tested)
                           : 0.0;
}

std::string BalanceReport::summary() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu of %zu (%.1f%%)", complaints_significant, complaints_tested,
                100.0 * significant_fraction());
  return buf;
}

std::string BalanceReport::to_csv() const {
  CsvWriter w({"outcome", "kind", "coef", "se", "t", "p", "stars", "n"});
  for (const auto& o : outcomes)
    w.add_row({o.outcome, o.complaint ? "complaint" : "demographic", format_double(o.high.coef),
               format_double(o.high.se), format_double(o.high.t), format_double(o.high.p),
               o.high.stars(), std::to_string(o.n)});
  return w.str();
}

BalanceReport balance_check(const std::vector<econ::AnalysisRow>& all_rows, double alpha) {
  std::vector<econ::AnalysisRow> rows;
  bool has_high = false, has_low = false;
  for (const auto& r : all_rows) {
    if (r.workload_class == WorkloadClass::mid) continue;
    (r.workload_class == WorkloadClass::high ? has_high : has_low) = true;
    rows.push_back(r);
  }
  if (!has_high || !has_low)
    fail(ErrorKind::data, "balance check needs both high- and low-workload rows");

  econ::DataFrame df = econ::analysis_frame(rows);
  const std::size_t n = rows.size();
  std::vector<std::string> outcomes;
  auto add = [&](const std::string& name, std::vector<double> v) {
    df.add_numeric("y:" + name, std::move(v));
    outcomes.push_back("y:" + name);
  };
  {
    std::vector<double> female(n), age(n);
    for (std::size_t i = 0; i < n; ++i) {
      female[i] = rows[i].sex == Sex::female ? 1.0 : 0.0;
      age[i] = rows[i].age;
    }
    add("female", std::move(female));
    for (Race race : {Race::black, Race::hispanic, Race::other}) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = rows[i].race == race ? 1.0 : 0.0;
      add(std::string("race=") + to_string(race), std::move(v));
    }
    add("age", std::move(age));
  }
  const std::size_t demographic_count = outcomes.size();
  std::set<std::string> complaints;
  for (const auto& r : rows) complaints.insert(r.complaints.begin(), r.complaints.end());
  for (const auto& c : complaints) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& x : rows[i].complaints)
        if (x == c) v[i] = 1.0;
    add("cc=" + c, std::move(v));
  }

  econ::DesignSpec spec;
  spec.regressors = {"high"};
  spec.controls = {econ::Control::time_of_day, econ::Control::day_of_week,
                   econ::Control::week_of_year, econ::Control::year, econ::Control::physician};
  const auto fits = econ::fit_ols_many(df, outcomes, spec);

  BalanceReport rep;
  rep.alpha = alpha;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    BalanceOutcome o;
    o.outcome = outcomes[i].substr(2);
    o.complaint = i >= demographic_count;
    const econ::Term* t = fits[i].find("high");
    if (!t) fail(ErrorKind::data, "high-workload indicator is collinear with the controls");
    o.high = *t;
    o.n = fits[i].n;
    if (o.complaint) {
      ++rep.complaints_tested;
      if (o.high.p < alpha) ++rep.complaints_significant;
    }
    rep.outcomes.push_back(std::move(o));
  }
  return rep;
}

BalanceReport balance_check(const std::vector<NoteRecord>& notes,
                            const std::vector<Encounter>& encounters,
                            const std::vector<Shift>& shifts,
                            const std::vector<WorkloadLabel>& labels, const TimeZone& tz,
                            double alpha) {
  return balance_check(econ::build_analysis_rows(notes, encounters, shifts, labels, {}, tz), alpha);
}

}  // namespace fatlens::corpus
