#include "fatlens/econometrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "fatlens/common.hpp"
#include "fatlens/fileio.hpp"
#include "fatlens/svg.hpp"

namespace fatlens::econ {

// ---- DataFrame ------------------------------------------------------------------

namespace {

template <typename Map>
void check_new(const Map& m, const std::string& name, std::size_t rows, std::size_t got) {
  if (m.count(name)) fail(ErrorKind::invalid_argument, "duplicate column '" + name + "'");
  if (got != rows) fail(ErrorKind::invalid_argument, "column '" + name + "' has the wrong length");
}

}  // namespace

void DataFrame::add_numeric(const std::string& name, std::vector<double> values) {
  if (has(name)) fail(ErrorKind::invalid_argument, "duplicate column '" + name + "'");
  check_new(numeric_, name, rows_, values.size());
  numeric_[name] = std::move(values);
}

void DataFrame::add_categorical(const std::string& name, std::vector<std::string> values,
                                std::string reference) {
  if (has(name)) fail(ErrorKind::invalid_argument, "duplicate column '" + name + "'");
  check_new(categorical_, name, rows_, values.size());
  categorical_[name] = std::move(values);
  reference_[name] = std::move(reference);
}

void DataFrame::add_multilabel(const std::string& name, std::vector<std::vector<std::string>> values) {
  if (has(name)) fail(ErrorKind::invalid_argument, "duplicate column '" + name + "'");
  check_new(multilabel_, name, rows_, values.size());
  multilabel_[name] = std::move(values);
}

bool DataFrame::has(const std::string& name) const {
  return numeric_.count(name) || categorical_.count(name) || multilabel_.count(name);
}

const std::vector<double>& DataFrame::numeric(const std::string& name) const {
  auto it = numeric_.find(name);
  if (it == numeric_.end()) fail(ErrorKind::invalid_argument, "no numeric column '" + name + "'");
  return it->second;
}

const std::vector<std::string>& DataFrame::categorical(const std::string& name) const {
  auto it = categorical_.find(name);
  if (it == categorical_.end())
    fail(ErrorKind::invalid_argument, "no categorical column '" + name + "'");
  return it->second;
}

const std::string& DataFrame::reference(const std::string& name) const {
  static const std::string empty;
  auto it = reference_.find(name);
  return it == reference_.end() ? empty : it->second;
}

const std::vector<std::vector<std::string>>& DataFrame::multilabel(const std::string& name) const {
  auto it = multilabel_.find(name);
  if (it == multilabel_.end())
    fail(ErrorKind::invalid_argument, "no multi-label column '" + name + "'");
  return it->second;
}

DataFrame DataFrame::subset(const std::vector<std::size_t>& rows) const {
  DataFrame out(rows.size());
  for (const auto& [name, v] : numeric_) {
    std::vector<double> s;
    s.reserve(rows.size());
    for (auto r : rows) s.push_back(v.at(r));
    out.numeric_[name] = std::move(s);
  }
  for (const auto& [name, v] : categorical_) {
    std::vector<std::string> s;
    s.reserve(rows.size());
    for (auto r : rows) s.push_back(v.at(r));
    out.categorical_[name] = std::move(s);
  }
  out.reference_ = reference_;
  for (const auto& [name, v] : multilabel_) {
    std::vector<std::vector<std::string>> s;
    s.reserve(rows.size());
    for (auto r : rows) s.push_back(v.at(r));
    out.multilabel_[name] = std::move(s);
  }
  return out;
}

// ---- controls ---------------------------------------------------------------------

const char* to_string(Control c) {
  switch (c) {
    case Control::time_of_day: return "Time of day";
    case Control::day_of_week: return "Day of week";
    case Control::week_of_year: return "Week of year";
    case Control::year: return "Year";
    case Control::demographics: return "Demographics";
    case Control::chief_complaint: return "Chief complaint";
    case Control::physician: return "Physician";
  }
  return "?";
}

const std::vector<Control>& all_controls() {
  static const std::vector<Control> v{Control::time_of_day, Control::day_of_week,
                                      Control::week_of_year, Control::year,
                                      Control::demographics, Control::chief_complaint,
                                      Control::physician};
  return v;
}

std::string stars_for(double p) {
  if (!(p >= 0)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

std::string Term::stars() const { return stars_for(p); }

const Term* RegressionResult::find(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return &t;
  return nullptr;
}

const Term& RegressionResult::at(const std::string& name) const {
  const Term* t = find(name);
  if (!t) fail(ErrorKind::data, "regression of '" + outcome + "' has no term '" + name + "'");
  return *t;
}

// ---- design construction ------------------------------------------------------------

namespace {

struct Variable {
  std::string column;
  bool control = false;
};

struct Design {
  std::vector<std::string> names;
  std::vector<bool> control;
  std::vector<std::vector<double>> columns;
  std::vector<std::size_t> rows;  // frame rows used
  std::size_t n_missing = 0;
  std::vector<std::string> notes;
};

std::vector<Variable> design_variables(const DataFrame& df, const DesignSpec& spec) {
  std::vector<Variable> vars;
  std::set<std::string> seen;
  auto add = [&](const std::string& col, bool control) {
    if (seen.count(col)) return;
    if (!df.has(col)) fail(ErrorKind::invalid_argument, "data has no column '" + col + "'");
    seen.insert(col);
    vars.push_back({col, control});
  };
  for (const auto& r : spec.regressors) {
    if (r == spec.outcome) fail(ErrorKind::invalid_argument, "outcome listed as a regressor");
    add(r, false);
  }
  for (Control c : all_controls()) {
    if (!spec.controls.count(c)) continue;
    switch (c) {
      case Control::time_of_day: add(kHourColumn, true); break;
      case Control::day_of_week: add(kWeekdayColumn, true); break;
      case Control::week_of_year: add(kWeekColumn, true); break;
      case Control::year: add(kYearColumn, true); break;
      case Control::demographics:
        add(kSexColumn, true);
        add(kRaceColumn, true);
        add(kAgeColumn, true);
        break;
      case Control::chief_complaint: add(kComplaintColumn, true); break;
      case Control::physician: add(kPhysicianColumn, true); break;
    }
  }
  return vars;
}

Design build_design(const DataFrame& df, const DesignSpec& spec,
                    const std::vector<std::string>& outcomes) {
  const auto vars = design_variables(df, spec);
  Design d;
  for (std::size_t i = 0; i < df.rows(); ++i) {
    bool ok = true;
    for (const auto& o : outcomes)
      if (!std::isfinite(df.numeric(o)[i])) ok = false;
    for (const auto& v : vars) {
      if (!ok) break;
      if (df.is_numeric(v.column)) ok = std::isfinite(df.numeric(v.column)[i]);
      else if (df.is_categorical(v.column)) ok = !df.categorical(v.column)[i].empty();
    }
    if (ok) d.rows.push_back(i);
  }
  d.n_missing = df.rows() - d.rows.size();
  const std::size_t n = d.rows.size();
  const std::size_t min_count = static_cast<std::size_t>(std::max(1, spec.min_category_count));

  if (spec.intercept) {
    d.names.push_back("Intercept");
    d.control.push_back(false);
    d.columns.emplace_back(n, 1.0);
  }
  for (const auto& v : vars) {
    if (df.is_numeric(v.column)) {
      std::vector<double> col(n);
      for (std::size_t k = 0; k < n; ++k) col[k] = df.numeric(v.column)[d.rows[k]];
      d.names.push_back(v.column);
      d.control.push_back(v.control);
      d.columns.push_back(std::move(col));
    } else if (df.is_categorical(v.column)) {
      const auto& src = df.categorical(v.column);
      std::vector<std::string> vals(n);
      std::map<std::string, std::size_t> counts;
      for (std::size_t k = 0; k < n; ++k) ++counts[vals[k] = src[d.rows[k]]];
      if (v.control && min_count > 1) {
        bool pooled = false;
        for (auto& s : vals)
          if (counts[s] < min_count) {
            s = "other";
            pooled = true;
          }
        if (pooled) {
          counts.clear();
          for (const auto& s : vals) ++counts[s];
          d.notes.push_back("levels of '" + v.column + "' with fewer than " +
                            std::to_string(min_count) + " rows pooled into 'other'");
        }
      }
      std::string ref = df.reference(v.column);
      if (!counts.count(ref)) ref = counts.empty() ? std::string() : counts.begin()->first;
      for (const auto& [level, c] : counts) {
        if (level == ref) continue;
        std::vector<double> col(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) col[k] = vals[k] == level ? 1.0 : 0.0;
        d.names.push_back(v.column + "=" + level);
        d.control.push_back(v.control);
        d.columns.push_back(std::move(col));
      }
    } else {
      const auto& src = df.multilabel(v.column);
      std::map<std::string, std::size_t> counts;
      for (std::size_t k = 0; k < n; ++k)
        for (const auto& s : src[d.rows[k]]) ++counts[s];
      std::set<std::string> rare;
      if (v.control && min_count > 1)
        for (const auto& [s, c] : counts)
          if (c < min_count) rare.insert(s);
      for (const auto& [level, c] : counts) {
        if (rare.count(level)) continue;
        std::vector<double> col(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
          const auto& labels = src[d.rows[k]];
          col[k] = std::find(labels.begin(), labels.end(), level) != labels.end() ? 1.0 : 0.0;
        }
        d.names.push_back(v.column + "=" + level);
        d.control.push_back(v.control);
        d.columns.push_back(std::move(col));
      }
      if (!rare.empty()) {
        std::vector<double> col(n, 0.0);
        for (std::size_t k = 0; k < n; ++k)
          for (const auto& s : src[d.rows[k]])
            if (rare.count(s)) col[k] = 1.0;
        d.names.push_back(v.column + "=other");
        d.control.push_back(v.control);
        d.columns.push_back(std::move(col));
        d.notes.push_back(std::to_string(rare.size()) + " '" + v.column + "' labels with fewer than " +
                          std::to_string(min_count) + " rows pooled into 'other'");
      }
    }
  }
  return d;
}

double t_two_sided_p(double t, int df) {
  if (std::isnan(t)) return NAN;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

std::vector<RegressionResult> fit_design(const DataFrame& df, const DesignSpec& spec,
                                         const std::vector<std::string>& outcomes) {
  Design d = build_design(df, spec, outcomes);
  const auto n = static_cast<Eigen::Index>(d.rows.size());
  if (d.columns.empty()) fail(ErrorKind::data, "design has no columns");

  // Sequential Gram-Schmidt (with re-orthogonalization) keeps a column only if
  // it adds a direction; later duplicates are the ones removed.
  std::vector<Eigen::VectorXd> basis;
  std::vector<std::size_t> kept;
  std::vector<std::string> dropped;
  for (std::size_t j = 0; j < d.columns.size(); ++j) {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(d.columns[j].data(), n);
    const double norm0 = v.norm();
    if (norm0 > 0) {
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& q : basis) v -= q.dot(v) * q;
    }
    const double norm1 = v.norm();
    if (norm0 == 0.0 || norm1 <= 1e-9 * norm0) {
      dropped.push_back(d.names[j]);
      continue;
    }
    basis.push_back(v / norm1);
    kept.push_back(j);
  }
  const auto p = static_cast<Eigen::Index>(kept.size());
  if (p == 0) fail(ErrorKind::data, "design matrix has rank 0");
  if (n <= p)
    fail(ErrorKind::data, "regression needs more rows (" + std::to_string(n) + ") than columns (" +
                              std::to_string(p) + ")");
  basis.clear();

  Eigen::MatrixXd X(n, p);
  for (Eigen::Index c = 0; c < p; ++c)
    X.col(c) = Eigen::Map<const Eigen::VectorXd>(d.columns[kept[static_cast<std::size_t>(c)]].data(), n);
  Eigen::MatrixXd Y(n, static_cast<Eigen::Index>(outcomes.size()));
  for (std::size_t o = 0; o < outcomes.size(); ++o) {
    const auto& src = df.numeric(outcomes[o]);
    for (Eigen::Index k = 0; k < n; ++k) Y(k, static_cast<Eigen::Index>(o)) = src[d.rows[static_cast<std::size_t>(k)]];
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::MatrixXd QtY = qr.householderQ().transpose() * Y;
  const Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd B = R.triangularView<Eigen::Upper>().solve(QtY.topRows(p));
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::VectorXd xtx_inv_diag = Rinv.rowwise().squaredNorm();
  const int df_resid = static_cast<int>(n - p);

  std::vector<RegressionResult> results;
  for (std::size_t o = 0; o < outcomes.size(); ++o) {
    const auto oc = static_cast<Eigen::Index>(o);
    const Eigen::VectorXd resid = Y.col(oc) - X * B.col(oc);
    const double rss = resid.squaredNorm();
    const double sigma2 = rss / df_resid;
    RegressionResult r;
    r.outcome = outcomes[o];
    r.n = static_cast<std::size_t>(n);
    r.n_missing = d.n_missing;
    r.dropped_columns = dropped;
    r.controls = spec.controls;
    r.min_category_count = spec.min_category_count;
    r.df_residual = df_resid;
    r.notes = d.notes;
    const double mean = Y.col(oc).mean();
    const double tss = spec.intercept ? (Y.col(oc).array() - mean).square().sum()
                                      : Y.col(oc).squaredNorm();
    r.r_squared = tss > 0 ? 1.0 - rss / tss : NAN;
    for (Eigen::Index c = 0; c < p; ++c) {
      Term t;
      const std::size_t j = kept[static_cast<std::size_t>(c)];
      t.name = d.names[j];
      t.control = d.control[j];
      t.coef = B(c, oc);
      t.se = std::sqrt(sigma2 * xtx_inv_diag[c]);
      if (t.se > 0) {
        t.t = t.coef / t.se;
        t.p = t_two_sided_p(t.t, df_resid);
      } else {
        t.t = t.coef == 0.0 ? 0.0 : std::copysign(INFINITY, t.coef);
        t.p = t.coef == 0.0 ? 1.0 : 0.0;
      }
      r.terms.push_back(std::move(t));
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace

RegressionResult fit_ols(const DataFrame& data, const DesignSpec& spec) {
  if (!data.is_numeric(spec.outcome))
    fail(ErrorKind::invalid_argument, "outcome '" + spec.outcome + "' must be a numeric column");
  return fit_design(data, spec, {spec.outcome}).front();
}

std::vector<RegressionResult> fit_ols_many(const DataFrame& data,
                                           const std::vector<std::string>& outcomes,
                                           const DesignSpec& spec) {
  if (outcomes.empty()) return {};
  for (const auto& o : outcomes) {
    if (!data.is_numeric(o))
      fail(ErrorKind::invalid_argument, "outcome '" + o + "' must be a numeric column");
    if (std::find(spec.regressors.begin(), spec.regressors.end(), o) != spec.regressors.end())
      fail(ErrorKind::invalid_argument, "outcome listed as a regressor");
  }
  return fit_design(data, spec, outcomes);
}

// ---- output --------------------------------------------------------------------

namespace {

std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[48];
  const double a = std::fabs(x);
  int decimals = 3;
  if (a != 0.0 && a < 0.01) decimals = std::min(8, static_cast<int>(std::ceil(-std::log10(a))) + 1);
  else if (a >= 1000) decimals = 1;
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

}  // namespace

std::string to_csv(const RegressionResult& r) {
  CsvWriter w({"term", "coef", "se", "t", "p", "stars", "role"});
  for (const auto& t : r.terms)
    w.add_row({t.name, format_double(t.coef), format_double(t.se), format_double(t.t),
               format_double(t.p), t.stars(),
               t.name == "Intercept" ? "intercept" : (t.control ? "control" : "regressor")});
  return w.str();
}

std::string format_table(const std::vector<TableColumn>& columns, const std::vector<TableRow>& rows,
                         const std::string& caption) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({""});
  for (const auto& c : columns) grid.back().push_back(c.title);
  for (const auto& row : rows) {
    std::vector<std::string> a{row.label}, b{""};
    for (const auto& c : columns) {
      const Term* t = c.result ? c.result->find(row.term) : nullptr;
      a.push_back(t ? fmt_num(t->coef) + t->stars() : "-");
      b.push_back(t ? "(" + fmt_num(t->se) + ")" : "");
    }
    grid.push_back(std::move(a));
    grid.push_back(std::move(b));
  }
  grid.push_back({"Controls"});
  for (Control ctl : all_controls()) {
    std::vector<std::string> r{std::string("  ") + to_string(ctl)};
    for (const auto& c : columns)
      r.push_back(c.result ? (c.result->controls.count(ctl) ? "YES" : "NO") : "");
    grid.push_back(std::move(r));
  }
  std::vector<std::string> nrow{"n"};
  for (const auto& c : columns) nrow.push_back(c.result ? std::to_string(c.result->n) : "");
  grid.push_back(std::move(nrow));

  std::vector<std::size_t> width(columns.size() + 1, 0);
  for (const auto& r : grid)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::string out;
  const std::size_t total =
      std::accumulate(width.begin(), width.end(), std::size_t{0}) + 3 * columns.size();
  const std::string rule(total, '-');
  out += rule + "\n";
  for (std::size_t ri = 0; ri < grid.size(); ++ri) {
    const auto& r = grid[ri];
    std::string line;
    for (std::size_t i = 0; i <= columns.size(); ++i) {
      const std::string cell = i < r.size() ? r[i] : "";
      if (i == 0) line += cell + std::string(width[0] - cell.size(), ' ');
      else {
        const std::size_t padl = (width[i] - cell.size()) / 2;
        line += "   " + std::string(padl, ' ') + cell + std::string(width[i] - cell.size() - padl, ' ');
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (ri == 0) out += rule + "\n";
  }
  out += rule + "\n";
  out += "*: p<0.05, **: p<0.01, ***: p<0.001\n";
  for (const auto& c : columns) {
    if (!c.result) continue;
    if (!c.result->dropped_columns.empty()) {
      out += c.title + ": dropped collinear columns:";
      for (const auto& s : c.result->dropped_columns) out += " " + s;
      out += "\n";
    }
    if (c.result->n_missing > 0)
      out += c.title + ": " + std::to_string(c.result->n_missing) + " rows removed for missing values\n";
  }
  if (!caption.empty()) out += caption + "\n";
  return out;
}

// ---- derived measures ------------------------------------------------------------

bool is_overnight_arrival(int local_hour) { return local_hour >= 1 && local_hour <= 5; }

std::vector<CircadianMeasure> circadian_variance(const std::vector<corpus::Shift>& shifts,
                                                 const TimeZone& tz) {
  std::map<std::string, std::vector<std::size_t>> by_phys;
  for (std::size_t i = 0; i < shifts.size(); ++i) by_phys[shifts[i].physician_id].push_back(i);
  std::vector<CircadianMeasure> out(shifts.size());
  for (auto& [phys, idx] : by_phys) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return shifts[a].start < shifts[b].start;
    });
    std::vector<std::int64_t> day(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) day[k] = tz.to_local(shifts[idx[k]].start).day_number;
    std::size_t lo = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      while (day[lo] < day[k] - 6) ++lo;
      const std::size_t m = k - lo + 1;
      double mean = 0.0;
      for (std::size_t j = lo; j <= k; ++j) mean += shifts[idx[j]].start_hour_adjusted;
      mean /= static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t j = lo; j <= k; ++j) {
        const double dlt = shifts[idx[j]].start_hour_adjusted - mean;
        ss += dlt * dlt;
      }
      CircadianMeasure& cm = out[idx[k]];
      cm.shift_id = shifts[idx[k]].shift_id;
      cm.shifts_in_window = m;
      cm.start_time_variance = m > 1 ? ss / static_cast<double>(m - 1) : 0.0;
    }
  }
  return out;
}

std::vector<AnalysisRow> build_analysis_rows(const std::vector<corpus::NoteRecord>& notes,
                                             const std::vector<corpus::Encounter>& encounters,
                                             const std::vector<corpus::Shift>& shifts,
                                             const std::vector<corpus::WorkloadLabel>& labels,
                                             const std::map<std::string, double>& scores,
                                             const TimeZone& tz) {
  if (notes.size() != encounters.size())
    fail(ErrorKind::invalid_argument, "notes and encounters must be aligned");
  std::map<std::string, const corpus::WorkloadLabel*> label_of;
  for (const auto& l : labels) label_of[l.shift_id] = &l;
  const auto circ = circadian_variance(shifts, tz);
  const auto idx = corpus::index_notes(shifts);
  std::vector<AnalysisRow> rows;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    const auto& n = notes[i];
    const auto& e = encounters[i];
    double fatigue = NAN;
    if (!scores.empty()) {
      auto it = scores.find(n.note_id);
      if (it == scores.end()) continue;
      fatigue = it->second;
    }
    auto sit = idx.shift_of_note.find(n.note_id);
    if (sit == idx.shift_of_note.end())
      fail(ErrorKind::data, "note '" + n.note_id + "' is not in any shift");
    const auto& shift = shifts[sit->second];
    auto lit = label_of.find(shift.shift_id);
    if (lit == label_of.end()) fail(ErrorKind::data, "shift '" + shift.shift_id + "' has no label");
    AnalysisRow r;
    r.note_id = n.note_id;
    r.physician_id = n.physician_id;
    r.patient_id = n.patient_id;
    r.fatigue = fatigue;
    r.arrival = tz.to_local(e.arrival_time);
    r.sex = e.sex;
    r.race = e.race;
    r.language = e.language;
    r.age = e.age;
    r.complaints = e.chief_complaints;
    r.prior_days_worked = lit->second->prior_days_worked;
    r.workload_days = lit->second->total_days_in_window;
    r.workload_class = lit->second->cls;
    r.overnight = is_overnight_arrival(r.arrival.hour);
    r.circadian_variance = circ[sit->second].start_time_variance;
    r.patients_seen_prior = static_cast<int>(idx.position_in_shift.at(n.note_id));
    r.tested = e.tested;
    r.test_positive = e.test_positive;
    rows.push_back(std::move(r));
  }
  return rows;
}

DataFrame analysis_frame(const std::vector<AnalysisRow>& rows) {
  const std::size_t n = rows.size();
  DataFrame df(n);
  std::vector<double> fatigue(n), workload(n), prior(n), high(n), overnight(n), circ(n), seen(n),
      positive(n), tested(n), age(n);
  std::vector<std::string> hour(n), weekday(n), week(n), year(n), sex(n), race(n), phys(n),
      language(n), race_language(n);
  std::vector<std::vector<std::string>> cc(n);
  char buf[16];
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    fatigue[i] = r.fatigue;
    workload[i] = r.workload_days;
    prior[i] = r.prior_days_worked;
    high[i] = r.workload_class == corpus::WorkloadClass::high ? 1.0
              : r.workload_class == corpus::WorkloadClass::low ? 0.0
                                                               : NAN;
    overnight[i] = r.overnight ? 1.0 : 0.0;
    circ[i] = r.circadian_variance;
    seen[i] = r.patients_seen_prior;
    positive[i] = r.tested ? (r.test_positive ? 1.0 : 0.0) : NAN;
    tested[i] = r.tested ? 1.0 : 0.0;
    age[i] = r.age;
    std::snprintf(buf, sizeof buf, "%02d", r.arrival.hour);
    hour[i] = buf;
    weekday[i] = std::to_string(r.arrival.weekday);
    std::snprintf(buf, sizeof buf, "%02d", r.arrival.week_of_year);
    week[i] = buf;
    year[i] = std::to_string(r.arrival.year);
    sex[i] = corpus::to_string(r.sex);
    race[i] = corpus::to_string(r.race);
    phys[i] = r.physician_id;
    language[i] = r.language ? corpus::to_string(*r.language) : "";
    if (r.language && (*r.language == corpus::Language::english ||
                       *r.language == corpus::Language::spanish)) {
      race_language[i] = r.race == corpus::Race::hispanic
                             ? std::string("hispanic_") + corpus::to_string(*r.language)
                             : race[i];
    }
    cc[i] = r.complaints;
  }
  df.add_numeric("fatigue", std::move(fatigue));
  df.add_numeric("workload_days", std::move(workload));
  df.add_numeric("prior_days", std::move(prior));
  df.add_numeric("high", std::move(high));
  df.add_numeric("overnight", std::move(overnight));
  df.add_numeric("circadian_var", std::move(circ));
  df.add_numeric("patients_seen_prior", std::move(seen));
  df.add_numeric("positive", std::move(positive));
  df.add_numeric("tested", std::move(tested));
  df.add_numeric(kAgeColumn, std::move(age));
  df.add_categorical(kHourColumn, std::move(hour));
  df.add_categorical(kWeekdayColumn, std::move(weekday));
  df.add_categorical(kWeekColumn, std::move(week));
  df.add_categorical(kYearColumn, std::move(year));
  df.add_categorical(kSexColumn, std::move(sex), "male");
  df.add_categorical(kRaceColumn, std::move(race), "white");
  df.add_categorical(kPhysicianColumn, std::move(phys));
  df.add_categorical("language", std::move(language), "english");
  df.add_categorical("race_language", std::move(race_language), "white");
  df.add_multilabel(kComplaintColumn, std::move(cc));
  return df;
}

// ---- regression suite ----------------------------------------------------------------

namespace {

std::set<Control> every_control() { return {all_controls().begin(), all_controls().end()}; }

std::set<Control> without(std::set<Control> s, Control c) {
  s.erase(c);
  return s;
}

}  // namespace

ValidationSuite validation_suite(const std::vector<AnalysisRow>& rows) {
  const DataFrame df = analysis_frame(rows);
  ValidationSuite s;
  auto run = [&](RegressionResult& slot, const std::string& outcome, std::set<Control> controls) {
    try {
      slot = fit_ols(df, {outcome, {"fatigue"}, std::move(controls)});
    } catch (const Error& e) {
      slot = RegressionResult{};
      slot.outcome = outcome;
      s.errors.push_back(outcome + ": " + e.what());
    }
  };
  run(s.workload, "workload_days", every_control());
  run(s.overnight, "overnight", without(every_control(), Control::time_of_day));
  run(s.circadian, "circadian_var", every_control());
  run(s.patients_seen, "patients_seen_prior", every_control());
  return s;
}

namespace {

const RegressionResult* usable(const RegressionResult& r) { return r.n > 0 ? &r : nullptr; }

}  // namespace

std::string format_validation(const ValidationSuite& s) {
  std::string out = format_table(
      {{"Workload (Day)", usable(s.workload)},
       {"Overnight Shift", usable(s.overnight)},
       {"Var(Prior Shift-Start-Time)", usable(s.circadian)},
       {"Patients Seen Prior", usable(s.patients_seen)}},
      {{"Fatigue", "fatigue"}, {"Intercept", "Intercept"}},
      "Regressions of fatigue measures on the standardized note fatigue score.");
  for (const auto& e : s.errors) out += "error: " + e + "\n";
  return out;
}

namespace {

struct Slope {
  double slope = NAN, se = NAN;
};

Slope simple_slope(const std::vector<double>& x, const std::vector<double>& y) {
  Slope s;
  const std::size_t n = x.size();
  if (n < 2) return s;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) return s;
  s.slope = sxy / sxx;
  if (n > 2) {
    const double b0 = my - s.slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = y[i] - b0 - s.slope * x[i];
      rss += e * e;
    }
    s.se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  return s;
}

}  // namespace

ArrivalCurve arrival_time_curve(const std::vector<AnalysisRow>& rows) {
  ArrivalCurve c;
  c.hours.resize(24);
  std::vector<std::vector<double>> by_hour(24);
  for (const auto& r : rows)
    if (std::isfinite(r.fatigue)) by_hour[static_cast<std::size_t>(r.arrival.hour)].push_back(r.fatigue);
  for (int h = 0; h < 24; ++h) {
    auto& hb = c.hours[static_cast<std::size_t>(h)];
    const auto& v = by_hour[static_cast<std::size_t>(h)];
    hb.hour = h;
    hb.n = v.size();
    if (v.empty()) continue;
    hb.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0;
      for (double x : v) ss += (x - hb.mean) * (x - hb.mean);
      hb.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
  }
  std::vector<double> xo, yo, xd, yd;
  for (const auto& hb : c.hours) {
    if (hb.n == 0) continue;
    if (is_overnight_arrival(hb.hour)) {
      xo.push_back(hb.hour);
      yo.push_back(hb.mean);
    } else {
      xd.push_back(hb.hour == 0 ? 24.0 : hb.hour);
      yd.push_back(hb.mean);
    }
  }
  const Slope so = simple_slope(xo, yo), sd = simple_slope(xd, yd);
  c.overnight_slope = so.slope;
  c.overnight_se = so.se;
  c.day_slope = sd.slope;
  c.day_se = sd.se;
  return c;
}

std::string arrival_curve_csv(const ArrivalCurve& c) {
  CsvWriter w({"hour", "n", "mean_fatigue", "se", "segment"});
  for (const auto& h : c.hours)
    w.add_row({std::to_string(h.hour), std::to_string(h.n), format_double(h.mean),
               format_double(h.se), is_overnight_arrival(h.hour) ? "overnight" : "other"});
  w.add_row({"slope_overnight", "", format_double(c.overnight_slope), format_double(c.overnight_se),
             "overnight"});
  w.add_row({"slope_other", "", format_double(c.day_slope), format_double(c.day_se), "other"});
  return w.str();
}

std::string arrival_curve_svg(const ArrivalCurve& c) {
  SvgPlot plot;
  plot.set_title("Predicted fatigue vs. patient arrival time");
  plot.set_labels("Arrival hour", "Mean fatigue score (SD units)");
  std::vector<std::pair<double, double>> night, day;
  std::vector<double> enight, eday;
  // The x axis starts at 06:00 so the overnight block sits at the right.
  auto pos = [](int h) { return h < 6 ? h + 24.0 : static_cast<double>(h); };
  for (const auto& h : c.hours) {
    if (h.n == 0) continue;
    if (is_overnight_arrival(h.hour)) {
      night.emplace_back(pos(h.hour), h.mean);
      enight.push_back(h.se);
    } else {
      day.emplace_back(pos(h.hour), h.mean);
      eday.push_back(h.se);
    }
  }
  std::sort(day.begin(), day.end());
  plot.add_scatter(night, "#1f77b4", "arrival 01:00-05:59", enight);
  plot.add_scatter(day, "#ff7f0e", "other arrivals", eday);
  std::vector<std::pair<double, std::string>> ticks;
  for (int h = 6; h <= 30; h += 3) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:00", h % 24);
    ticks.emplace_back(h, buf);
  }
  plot.set_x_ticks(std::move(ticks));
  return plot.str();
}

YieldResult yield_regressions(const std::vector<AnalysisRow>& rows, int min_category_count) {
  std::vector<AnalysisRow> tested;
  for (const auto& r : rows)
    if (r.tested) tested.push_back(r);
  if (tested.empty()) fail(ErrorKind::data, "no tested encounters for the yield regressions");
  const DataFrame df = analysis_frame(tested);
  YieldResult y;
  DesignSpec spec{"positive", {"workload_days"}, every_control(), min_category_count};
  y.workload = fit_ols(df, spec);
  spec.regressors = {"fatigue"};
  y.fatigue = fit_ols(df, spec);
  double pos = 0, cnt = 0;
  for (const auto& r : tested)
    if (std::isfinite(r.fatigue)) {
      pos += r.test_positive ? 1.0 : 0.0;
      cnt += 1;
    }
  y.base_rate = cnt > 0 ? pos / cnt : NAN;
  y.workload_relative = y.workload.at("workload_days").coef / y.base_rate;
  y.fatigue_relative = y.fatigue.at("fatigue").coef / y.base_rate;
  return y;
}

std::string format_yield(const YieldResult& y) {
  std::string out = format_table({{"Workload", &y.workload}, {"Predicted Fatigue", &y.fatigue}},
                                 {{"Workload (days)", "workload_days"},
                                  {"Fatigue", "fatigue"},
                                  {"Intercept", "Intercept"}},
                                 "Outcome: positive test among tested encounters.");
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "base positive rate %.4f; relative effect per unit: workload %+.1f%%, fatigue %+.1f%%\n",
                y.base_rate, 100.0 * y.workload_relative, 100.0 * y.fatigue_relative);
  return out + buf;
}

DisparityResult disparity_regressions(const std::vector<AnalysisRow>& rows) {
  const DataFrame df = analysis_frame(rows);
  DisparityResult d;
  const std::set<Control> ctl = without(every_control(), Control::demographics);
  d.workload = fit_ols(df, {"workload_days", {kRaceColumn, kSexColumn, kAgeColumn}, ctl});
  d.fatigue = fit_ols(df, {"fatigue", {kRaceColumn, kSexColumn, kAgeColumn}, ctl});
  d.contrast = fit_ols(df, {"fatigue", {kRaceColumn, "overnight"}, without(ctl, Control::time_of_day)});
  try {
    d.language = fit_ols(df, {"fatigue", {"race_language"}, ctl});
  } catch (const Error& e) {
    d.notes.push_back(std::string("language split skipped: ") + e.what());
  }
  const Term* on = d.contrast.find("overnight");
  for (const char* level : {"black", "hispanic", "other"}) {
    const std::string term = std::string(kRaceColumn) + "=" + level;
    const Term* t = d.fatigue.find(term);
    if (!t) {
      d.notes.push_back(std::string("race level '") + level + "' absent or collinear; omitted");
      continue;
    }
    const Term* tc = d.contrast.find(term);
    if (tc && on && on->coef != 0.0) d.race_to_overnight_ratio[level] = tc->coef / on->coef;
  }
  return d;
}

std::string format_disparity(const DisparityResult& d) {
  const std::vector<TableRow> rows{{"Black (vs. White)", "race=black"},
                                   {"Hispanic (vs. White)", "race=hispanic"},
                                   {"Other (vs. White)", "race=other"},
                                   {"Female (vs. Male)", "sex=female"},
                                   {"Age", "age"},
                                   {"Is Night Shift", "overnight"},
                                   {"Intercept", "Intercept"}};
  std::string out = format_table({{"Workload (Day)", &d.workload},
                                  {"Predicted Fatigue", &d.fatigue},
                                  {"Predicted Fatigue", &d.contrast}},
                                 rows, "Demographic regressions.");
  for (const auto& [level, ratio] : d.race_to_overnight_ratio) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s coefficient / overnight coefficient = %.2fx\n", level.c_str(),
                  ratio);
    out += buf;
  }
  if (d.language.n > 0) {
    out += "\n";
    out += format_table({{"Predicted Fatigue", &d.language}},
                        {{"Black", "race_language=black"},
                         {"Hispanic - English", "race_language=hispanic_english"},
                         {"Hispanic - Spanish", "race_language=hispanic_spanish"},
                         {"Other", "race_language=other"},
                         {"Intercept", "Intercept"}},
                        "English and Spanish speakers only.");
  }
  for (const auto& n : d.notes) out += "note: " + n + "\n";
  return out;
}

// ---- correlations --------------------------------------------------------------------

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    fail(ErrorKind::invalid_argument, "pearson needs two aligned vectors of length >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return NAN;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<Correlation> feature_correlations(const std::vector<std::vector<double>>& rows,
                                              const std::vector<std::string>& names,
                                              const std::vector<int>& labels) {
  if (rows.size() != labels.size())
    fail(ErrorKind::invalid_argument, "feature rows and labels differ in length");
  std::vector<double> y(labels.begin(), labels.end());
  std::vector<Correlation> out;
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<double> x;
    x.reserve(rows.size());
    for (const auto& r : rows) x.push_back(r.at(j));
    Correlation c;
    c.feature = names[j];
    c.n = rows.size();
    c.r = pearson(x, y);
    if (std::isfinite(c.r)) {
      const int df = static_cast<int>(c.n) - 2;
      if (std::fabs(c.r) >= 1.0) c.p = 0.0;
      else if (df > 0) c.p = t_two_sided_p(c.r * std::sqrt(df / (1.0 - c.r * c.r)), df);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string correlations_csv(const std::vector<Correlation>& c) {
  CsvWriter w({"feature", "r", "p", "stars", "n"});
  for (const auto& x : c)
    w.add_row({x.feature, std::isnan(x.r) ? "undefined" : format_double(x.r), format_double(x.p),
               stars_for(x.p), std::to_string(x.n)});
  return w.str();
}

}  // namespace fatlens::econ
