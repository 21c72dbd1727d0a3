#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fatlens/corpus.hpp"
#include "fatlens/textfeat.hpp"
#include "fatlens/timeutil.hpp"

namespace fatlens::econ {

// ---- data frame -------------------------------------------------------------

// Column store for regressions. Numeric NaN and categorical "" mark missing
// values; multi-label columns (chief complaints) expand to one indicator each.
class DataFrame {
 public:
  explicit DataFrame(std::size_t rows = 0) : rows_(rows) {}

  void add_numeric(const std::string& name, std::vector<double> values);
  // `reference` is the omitted level; empty means the first level in sorted order.
  void add_categorical(const std::string& name, std::vector<std::string> values,
                       std::string reference = {});
  void add_multilabel(const std::string& name, std::vector<std::vector<std::string>> values);

  std::size_t rows() const { return rows_; }
  bool has(const std::string& name) const;
  bool is_numeric(const std::string& name) const { return numeric_.count(name) > 0; }
  bool is_categorical(const std::string& name) const { return categorical_.count(name) > 0; }
  bool is_multilabel(const std::string& name) const { return multilabel_.count(name) > 0; }
  const std::vector<double>& numeric(const std::string& name) const;
  const std::vector<std::string>& categorical(const std::string& name) const;
  const std::string& reference(const std::string& name) const;
  const std::vector<std::vector<std::string>>& multilabel(const std::string& name) const;

  DataFrame subset(const std::vector<std::size_t>& rows) const;

 private:
  std::size_t rows_;
  std::map<std::string, std::vector<double>> numeric_;
  std::map<std::string, std::vector<std::string>> categorical_;
  std::map<std::string, std::string> reference_;
  std::map<std::string, std::vector<std::vector<std::string>>> multilabel_;
};

// ---- OLS ----------------------------------------------------------------------

enum class Control { time_of_day, day_of_week, week_of_year, year, demographics, chief_complaint, physician };

const char* to_string(Control c);
const std::vector<Control>& all_controls();

// Columns each control reads from the frame.
inline constexpr const char* kHourColumn = "hour";
inline constexpr const char* kWeekdayColumn = "weekday";
inline constexpr const char* kWeekColumn = "week";
inline constexpr const char* kYearColumn = "year";
inline constexpr const char* kSexColumn = "sex";
inline constexpr const char* kRaceColumn = "race";
inline constexpr const char* kAgeColumn = "age";
inline constexpr const char* kComplaintColumn = "complaints";
inline constexpr const char* kPhysicianColumn = "physician";

struct DesignSpec {
  std::string outcome;
  std::vector<std::string> regressors;
  std::set<Control> controls;
  // Control levels rarer than this are pooled into "other"; rare complaint
  // indicators are pooled into one "other" indicator.
  int min_category_count = 1;
  bool intercept = true;
};

struct Term {
  std::string name;
  double coef = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
  bool control = false;
  std::string stars() const;
};

std::string stars_for(double p);

struct RegressionResult {
  std::string outcome;
  std::vector<Term> terms;  // intercept, regressors, then controls
  std::size_t n = 0;
  std::size_t n_missing = 0;                 // rows removed by listwise deletion
  std::vector<std::string> dropped_columns;  // exact collinearity
  std::set<Control> controls;
  int min_category_count = 1;
  int df_residual = 0;
  double r_squared = 0.0;
  std::vector<std::string> notes;

  const Term* find(const std::string& name) const;
  const Term& at(const std::string& name) const;  // throws when absent or dropped
};

RegressionResult fit_ols(const DataFrame& data, const DesignSpec& spec);

// Several outcomes against one design; rows missing any outcome are deleted
// from every fit so they share the factorization.
std::vector<RegressionResult> fit_ols_many(const DataFrame& data,
                                           const std::vector<std::string>& outcomes,
                                           const DesignSpec& spec);

// CSV: term,coef,se,t,p,stars,role
std::string to_csv(const RegressionResult& r);

struct TableColumn {
  std::string title;
  const RegressionResult* result = nullptr;  // null prints an empty column
};
struct TableRow {
  std::string label;
  std::string term;  // coefficient name looked up in each column
};
// Aligned text in the layout of a results table: coefficient with stars,
// standard error beneath, then the controls grid and n.
std::string format_table(const std::vector<TableColumn>& columns, const std::vector<TableRow>& rows,
                         const std::string& caption = {});

// ---- derived measures -----------------------------------------------------------

struct CircadianMeasure {
  std::string shift_id;
  double start_time_variance = 0.0;
  std::size_t shifts_in_window = 1;
};

// Sample variance of adjusted start hours over the physician's shifts whose
// local start day lies in [d-6, d] and that start no later than this one.
std::vector<CircadianMeasure> circadian_variance(const std::vector<corpus::Shift>& shifts,
                                                 const TimeZone& tz = TimeZone::utc());

bool is_overnight_arrival(int local_hour);

// One row per scored note with everything the regressions use.
struct AnalysisRow {
  std::string note_id;
  std::string physician_id;
  std::string patient_id;
  double fatigue = NAN;  // standardized score
  LocalTime arrival;
  corpus::Sex sex = corpus::Sex::female;
  corpus::Race race = corpus::Race::white;
  std::optional<corpus::Language> language;
  int age = 0;
  std::vector<std::string> complaints;
  int prior_days_worked = 0;
  int workload_days = 1;  // days worked in the 7-day window, current included
  corpus::WorkloadClass workload_class = corpus::WorkloadClass::low;
  bool overnight = false;
  double circadian_variance = 0.0;
  int patients_seen_prior = 0;
  bool tested = false;
  bool test_positive = false;
};

// Rows for every note present in `scores` (note_id -> standardized fatigue);
// pass an empty map to build rows without scores.
std::vector<AnalysisRow> build_analysis_rows(const std::vector<corpus::NoteRecord>& notes,
                                             const std::vector<corpus::Encounter>& encounters,
                                             const std::vector<corpus::Shift>& shifts,
                                             const std::vector<corpus::WorkloadLabel>& labels,
                                             const std::map<std::string, double>& scores,
                                             const TimeZone& tz = TimeZone::utc());

// Frame with columns fatigue, workload_days, high (NaN for mid), overnight,
// circadian_var, patients_seen_prior, positive (NaN when untested), tested,
// race_language, language, plus the control columns.
DataFrame analysis_frame(const std::vector<AnalysisRow>& rows);

// ---- regression suite -------------------------------------------------------------

struct ValidationSuite {
  RegressionResult workload;     // Workload (Day)
  RegressionResult overnight;    // no time-of-day control
  RegressionResult circadian;    // Var(prior shift start time)
  RegressionResult patients_seen;
  std::vector<std::string> errors;  // per-column failures; the others still run
};

ValidationSuite validation_suite(const std::vector<AnalysisRow>& rows);
std::string format_validation(const ValidationSuite& s);

struct ArrivalCurve {
  struct Hour {
    int hour = 0;
    std::size_t n = 0;
    double mean = NAN;
    double se = NAN;
  };
  std::vector<Hour> hours;  // 0..23, n = 0 when empty
  double overnight_slope = NAN, overnight_se = NAN;  // hours 1-5
  double day_slope = NAN, day_se = NAN;              // remaining hours, 0 placed after 23
};

ArrivalCurve arrival_time_curve(const std::vector<AnalysisRow>& rows);
std::string arrival_curve_csv(const ArrivalCurve& c);
std::string arrival_curve_svg(const ArrivalCurve& c);

struct YieldResult {
  RegressionResult workload;
  RegressionResult fatigue;
  double base_rate = 0.0;  // mean positive rate among tested rows used
  double workload_relative = 0.0;  // coefficient / base rate
  double fatigue_relative = 0.0;
};

YieldResult yield_regressions(const std::vector<AnalysisRow>& rows, int min_category_count = 30);
std::string format_yield(const YieldResult& y);

struct DisparityResult {
  RegressionResult workload;       // workload on demographics
  RegressionResult fatigue;        // fatigue on demographics
  RegressionResult contrast;       // fatigue on race + overnight, no time-of-day control
  RegressionResult language;       // english/spanish speakers, Hispanic split by language
  std::map<std::string, double> race_to_overnight_ratio;  // race level -> coef ratio
  std::vector<std::string> notes;
};

DisparityResult disparity_regressions(const std::vector<AnalysisRow>& rows);
std::string format_disparity(const DisparityResult& d);

struct Correlation {
  std::string feature;
  double r = NAN;  // NaN when the feature is constant
  double p = NAN;
  std::size_t n = 0;
};

std::vector<Correlation> feature_correlations(const std::vector<std::vector<double>>& rows,
                                              const std::vector<std::string>& names,
                                              const std::vector<int>& labels);
double pearson(const std::vector<double>& x, const std::vector<double>& y);
std::string correlations_csv(const std::vector<Correlation>& c);

}  // namespace fatlens::econ
