#include <cmath>

#include "doctest.h"
#include "fatlens/common.hpp"
#include "fatlens/econometrics.hpp"
#include "fatlens/rng.hpp"
#include "fatlens/synthlab.hpp"

using namespace fatlens;
using namespace fatlens::econ;

namespace {

corpus::Shift shift(const std::string& id, const std::string& phys, const std::string& ts, double adjusted) {
  corpus::Shift s;
  s.shift_id = id;
  s.physician_id = phys;
  s.start = parse_timestamp(ts);
  s.end = s.start + 3600;
  s.start_hour_adjusted = adjusted;
  return s;
}

// Rows with realistic metadata from the linear DAG simulator.
std::vector<AnalysisRow> dag_rows(std::uint64_t seed, double overnight_delta, double var_delta = 4.0,
                                  double gamma = 0.0) {
  synth::DagConfig cfg;
  cfg.seed = seed;
  cfg.n_shifts = 300;
  cfg.patients_per_shift = 5;
  cfg.var_Delta = var_delta;
  cfg.gamma = gamma;
  cfg.overnight_delta = overnight_delta;
  const auto c = synth::simulate_linear(cfg);
  auto rows = c.rows;
  Rng rng(Rng::derive(seed, 9));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].fatigue = c.Ystar[i];
    rows[i].circadian_variance = rng.uniform(0, 20);
  }
  return rows;
}

}  // namespace

TEST_CASE("ols: exact line has zero standard errors") {
  DataFrame df(5);
  df.add_numeric("x", {0, 1, 2, 3, 4});
  df.add_numeric("y", {1, 3, 5, 7, 9});
  const auto r = fit_ols(df, {"y", {"x"}, {}});
  CHECK(r.at("x").coef == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.at("Intercept").coef == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.at("x").se < 1e-12);
  CHECK(r.n == 5);
  CHECK(r.df_residual == 3);
}

TEST_CASE("ols: two-group dummy equals the difference in means") {
  DataFrame df(6);
  df.add_categorical("g", {"a", "a", "a", "b", "b", "b"});
  df.add_numeric("y", {2, 3, 4, 4, 5, 6});
  const auto r = fit_ols(df, {"y", {"g"}, {}});
  CHECK(r.at("g=b").coef == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.at("Intercept").coef == doctest::Approx(3.0).epsilon(1e-12));
  // hand SE: s^2 = 4/4, sqrt(1/3 + 1/3)
  CHECK(r.at("g=b").se == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("ols: a duplicated regressor is dropped by name") {
  DataFrame df(6);
  df.add_numeric("x", {1, 2, 3, 4, 5, 7});
  df.add_numeric("x_copy", {1, 2, 3, 4, 5, 7});
  df.add_numeric("y", {2, 1, 4, 3, 6, 5});
  const auto r = fit_ols(df, {"y", {"x", "x_copy"}, {}});
  CHECK(r.dropped_columns == std::vector<std::string>{"x_copy"});
  CHECK(r.find("x_copy") == nullptr);
  CHECK_THROWS_AS(r.at("x_copy"), Error);
  CHECK(r.find("x") != nullptr);
}

TEST_CASE("ols: full dummy sets with an intercept do not crash") {
  DataFrame df(8);
  df.add_numeric("y", {1, 2, 3, 4, 5, 6, 7, 9});
  df.add_numeric("a", {1, 1, 1, 1, 0, 0, 0, 0});
  df.add_numeric("b", {0, 0, 0, 0, 1, 1, 1, 1});
  df.add_multilabel(kComplaintColumn, {{"x"}, {"x"}, {"x"}, {"x"}, {"x"}, {"x"}, {"x"}, {"x"}});
  DesignSpec spec{"y", {"a", "b"}, {Control::chief_complaint}};
  const auto r1 = fit_ols(df, spec);
  const auto r2 = fit_ols(df, spec);
  CHECK(r1.dropped_columns.size() == 2);
  CHECK(r1.dropped_columns == r2.dropped_columns);
}

TEST_CASE("ols: residuals are orthogonal to every design column") {
  Rng rng(3);
  const std::size_t n = 300;
  std::vector<double> x1(n), x2(n), y(n);
  std::vector<std::string> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = rng.normal();
    x2[i] = rng.uniform(-3, 3);
    g[i] = std::string(1, static_cast<char>('a' + rng.index(3)));
    y[i] = 1 + 2 * x1[i] - x2[i] + (g[i] == "c" ? 0.5 : 0.0) + rng.normal();
  }
  DataFrame df(n);
  df.add_numeric("x1", x1);
  df.add_numeric("x2", x2);
  df.add_categorical("g", g);
  df.add_numeric("y", y);
  const auto r = fit_ols(df, {"y", {"x1", "x2", "g"}, {}});
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i)
    e[i] = y[i] - (r.at("Intercept").coef + r.at("x1").coef * x1[i] + r.at("x2").coef * x2[i] +
                   (g[i] == "b" ? r.at("g=b").coef : 0.0) + (g[i] == "c" ? r.at("g=c").coef : 0.0));
  double s0 = 0, s1 = 0, s2 = 0, sb = 0, sc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s0 += e[i];
    s1 += e[i] * x1[i];
    s2 += e[i] * x2[i];
    sb += g[i] == "b" ? e[i] : 0.0;
    sc += g[i] == "c" ? e[i] : 0.0;
  }
  for (double s : {s0, s1, s2, sb, sc}) CHECK(std::fabs(s) < 1e-8);
}

TEST_CASE("ols: shifting the outcome changes only the intercept; reruns are bit-identical") {
  Rng rng(4);
  const std::size_t n = 80;
  std::vector<double> x(n), y(n), y2(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    y[i] = 0.5 * x[i] + rng.normal();
    y2[i] = y[i] + 10.0;
  }
  DataFrame df(n);
  df.add_numeric("x", x);
  df.add_numeric("y", y);
  df.add_numeric("y2", y2);
  const auto a = fit_ols(df, {"y", {"x"}, {}});
  const auto b = fit_ols(df, {"y2", {"x"}, {}});
  CHECK(b.at("x").coef == doctest::Approx(a.at("x").coef).epsilon(1e-12));
  CHECK(b.at("x").se == doctest::Approx(a.at("x").se).epsilon(1e-10));
  CHECK(b.at("Intercept").coef - a.at("Intercept").coef == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(to_csv(fit_ols(df, {"y", {"x"}, {}})) == to_csv(a));
}

TEST_CASE("ols: slope equals cov(x,y)/var(x) on random data") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 10 + rng.index(200);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal(rng.uniform(-5, 5), 3);
      y[i] = rng.normal() + 0.3 * x[i];
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
    DataFrame df(n);
    df.add_numeric("x", x);
    df.add_numeric("y", y);
    const auto r = fit_ols(df, {"y", {"x"}, {}});
    CHECK(std::fabs(r.at("x").coef - sxy / sxx) < 1e-10);
  }
}

TEST_CASE("ols: listwise deletion, pooling and errors") {
  DataFrame df(7);
  df.add_numeric("x", {1, 2, NAN, 4, 5, 6, 7});
  df.add_numeric("y", {1, 2, 3, 5, 4, 6, 8});
  df.add_categorical(kPhysicianColumn, {"a", "a", "a", "a", "b", "b", "c"});
  const auto r = fit_ols(df, {"y", {"x"}, {Control::physician}, 2});
  CHECK(r.n == 6);
  CHECK(r.n_missing == 1);
  CHECK(r.find("physician=other") != nullptr);
  CHECK(r.find("physician=c") == nullptr);

  DataFrame tiny(2);
  tiny.add_numeric("x", {1, 2});
  tiny.add_numeric("y", {1, 2});
  CHECK_THROWS_AS(fit_ols(tiny, {"y", {"x"}, {}}), Error);
  DataFrame zero(4);
  zero.add_numeric("x", {0, 0, 0, 0});
  zero.add_numeric("y", {1, 2, 3, 4});
  CHECK_THROWS_AS(fit_ols(zero, {"y", {"x"}, {}, 1, false}), Error);
  CHECK_THROWS_AS(fit_ols(df, {"y", {"y"}, {}}), Error);
  CHECK_THROWS_AS(fit_ols(df, {"y", {"nope"}, {}}), Error);
}

TEST_CASE("significance stars follow the p thresholds") {
  CHECK(stars_for(0.2) == "");
  CHECK(stars_for(0.049) == "*");
  CHECK(stars_for(0.05) == "");
  CHECK(stars_for(0.009) == "**");
  CHECK(stars_for(0.0009) == "***");
}

TEST_CASE("table layout shows coefficient, standard error and n") {
  DataFrame df(6);
  df.add_categorical("g", {"a", "a", "a", "b", "b", "b"});
  df.add_numeric("y", {2, 3, 4, 4, 5, 6});
  const auto r = fit_ols(df, {"y", {"g"}, {}});
  const auto t = format_table({{"Outcome", &r}}, {{"Group b", "g=b"}});
  CHECK(t.find("Group b") != std::string::npos);
  CHECK(t.find("2.000") != std::string::npos);
  CHECK(t.find("(0.816)") != std::string::npos);
  CHECK(t.find("Physician           NO") != std::string::npos);
}

TEST_CASE("circadian variance: hand examples") {
  const auto two = circadian_variance({shift("s1", "d", "2012-03-05T23:00:00Z", 17.0),
                                       shift("s2", "d", "2012-03-07T00:00:00Z", 18.0)});
  CHECK(two[0].start_time_variance == 0.0);
  CHECK(two[1].start_time_variance == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(two[1].shifts_in_window == 2);

  const auto one = circadian_variance({shift("s", "d", "2012-03-05T08:00:00Z", 2.0)});
  CHECK(one[0].start_time_variance == 0.0);

  std::vector<corpus::Shift> daily;
  for (int d = 0; d < 10; ++d)
    daily.push_back(shift("s" + std::to_string(d), "d", "2012-03-" + std::string(d + 5 < 10 ? "0" : "") +
                                                          std::to_string(d + 5) + "T07:00:00Z", 1.0));
  for (const auto& m : circadian_variance(daily)) CHECK(m.start_time_variance == 0.0);

  // The window is [d-6, d]; a shift seven days back falls out of it.
  const auto wk = circadian_variance({shift("a", "d", "2012-03-05T08:00:00Z", 2.0),
                                      shift("b", "d", "2012-03-12T08:00:00Z", 10.0)});
  CHECK(wk[1].shifts_in_window == 1);
  CHECK(wk[1].start_time_variance == 0.0);
}

TEST_CASE("arrival curve: flat scores and a planted overnight ramp") {
  Rng rng(6);
  auto make = [&](double slope) {
    std::vector<AnalysisRow> rows;
    for (int i = 0; i < 24000; ++i) {
      AnalysisRow r;
      r.arrival.hour = i % 24;
      r.fatigue = rng.normal(0, 0.05) + (is_overnight_arrival(r.arrival.hour) ? slope * r.arrival.hour : 0.0);
      rows.push_back(r);
    }
    return arrival_time_curve(rows);
  };
  const auto flat = make(0.0);
  CHECK(std::fabs(flat.overnight_slope) < 3 * flat.overnight_se);
  CHECK(std::fabs(flat.day_slope) < 3 * flat.day_se);
  CHECK(std::fabs(flat.overnight_slope) < 0.01);
  const auto ramp = make(0.2);
  CHECK(std::fabs(ramp.overnight_slope - 0.2) < 2 * ramp.overnight_se + 1e-3);
  CHECK(arrival_curve_csv(ramp).rfind("hour,n,mean_fatigue,se,segment", 0) == 0);
  CHECK(arrival_curve_svg(ramp).find("<svg") != std::string::npos);
}

TEST_CASE("planted overnight bump is recovered within two standard errors") {
  const double delta = 1.0;
  int ok = 0, significant = 0;
  const int runs = 100;
  for (int run = 0; run < runs; ++run) {
    const auto rows = dag_rows(1000 + run, delta);
    const auto df = analysis_frame(rows);
    std::set<Control> ctl(all_controls().begin(), all_controls().end());
    ctl.erase(Control::time_of_day);
    const auto r = fit_ols(df, {"fatigue", {"overnight"}, ctl});
    ok += std::fabs(r.at("overnight").coef - delta) <= 2 * r.at("overnight").se;
    significant += validation_suite(rows).overnight.at("fatigue").p < 0.05;
  }
  CHECK(ok >= 90);
  CHECK(significant >= 80);
}

TEST_CASE("validation regressions on noise scores are rarely significant") {
  std::array<int, 4> insignificant{};
  const int runs = 100;
  for (int run = 0; run < runs; ++run) {
    auto rows = dag_rows(2000 + run, 0.0);
    Rng rng(Rng::derive(run, 77));
    for (auto& r : rows) r.fatigue = rng.normal();
    const auto s = validation_suite(rows);
    REQUIRE(s.errors.empty());
    const RegressionResult* rs[] = {&s.workload, &s.overnight, &s.circadian, &s.patients_seen};
    for (std::size_t k = 0; k < 4; ++k) insignificant[k] += rs[k]->at("fatigue").p >= 0.05;
  }
  for (int k : insignificant) CHECK(k >= 90);
}

TEST_CASE("yield: fatigue scores detect a planted decision effect that coarse workload misses") {
  auto run_yield = [](std::uint64_t seed, double gamma) {
    synth::DagConfig cfg;
    cfg.seed = seed;
    cfg.n_shifts = 400;
    cfg.patients_per_shift = 5;
    // Shift-level workload carries almost none of the variance of true fatigue.
    cfg.var_Y = 0.002;
    cfg.var_Delta = 4.0;
    cfg.gamma = gamma;
    const auto c = synth::simulate_linear(cfg);
    const auto yhat = synth::note_predictions(c);
    double m = 0, v = 0;
    for (double x : yhat) m += x;
    m /= yhat.size();
    for (double x : yhat) v += (x - m) * (x - m);
    const double sd = std::sqrt(v / (yhat.size() - 1));
    auto rows = c.rows;
    Rng rng(Rng::derive(seed, 5));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].fatigue = (yhat[i] - m) / sd;
      rows[i].tested = rng.bernoulli(0.6);
      rows[i].test_positive = c.Z[i] > 0.0;
    }
    return yield_regressions(rows, 30);
  };
  int fat_sig = 0, work_ns = 0, null_fat = 0, null_work = 0;
  const int runs = 50;
  for (int r = 0; r < runs; ++r) {
    const auto y = run_yield(3000 + r, 0.3);
    fat_sig += y.fatigue.at("fatigue").p < 0.05;
    work_ns += y.workload.at("workload_days").p >= 0.05;
    const auto y0 = run_yield(4000 + r, 0.0);
    null_fat += y0.fatigue.at("fatigue").p >= 0.05;
    null_work += y0.workload.at("workload_days").p >= 0.05;
  }
  CHECK(fat_sig >= 45);
  CHECK(work_ns >= 45);
  CHECK(null_fat >= 45);
  CHECK(null_work >= 45);
}

TEST_CASE("yield: no tested rows is an error; relative effect divides by the base rate") {
  auto rows = dag_rows(1, 0.0);
  CHECK_THROWS_AS(yield_regressions(rows, 30), Error);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].tested = true;
    rows[i].test_positive = i % 3 == 0;
  }
  const auto y = yield_regressions(rows, 30);
  CHECK(y.base_rate == doctest::Approx(std::ceil(rows.size() / 3.0) / rows.size()));
  CHECK(y.fatigue_relative == doctest::Approx(y.fatigue.at("fatigue").coef / y.base_rate));
  CHECK(format_yield(y).find("base positive rate") != std::string::npos);
}

TEST_CASE("disparity: ratio to the overnight coefficient and an absent race level") {
  auto rows = dag_rows(7, 0.8);
  for (auto& r : rows)
    if (r.race == corpus::Race::other) r.race = corpus::Race::black;
  const auto d = disparity_regressions(rows);
  CHECK(d.fatigue.find("race=other") == nullptr);
  bool noted = false;
  for (const auto& n : d.notes) noted = noted || n.find("'other'") != std::string::npos;
  CHECK(noted);
  REQUIRE(d.race_to_overnight_ratio.count("black"));
  CHECK(d.race_to_overnight_ratio.at("black") ==
        doctest::Approx(d.contrast.at("race=black").coef / d.contrast.at("overnight").coef));
  CHECK(format_disparity(d).find("Hispanic (vs. White)") != std::string::npos);
}

TEST_CASE("correlations: identity, brute-force oracle, constant features") {
  std::vector<int> y{1, 0, 1, 1, 0, 0, 1, 0};
  std::vector<std::vector<double>> rows;
  for (int v : y) rows.push_back({static_cast<double>(v), 3.0});
  const auto c = feature_correlations(rows, {"same", "const"}, y);
  CHECK(c[0].r == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::isnan(c[1].r));
  CHECK(correlations_csv(c).find("undefined") != std::string::npos);

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 5 + rng.index(50);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = rng.normal(), b[i] = rng.normal() + a[i] * 0.3;
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    long double cab = 0, caa = 0, cbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cab += (a[i] - ma) * (b[i] - mb);
      caa += (a[i] - ma) * (a[i] - ma);
      cbb += (b[i] - mb) * (b[i] - mb);
    }
    CHECK(std::fabs(pearson(a, b) - static_cast<double>(cab / std::sqrt(caa * cbb))) < 1e-12);
  }
}
