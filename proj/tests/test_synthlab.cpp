#include <cmath>

#include "doctest.h"
#include "fatlens/common.hpp"
#include "fatlens/corpus.hpp"
#include "fatlens/rng.hpp"
#include "fatlens/synthlab.hpp"

using namespace fatlens;
using namespace fatlens::synth;

namespace {

double corr(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= a.size();
  mb /= b.size();
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i] - ma) * (b[i] - mb);
    aa += (a[i] - ma) * (a[i] - ma);
    bb += (b[i] - mb) * (b[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> nonwhite(const LinearCorpus& c) {
  std::vector<double> v;
  for (const auto& r : c.rows) v.push_back(r.race == corpus::Race::white ? 0.0 : 1.0);
  return v;
}

}  // namespace

TEST_CASE("linear notes are (Y + Delta) A") {
  const auto c = linear_from({1, -1}, {1, 1}, {1.0});
  CHECK(c.W(0, 0) == 2.0);
  CHECK(c.W(1, 0) == 0.0);
  CHECK(c.Ystar == std::vector<double>{2, 0});
}

TEST_CASE("shrinkage: hand example") {
  const auto r = shrinkage_check(linear_from({1, -1}, {1, 1}, {1.0}));
  CHECK(r.beta_hat[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::fabs(r.y_hat[0] - 1.0) < 1e-12);
  CHECK(std::fabs(r.y_hat[1] - 0.0) < 1e-12);
  CHECK(r.max_abs_error < 1e-12);
  CHECK(r.cross_term == 0.0);
}

TEST_CASE("shrinkage: no shocks recovers 1/A and Y exactly") {
  const auto r = shrinkage_check(linear_from({0.3, -1.2, 2.0}, {0, 0, 0}, {2.0}));
  CHECK(r.beta_hat[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.shrink == 1.0);
  CHECK(std::fabs(r.y_hat[1] - -1.2) < 1e-14);
}

TEST_CASE("shrinkage: shock energy three times the signal gives a quarter") {
  const double s = std::sqrt(3.0);
  const auto r = shrinkage_check(linear_from({1, -1}, {s, s}, {1.0}));
  CHECK(r.shrink == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.beta_hat[0] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("shrinkage: undefined for A = 0") {
  CHECK_THROWS_AS(shrinkage_check(linear_from({1, -1}, {1, 1}, {0.0})), Error);
  CHECK_THROWS_AS(shrinkage_check(linear_from({1, -1}, {1, 1}, {0.0, 0.0})), Error);
}

TEST_CASE("shrinkage identity holds on 1000 orthogonalized draws, scalar and vector A") {
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    DagConfig cfg;
    cfg.seed = Rng::derive(55, k);
    cfg.n_shifts = 40;
    cfg.exact_orthogonal = true;
    if (k % 2) cfg.A = {0.5, -1.5, 2.0};
    const auto c = simulate_linear(cfg);
    const auto r = shrinkage_check(c);
    worst = std::max(worst, r.max_abs_error);
    CHECK(std::fabs(r.cross_term) < 1e-9);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("without orthogonalization the closed form holds only up to the cross term") {
  auto err = [](std::size_t shifts) {
    double total = 0;
    for (int k = 0; k < 20; ++k) {
      DagConfig cfg;
      cfg.seed = Rng::derive(66, k);
      cfg.n_shifts = shifts;
      total += std::fabs(shrinkage_check(simulate_linear(cfg)).beta_hat[0] -
                         shrinkage_check(simulate_linear(cfg)).beta_formula[0]);
    }
    return total / 20;
  };
  const double small = err(20), large = err(2000);
  CHECK(small > 1e-6);
  // error scales like 1/sqrt(n): a 100-fold larger n should cut it by about 10
  CHECK(large < small / 4);
}

TEST_CASE("workload is independent of demographics unless rho is planted") {
  DagConfig cfg;
  cfg.seed = 8;
  cfg.n_shifts = 20000;
  cfg.patients_per_shift = 5;
  const auto c = simulate_linear(cfg);
  CHECK(std::fabs(corr(c.Y, nonwhite(c))) < 0.01);
  CHECK(std::fabs(corr(c.Delta, nonwhite(c))) < 0.01);
  cfg.rho = 0.3;
  const auto p = simulate_linear(cfg);
  CHECK(std::fabs(corr(p.Y, nonwhite(p))) < 0.01);
  CHECK(corr(p.Delta, nonwhite(p)) == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("Y is constant within a shift and Delta varies by patient") {
  DagConfig cfg;
  cfg.seed = 2;
  cfg.n_shifts = 30;
  const auto c = simulate_linear(cfg);
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c.shift_of[i] == c.shift_of[i - 1]) {
      CHECK(c.Y[i] == c.Y[i - 1]);
      CHECK(c.Delta[i] != c.Delta[i - 1]);
    }
}

TEST_CASE("note predictions track outcomes only when gamma is nonzero") {
  int sign_ok = 0, null_small = 0;
  for (int k = 0; k < 100; ++k) {
    DagConfig cfg;
    cfg.seed = Rng::derive(90, k);
    cfg.n_shifts = 200;
    cfg.gamma = 0.3;
    auto c = simulate_linear(cfg);
    sign_ok += corr(note_predictions(c), c.Z) > 0;
    cfg.gamma = 0.0;
    c = simulate_linear(cfg);
    null_small += std::fabs(corr(note_predictions(c), c.Z)) < 2.0 / std::sqrt(c.size());
  }
  CHECK(sign_ok >= 95);
  CHECK(null_small >= 90);
}

TEST_CASE("attenuation: note predictions beat coarse workload") {
  DagConfig cfg;
  cfg.seed = 12;
  cfg.n_shifts = 200;
  cfg.patients_per_shift = 5;
  cfg.var_Y = 1.0;
  cfg.var_Delta = 4.0;
  cfg.gamma = 0.3;
  const auto rep = attenuation_experiment(cfg, 100);
  CHECK(rep.replicates == 100);
  CHECK(rep.yhat_beats_y >= 0.95);
  CHECK(rep.mean_t_yhat > rep.mean_t_y);
  CHECK(rep.to_csv().rfind("regressor,reject_rate,mean_t", 0) == 0);

  cfg.gamma = 0.0;
  const auto null = attenuation_experiment(cfg, 200);
  CHECK(null.reject_y <= 0.10);
  CHECK(null.reject_yhat <= 0.10);

  cfg.gamma = 0.3;
  cfg.var_Delta = 0.0;
  const auto same = attenuation_experiment(cfg, 20);
  CHECK(same.mean_t_yhat == doctest::Approx(same.mean_t_y).epsilon(1e-9));
  CHECK_THROWS_AS(attenuation_experiment(cfg, 0), Error);
}

TEST_CASE("configuration validation") {
  DagConfig cfg;
  cfg.rho = 1.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg.rho = 0.0;
  cfg.var_Delta = -1;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg.var_Delta = 1;
  cfg.A.clear();
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("text corpus: deterministic, ingestible, and requires every style level") {
  TextCorpusConfig cfg;
  cfg.n_notes = 400;
  cfg.dag.seed = 4;
  const auto styles = planted_style_map(1.0);
  const auto a = simulate_text_corpus(cfg, styles);
  const auto b = simulate_text_corpus(cfg, styles);
  CHECK(a.to_jsonl() == b.to_jsonl());
  CHECK(a.truth_csv() == b.truth_csv());
  cfg.dag.seed = 5;
  CHECK(simulate_text_corpus(cfg, styles).to_jsonl() != a.to_jsonl());

  REQUIRE(a.notes.size() == 400);
  REQUIRE(a.truth.size() == 400);
  for (const auto& t : a.truth) CHECK(t.Ystar == doctest::Approx(t.Y + t.Delta));
  const auto in = corpus::ingest_text(a.to_jsonl(), corpus::InputFormat::jsonl);
  CHECK(in.rejects.empty());
  CHECK(in.notes.size() == 400);

  auto missing = styles;
  missing.erase("mid");
  CHECK_THROWS_AS(simulate_text_corpus(cfg, missing), Error);
}

TEST_CASE("planted style map orders the levels along the loading") {
  const auto m = planted_style_map(1.0);
  CHECK(m.at("high").insight_rate < m.at("mid").insight_rate);
  CHECK(m.at("mid").insight_rate < m.at("low").insight_rate);
  CHECK(m.at("high").anger_rate > m.at("low").anger_rate);
  const auto flat = planted_style_map(0.0);
  CHECK(flat.at("high").body_words == flat.at("low").body_words);
}
