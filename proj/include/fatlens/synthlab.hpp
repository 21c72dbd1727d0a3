#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fatlens/corpus.hpp"
#include "fatlens/econometrics.hpp"
#include "fatlens/mlcore.hpp"

namespace fatlens::synth {

// Parameters of the behavioral DAG: workload Y per shift, idiosyncratic shock
// Delta per patient, true fatigue Y* = Y + Delta, notes W = Y* A, decisions
// D = gamma Y*, outcomes Z = D + noise.
struct DagConfig {
  std::size_t n_physicians = 20;
  std::size_t n_shifts = 200;
  std::size_t patients_per_shift = 5;
  double var_Y = 1.0;
  double var_Delta = 4.0;
  std::vector<double> A{1.0};
  double gamma = 0.3;
  double outcome_noise_var = 1.0;
  double rho = 0.0;              // corr(Delta, standardized non-white indicator)
  double overnight_delta = 0.0;  // added to Delta for arrivals 01:00-05:59
  bool exact_orthogonal = false;
  std::uint64_t seed = 0;
};

void validate(const DagConfig& config);

struct LinearCorpus {
  std::vector<double> Y;      // shift value repeated for each of its patients
  std::vector<double> Delta;  // includes the overnight bump
  std::vector<double> Ystar;
  std::vector<double> D;
  std::vector<double> Z;
  ml::Matrix W;  // n x |A|
  std::vector<double> A;
  std::vector<std::size_t> shift_of;
  // Regression metadata (fatigue left NaN); workload_days is a coarsening of Y.
  std::vector<econ::AnalysisRow> rows;

  std::size_t size() const { return Y.size(); }
};

LinearCorpus simulate_linear(const DagConfig& config);

// Builds the deterministic part of a corpus from given Y and Delta.
LinearCorpus linear_from(const std::vector<double>& Y, const std::vector<double>& Delta,
                         const std::vector<double>& A, double gamma = 0.0);

// Fitted values of the no-intercept least squares of Y on W (minimum-norm
// coefficients when A has several entries).
std::vector<double> note_predictions(const LinearCorpus& corpus);

struct ShrinkageReport {
  std::vector<double> beta_hat;
  std::vector<double> beta_formula;
  std::vector<double> y_hat;
  std::vector<double> y_hat_formula;
  double shrink = 0.0;           // Y'Y / (Y'Y + Delta'Delta)
  double cross_term = 0.0;       // Y'Delta
  double max_abs_error = 0.0;    // over beta and y_hat
  std::string to_json() const;
};

ShrinkageReport shrinkage_check(const LinearCorpus& corpus);

struct AttenuationReport {
  int replicates = 0;
  double alpha = 0.05;
  double reject_y = 0.0;     // share of replicates with p < alpha for Z ~ Y
  double reject_yhat = 0.0;  // for Z ~ Y-hat
  double mean_t_y = 0.0;
  double mean_t_yhat = 0.0;
  double yhat_beats_y = 0.0;  // share with |t(Y-hat)| > |t(Y)|
  std::string to_json() const;
  std::string to_csv() const;
};

AttenuationReport attenuation_experiment(const DagConfig& config, int replicates,
                                         double alpha = 0.05);

// ---- token corpus -------------------------------------------------------------

// Token-generation parameters of one fatigue level.
struct StyleProfile {
  double body_words = 230;     // words outside headings and complaint line
  double sentence_words = 13;  // mean words per sentence
  double template_rate = 0.30; // share of sentences copied from stock phrases
  double insight_rate = 0.030;
  double anger_rate = 0.006;
  double certainty_rate = 0.010;
  double fps_rate = 0.015;     // "i"
};

// Profiles keyed by "low", "mid" and "high".
using StyleMap = std::map<std::string, StyleProfile>;

// Change of each style parameter per standard deviation of latent fatigue.
StyleProfile default_style_loading();

// Levels placed at 0, gap/2 and gap standard deviations along the loading.
StyleMap planted_style_map(double gap, const StyleProfile& base = {},
                           const StyleProfile& loading = default_style_loading());

struct TextCorpusConfig {
  DagConfig dag;  // n_physicians, gamma, rho, overnight_delta, seed are used
  std::size_t n_notes = 20000;
  double patients_per_shift = 10.0;
  double single_episode_prob = 0.75;
  int run_length = 8;
  std::string start_date = "2011-01-03";
  bool text = true;  // false writes a short placeholder body
  double rare_word_rate = 0.02;
  double revisit_prob = 0.1;
  double base_positive_rate = 0.25;
  StyleProfile loading = default_style_loading();
};

struct GroundTruth {
  std::string note_id;
  std::string level;
  double Y = 0.0;
  double Delta = 0.0;  // standardized, overnight bump included
  double Ystar = 0.0;
  double D = 0.0;
};

struct TextCorpus {
  std::vector<corpus::NoteRecord> notes;
  std::vector<corpus::Encounter> encounters;
  std::vector<GroundTruth> truth;

  // Ingestible JSONL (boilerplate lines kept in the text).
  std::string to_jsonl() const;
  std::string truth_csv() const;
};

TextCorpus simulate_text_corpus(const TextCorpusConfig& config, const StyleMap& styles);

const std::vector<std::string>& complaint_vocabulary();

}  // namespace fatlens::synth
