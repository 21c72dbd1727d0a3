#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fatlens/textfeat.hpp"

namespace fatlens::ml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---- logistic regression ---------------------------------------------------

struct LogitOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
};

struct LogitFit {
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;
  int iterations = 0;
  double loss = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
};

// mean log-loss + lambda/2 |w|^2 (intercept unpenalized).
double logit_loss(const Matrix& X, const std::vector<int>& y, const Vector& w, double b,
                  double lambda);
// Gradient of logit_loss; the last entry is the intercept component.
Vector logit_gradient(const Matrix& X, const std::vector<int>& y, const Vector& w, double b,
                      double lambda);

// Damped Newton from w = 0, b = 0.
LogitFit train_logit(const Matrix& X, const std::vector<int>& y, double lambda,
                     const LogitOptions& options = {});

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---- metrics -----------------------------------------------------------------

// Probability that a random positive outscores a random negative, ties half.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);
double accuracy_at(const std::vector<double>& scores, const std::vector<int>& labels,
                   double threshold = 0.5);
double f1_at(const std::vector<double>& scores, const std::vector<int>& labels,
             double threshold = 0.5);

using Metric = std::function<double(const std::vector<double>&, const std::vector<int>&)>;

struct BootstrapCi {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  int replicates = 0;  // evaluated replicates
  int skipped = 0;     // replicates still one-class after the retries
};

BootstrapCi bootstrap_ci(const Metric& metric, const std::vector<double>& scores,
                         const std::vector<int>& labels, int replicates = 1000,
                         double level = 0.95, std::uint64_t seed = 0);

struct EvalReport {
  double auc_roc = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  BootstrapCi ci;  // for the AUC
  std::size_t n = 0;

  // "AUC-ROC 60.1 (95% CI 60.06–60.30)"
  std::string auc_line() const;
};

EvalReport evaluate(const std::vector<double>& probabilities, const std::vector<int>& labels,
                    int replicates = 1000, double level = 0.95, std::uint64_t seed = 0);

// ---- cross-validation --------------------------------------------------------

struct CvResult {
  std::vector<double> lambdas;
  std::vector<double> mean_auc;                // per lambda
  std::vector<std::vector<double>> fold_auc;   // [lambda][fold], NaN for one-class folds
  std::vector<int> fold_of_row;
  double best_lambda = 0.0;
};

// Folds are built from whole groups (patients). Best lambda by mean validation
// AUC; ties go to the larger lambda.
CvResult cross_validate(const Matrix& X, const std::vector<int>& y,
                        const std::vector<std::string>& groups,
                        const std::vector<double>& lambda_grid, int k = 5, std::uint64_t seed = 0,
                        const LogitOptions& options = {});

std::vector<double> default_lambda_grid();

// ---- persisted model -----------------------------------------------------------

struct LogitModel {
  std::vector<std::string> feature_names;
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  textfeat::Standardizer standardizer;
  std::map<std::string, std::string> provenance;

  std::size_t dimension() const { return weights.size(); }
  // Raw (unstandardized) feature row -> probability.
  double predict(const std::vector<double>& raw) const;
  double linear_predictor(const std::vector<double>& raw) const;

  std::string to_json() const;
  static LogitModel from_json(std::string_view text);
};

struct FatigueScore {
  std::string note_id;
  double probability = 0.0;
  double standardized = 0.0;
};

// Standardizes probabilities with the mean and sample SD over `reference`
// (note ids); an empty reference set means every scored note.
std::vector<FatigueScore> score_notes(const LogitModel& model,
                                      const std::vector<textfeat::FeatureVector>& vectors,
                                      const std::set<std::string>& reference);

// ---- zero-shot LLM baseline ----------------------------------------------------

struct LlmEndpoint {
  std::string url;  // full chat-completions URL, http:// or https://
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
  double timeout_seconds = 60.0;
  int retries = 2;
};

struct NotePair {
  std::string fatigued_text;
  std::string rested_text;
};

struct LlmPairResult {
  bool fatigued_first = false;  // presentation order after shuffling
  int answer = 0;               // 1, 2, or 0 when unparseable / failed
  bool failed = false;
  std::string error;
  std::string reply;
  double score = 0.5;  // 1 correct, 0 wrong, 0.5 abstention
};

struct LlmBaselineReport {
  std::size_t pairs = 0;
  std::size_t failures = 0;
  std::size_t abstentions = 0;
  double accuracy = 0.0;  // over pairs that returned a reply
  double auc_roc = 0.0;   // note-level AUC of the choices
  std::vector<LlmPairResult> results;
};

std::string pair_prompt(std::string_view note1, std::string_view note2);
// 1 or 2, or 0 when the reply names neither note.
int parse_pair_reply(std::string_view reply);

// The transport is replaceable for tests; the default posts to the endpoint.
using ChatTransport = std::function<std::string(const LlmEndpoint&, const std::string& prompt)>;
std::string http_chat_completion(const LlmEndpoint& endpoint, const std::string& prompt);

LlmBaselineReport llm_pairwise_baseline(const std::vector<NotePair>& pairs,
                                        const LlmEndpoint& endpoint, std::uint64_t seed,
                                        const ChatTransport& transport = http_chat_completion);

}  // namespace fatlens::ml
