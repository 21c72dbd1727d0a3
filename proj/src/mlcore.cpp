#include "fatlens/mlcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "fatlens/common.hpp"
#include "fatlens/rng.hpp"

namespace fatlens::ml {

namespace {

void check_inputs(const Matrix& X, const std::vector<int>& y) {
  if (static_cast<std::size_t>(X.rows()) != y.size())
    fail(ErrorKind::invalid_argument, "feature rows and labels differ in length");
  if (y.size() < 2) fail(ErrorKind::invalid_argument, "need at least 2 samples");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == 0) neg = true;
    else fail(ErrorKind::invalid_argument, "labels must be 0 or 1");
  }
  if (!pos || !neg) fail(ErrorKind::invalid_argument, "labels contain a single class");
  if (!X.allFinite()) fail(ErrorKind::invalid_argument, "non-finite feature value");
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double logit_loss(const Matrix& X, const std::vector<int>& y, const Vector& w, double b,
                  double lambda) {
  const Vector z = (X * w).array() + b;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) sum += softplus(z[i]) - y[i] * z[i];
  return sum / static_cast<double>(z.size()) + 0.5 * lambda * w.squaredNorm();
}

Vector logit_gradient(const Matrix& X, const std::vector<int>& y, const Vector& w, double b,
                      double lambda) {
  const Eigen::Index n = X.rows(), d = X.cols();
  Vector r(n);
  const Vector z = (X * w).array() + b;
  for (Eigen::Index i = 0; i < n; ++i) r[i] = sigmoid(z[i]) - y[i];
  Vector g(d + 1);
  g.head(d) = X.transpose() * r / static_cast<double>(n) + lambda * w;
  g[d] = r.sum() / static_cast<double>(n);
  return g;
}

LogitFit train_logit(const Matrix& X, const std::vector<int>& y, double lambda,
                     const LogitOptions& options) {
  check_inputs(X, y);
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    fail(ErrorKind::invalid_argument, "lambda must be finite and >= 0");
  const Eigen::Index n = X.rows(), d = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  LogitFit fit;
  fit.lambda = lambda;
  Vector w = Vector::Zero(d);
  double b = 0.0;
  double loss = logit_loss(X, y, w, b, lambda);

  for (int it = 0; it < options.max_iterations; ++it) {
    const Vector z = (X * w).array() + b;
    Vector r(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(z[i]);
      r[i] = p - y[i];
      s[i] = p * (1.0 - p);
    }
    Vector g(d + 1);
    g.head(d) = X.transpose() * r * inv_n + lambda * w;
    g[d] = r.sum() * inv_n;
    fit.gradient_norm = g.norm();
    fit.iterations = it;
    if (fit.gradient_norm < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }

    Matrix H(d + 1, d + 1);
    const Matrix Xs = X.array().colwise() * s.array();
    H.topLeftCorner(d, d) = X.transpose() * Xs * inv_n;
    H.topLeftCorner(d, d).diagonal().array() += lambda;
    const Vector xs_col = Xs.colwise().sum().transpose() * inv_n;
    H.topRightCorner(d, 1) = xs_col;
    H.bottomLeftCorner(1, d) = xs_col.transpose();
    H(d, d) = s.sum() * inv_n;

    Eigen::LDLT<Matrix> ldlt(H);
    Vector step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) step = ldlt.solve(g);
    if (step.size() != d + 1 || !step.allFinite()) {
      // Flat or singular curvature (e.g. separable data without a penalty).
      Matrix Hr = H;
      Hr.diagonal().array() += 1e-8 + 1e-6 * H.diagonal().maxCoeff();
      step = Hr.ldlt().solve(g);
    }

    double t = 1.0;
    const double slope = g.dot(step);
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      const Vector w_new = w - t * step.head(d);
      const double b_new = b - t * step[d];
      const double l_new = logit_loss(X, y, w_new, b_new, lambda);
      if (l_new <= loss - 1e-4 * t * slope) {
        w = w_new;
        b = b_new;
        loss = l_new;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable in the loss
    fit.iterations = it + 1;
  }
  if (!fit.converged) {
    const Vector g = logit_gradient(X, y, w, b, lambda);
    fit.gradient_norm = g.norm();
    fit.converged = fit.gradient_norm < options.gradient_tolerance;
  }
  fit.weights = w;
  fit.intercept = b;
  fit.loss = loss;
  return fit;
}

// ---- metrics -------------------------------------------------------------------

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    fail(ErrorKind::invalid_argument, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (double s : scores)
    if (!std::isfinite(s)) fail(ErrorKind::invalid_argument, "non-finite score");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Sweep tie groups in ascending score; integer counts keep the result exact.
  std::uint64_t pos = 0, neg = 0, twice_concordant = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const int l = labels[order[j]];
      if (l == 1) ++gp;
      else if (l == 0) ++gn;
      else fail(ErrorKind::invalid_argument, "labels must be 0 or 1");
      ++j;
    }
    twice_concordant += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) fail(ErrorKind::invalid_argument, "AUC needs both classes");
  return static_cast<double>(twice_concordant) / (2.0 * static_cast<double>(pos) *
                                                  static_cast<double>(neg));
}

namespace {

struct Confusion {
  double tp = 0, fp = 0, tn = 0, fn = 0;
};

Confusion confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                    double threshold) {
  if (scores.size() != labels.size())
    fail(ErrorKind::invalid_argument, "scores and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) (pred ? c.tp : c.fn) += 1;
    else (pred ? c.fp : c.tn) += 1;
  }
  return c;
}

}  // namespace

double accuracy_at(const std::vector<double>& scores, const std::vector<int>& labels,
                   double threshold) {
  const auto c = confusion(scores, labels, threshold);
  const double n = c.tp + c.fp + c.tn + c.fn;
  return n == 0 ? 0.0 : (c.tp + c.tn) / n;
}

double f1_at(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  const auto c = confusion(scores, labels, threshold);
  const double denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2 * c.tp / denom;
}

namespace {

// Linear interpolation between order statistics.
double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.size() == 1) return v[0];
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace

BootstrapCi bootstrap_ci(const Metric& metric, const std::vector<double>& scores,
                         const std::vector<int>& labels, int replicates, double level,
                         std::uint64_t seed) {
  if (scores.size() != labels.size() || scores.empty())
    fail(ErrorKind::invalid_argument, "bootstrap needs aligned, non-empty scores and labels");
  if (replicates < 1) fail(ErrorKind::invalid_argument, "replicates must be >= 1");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::invalid_argument, "level must be in (0, 1)");
  Rng rng(seed);
  const std::size_t n = scores.size();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(replicates));
  std::vector<double> s(n);
  std::vector<int> l(n);
  BootstrapCi ci;
  ci.level = level;
  for (int r = 0; r < replicates; ++r) {
    bool ok = false;
    for (int attempt = 0; attempt <= 10 && !ok; ++attempt) {
      bool pos = false, neg = false;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.index(n);
        s[i] = scores[k];
        l[i] = labels[k];
        (l[i] == 1 ? pos : neg) = true;
      }
      ok = pos && neg;
    }
    if (!ok) {
      ++ci.skipped;
      continue;
    }
    values.push_back(metric(s, l));
  }
  if (values.empty()) fail(ErrorKind::data, "every bootstrap resample was degenerate");
  std::sort(values.begin(), values.end());
  ci.replicates = static_cast<int>(values.size());
  ci.lower = quantile_sorted(values, (1.0 - level) / 2.0);
  ci.upper = quantile_sorted(values, 1.0 - (1.0 - level) / 2.0);
  return ci;
}

std::string EvalReport::auc_line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "AUC-ROC %.1f (%.0f%% CI %.2f\xE2\x80\x93%.2f)", auc_roc * 100.0,
                ci.level * 100.0, ci.lower * 100.0, ci.upper * 100.0);
  return buf;
}

EvalReport evaluate(const std::vector<double>& probabilities, const std::vector<int>& labels,
                    int replicates, double level, std::uint64_t seed) {
  EvalReport rep;
  rep.n = probabilities.size();
  rep.auc_roc = auc_roc(probabilities, labels);
  rep.accuracy = accuracy_at(probabilities, labels);
  rep.f1 = f1_at(probabilities, labels);
  rep.ci = bootstrap_ci(auc_roc, probabilities, labels, replicates, level, seed);
  // The percentile interval can exclude the point estimate on tiny samples.
  rep.ci.lower = std::min(rep.ci.lower, rep.auc_roc);
  rep.ci.upper = std::max(rep.ci.upper, rep.auc_roc);
  return rep;
}

// ---- cross-validation -------------------------------------------------------------

std::vector<double> default_lambda_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

CvResult cross_validate(const Matrix& X, const std::vector<int>& y,
                        const std::vector<std::string>& groups,
                        const std::vector<double>& lambda_grid, int k, std::uint64_t seed,
                        const LogitOptions& options) {
  check_inputs(X, y);
  if (groups.size() != y.size()) fail(ErrorKind::invalid_argument, "one group id per row required");
  if (lambda_grid.empty()) fail(ErrorKind::invalid_argument, "empty lambda grid");
  if (k < 2) fail(ErrorKind::invalid_argument, "k must be >= 2");
  const std::size_t n_pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  const std::size_t n_neg = y.size() - n_pos;
  if (static_cast<std::size_t>(k) > std::min(n_pos, n_neg))
    fail(ErrorKind::invalid_argument, "k exceeds the smaller class count");

  CvResult res;
  res.lambdas = lambda_grid;

  // Shuffle groups, then hand each to the currently smallest fold.
  std::map<std::string, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < groups.size(); ++i) rows_of[groups[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> group_rows;
  for (const auto& [g, rows] : rows_of) group_rows.push_back(&rows);
  Rng rng(seed);
  rng.shuffle(group_rows);
  if (group_rows.size() < static_cast<std::size_t>(k))
    fail(ErrorKind::invalid_argument, "fewer groups than folds");
  res.fold_of_row.assign(y.size(), 0);
  std::vector<std::size_t> fold_size(static_cast<std::size_t>(k), 0);
  for (const auto* rows : group_rows) {
    const auto f = static_cast<std::size_t>(
        std::min_element(fold_size.begin(), fold_size.end()) - fold_size.begin());
    for (std::size_t r : *rows) res.fold_of_row[r] = static_cast<int>(f);
    fold_size[f] += rows->size();
  }

  res.fold_auc.assign(lambda_grid.size(), std::vector<double>(static_cast<std::size_t>(k), NAN));
  res.mean_auc.assign(lambda_grid.size(), NAN);
  if (lambda_grid.size() == 1) {
    res.best_lambda = lambda_grid[0];
  }

  for (int f = 0; f < k; ++f) {
    std::vector<Eigen::Index> tr, va;
    for (std::size_t i = 0; i < y.size(); ++i) (res.fold_of_row[i] == f ? va : tr).push_back(static_cast<Eigen::Index>(i));
    std::vector<int> ytr, yva;
    for (auto i : tr) ytr.push_back(y[static_cast<std::size_t>(i)]);
    for (auto i : va) yva.push_back(y[static_cast<std::size_t>(i)]);
    const bool va_ok = std::count(yva.begin(), yva.end(), 1) > 0 &&
                       std::count(yva.begin(), yva.end(), 0) > 0;
    const bool tr_ok = std::count(ytr.begin(), ytr.end(), 1) > 0 &&
                       std::count(ytr.begin(), ytr.end(), 0) > 0;
    if (!va_ok || !tr_ok) continue;
    const Matrix Xtr = X(tr, Eigen::all);
    const Matrix Xva = X(va, Eigen::all);
    for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
      const LogitFit fit = train_logit(Xtr, ytr, lambda_grid[li], options);
      const Vector z = (Xva * fit.weights).array() + fit.intercept;
      std::vector<double> s(z.data(), z.data() + z.size());
      res.fold_auc[li][static_cast<std::size_t>(f)] = auc_roc(s, yva);
    }
  }

  for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
    double sum = 0.0;
    int cnt = 0;
    for (double a : res.fold_auc[li])
      if (!std::isnan(a)) {
        sum += a;
        ++cnt;
      }
    if (cnt > 0) res.mean_auc[li] = sum / cnt;
  }
  if (lambda_grid.size() > 1) {
    double best = -1.0;
    bool found = false;
    for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
      const double a = res.mean_auc[li];
      if (std::isnan(a)) continue;
      if (!found || a > best || (a == best && lambda_grid[li] > res.best_lambda)) {
        best = a;
        res.best_lambda = lambda_grid[li];
        found = true;
      }
    }
    if (!found) fail(ErrorKind::data, "no cross-validation fold contained both classes");
  }
  return res;
}

// ---- model persistence and scoring ------------------------------------------------

double LogitModel::linear_predictor(const std::vector<double>& raw) const {
  if (raw.size() != weights.size())
    fail(ErrorKind::invalid_argument, "feature dimension " + std::to_string(raw.size()) +
                                          " does not match model dimension " +
                                          std::to_string(weights.size()));
  const std::vector<double> x =
      standardizer.standardized_count() > 0 ? standardizer.apply(raw) : raw;
  double z = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
  return z;
}

double LogitModel::predict(const std::vector<double>& raw) const {
  return sigmoid(linear_predictor(raw));
}

std::string LogitModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "fatlens-logit";
  j["version"] = 1;
  j["feature_names"] = feature_names;
  j["weights"] = weights;
  j["intercept"] = intercept;
  j["lambda"] = lambda;
  j["standardizer"] = {{"standardized_count", standardizer.standardized_count()},
                       {"means", standardizer.means()},
                       {"sds", standardizer.sds()}};
  j["provenance"] = provenance;
  return j.dump(2) + "\n";
}

LogitModel LogitModel::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "fatlens-logit")
      fail(ErrorKind::data, "not a logistic model file");
    LogitModel m;
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    m.lambda = j.at("lambda").get<double>();
    const auto& st = j.at("standardizer");
    m.standardizer = textfeat::Standardizer(st.at("means").get<std::vector<double>>(),
                                            st.at("sds").get<std::vector<double>>(),
                                            st.at("standardized_count").get<std::size_t>());
    if (j.contains("provenance"))
      m.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    if (m.weights.size() != m.feature_names.size())
      fail(ErrorKind::data, "model weights do not match its feature names");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed model file: ") + e.what());
  }
}

std::vector<FatigueScore> score_notes(const LogitModel& model,
                                      const std::vector<textfeat::FeatureVector>& vectors,
                                      const std::set<std::string>& reference) {
  std::vector<FatigueScore> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) out.push_back({v.note_id, model.predict(v.values), 0.0});
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : out)
    if (reference.empty() || reference.count(s.note_id)) {
      sum += s.probability;
      ++n;
    }
  if (n == 0) fail(ErrorKind::invalid_argument, "reference set matches no scored note");
  const double mean = sum / static_cast<double>(n);
  for (const auto& s : out)
    if (reference.empty() || reference.count(s.note_id))
      sq += (s.probability - mean) * (s.probability - mean);
  const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
  for (auto& s : out) s.standardized = sd > 0 ? (s.probability - mean) / sd : 0.0;
  return out;
}

}  // namespace fatlens::ml
