#include "fatlens/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "fatlens/common.hpp"
#include "fatlens/fileio.hpp"
#include "fatlens/rng.hpp"
#include "json.hpp"

namespace fatlens::synth {

using corpus::Language;
using corpus::Race;
using corpus::Sex;

void validate(const DagConfig& c) {
  if (c.var_Y < 0 || c.var_Delta < 0 || c.outcome_noise_var < 0)
    fail(ErrorKind::config, "variances must be non-negative");
  if (!(std::fabs(c.rho) < 1.0)) fail(ErrorKind::config, "rho must satisfy |rho| < 1");
  if (c.n_physicians == 0 || c.n_shifts == 0 || c.patients_per_shift == 0)
    fail(ErrorKind::config, "physician, shift and patient counts must be positive");
  if (c.A.empty()) fail(ErrorKind::config, "note loading A needs at least one entry");
  for (double a : c.A)
    if (!std::isfinite(a)) fail(ErrorKind::config, "note loading A must be finite");
}

namespace {

constexpr double kNonWhiteShare = 0.55;
constexpr std::int64_t kMinute = 60;

struct Demographics {
  Sex sex = Sex::female;
  Race race = Race::white;
  std::optional<Language> language;
  int age = 40;
};

Demographics draw_demographics(Rng& rng) {
  Demographics d;
  d.sex = rng.bernoulli(0.5) ? Sex::female : Sex::male;
  const double u = rng.uniform();
  d.race = u < 0.45 ? Race::white : u < 0.70 ? Race::black : u < 0.90 ? Race::hispanic : Race::other;
  const double l = rng.uniform();
  if (d.race == Race::hispanic)
    d.language = l < 0.40 ? Language::spanish : l < 0.95 ? Language::english : Language::other;
  else
    d.language = l < 0.93 ? Language::english : l < 0.95 ? Language::spanish : Language::other;
  d.age = 18 + static_cast<int>(rng.index(73));
  return d;
}

// Shock standardized to unit variance, correlated rho with the standardized
// non-white indicator.
double draw_shock(Rng& rng, Race race, double rho) {
  const double e = rng.normal();
  if (rho == 0.0) return e;
  const double ind = race == Race::white ? 0.0 : 1.0;
  const double u = (ind - kNonWhiteShare) / std::sqrt(kNonWhiteShare * (1 - kNonWhiteShare));
  return rho * u + std::sqrt(1 - rho * rho) * e;
}

std::vector<std::string> draw_complaints(Rng& rng) {
  const auto& vocab = complaint_vocabulary();
  std::set<std::string> cc{vocab[rng.index(vocab.size())]};
  if (rng.bernoulli(0.2)) cc.insert(vocab[rng.index(vocab.size())]);
  return {cc.begin(), cc.end()};
}

corpus::WorkloadClass class_of(int prior) {
  return prior >= 4 ? corpus::WorkloadClass::high
         : prior == 0 ? corpus::WorkloadClass::low
                      : corpus::WorkloadClass::mid;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

const std::vector<std::string>& complaint_vocabulary() {
  static const std::vector<std::string> v{
      "abdominal pain", "back pain", "chest pain", "dizziness", "fall",     "fever",
      "headache",       "laceration", "nausea",   "shortness of breath", "syncope", "weakness"};
  return v;
}

// ---- linear corpus ---------------------------------------------------------------

LinearCorpus linear_from(const std::vector<double>& Y, const std::vector<double>& Delta,
                         const std::vector<double>& A, double gamma) {
  if (Y.size() != Delta.size()) fail(ErrorKind::invalid_argument, "Y and Delta differ in length");
  if (A.empty()) fail(ErrorKind::invalid_argument, "note loading A needs at least one entry");
  LinearCorpus c;
  const std::size_t n = Y.size();
  c.Y = Y;
  c.Delta = Delta;
  c.A = A;
  c.Ystar.resize(n);
  c.D.resize(n);
  c.Z.resize(n);
  c.shift_of.resize(n);
  c.W.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(A.size()));
  for (std::size_t i = 0; i < n; ++i) {
    c.Ystar[i] = Y[i] + Delta[i];
    c.D[i] = gamma * c.Ystar[i];
    c.Z[i] = c.D[i];
    c.shift_of[i] = i;
    for (std::size_t k = 0; k < A.size(); ++k)
      c.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = c.Ystar[i] * A[k];
  }
  return c;
}

LinearCorpus simulate_linear(const DagConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t n = cfg.n_shifts * cfg.patients_per_shift;
  const double sd_y = std::sqrt(cfg.var_Y), sd_d = std::sqrt(cfg.var_Delta);
  const double sd_z = std::sqrt(cfg.outcome_noise_var);
  const EpochSeconds t0 = parse_timestamp("2012-01-02T00:00:00Z");
  static const int kStarts[] = {7, 11, 15, 19, 23};

  std::vector<double> Y(n), Delta(n);
  std::vector<std::size_t> shift_of(n);
  std::vector<econ::AnalysisRow> rows(n);
  std::vector<double> shift_y(cfg.n_shifts);
  for (std::size_t s = 0; s < cfg.n_shifts; ++s) {
    shift_y[s] = sd_y * rng.normal();
    const std::size_t phys = s % cfg.n_physicians;
    const std::size_t round = s / cfg.n_physicians;
    const int start_hour = kStarts[rng.index(5)];
    const EpochSeconds start =
        t0 + static_cast<EpochSeconds>(round * 2 + rng.index(2)) * 86400 + start_hour * 3600 +
        static_cast<EpochSeconds>(rng.index(60)) * kMinute;
    // Observed workload days: a coarse, bounded reading of Y.
    const double z = sd_y > 0 ? shift_y[s] / sd_y : 0.0;
    const int days = std::clamp(static_cast<int>(std::lround(4.0 + 1.5 * z)), 1, 7);
    for (std::size_t k = 0; k < cfg.patients_per_shift; ++k) {
      const std::size_t i = s * cfg.patients_per_shift + k;
      shift_of[i] = s;
      Y[i] = shift_y[s];
      const Demographics demo = draw_demographics(rng);
      const EpochSeconds arrival =
          start + static_cast<EpochSeconds>(k * 45 + rng.index(30)) * kMinute;
      auto& r = rows[i];
      char buf[32];
      std::snprintf(buf, sizeof buf, "L%06zu", i);
      r.note_id = buf;
      std::snprintf(buf, sizeof buf, "P%03zu", phys);
      r.physician_id = buf;
      std::snprintf(buf, sizeof buf, "pt%06zu", i);
      r.patient_id = buf;
      r.arrival = civil_from_epoch(arrival);
      r.sex = demo.sex;
      r.race = demo.race;
      r.language = demo.language;
      r.age = demo.age;
      r.complaints = draw_complaints(rng);
      r.workload_days = days;
      r.prior_days_worked = days - 1;
      r.workload_class = class_of(days - 1);
      r.overnight = econ::is_overnight_arrival(r.arrival.hour);
      r.patients_seen_prior = static_cast<int>(k);
      Delta[i] = sd_d * draw_shock(rng, demo.race, cfg.rho) + (r.overnight ? cfg.overnight_delta : 0.0);
    }
  }
  if (cfg.exact_orthogonal) {
    const double yy = dot(Y, Y);
    if (yy > 0) {
      const double proj = dot(Y, Delta) / yy;
      for (std::size_t i = 0; i < n; ++i) Delta[i] -= proj * Y[i];
    }
  }
  LinearCorpus c = linear_from(Y, Delta, cfg.A, cfg.gamma);
  c.shift_of = std::move(shift_of);
  for (std::size_t i = 0; i < n; ++i) c.Z[i] = c.D[i] + sd_z * rng.normal();
  c.rows = std::move(rows);
  return c;
}

std::vector<double> note_predictions(const LinearCorpus& c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  const Eigen::Map<const Eigen::VectorXd> y(c.Y.data(), n);
  Eigen::VectorXd beta;
  if (c.W.cols() == 1) {
    const double ww = c.W.col(0).squaredNorm();
    beta = Eigen::VectorXd::Constant(1, ww > 0 ? c.W.col(0).dot(y) / ww : 0.0);
  } else {
    beta = c.W.completeOrthogonalDecomposition().solve(y);
  }
  const Eigen::VectorXd fit = c.W * beta;
  return {fit.data(), fit.data() + fit.size()};
}

ShrinkageReport shrinkage_check(const LinearCorpus& c) {
  double aa = 0.0;
  for (double a : c.A) aa += a * a;
  if (aa == 0.0) fail(ErrorKind::invalid_argument, "shrinkage formula undefined for A = 0");
  const auto n = static_cast<Eigen::Index>(c.size());
  const Eigen::Map<const Eigen::VectorXd> y(c.Y.data(), n);

  ShrinkageReport r;
  Eigen::VectorXd beta;
  if (c.W.cols() == 1) {
    const double ww = c.W.col(0).squaredNorm();
    beta = Eigen::VectorXd::Constant(1, ww > 0 ? c.W.col(0).dot(y) / ww : 0.0);
  } else {
    beta = c.W.completeOrthogonalDecomposition().solve(y);
  }
  const Eigen::VectorXd fit = c.W * beta;
  r.beta_hat.assign(beta.data(), beta.data() + beta.size());
  r.y_hat.assign(fit.data(), fit.data() + fit.size());

  const double yy = dot(c.Y, c.Y), dd = dot(c.Delta, c.Delta);
  r.cross_term = dot(c.Y, c.Delta);
  r.shrink = yy + dd > 0 ? yy / (yy + dd) : 0.0;
  for (double a : c.A) r.beta_formula.push_back(a / aa * r.shrink);
  r.y_hat_formula.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) r.y_hat_formula[i] = r.shrink * (c.Y[i] + c.Delta[i]);

  for (std::size_t k = 0; k < r.beta_hat.size(); ++k)
    r.max_abs_error = std::max(r.max_abs_error, std::fabs(r.beta_hat[k] - r.beta_formula[k]));
  for (std::size_t i = 0; i < c.size(); ++i)
    r.max_abs_error = std::max(r.max_abs_error, std::fabs(r.y_hat[i] - r.y_hat_formula[i]));
  return r;
}

std::string ShrinkageReport::to_json() const {
  nlohmann::ordered_json j;
  j["beta_hat"] = beta_hat;
  j["beta_formula"] = beta_formula;
  j["shrink"] = shrink;
  j["cross_term"] = cross_term;
  j["max_abs_error"] = max_abs_error;
  j["n"] = y_hat.size();
  return j.dump(2) + "\n";
}

namespace {

// Slope t statistic and p-value of y on x with an intercept.
std::pair<double, double> slope_test(const std::vector<double>& x, const std::vector<double>& y) {
  econ::DataFrame df(x.size());
  df.add_numeric("x", x);
  df.add_numeric("y", y);
  const auto r = econ::fit_ols(df, {"y", {"x"}, {}});
  const econ::Term* t = r.find("x");
  if (!t) return {0.0, 1.0};
  return {t->t, t->p};
}

}  // namespace

AttenuationReport attenuation_experiment(const DagConfig& config, int replicates, double alpha) {
  validate(config);
  if (replicates <= 0) fail(ErrorKind::invalid_argument, "replicates must be positive");
  AttenuationReport rep;
  rep.replicates = replicates;
  rep.alpha = alpha;
  for (int r = 0; r < replicates; ++r) {
    DagConfig cfg = config;
    cfg.seed = Rng::derive(config.seed, static_cast<std::uint64_t>(r));
    const LinearCorpus c = simulate_linear(cfg);
    const auto yhat = note_predictions(c);
    const auto [ty, py] = slope_test(c.Y, c.Z);
    const auto [th, ph] = slope_test(yhat, c.Z);
    rep.reject_y += py < alpha;
    rep.reject_yhat += ph < alpha;
    rep.mean_t_y += ty;
    rep.mean_t_yhat += th;
    rep.yhat_beats_y += std::fabs(th) > std::fabs(ty);
  }
  const double k = replicates;
  rep.reject_y /= k;
  rep.reject_yhat /= k;
  rep.mean_t_y /= k;
  rep.mean_t_yhat /= k;
  rep.yhat_beats_y /= k;
  return rep;
}

std::string AttenuationReport::to_json() const {
  nlohmann::ordered_json j;
  j["replicates"] = replicates;
  j["alpha"] = alpha;
  j["reject_rate_workload"] = reject_y;
  j["reject_rate_note_prediction"] = reject_yhat;
  j["mean_t_workload"] = mean_t_y;
  j["mean_t_note_prediction"] = mean_t_yhat;
  j["share_prediction_t_larger"] = yhat_beats_y;
  return j.dump(2) + "\n";
}

std::string AttenuationReport::to_csv() const {
  CsvWriter w({"regressor", "reject_rate", "mean_t"});
  w.add_row({"workload", format_double(reject_y), format_double(mean_t_y)});
  w.add_row({"note_prediction", format_double(reject_yhat), format_double(mean_t_yhat)});
  return w.str();
}

// ---- token corpus -------------------------------------------------------------------

StyleProfile default_style_loading() {
  StyleProfile l;
  l.body_words = -40.0;
  l.sentence_words = -1.5;
  l.template_rate = 0.08;
  l.insight_rate = -0.008;
  l.anger_rate = 0.003;
  l.certainty_rate = 0.003;
  l.fps_rate = -0.004;
  return l;
}

namespace {

StyleProfile axpy(const StyleProfile& base, double t, const StyleProfile& d) {
  StyleProfile p;
  p.body_words = base.body_words + t * d.body_words;
  p.sentence_words = base.sentence_words + t * d.sentence_words;
  p.template_rate = base.template_rate + t * d.template_rate;
  p.insight_rate = base.insight_rate + t * d.insight_rate;
  p.anger_rate = base.anger_rate + t * d.anger_rate;
  p.certainty_rate = base.certainty_rate + t * d.certainty_rate;
  p.fps_rate = base.fps_rate + t * d.fps_rate;
  return p;
}

std::vector<double> as_vector(const StyleProfile& p) {
  return {p.body_words,   p.sentence_words, p.template_rate, p.insight_rate,
          p.anger_rate,   p.certainty_rate, p.fps_rate};
}

// Position of a level along the loading, in latent standard deviations.
double level_position(const StyleProfile& level, const StyleProfile& low, const StyleProfile& loading) {
  const auto a = as_vector(level), b = as_vector(low), l = as_vector(loading);
  double sum = 0.0;
  int used = 0;
  for (std::size_t k = 0; k < l.size(); ++k)
    if (l[k] != 0.0) {
      sum += (a[k] - b[k]) / l[k];
      ++used;
    }
  return used ? sum / used : 0.0;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> v{
      "the", "patient", "and", "with", "of", "to", "in", "was", "is", "a", "on", "for", "has",
      "history", "pain", "no", "denies", "reports", "noted", "at", "per", "which", "since",
      "after", "prior", "today", "yesterday", "morning", "evening", "home", "family", "wife",
      "husband", "daughter", "son", "states", "describes", "sharp", "dull", "pressure",
      "intermittent", "constant", "worsening", "improving", "mild", "moderate", "severe",
      "left", "right", "lower", "upper", "abdomen", "chest", "back", "head", "neck", "arm",
      "leg", "knee", "shoulder", "stomach", "breathing", "cough", "fever", "chills",
      "vomiting", "diarrhea", "dizziness", "weakness", "numbness", "swelling", "bruising",
      "bleeding", "tenderness", "rash", "medication", "medications", "aspirin", "ibuprofen",
      "acetaminophen", "insulin", "metformin", "lisinopril", "allergies", "surgery",
      "hypertension", "diabetes", "asthma", "smoking", "alcohol", "walking", "standing",
      "sitting", "sleeping", "eating", "drinking", "working", "lifting", "episode", "episodes",
      "hours", "days", "weeks", "onset", "duration", "location", "radiation", "quality",
      "severity", "associated", "symptoms", "similar", "previous", "visit", "clinic",
      "primary", "care", "doctor", "nurse", "ambulance", "arrived", "brought", "found",
      "ground", "stairs", "bathroom", "kitchen", "bed", "car", "accident", "minor", "trauma",
      "injury", "bump", "cut", "wound", "sutures", "tetanus", "vaccine", "blood", "sugar",
      "urine", "stool", "appetite", "weight", "vision", "hearing", "speech", "gait",
      "balance", "confusion", "memory", "awake", "alert", "oriented", "comfortable",
      "distress", "appears", "stable", "vitals", "normal", "abnormal", "elevated",
      "decreased", "increased", "regular", "irregular", "rhythm", "rate", "murmur", "lungs",
      "clear", "heart", "sounds", "bowel", "soft", "nontender", "extremities", "pulses",
      "intact", "sensation", "strength", "reflexes", "skin", "warm", "dry", "labs", "imaging",
      "ordered", "pending", "reviewed", "results", "fluids", "given", "dose", "tolerated",
      "observation", "admit", "discharge", "return", "precautions", "follow", "up", "plan",
      "discussed", "agrees", "understanding", "questions", "answered", "also", "but", "then",
      "again", "still", "now", "recently", "currently", "usually", "sometimes", "briefly"};
  return v;
}

const std::vector<std::string>& template_sentences() {
  static const std::vector<std::string> v{
      "patient presents to the emergency department with symptoms as described above and "
      "denies any other complaints at this time per report",
      "vital signs reviewed and stable on arrival with no acute distress noted by nursing "
      "staff during the initial evaluation today",
      "denies fever chills nausea vomiting diarrhea shortness of breath or any recent sick "
      "contacts or travel history per patient",
      "physical exam is otherwise unremarkable with normal heart and lung sounds and a soft "
      "nontender abdomen on palpation today",
      "labs and imaging ordered and will be reviewed with the patient once results return "
      "from the lab this evening",
      "plan discussed with patient who verbalizes understanding and agrees with the plan of "
      "care and return precautions given",
      "patient will be reassessed after treatment and dispositioned accordingly based on "
      "response and results of the workup",
      "no known drug allergies and medications reviewed with the patient and family at the "
      "bedside during this visit",
      "follow up with primary care doctor in two to three days or sooner if symptoms worsen "
      "or new symptoms develop",
      "alert and oriented with normal speech and gait and no focal neurologic deficits on "
      "exam at the time of evaluation"};
  return v;
}

const std::vector<std::string>& insight_words() {
  static const std::vector<std::string> v{"believe", "think", "consider", "suspect", "feel",
                                          "know", "understand", "realize", "explain", "reveal"};
  return v;
}
const std::vector<std::string>& anger_words() {
  static const std::vector<std::string> v{"assault", "threat", "hostile", "angry", "fight",
                                          "hit", "attack", "lying", "abuse", "agitated"};
  return v;
}
const std::vector<std::string>& certainty_words() {
  static const std::vector<std::string> v{"certain", "definitely", "never", "always",
                                          "apparent", "obvious", "absolutely", "clearly"};
  return v;
}

// Fixed bigram source over the filler vocabulary.
struct FillerSource {
  std::vector<std::vector<std::pair<std::size_t, double>>> next;  // cumulative weights
  std::vector<double> start;                                      // cumulative

  FillerSource() {
    const std::size_t v = filler_words().size();
    Rng rng(0x5eedf111e5ULL);
    next.resize(v);
    for (std::size_t i = 0; i < v; ++i) {
      std::set<std::size_t> used;
      double cum = 0.0;
      for (int k = 0; k < 14; ++k) {
        std::size_t j = rng.index(v);
        while (used.count(j)) j = rng.index(v);
        used.insert(j);
        cum += 1.0 / (k + 1.0);
        next[i].emplace_back(j, cum);
      }
    }
    double cum = 0.0;
    for (std::size_t i = 0; i < v; ++i) start.push_back(cum += 1.0 / (1.0 + i % 40));
  }

  std::size_t first(Rng& rng) const {
    const double u = rng.uniform() * start.back();
    return static_cast<std::size_t>(std::upper_bound(start.begin(), start.end(), u) - start.begin());
  }
  std::size_t step(std::size_t from, Rng& rng) const {
    const auto& opts = next[from];
    const double u = rng.uniform() * opts.back().second;
    for (const auto& [j, c] : opts)
      if (u < c) return j;
    return opts.back().first;
  }
};

const FillerSource& filler_source() {
  static const FillerSource s;
  return s;
}

std::string pseudo_word(std::size_t index) {
  static const char* syl[] = {"ka", "lo", "mi", "ru", "ze", "pa", "ti", "vo", "ne", "sha",
                              "gu", "ri", "do", "fe", "qui", "ba", "xo", "la", "tu", "mo"};
  std::string w;
  std::size_t x = index;
  for (int k = 0; k < 4; ++k) {
    w += syl[x % 20];
    x /= 20;
  }
  return w;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string free_word(Rng& rng, const StyleProfile& p, double rare_rate, std::size_t& state,
                      bool& has_state) {
  const double u = rng.uniform();
  double acc = p.insight_rate;
  if (u < acc) return insight_words()[rng.index(insight_words().size())];
  acc += p.anger_rate;
  if (u < acc) return anger_words()[rng.index(anger_words().size())];
  acc += p.certainty_rate;
  if (u < acc) return certainty_words()[rng.index(certainty_words().size())];
  acc += p.fps_rate;
  if (u < acc) return "i";
  acc += rare_rate;
  if (u < acc) return pseudo_word(rng.index(20000));
  const auto& src = filler_source();
  state = has_state ? src.step(state, rng) : src.first(rng);
  has_state = true;
  return filler_words()[state];
}

// `words` words split into sentences, each ending with ". ".
std::string section_text(Rng& rng, const StyleProfile& p, std::size_t words, double rare_rate) {
  std::string out;
  const auto& templates = template_sentences();
  while (words > 0) {
    std::size_t len = static_cast<std::size_t>(
        std::max(3L, std::lround(rng.normal(std::max(3.0, p.sentence_words), 2.0))));
    if (len > words || words - len < 3) len = words;
    std::vector<std::string> sentence;
    if (rng.bernoulli(std::clamp(p.template_rate, 0.0, 1.0))) {
      const auto tw = split_words(templates[rng.index(templates.size())]);
      for (std::size_t k = 0; k < len && k < tw.size(); ++k) sentence.push_back(tw[k]);
    }
    std::size_t state = 0;
    bool has_state = false;
    while (sentence.size() < len) sentence.push_back(free_word(rng, p, rare_rate, state, has_state));
    sentence[0][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0][0])));
    for (std::size_t k = 0; k < sentence.size(); ++k) {
      if (k) out += ' ';
      out += sentence[k];
    }
    out += ". ";
    words -= len;
  }
  if (!out.empty()) out.pop_back();
  return out;
}

StyleProfile clamp_profile(StyleProfile p) {
  p.body_words = std::max(12.0, p.body_words);
  p.sentence_words = std::max(3.0, p.sentence_words);
  for (double* r : {&p.template_rate, &p.insight_rate, &p.anger_rate, &p.certainty_rate, &p.fps_rate})
    *r = std::clamp(*r, 0.0, 1.0);
  return p;
}

const char* kSurnames[] = {"Adams", "Baker", "Chen", "Diaz", "Evans", "Fischer", "Garcia",
                           "Hughes", "Ito",  "Jones", "Kaur", "Lopez", "Moore",  "Nguyen",
                           "Okafor", "Patel", "Quinn", "Reyes", "Smith", "Turner"};

struct PlannedShift {
  std::size_t physician = 0;
  std::int64_t day = 0;
  int start_minute = 0;
  std::string level;
  int prior = 0;
  std::size_t notes = 0;
};

}  // namespace

StyleMap planted_style_map(double gap, const StyleProfile& base, const StyleProfile& loading) {
  return {{"low", base}, {"mid", axpy(base, gap / 2, loading)}, {"high", axpy(base, gap, loading)}};
}

TextCorpus simulate_text_corpus(const TextCorpusConfig& cfg, const StyleMap& styles) {
  validate(cfg.dag);
  for (const char* level : {"low", "mid", "high"})
    if (!styles.count(level))
      fail(ErrorKind::config, std::string("style map has no profile for level '") + level + "'");
  if (cfg.n_notes == 0) fail(ErrorKind::config, "n_notes must be positive");
  if (cfg.run_length < 1) fail(ErrorKind::config, "run_length must be at least 1");

  Rng rng(cfg.dag.seed);
  const std::int64_t day0 = parse_timestamp(cfg.start_date + "T00:00:00Z") / 86400;
  const std::size_t P = cfg.dag.n_physicians;
  static const int kStarts[] = {7, 11, 15, 19, 23};

  // Work schedule: single shifts and runs of consecutive days, each episode
  // followed by at least a week off.
  std::vector<std::int64_t> cursor(P);
  std::vector<std::set<std::int64_t>> worked(P);
  for (std::size_t p = 0; p < P; ++p) cursor[p] = day0 + static_cast<std::int64_t>(rng.index(14));
  std::vector<PlannedShift> plan;
  std::size_t total = 0;
  while (total < cfg.n_notes) {
    for (std::size_t p = 0; p < P && total < cfg.n_notes; ++p) {
      const int days = rng.bernoulli(cfg.single_episode_prob) ? 1 : cfg.run_length;
      const int base = kStarts[rng.index(5)] * 60 + static_cast<int>(rng.index(121)) - 60;
      for (int k = 0; k < days && total < cfg.n_notes; ++k) {
        PlannedShift s;
        s.physician = p;
        s.day = cursor[p] + k;
        s.start_minute = base + static_cast<int>(rng.index(61)) - 30;
        for (std::int64_t d = s.day - 6; d < s.day; ++d) s.prior += worked[p].count(d);
        s.level = corpus::to_string(class_of(s.prior));
        worked[p].insert(s.day);
        s.notes = static_cast<std::size_t>(
            std::max(1L, std::lround(rng.normal(cfg.patients_per_shift, 2.5))));
        s.notes = std::min(s.notes, cfg.n_notes - total);
        total += s.notes;
        plan.push_back(s);
      }
      cursor[p] += days - 1 + 8 + static_cast<std::int64_t>(rng.index(3));
    }
  }

  const StyleProfile& low = styles.at("low");
  struct Pending {
    EpochSeconds ts;
    std::size_t physician;
    corpus::NoteRecord note;
    corpus::Encounter enc;
    GroundTruth truth;
  };
  std::vector<Pending> pending;
  pending.reserve(total);
  std::vector<std::pair<std::string, Demographics>> patients;
  for (const auto& s : plan) {
    const StyleProfile& prof = styles.at(s.level);
    const double y_level = level_position(prof, low, cfg.loading);
    EpochSeconds t = s.day * 86400 + static_cast<EpochSeconds>(s.start_minute) * kMinute;
    for (std::size_t k = 0; k < s.notes; ++k) {
      t += static_cast<EpochSeconds>(k == 0 ? 5 + rng.index(26) : 10 + rng.index(41)) * kMinute;
      Pending pd;
      pd.ts = t;
      pd.physician = s.physician;
      std::string pid;
      Demographics demo;
      if (!patients.empty() && rng.bernoulli(cfg.revisit_prob)) {
        const auto& prev = patients[rng.index(patients.size())];
        pid = prev.first;
        demo = prev.second;
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "pt%06zu", patients.size());
        pid = buf;
        demo = draw_demographics(rng);
        patients.emplace_back(pid, demo);
      }
      corpus::Encounter& e = pd.enc;
      e.age = demo.age;
      e.sex = demo.sex;
      e.race = demo.race;
      e.language = demo.language;
      e.chief_complaints = draw_complaints(rng);
      e.arrival_time = t - static_cast<EpochSeconds>(10 + rng.index(51)) * kMinute;
      const LocalTime arrival = civil_from_epoch(e.arrival_time);
      const bool overnight = econ::is_overnight_arrival(arrival.hour);

      GroundTruth& g = pd.truth;
      g.level = s.level;
      g.Y = y_level;
      g.Delta = draw_shock(rng, demo.race, cfg.dag.rho) + (overnight ? cfg.dag.overnight_delta : 0.0);
      g.Ystar = g.Y + g.Delta;
      g.D = cfg.dag.gamma * g.Ystar;

      const bool chest = std::find(e.chief_complaints.begin(), e.chief_complaints.end(),
                                   "chest pain") != e.chief_complaints.end();
      e.tested = rng.bernoulli(chest ? 0.5 : 0.08);
      const double base_logit = std::log(cfg.base_positive_rate / (1 - cfg.base_positive_rate));
      e.test_positive = e.tested && rng.bernoulli(ml::sigmoid(base_logit - g.D));

      corpus::NoteRecord& n = pd.note;
      char buf[32];
      std::snprintf(buf, sizeof buf, "P%03zu", s.physician);
      n.physician_id = buf;
      n.patient_id = pid;
      n.timestamp = t;
      const std::string date = format_timestamp(t).substr(0, 10);
      std::string text = "Generated by ChartWriter 4.2 on " + date + "\nChief Complaint:\n";
      for (std::size_t c = 0; c < e.chief_complaints.size(); ++c)
        text += (c ? ", " : "") + e.chief_complaints[c];
      text += ".\nHistory of Present Illness:\n";
      if (cfg.text) {
        const StyleProfile p = clamp_profile(axpy(prof, g.Delta, cfg.loading));
        const auto body = static_cast<std::size_t>(std::lround(p.body_words));
        const std::size_t hpi = std::max<std::size_t>(3, body * 45 / 100);
        const std::size_t pe = std::max<std::size_t>(3, body * 25 / 100);
        const std::size_t ap = body > hpi + pe + 3 ? body - hpi - pe : 3;
        text += section_text(rng, p, hpi, cfg.rare_word_rate) + "\nPhysical Examination:\n";
        text += section_text(rng, p, pe, cfg.rare_word_rate) + "\nAssessment and Plan:\n";
        text += section_text(rng, p, ap, cfg.rare_word_rate) + "\n";
      } else {
        text += "See triage documentation.\n";
      }
      text += std::string("Electronically signed by Dr. ") + kSurnames[s.physician % 20] + " " +
              format_timestamp(t) + "\n";
      n.text = std::move(text);
      pending.push_back(std::move(pd));
    }
  }

  std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    return a.ts != b.ts ? a.ts < b.ts : a.physician < b.physician;
  });
  TextCorpus out;
  out.notes.reserve(pending.size());
  for (std::size_t i = 0; i < pending.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "n%06zu", i + 1);
    auto& pd = pending[i];
    pd.note.note_id = pd.enc.note_id = pd.truth.note_id = buf;
    out.notes.push_back(std::move(pd.note));
    out.encounters.push_back(std::move(pd.enc));
    out.truth.push_back(std::move(pd.truth));
  }
  return out;
}

std::string TextCorpus::to_jsonl() const { return corpus::to_jsonl(notes, encounters); }

std::string TextCorpus::truth_csv() const {
  CsvWriter w({"note_id", "level", "Y", "Delta", "Ystar", "D"});
  for (const auto& t : truth)
    w.add_row({t.note_id, t.level, format_double(t.Y), format_double(t.Delta),
               format_double(t.Ystar), format_double(t.D)});
  return w.str();
}

}  // namespace fatlens::synth
