#include "fatlens/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <set>

#include "fatlens/balance.hpp"
#include "fatlens/common.hpp"
#include "fatlens/corpus.hpp"
#include "fatlens/econometrics.hpp"
#include "fatlens/fileio.hpp"
#include "fatlens/generation.hpp"
#include "fatlens/mlcore.hpp"
#include "fatlens/ngram.hpp"
#include "fatlens/rng.hpp"
#include "fatlens/synthlab.hpp"
#include "fatlens/textfeat.hpp"
#include "json.hpp"

namespace fatlens::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---- manifest -------------------------------------------------------------------

std::string RunManifest::to_json() const {
  ojson j;
  j["stage"] = stage;
  j["command"] = command;
  j["version"] = version;
  j["config"] = ojson::parse(config_json);
  j["upstream"] = upstream;
  auto list = [](const std::vector<ArtifactDigest>& v) {
    ojson a = ojson::array();
    for (const auto& d : v) a.push_back({{"path", d.path}, {"sha256", d.sha256}});
    return a;
  };
  j["inputs"] = list(inputs);
  j["artifacts"] = list(artifacts);
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const auto j = ojson::parse(text);
    RunManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.command = j.value("command", std::string());
    m.version = j.value("version", std::string());
    m.config_json = j.at("config").dump();
    m.upstream = j.value("upstream", std::vector<std::string>{});
    for (const auto& d : j.at("inputs"))
      m.inputs.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
    for (const auto& d : j.at("artifacts"))
      m.artifacts.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
    m.wall_seconds = j.value("wall_seconds", 0.0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed manifest: ") + e.what());
  }
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> s{
      "simulate",    "ingest",      "segment",     "label",        "build-dataset",
      "train-lm",    "extract-features", "train",  "evaluate",     "score",
      "validate",    "yield",       "disparity",   "correlations", "shrinkage",
      "attenuation", "generate-compare", "llm-baseline", "report"};
  return s;
}

bool is_stage(const std::string& name) {
  const auto& s = stage_names();
  return std::find(s.begin(), s.end(), name) != s.end();
}

std::vector<std::string> upstream_of(const std::string& stage, const RunConfig& cfg) {
  const std::vector<std::string> regression{"ingest", "segment", "label", "build-dataset", "score"};
  if (stage == "simulate" || stage == "shrinkage" || stage == "attenuation") return {};
  if (stage == "ingest") return cfg.get("input").empty() ? std::vector<std::string>{"simulate"}
                                                         : std::vector<std::string>{};
  if (stage == "segment") return {"ingest"};
  if (stage == "label") return {"segment"};
  if (stage == "build-dataset") return {"ingest", "segment", "label"};
  if (stage == "train-lm") return {"ingest", "build-dataset"};
  if (stage == "extract-features") {
    if (cfg.get("perplexity.source") == "builtin") return {"ingest", "train-lm"};
    return {"ingest"};
  }
  if (stage == "train") return {"ingest", "build-dataset", "extract-features"};
  if (stage == "evaluate") return {"build-dataset", "extract-features", "train"};
  if (stage == "score") return {"build-dataset", "extract-features", "train"};
  if (stage == "validate" || stage == "yield" || stage == "disparity") return regression;
  if (stage == "correlations") return {"build-dataset", "extract-features"};
  if (stage == "generate-compare")
    return {"ingest", "build-dataset", "train-lm", "extract-features", "train"};
  if (stage == "llm-baseline") return {"ingest", "build-dataset"};
  if (stage == "report") return {"evaluate", "validate", "yield", "disparity", "correlations"};
  fail(ErrorKind::invalid_argument, "unknown stage '" + stage + "'");
}

fs::path manifest_path(const fs::path& out_dir, const std::string& stage) {
  return out_dir / "manifests" / (stage + ".json");
}

namespace {

// ---- stage context -------------------------------------------------------------

class Stage {
 public:
  Stage(const RunConfig& cfg, std::string name) : cfg_(cfg), name_(std::move(name)) {
    out_ = cfg.get_path("out_dir");
    if (out_.empty()) fail(ErrorKind::config, "out_dir must not be empty");
    seed_ = static_cast<std::uint64_t>(cfg.get_int("seed"));
  }

  const RunConfig& cfg() const { return cfg_; }
  std::uint64_t seed(std::uint64_t stream) const { return Rng::derive(seed_, stream); }
  std::uint64_t raw_seed() const { return seed_; }

  void require(const std::string& up) {
    const fs::path mp = manifest_path(out_, up);
    if (!fs::exists(mp))
      fail(ErrorKind::missing_artifact, "stage '" + name_ + "' needs the output of stage '" + up +
                                            "' (no manifest at " + mp.string() + "); run '" + up +
                                            "' first");
    const RunManifest m = RunManifest::from_json(read_file(mp));
    for (const auto& a : m.artifacts) {
      const fs::path p = out_ / a.path;
      if (!fs::exists(p) || sha256_file(p) != a.sha256)
        fail(ErrorKind::missing_artifact, "artifact '" + a.path + "' of stage '" + up +
                                              "' is missing or changed; rerun '" + up + "'");
      provided_[a.path] = a.sha256;
    }
    upstream_.push_back(up);
  }

  std::string read(const std::string& rel) {
    auto it = provided_.find(rel);
    if (it == provided_.end())
      fail(ErrorKind::missing_artifact, "stage '" + name_ + "' reads '" + rel +
                                            "', which no verified upstream stage produced");
    record_input(rel, it->second);
    return read_file(out_ / rel);
  }

  std::string read_external(const fs::path& p) {
    std::string text;
    try {
      text = read_file(p);
    } catch (const Error& e) {
      fail(ErrorKind::data, std::string("cannot read input: ") + e.what());
    }
    record_input(fs::absolute(p).lexically_normal().string(), sha256_hex(text));
    return text;
  }

  void write(const std::string& rel, const std::string& content) {
    write_file_atomic(out_ / rel, content);
    artifacts_.push_back({rel, sha256_hex(content)});
  }

  RunManifest manifest(const std::string& command, double wall) const {
    RunManifest m;
    m.stage = name_;
    m.command = command;
    m.version = kVersion;
    m.config_json = cfg_.to_json();
    m.upstream = upstream_;
    m.inputs = inputs_;
    m.artifacts = artifacts_;
    m.wall_seconds = wall;
    return m;
  }

  const fs::path& out() const { return out_; }

 private:
  void record_input(const std::string& path, const std::string& sha) {
    for (const auto& d : inputs_)
      if (d.path == path) return;
    inputs_.push_back({path, sha});
  }

  const RunConfig& cfg_;
  std::string name_;
  fs::path out_;
  std::uint64_t seed_ = 0;
  std::vector<std::string> upstream_;
  std::map<std::string, std::string> provided_;
  std::vector<ArtifactDigest> inputs_;
  std::vector<ArtifactDigest> artifacts_;
};

// ---- shared loaders -----------------------------------------------------------

std::vector<std::string> read_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && (line[b] == ' ' || line[b] == '\t')) ++b;
    line.erase(0, b);
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

TimeZone zone(const Stage& s) {
  try {
    return TimeZone::from_name(s.cfg().get("timezone"));
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("timezone: ") + e.what());
  }
}

textfeat::TokenizerOptions tokenizer(Stage& s) {
  textfeat::TokenizerOptions t;
  if (const auto p = s.cfg().get_path("abbreviations"); !p.empty()) {
    t.abbreviations.clear();
    for (auto& w : read_lines(s.read_external(p))) {
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
      if (!w.empty() && w.back() == '.') w.pop_back();
      t.abbreviations.insert(w);
    }
  }
  return t;
}

corpus::IngestResult load_notes(Stage& s) {
  corpus::IngestOptions opt;
  opt.boilerplate_patterns.clear();  // already stripped by ingest
  auto r = corpus::ingest_text(s.read("notes.jsonl"), corpus::InputFormat::jsonl, opt);
  if (!r.rejects.empty())
    fail(ErrorKind::data, "notes.jsonl has " + std::to_string(r.rejects.size()) +
                              " unreadable records; rerun 'ingest'");
  return r;
}

std::string shifts_to_jsonl(const std::vector<corpus::Shift>& shifts) {
  std::string out;
  for (const auto& sh : shifts) {
    ojson j;
    j["shift_id"] = sh.shift_id;
    j["physician_id"] = sh.physician_id;
    j["start"] = format_timestamp(sh.start);
    j["end"] = format_timestamp(sh.end);
    j["start_hour_adjusted"] = sh.start_hour_adjusted;
    j["note_ids"] = sh.note_ids;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<corpus::Shift> load_shifts(Stage& s) {
  std::vector<corpus::Shift> out;
  for (const auto& line : read_lines(s.read("shifts.jsonl"))) {
    try {
      const auto j = ojson::parse(line);
      corpus::Shift sh;
      sh.shift_id = j.at("shift_id").get<std::string>();
      sh.physician_id = j.at("physician_id").get<std::string>();
      sh.start = parse_timestamp(j.at("start").get<std::string>());
      sh.end = parse_timestamp(j.at("end").get<std::string>());
      sh.start_hour_adjusted = j.at("start_hour_adjusted").get<double>();
      sh.note_ids = j.at("note_ids").get<std::vector<std::string>>();
      out.push_back(std::move(sh));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, std::string("malformed shifts.jsonl: ") + e.what());
    }
  }
  return out;
}

std::string labels_to_csv(const std::vector<corpus::WorkloadLabel>& labels) {
  CsvWriter w({"shift_id", "day", "prior_days_worked", "total_days_in_window", "class"});
  for (const auto& l : labels)
    w.add_row({l.shift_id, std::to_string(l.day), std::to_string(l.prior_days_worked),
               std::to_string(l.total_days_in_window), corpus::to_string(l.cls)});
  return w.str();
}

std::vector<corpus::WorkloadLabel> load_labels(Stage& s) {
  const auto rows = parse_csv(s.read("labels.csv"));
  std::vector<corpus::WorkloadLabel> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 5) fail(ErrorKind::data, "malformed labels.csv");
    corpus::WorkloadLabel l;
    l.shift_id = rows[r][0];
    try {
      l.day = std::stoll(rows[r][1]);
      l.prior_days_worked = std::stoi(rows[r][2]);
      l.total_days_in_window = std::stoi(rows[r][3]);
    } catch (const std::exception&) {
      fail(ErrorKind::data, "malformed number in labels.csv");
    }
    const auto c = corpus::parse_workload_class(rows[r][4]);
    if (!c) fail(ErrorKind::data, "unknown workload class '" + rows[r][4] + "'");
    l.cls = *c;
    out.push_back(l);
  }
  return out;
}

std::string split_to_json(const corpus::BalancedDataset& b) {
  ojson j;
  j["seed"] = b.split.seed;
  j["split_level"] = corpus::DatasetSplit::split_level;
  j["train"] = b.split.train_note_ids;
  j["heldout"] = b.split.heldout_note_ids;
  ojson cls = ojson::object();
  for (const auto& [id, c] : b.note_class) cls[id] = corpus::to_string(c);
  j["note_class"] = std::move(cls);
  ojson pc = ojson::array();
  for (const auto& c : b.per_complaint)
    pc.push_back({{"complaint", c.complaint},
                  {"available_high", c.available_high},
                  {"available_low", c.available_low},
                  {"retained_per_class", c.retained_per_class},
                  {"excluded", c.excluded}});
  j["per_complaint"] = std::move(pc);
  return j.dump(1) + "\n";
}

corpus::BalancedDataset load_split(Stage& s) {
  corpus::BalancedDataset b;
  try {
    const auto j = ojson::parse(s.read("split.json"));
    b.split.seed = j.at("seed").get<std::uint64_t>();
    b.split.train_note_ids = j.at("train").get<std::vector<std::string>>();
    b.split.heldout_note_ids = j.at("heldout").get<std::vector<std::string>>();
    for (const auto& [id, c] : j.at("note_class").items()) {
      const auto cls = corpus::parse_workload_class(c.get<std::string>());
      if (!cls) fail(ErrorKind::data, "unknown class in split.json");
      b.note_class[id] = *cls;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed split.json: ") + e.what());
  }
  return b;
}

struct Features {
  std::vector<std::string> names;
  std::vector<textfeat::FeatureVector> vectors;
  std::map<std::string, std::size_t> index;

  const std::vector<double>& of(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) fail(ErrorKind::data, "no features for note '" + id + "'; rerun 'extract-features'");
    return vectors[it->second].values;
  }
  std::vector<std::string> vocabulary() const {
    std::vector<std::string> v;
    for (std::size_t j = textfeat::kNoteFeatureCount; j < names.size(); ++j) v.push_back(names[j].substr(3));
    return v;
  }
};

Features load_features(Stage& s) {
  Features f;
  f.vectors = textfeat::features_from_csv(s.read("features.csv"), &f.names);
  for (std::size_t i = 0; i < f.vectors.size(); ++i) f.index[f.vectors[i].note_id] = i;
  return f;
}

ml::LogitModel load_model(Stage& s, const std::string& rel) { return ml::LogitModel::from_json(s.read(rel)); }

// Scored regression sample: every note outside the training split.
std::vector<econ::AnalysisRow> analysis_rows(Stage& s) {
  const auto ing = load_notes(s);
  const auto shifts = load_shifts(s);
  const auto labels = load_labels(s);
  const auto bal = load_split(s);
  const std::set<std::string> train(bal.split.train_note_ids.begin(), bal.split.train_note_ids.end());
  std::map<std::string, double> scores;
  const auto rows = parse_csv(s.read("scores.csv"));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 3) fail(ErrorKind::data, "malformed scores.csv");
    if (train.count(rows[r][0])) continue;
    try {
      scores[rows[r][0]] = std::stod(rows[r][2]);
    } catch (const std::exception&) {
      fail(ErrorKind::data, "malformed score in scores.csv");
    }
  }
  if (scores.empty()) fail(ErrorKind::data, "no scored notes outside the training split");
  return econ::build_analysis_rows(ing.notes, ing.encounters, shifts, labels, scores, zone(s));
}

ml::Matrix to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  ml::Matrix X(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return X;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

synth::DagConfig dag_config(const RunConfig& c) {
  synth::DagConfig d;
  d.n_shifts = static_cast<std::size_t>(c.get_int("dag.n_shifts"));
  d.patients_per_shift = static_cast<std::size_t>(c.get_int("dag.patients_per_shift"));
  d.n_physicians = static_cast<std::size_t>(c.get_int("dag.n_physicians"));
  d.var_Y = c.get_double("dag.var_y");
  d.var_Delta = c.get_double("dag.var_delta");
  d.A = c.get_list("dag.a");
  d.gamma = c.get_double("dag.gamma");
  d.outcome_noise_var = c.get_double("dag.outcome_noise_var");
  d.rho = c.get_double("dag.rho");
  d.exact_orthogonal = c.get_bool("dag.exact_orthogonal");
  d.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  return d;
}

// ---- stages ---------------------------------------------------------------------

std::string stage_simulate(Stage& s) {
  const auto& c = s.cfg();
  synth::TextCorpusConfig tc;
  tc.n_notes = static_cast<std::size_t>(c.get_int("sim.n_notes"));
  tc.patients_per_shift = c.get_double("sim.patients_per_shift");
  tc.text = c.get_bool("sim.text");
  tc.rare_word_rate = c.get_double("sim.rare_word_rate");
  tc.dag.n_physicians = static_cast<std::size_t>(c.get_int("sim.n_physicians"));
  tc.dag.gamma = c.get_double("sim.gamma");
  tc.dag.rho = c.get_double("sim.rho");
  tc.dag.overnight_delta = c.get_double("sim.overnight_delta");
  tc.dag.seed = s.seed(101);
  const auto corpus = synth::simulate_text_corpus(tc, synth::planted_style_map(c.get_double("sim.gap")));
  s.write("corpus.jsonl", corpus.to_jsonl());
  s.write("truth.csv", corpus.truth_csv());
  return "simulated " + std::to_string(corpus.notes.size()) + " notes";
}

std::string stage_ingest(Stage& s) {
  const auto& c = s.cfg();
  corpus::IngestOptions opt;
  if (const auto p = c.get_path("boilerplate_patterns"); !p.empty())
    opt.boilerplate_patterns = read_lines(s.read_external(p));
  if (const auto p = c.get_path("complaint_vocabulary"); !p.empty())
    for (const auto& w : read_lines(s.read_external(p))) opt.complaint_vocabulary.insert(w);
  const std::string fmt = c.get("input_format");
  corpus::InputFormat format;
  if (fmt == "jsonl") format = corpus::InputFormat::jsonl;
  else if (fmt == "csv") format = corpus::InputFormat::csv;
  else fail(ErrorKind::config, "input_format must be jsonl or csv, got '" + fmt + "'");
  const std::string content = c.get("input").empty() ? s.read("corpus.jsonl")
                                                     : s.read_external(c.get_path("input"));
  if (c.get("input").empty()) format = corpus::InputFormat::jsonl;
  const auto r = corpus::ingest_text(content, format, opt);
  if (r.notes.empty()) fail(ErrorKind::data, "no valid notes in the input");
  CsvWriter rej({"line", "reason", "detail"});
  for (const auto& x : r.rejects) rej.add_row({std::to_string(x.line), x.reason, x.detail});
  s.write("notes.jsonl", corpus::to_jsonl(r.notes, r.encounters));
  s.write("rejects.csv", rej.str());
  return "ingested " + std::to_string(r.notes.size()) + " notes, rejected " +
         std::to_string(r.rejects.size());
}

std::string stage_segment(Stage& s) {
  const auto ing = load_notes(s);
  corpus::SegmentOptions opt;
  opt.gap_hours = s.cfg().get_double("gap_hours");
  opt.timezone = zone(s);
  const auto shifts = corpus::segment_shifts(ing.notes, opt);
  const auto viol = corpus::rest_violations(shifts, s.cfg().get_double("min_rest_hours"));
  CsvWriter w({"physician_id", "previous_shift", "next_shift", "gap_hours"});
  for (const auto& v : viol)
    w.add_row({v.physician_id, v.previous_shift, v.next_shift, format_fixed(v.gap_hours, 2)});
  s.write("shifts.jsonl", shifts_to_jsonl(shifts));
  s.write("rest_violations.csv", w.str());
  return std::to_string(shifts.size()) + " shifts, " + std::to_string(viol.size()) +
         " short rest gaps";
}

std::string stage_label(Stage& s) {
  const auto shifts = load_shifts(s);
  corpus::WorkloadThresholds th;
  th.high_min_prior = static_cast<int>(s.cfg().get_int("workload.high_min_prior"));
  th.low_max_prior = static_cast<int>(s.cfg().get_int("workload.low_max_prior"));
  if (th.low_max_prior >= th.high_min_prior)
    fail(ErrorKind::config, "workload.low_max_prior must be below workload.high_min_prior");
  const auto labels = corpus::compute_workload(shifts, zone(s), th);
  std::size_t high = 0, low = 0;
  for (const auto& l : labels) {
    high += l.cls == corpus::WorkloadClass::high;
    low += l.cls == corpus::WorkloadClass::low;
  }
  s.write("labels.csv", labels_to_csv(labels));
  return std::to_string(high) + " high, " + std::to_string(low) + " low, " +
         std::to_string(labels.size() - high - low) + " mid shifts";
}

std::string stage_build_dataset(Stage& s) {
  const auto ing = load_notes(s);
  const auto shifts = load_shifts(s);
  const auto labels = load_labels(s);
  corpus::BalanceOptions opt;
  opt.train_fraction = s.cfg().get_double("train_fraction");
  if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0))
    fail(ErrorKind::config, "train_fraction must lie strictly between 0 and 1");
  const auto bal = corpus::build_balanced_dataset(ing.notes, ing.encounters, shifts, labels,
                                                  s.seed(201), opt);
  CsvWriter pc({"complaint", "available_high", "available_low", "retained_per_class", "excluded"});
  for (const auto& c : bal.per_complaint)
    pc.add_row({c.complaint, std::to_string(c.available_high), std::to_string(c.available_low),
                std::to_string(c.retained_per_class), c.excluded ? "1" : "0"});
  const auto check = corpus::balance_check(ing.notes, ing.encounters, shifts, labels, zone(s));
  s.write("split.json", split_to_json(bal));
  s.write("complaint_balance.csv", pc.str());
  s.write("balance_check.csv", check.to_csv());
  s.write("balance_summary.txt", "chief complaints significant at p<0.05: " + check.summary() + "\n");
  return std::to_string(bal.split.train_note_ids.size()) + " training notes, " +
         std::to_string(bal.split.heldout_note_ids.size()) + " held-out notes; balance " +
         check.summary();
}

std::string stage_train_lm(Stage& s) {
  const auto ing = load_notes(s);
  const auto bal = load_split(s);
  const auto tok = tokenizer(s);
  const std::set<std::string> train(bal.split.train_note_ids.begin(), bal.split.train_note_ids.end());
  const std::set<std::string> held(bal.split.heldout_note_ids.begin(), bal.split.heldout_note_ids.end());
  std::vector<std::string> texts;
  for (const auto& n : ing.notes)
    if (train.count(n.note_id)) texts.push_back(n.text);
  if (texts.empty()) fail(ErrorKind::data, "the training split is empty");
  lm::LmOptions o;
  o.order = static_cast<int>(s.cfg().get_int("lm.order"));
  o.discount = s.cfg().get_double("lm.discount");
  o.min_count = static_cast<int>(s.cfg().get_int("lm.min_count"));
  if (o.order < 1 || o.order > lm::kMaxOrder)
    fail(ErrorKind::config, "lm.order must lie in 1.." + std::to_string(lm::kMaxOrder));
  if (!(o.discount >= 0.0 && o.discount < 1.0)) fail(ErrorKind::config, "lm.discount must lie in [0, 1)");
  const auto model = lm::NgramLM::train_texts(texts, o, tok);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& note : ing.notes)
    if (held.count(note.note_id)) {
      sum += model.log2_perplexity_text(note.text, tok);
      ++n;
    }
  ojson summary;
  summary["order"] = o.order;
  summary["discount"] = o.discount;
  summary["min_count"] = o.min_count;
  summary["vocabulary"] = model.vocabulary_size();
  summary["fit_split"] = "train";
  summary["training_notes"] = texts.size();
  summary["heldout_notes"] = n;
  summary["heldout_mean_log2_perplexity"] = n ? sum / static_cast<double>(n) : 0.0;
  s.write("lm.json", model.to_json());
  s.write("lm_summary.json", summary.dump(2) + "\n");
  char buf[128];
  std::snprintf(buf, sizeof buf, "vocabulary %zu, held-out mean log2 perplexity %.4f",
                model.vocabulary_size(), n ? sum / static_cast<double>(n) : 0.0);
  return buf;
}

textfeat::LexiconSet load_lexicons(Stage& s) {
  const fs::path dir = s.cfg().get_path("lexicon_dir");
  if (!fs::is_directory(dir)) fail(ErrorKind::config, "lexicon_dir '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) s.read_external(f);
  auto set = textfeat::LexiconSet::load_directory(dir);
  set.require_all();
  return set;
}

std::string stage_extract_features(Stage& s) {
  const auto ing = load_notes(s);
  const auto lex = load_lexicons(s);
  const auto tok = tokenizer(s);
  std::vector<std::string> vocab;
  if (const auto p = s.cfg().get_path("complaint_vocabulary"); !p.empty()) {
    std::set<std::string> v;
    for (const auto& w : read_lines(s.read_external(p))) v.insert(w);
    vocab.assign(v.begin(), v.end());
  } else {
    std::set<std::string> v;
    for (const auto& e : ing.encounters) v.insert(e.chief_complaints.begin(), e.chief_complaints.end());
    vocab.assign(v.begin(), v.end());
  }
  const std::string source = s.cfg().get("perplexity.source");
  std::unique_ptr<lm::NgramLM> model;
  std::unique_ptr<textfeat::PerplexityProvider> ppl;
  if (source == "builtin") {
    model = std::make_unique<lm::NgramLM>(lm::NgramLM::from_json(s.read("lm.json")));
    ppl = std::make_unique<lm::LmPerplexity>(*model, tok);
  } else if (source == "external") {
    const auto p = s.cfg().get_path("perplexity.file");
    if (p.empty()) fail(ErrorKind::config, "perplexity.source=external needs perplexity.file");
    const std::string text = s.read_external(p);
    std::map<std::string, double> scores;
    const auto rows = parse_csv(text);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "note_id")
      fail(ErrorKind::data, "perplexity file must have header note_id,log2_perplexity");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() < 2) fail(ErrorKind::data, "malformed perplexity row " + std::to_string(r + 1));
      try {
        scores[rows[r][0]] = std::stod(rows[r][1]);
      } catch (const std::exception&) {
        fail(ErrorKind::data, "malformed perplexity value on row " + std::to_string(r + 1));
      }
    }
    ppl = std::make_unique<textfeat::ExternalPerplexity>(std::move(scores));
  } else {
    fail(ErrorKind::config, "perplexity.source must be builtin or external, got '" + source + "'");
  }
  textfeat::FeatureContext ctx;
  ctx.lexicons = &lex;
  ctx.perplexity = ppl.get();
  ctx.complaint_vocabulary = vocab;
  ctx.tokenizer = tok;
  std::vector<textfeat::FeatureVector> out;
  out.reserve(ing.notes.size());
  for (std::size_t i = 0; i < ing.notes.size(); ++i)
    out.push_back(textfeat::extract_features(ing.notes[i].note_id, ing.notes[i].text,
                                             ing.encounters[i].chief_complaints, ctx));
  s.write("features.csv", textfeat::features_to_csv(out, textfeat::full_feature_names(vocab)));
  return std::to_string(out.size()) + " feature vectors, " + std::to_string(vocab.size()) +
         " complaint indicators";
}

struct TrainSet {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::vector<std::string> groups;
};

ml::LogitModel fit_model(const TrainSet& t, const std::vector<std::string>& names,
                         std::size_t first, std::size_t standardized, Stage& s,
                         std::uint64_t stream, std::string* cv_csv) {
  std::vector<std::vector<double>> cols;
  cols.reserve(t.x.size());
  for (const auto& r : t.x) cols.emplace_back(r.begin() + static_cast<std::ptrdiff_t>(first), r.end());
  const std::size_t dim = names.size() - first;
  textfeat::Standardizer st = standardized > 0 ? textfeat::Standardizer::fit(cols, standardized)
                                               : textfeat::Standardizer({}, {}, 0);
  std::vector<std::vector<double>> z;
  z.reserve(cols.size());
  for (const auto& r : cols) z.push_back(standardized > 0 ? st.apply(r) : r);
  const ml::Matrix X = to_matrix(z, dim);
  const auto grid = s.cfg().get_list("lambda_grid");
  for (double l : grid)
    if (!(l >= 0.0)) fail(ErrorKind::config, "lambda_grid entries must be non-negative");
  const int folds = static_cast<int>(s.cfg().get_int("cv.folds"));
  if (folds < 2) fail(ErrorKind::config, "cv.folds must be at least 2");
  const auto cv = ml::cross_validate(X, t.y, t.groups, grid, folds, s.seed(stream));
  const auto fit = ml::train_logit(X, t.y, cv.best_lambda);
  if (cv_csv) {
    std::vector<std::string> header{"lambda", "mean_auc"};
    for (int k = 0; k < folds; ++k) header.push_back("fold" + std::to_string(k + 1) + "_auc");
    CsvWriter w(header);
    for (std::size_t i = 0; i < cv.lambdas.size(); ++i) {
      std::vector<std::string> row{format_double(cv.lambdas[i]), format_double(cv.mean_auc[i])};
      for (double a : cv.fold_auc[i]) row.push_back(format_double(a));
      w.add_row(std::move(row));
    }
    *cv_csv = w.str();
  }
  ml::LogitModel m;
  m.feature_names.assign(names.begin() + static_cast<std::ptrdiff_t>(first), names.end());
  m.weights.assign(fit.weights.data(), fit.weights.data() + fit.weights.size());
  m.intercept = fit.intercept;
  m.lambda = cv.best_lambda;
  m.standardizer = st;
  m.provenance["fit_split"] = "train";
  m.provenance["standardizer_split"] = "train";
  m.provenance["lambda_grid"] = join(grid);
  m.provenance["cv_folds"] = std::to_string(folds);
  m.provenance["training_rows"] = std::to_string(t.x.size());
  m.provenance["converged"] = fit.converged ? "true" : "false";
  return m;
}

std::vector<double> slice(const std::vector<double>& v, std::size_t first) {
  return {v.begin() + static_cast<std::ptrdiff_t>(first), v.end()};
}

std::string stage_train(Stage& s) {
  const auto ing = load_notes(s);
  const auto bal = load_split(s);
  const auto f = load_features(s);
  std::map<std::string, std::string> patient;
  for (const auto& n : ing.notes) patient[n.note_id] = n.patient_id;
  TrainSet t;
  for (const auto& id : bal.split.train_note_ids) {
    t.x.push_back(f.of(id));
    t.y.push_back(bal.note_class.at(id) == corpus::WorkloadClass::high);
    t.groups.push_back(patient.at(id));
  }
  if (t.x.empty()) fail(ErrorKind::data, "the training split is empty");
  std::string cv_csv;
  const auto model = fit_model(t, f.names, 0, textfeat::kNoteFeatureCount, s, 301, &cv_csv);
  std::string cc_csv;
  const bool has_cc = f.names.size() > textfeat::kNoteFeatureCount;
  CsvWriter coef({"feature", "weight"});
  for (std::size_t j = 0; j < model.weights.size(); ++j)
    coef.add_row({model.feature_names[j], format_double(model.weights[j])});
  s.write("model.json", model.to_json());
  if (has_cc) {
    const auto base = fit_model(t, f.names, textfeat::kNoteFeatureCount, 0, s, 302, &cc_csv);
    s.write("baseline_model.json", base.to_json());
  }
  s.write("cv.csv", cv_csv);
  s.write("coefficients.csv", coef.str());
  return "trained on " + std::to_string(t.x.size()) + " notes, lambda " + format_double(model.lambda);
}

std::string stage_evaluate(Stage& s) {
  const auto bal = load_split(s);
  const auto f = load_features(s);
  const auto model = load_model(s, "model.json");
  const bool has_cc = f.names.size() > textfeat::kNoteFeatureCount;
  std::optional<ml::LogitModel> base;
  if (has_cc) base = load_model(s, "baseline_model.json");
  std::vector<double> p, pb;
  std::vector<int> y;
  for (const auto& id : bal.split.heldout_note_ids) {
    const auto& x = f.of(id);
    p.push_back(model.predict(x));
    if (base) pb.push_back(base->predict(slice(x, textfeat::kNoteFeatureCount)));
    y.push_back(bal.note_class.at(id) == corpus::WorkloadClass::high);
  }
  const int reps = static_cast<int>(s.cfg().get_int("bootstrap.replicates"));
  const double level = s.cfg().get_double("bootstrap.level");
  if (reps < 1) fail(ErrorKind::config, "bootstrap.replicates must be positive");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::config, "bootstrap.level must lie in (0, 1)");
  const auto ev = ml::evaluate(p, y, reps, level, s.seed(401));
  CsvWriter w({"model", "n", "auc_roc", "auc_lower", "auc_upper", "accuracy", "f1", "lambda"});
  auto row = [&](const std::string& name, const ml::EvalReport& e, double lambda) {
    w.add_row({name, std::to_string(e.n), format_double(e.auc_roc), format_double(e.ci.lower),
               format_double(e.ci.upper), format_double(e.accuracy), format_double(e.f1),
               format_double(lambda)});
  };
  row("features_and_complaints", ev, model.lambda);
  std::string text = "Held-out balanced set, n = " + std::to_string(ev.n) + "\n" + ev.auc_line() + "\n";
  if (base) {
    const auto eb = ml::evaluate(pb, y, reps, level, s.seed(402));
    row("complaints_only", eb, base->lambda);
    text += "Chief complaints only: " + eb.auc_line() + "\n";
  }
  s.write("evaluation.txt", text);
  s.write("performance.csv", w.str());
  return ev.auc_line();
}

std::string stage_score(Stage& s) {
  const auto bal = load_split(s);
  const auto f = load_features(s);
  const auto model = load_model(s, "model.json");
  const std::set<std::string> train(bal.split.train_note_ids.begin(), bal.split.train_note_ids.end());
  const std::string ref = s.cfg().get("score.reference");
  std::set<std::string> reference;
  if (ref == "heldout") {
    for (const auto& v : f.vectors)
      if (!train.count(v.note_id)) reference.insert(v.note_id);
  } else if (ref != "all") {
    fail(ErrorKind::config, "score.reference must be heldout or all, got '" + ref + "'");
  }
  const auto scores = ml::score_notes(model, f.vectors, reference);
  CsvWriter w({"note_id", "probability", "fatigue", "in_training"});
  for (const auto& sc : scores)
    w.add_row({sc.note_id, format_double(sc.probability), format_double(sc.standardized),
               train.count(sc.note_id) ? "1" : "0"});
  s.write("scores.csv", w.str());
  return std::to_string(scores.size()) + " notes scored, standardized on " +
         (reference.empty() ? std::string("all notes")
                            : std::to_string(reference.size()) + " notes outside training");
}

std::string stage_validate(Stage& s) {
  const auto rows = analysis_rows(s);
  const auto suite = econ::validation_suite(rows);
  const auto curve = econ::arrival_time_curve(rows);
  s.write("table1.txt", econ::format_validation(suite));
  s.write("validation_workload.csv", econ::to_csv(suite.workload));
  s.write("validation_overnight.csv", econ::to_csv(suite.overnight));
  s.write("validation_circadian.csv", econ::to_csv(suite.circadian));
  s.write("validation_patients_seen.csv", econ::to_csv(suite.patients_seen));
  s.write("arrival_curve.csv", econ::arrival_curve_csv(curve));
  s.write("fig1.svg", econ::arrival_curve_svg(curve));
  std::string msg = "validation regressions on " + std::to_string(rows.size()) + " notes";
  if (!suite.errors.empty()) msg += " (" + std::to_string(suite.errors.size()) + " columns failed)";
  return msg;
}

std::string stage_yield(Stage& s) {
  const auto rows = analysis_rows(s);
  const int minc = static_cast<int>(s.cfg().get_int("yield.min_category_count"));
  if (minc < 1) fail(ErrorKind::config, "yield.min_category_count must be positive");
  const auto y = econ::yield_regressions(rows, minc);
  s.write("table2.txt", econ::format_yield(y));
  s.write("yield_workload.csv", econ::to_csv(y.workload));
  s.write("yield_fatigue.csv", econ::to_csv(y.fatigue));
  char buf[160];
  std::snprintf(buf, sizeof buf, "yield regressions on %zu tested notes, base rate %.4f", y.fatigue.n,
                y.base_rate);
  return buf;
}

std::string stage_disparity(Stage& s) {
  const auto rows = analysis_rows(s);
  const auto d = econ::disparity_regressions(rows);
  CsvWriter w({"race", "ratio_to_overnight"});
  for (const auto& [race, r] : d.race_to_overnight_ratio) w.add_row({race, format_double(r)});
  s.write("table3.txt", econ::format_disparity(d));
  s.write("disparity_workload.csv", econ::to_csv(d.workload));
  s.write("disparity_fatigue.csv", econ::to_csv(d.fatigue));
  s.write("disparity_contrast.csv", econ::to_csv(d.contrast));
  s.write("disparity_language.csv", econ::to_csv(d.language));
  s.write("race_overnight_ratio.csv", w.str());
  return "disparity regressions on " + std::to_string(rows.size()) + " notes";
}

std::string stage_correlations(Stage& s) {
  const auto bal = load_split(s);
  const auto f = load_features(s);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& [id, cls] : bal.note_class) {
    const auto& v = f.of(id);
    x.emplace_back(v.begin(), v.begin() + textfeat::kNoteFeatureCount);
    y.push_back(cls == corpus::WorkloadClass::high);
  }
  const std::vector<std::string> names(textfeat::feature_names().begin(), textfeat::feature_names().end());
  const auto corr = econ::feature_correlations(x, names, y);
  std::string table = "Feature                         Correlation with high workload\n";
  for (const auto& c : corr) {
    char buf[160];
    if (std::isnan(c.r))
      std::snprintf(buf, sizeof buf, "%-32s %s\n", c.feature.c_str(), "undefined");
    else
      std::snprintf(buf, sizeof buf, "%-32s %8.4f%s\n", c.feature.c_str(), c.r,
                    econ::stars_for(c.p).c_str());
    table += buf;
  }
  table += "n = " + std::to_string(y.size()) + "; *: p<0.05, **: p<0.01, ***: p<0.001\n";
  s.write("correlations.csv", econ::correlations_csv(corr));
  s.write("table4.txt", table);
  return std::to_string(corr.size()) + " feature correlations over " + std::to_string(y.size()) + " notes";
}

std::string stage_shrinkage(Stage& s) {
  auto d = dag_config(s.cfg());
  const long long corpora = s.cfg().get_int("shrinkage.corpora");
  if (corpora < 1) fail(ErrorKind::config, "shrinkage.corpora must be positive");
  CsvWriter w({"corpus", "n", "shrink", "cross_term", "max_abs_error"});
  double worst = 0.0;
  for (long long i = 0; i < corpora; ++i) {
    d.seed = s.seed(500 + static_cast<std::uint64_t>(i));
    const auto c = synth::simulate_linear(d);
    const auto r = synth::shrinkage_check(c);
    worst = std::max(worst, r.max_abs_error);
    w.add_row({std::to_string(i), std::to_string(c.size()), format_double(r.shrink),
               format_double(r.cross_term), format_double(r.max_abs_error)});
  }
  ojson j;
  j["corpora"] = corpora;
  j["n"] = d.n_shifts * d.patients_per_shift;
  j["exact_orthogonal"] = d.exact_orthogonal;
  j["max_abs_error"] = worst;
  s.write("shrinkage.csv", w.str());
  s.write("shrinkage_summary.json", j.dump(2) + "\n");
  char buf[128];
  std::snprintf(buf, sizeof buf, "%lld corpora, max abs error %.3g", corpora, worst);
  return buf;
}

std::string stage_attenuation(Stage& s) {
  auto d = dag_config(s.cfg());
  const long long n = s.cfg().get_int("attenuation.n");
  if (n < 1 || d.patients_per_shift == 0 || n % static_cast<long long>(d.patients_per_shift) != 0)
    fail(ErrorKind::config, "attenuation.n must be a positive multiple of dag.patients_per_shift");
  d.n_shifts = static_cast<std::size_t>(n) / d.patients_per_shift;
  d.seed = s.seed(601);
  const int reps = static_cast<int>(s.cfg().get_int("attenuation.replicates"));
  if (reps < 1) fail(ErrorKind::config, "attenuation.replicates must be positive");
  const auto r = synth::attenuation_experiment(d, reps);
  s.write("attenuation.json", r.to_json());
  s.write("attenuation.csv", r.to_csv());
  char buf[160];
  std::snprintf(buf, sizeof buf, "rejection rate Z~Y %.3f, Z~Y-hat %.3f over %d replicates",
                r.reject_y, r.reject_yhat, reps);
  return buf;
}

std::string stage_generate_compare(Stage& s) {
  const auto ing = load_notes(s);
  const auto bal = load_split(s);
  const auto f = load_features(s);
  const auto model = load_model(s, "model.json");
  const auto lmodel = lm::NgramLM::from_json(s.read("lm.json"));
  const auto lex = load_lexicons(s);
  const auto tok = tokenizer(s);
  lm::LmPerplexity ppl(lmodel, tok);
  textfeat::FeatureContext ctx;
  ctx.lexicons = &lex;
  ctx.perplexity = &ppl;
  ctx.complaint_vocabulary = f.vocabulary();
  ctx.tokenizer = tok;
  const lm::FatigueScorer scorer = [&](const std::string& id, const std::string& text,
                                       const std::vector<std::string>& complaints) {
    return model.predict(textfeat::extract_features(id, text, complaints, ctx).values);
  };
  const std::set<std::string> held(bal.split.heldout_note_ids.begin(), bal.split.heldout_note_ids.end());
  std::vector<corpus::NoteRecord> notes;
  std::vector<corpus::Encounter> enc;
  for (std::size_t i = 0; i < ing.notes.size(); ++i)
    if (held.count(ing.notes[i].note_id)) {
      notes.push_back(ing.notes[i]);
      enc.push_back(ing.encounters[i]);
    }
  lm::GenerationOptions o;
  o.section = s.cfg().get("generate.section");
  o.max_notes = static_cast<std::size_t>(std::max<long long>(0, s.cfg().get_int("generate.max_notes")));
  o.max_tokens_per_sentence = static_cast<std::size_t>(s.cfg().get_int("generate.max_tokens"));
  o.seed = s.seed(701);
  o.tokenizer = tok;
  const auto cmp = lm::compare_generated_vs_original(lmodel, notes, enc, scorer, &lex.get("anger"), o);
  s.write("generation.csv", cmp.to_csv());
  s.write("generation_summary.txt", cmp.summary_table());
  return cmp.summary_table();
}

std::string stage_llm_baseline(Stage& s) {
  const auto& c = s.cfg();
  ml::LlmEndpoint ep;
  ep.url = c.get("llm.url");
  if (ep.url.empty()) fail(ErrorKind::config, "llm-baseline needs llm.url");
  ep.model = c.get("llm.model");
  ep.api_key = c.get("llm.api_key");
  ep.timeout_seconds = c.get_double("llm.timeout");
  ep.retries = static_cast<int>(c.get_int("llm.retries"));
  const auto ing = load_notes(s);
  const auto bal = load_split(s);
  std::map<std::string, const std::string*> text;
  for (const auto& n : ing.notes) text[n.note_id] = &n.text;
  std::vector<std::string> high, low;
  for (const auto& id : bal.split.heldout_note_ids)
    (bal.note_class.at(id) == corpus::WorkloadClass::high ? high : low).push_back(id);
  if (high.empty() || low.empty()) fail(ErrorKind::data, "held-out set lacks one workload class");
  const long long want = c.get_int("llm.pairs");
  if (want < 1) fail(ErrorKind::config, "llm.pairs must be positive");
  Rng rng(s.seed(801));
  rng.shuffle(high);
  rng.shuffle(low);
  std::vector<ml::NotePair> pairs;
  std::vector<std::pair<std::string, std::string>> ids;
  for (long long k = 0; k < want; ++k) {
    const auto& h = high[static_cast<std::size_t>(k) % high.size()];
    const auto& l = low[static_cast<std::size_t>(k) % low.size()];
    pairs.push_back({*text.at(h), *text.at(l)});
    ids.emplace_back(h, l);
  }
  const auto rep = ml::llm_pairwise_baseline(pairs, ep, s.seed(802));
  CsvWriter w({"pair", "fatigued_note", "rested_note", "fatigued_first", "answer", "failed", "score", "error"});
  for (std::size_t i = 0; i < rep.results.size(); ++i) {
    const auto& r = rep.results[i];
    w.add_row({std::to_string(i), ids[i].first, ids[i].second, r.fatigued_first ? "1" : "0",
               std::to_string(r.answer), r.failed ? "1" : "0", format_double(r.score), r.error});
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "pairs %zu, failures %zu, abstentions %zu, accuracy %.4f, AUC-ROC %.4f\n", rep.pairs,
                rep.failures, rep.abstentions, rep.accuracy, rep.auc_roc);
  s.write("llm_baseline.csv", w.str());
  s.write("llm_summary.txt", buf);
  return std::string(buf, std::strlen(buf) - 1);
}

std::string stage_report(Stage& s) {
  std::string r = "# Note-based fatigue analysis\n\n";
  auto block = [&](const std::string& title, const std::string& rel) {
    r += "## " + title + "\n\n```\n" + s.read(rel) + "```\n\n";
  };
  block("Classifier performance", "evaluation.txt");
  block("Table 1. Predicted fatigue and other fatigue measures", "table1.txt");
  block("Table 2. Yield of testing", "table2.txt");
  block("Table 3. Patient demographics", "table3.txt");
  block("Table 4. Feature correlations", "table4.txt");
  const std::string svg = s.read("fig1.svg");
  s.read("correlations.csv");
  s.read("arrival_curve.csv");
  r += "## Figure 1. Predicted fatigue by patient arrival hour\n\n![Figure 1](figure1.svg)\n";
  s.write("report.md", r);
  s.write("figure1.svg", svg);
  return "report written to " + (s.out() / "report.md").string();
}

using StageFn = std::function<std::string(Stage&)>;

const std::map<std::string, StageFn>& stage_functions() {
  static const std::map<std::string, StageFn> m{
      {"simulate", stage_simulate},
      {"ingest", stage_ingest},
      {"segment", stage_segment},
      {"label", stage_label},
      {"build-dataset", stage_build_dataset},
      {"train-lm", stage_train_lm},
      {"extract-features", stage_extract_features},
      {"train", stage_train},
      {"evaluate", stage_evaluate},
      {"score", stage_score},
      {"validate", stage_validate},
      {"yield", stage_yield},
      {"disparity", stage_disparity},
      {"correlations", stage_correlations},
      {"shrinkage", stage_shrinkage},
      {"attenuation", stage_attenuation},
      {"generate-compare", stage_generate_compare},
      {"llm-baseline", stage_llm_baseline},
      {"report", stage_report},
  };
  return m;
}

}  // namespace

StageResult run_stage(const std::string& stage, const RunConfig& config, const std::string& command) {
  const auto& fns = stage_functions();
  auto it = fns.find(stage);
  if (it == fns.end()) fail(ErrorKind::invalid_argument, "unknown stage '" + stage + "'");
  const auto t0 = std::chrono::steady_clock::now();
  Stage s(config, stage);
  for (const auto& up : upstream_of(stage, config)) s.require(up);
  StageResult res;
  res.summary = it->second(s);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.manifest = s.manifest(command.empty() ? "fatlens " + stage : command, wall);
  write_file_atomic(manifest_path(s.out(), stage), res.manifest.to_json());
  return res;
}

ReplayResult replay(const fs::path& manifest, const fs::path& scratch_dir) {
  if (!fs::exists(manifest)) fail(ErrorKind::missing_artifact, "no manifest at " + manifest.string());
  const RunManifest m = RunManifest::from_json(read_file(manifest));
  const fs::path source = fs::absolute(manifest).parent_path().parent_path();
  RunConfig cfg = RunConfig::from_json(m.config_json);
  fs::create_directories(scratch_dir);
  cfg.set("out_dir", scratch_dir.string());

  for (const auto& up : m.upstream) {
    const fs::path src = manifest_path(source, up);
    if (!fs::exists(src))
      fail(ErrorKind::missing_artifact, "replay needs the manifest of stage '" + up + "'");
    write_file_atomic(manifest_path(scratch_dir, up), read_file(src));
  }
  for (const auto& in : m.inputs) {
    const fs::path p(in.path);
    if (p.is_absolute()) {
      if (!fs::exists(p) || sha256_file(p) != in.sha256)
        fail(ErrorKind::data, "external input '" + in.path + "' is missing or changed since the run");
      continue;
    }
    const fs::path src = source / p;
    if (!fs::exists(src) || sha256_file(src) != in.sha256)
      fail(ErrorKind::missing_artifact, "input '" + in.path + "' of stage '" + m.stage +
                                            "' is missing or changed");
    write_file_atomic(scratch_dir / p, read_file(src));
  }
  // Upstream manifests list every artifact of their stage; copy the ones not read
  // so the digest check in run_stage sees complete upstream outputs.
  for (const auto& up : m.upstream) {
    const RunManifest um = RunManifest::from_json(read_file(manifest_path(source, up)));
    for (const auto& a : um.artifacts)
      if (!fs::exists(scratch_dir / a.path) && fs::exists(source / a.path))
        write_file_atomic(scratch_dir / a.path, read_file(source / a.path));
  }

  const auto res = run_stage(m.stage, cfg, m.command);
  ReplayResult out;
  out.stage = m.stage;
  out.scratch_dir = scratch_dir;
  std::map<std::string, std::string> now;
  for (const auto& a : res.manifest.artifacts) now[a.path] = a.sha256;
  for (const auto& a : m.artifacts) {
    auto it = now.find(a.path);
    if (it == now.end() || it->second != a.sha256) out.mismatched.push_back(a.path);
  }
  for (const auto& [path, sha] : now)
    if (std::none_of(m.artifacts.begin(), m.artifacts.end(),
                     [&](const ArtifactDigest& a) { return a.path == path; }))
      out.mismatched.push_back(path);
  return out;
}

}  // namespace fatlens::pipeline
