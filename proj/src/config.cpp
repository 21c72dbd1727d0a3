#include "fatlens/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>

#include "fatlens/common.hpp"
#include "fatlens/fileio.hpp"
#include "json.hpp"

#ifndef FATLENS_DEFAULT_DATA_DIR
#define FATLENS_DEFAULT_DATA_DIR "data"
#endif

namespace fatlens {

const std::vector<ConfigKey>& RunConfig::keys() {
  using T = ValueType;
  static const std::vector<ConfigKey> k{
      {"seed", T::integer, "42", "master seed for every randomized stage"},
      {"timezone", T::string, "UTC", "zone that defines calendar days and clock hours"},
      {"out_dir", T::string, "fatlens_out", "directory holding stage artifacts and manifests"},
      {"input", T::string, "", "corpus file for ingest; empty uses the simulated corpus"},
      {"input_format", T::string, "jsonl", "jsonl or csv"},
      {"complaint_vocabulary", T::string, "", "file with one allowed chief complaint per line"},
      {"boilerplate_patterns", T::string, "", "file with one boilerplate regex per line"},
      {"abbreviations", T::string, "", "file with one non-terminal abbreviation per line"},
      {"gap_hours", T::real, "3", "largest within-shift gap between notes"},
      {"min_rest_hours", T::real, "15", "rest below this between shifts is reported"},
      {"workload.high_min_prior", T::integer, "4", "prior days worked at or above this is high"},
      {"workload.low_max_prior", T::integer, "0", "prior days worked at or below this is low"},
      {"train_fraction", T::real, "0.74", "share of balanced patients placed in training"},
      {"lexicon_dir", T::string, FATLENS_DEFAULT_DATA_DIR "/lexicons", "directory of lexicon files"},
      {"perplexity.source", T::string, "builtin", "builtin or external"},
      {"perplexity.file", T::string, "", "CSV note_id,log2_perplexity for the external source"},
      {"lm.order", T::integer, "3", "n-gram order"},
      {"lm.discount", T::real, "0.75", "absolute discount"},
      {"lm.min_count", T::integer, "2", "rarer training words become <unk>"},
      {"lambda_grid", T::real_list, "0.001,0.01,0.1,1,10,100,1000", "L2 penalties tried"},
      {"cv.folds", T::integer, "5", "cross-validation folds"},
      {"bootstrap.replicates", T::integer, "1000", "bootstrap resamples for the AUC interval"},
      {"bootstrap.level", T::real, "0.95", "interval coverage"},
      {"score.reference", T::string, "heldout", "heldout (notes outside training) or all"},
      {"yield.min_category_count", T::integer, "30", "rarer control levels are pooled"},
      {"generate.section", T::string, "History of Present Illness", "section regenerated"},
      {"generate.max_notes", T::integer, "200", "held-out notes used; 0 for all"},
      {"generate.max_tokens", T::integer, "60", "token cap per generated sentence"},
      {"llm.url", T::string, "", "chat-completions endpoint"},
      {"llm.model", T::string, "vicuna-7b", "model name sent to the endpoint"},
      {"llm.api_key", T::string, "", "bearer token; excluded from manifests"},
      {"llm.timeout", T::real, "60", "seconds per request"},
      {"llm.retries", T::integer, "2", "retries per pair"},
      {"llm.pairs", T::integer, "1000", "fatigued/rested note pairs sampled"},
      {"sim.n_notes", T::integer, "20000", "notes in the simulated corpus"},
      {"sim.gap", T::real, "1.0", "planted standardized style gap between low and high"},
      {"sim.n_physicians", T::integer, "20", "physicians in the simulated corpus"},
      {"sim.patients_per_shift", T::real, "10", "mean notes per simulated shift"},
      {"sim.gamma", T::real, "0.3", "effect of true fatigue on decisions"},
      {"sim.rho", T::real, "0", "correlation of the shock with non-white race"},
      {"sim.overnight_delta", T::real, "0", "fatigue bump for overnight arrivals"},
      {"sim.text", T::boolean, "true", "write note bodies"},
      {"sim.rare_word_rate", T::real, "0.02", "share of patient-specific rare words"},
      {"dag.n_shifts", T::integer, "40", "shifts per linear corpus"},
      {"dag.patients_per_shift", T::integer, "5", "patients per shift in linear corpora"},
      {"dag.n_physicians", T::integer, "20", "physicians in linear corpora"},
      {"dag.var_y", T::real, "1", "variance of the workload signal"},
      {"dag.var_delta", T::real, "4", "variance of the idiosyncratic shock"},
      {"dag.a", T::real_list, "1", "note loading vector"},
      {"dag.gamma", T::real, "0.3", "effect of true fatigue on the outcome"},
      {"dag.outcome_noise_var", T::real, "1", "outcome noise variance"},
      {"dag.rho", T::real, "0", "correlation of the shock with non-white race"},
      {"dag.exact_orthogonal", T::boolean, "true", "project the shock off Y"},
      {"shrinkage.corpora", T::integer, "1000", "linear corpora checked"},
      {"attenuation.replicates", T::integer, "200", "replicates of the attenuation experiment"},
      {"attenuation.n", T::integer, "1000", "patients per attenuation replicate"},
  };
  return k;
}

namespace {

const ConfigKey& spec_of(const std::string& key) {
  for (const auto& k : RunConfig::keys())
    if (k.name == key) return k;
  fail(ErrorKind::config, "unknown configuration key '" + key + "'");
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_real(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || errno || *end != '\0' || !std::isfinite(d))
    fail(ErrorKind::config, "key '" + key + "' expects a number, got '" + v + "'");
  return d;
}

long long parse_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || errno || *end != '\0')
    fail(ErrorKind::config, "key '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

std::optional<bool> parse_bool(std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  return std::nullopt;
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i <= v.size()) {
    std::size_t j = v.find(',', i);
    if (j == std::string::npos) j = v.size();
    out.push_back(parse_real(key, trim(v.substr(i, j - i))));
    i = j + 1;
  }
  return out;
}

void check_type(const ConfigKey& k, const std::string& v) {
  switch (k.type) {
    case ValueType::string: break;
    case ValueType::integer: parse_int(k.name, v); break;
    case ValueType::real: parse_real(k.name, v); break;
    case ValueType::boolean:
      if (!parse_bool(v)) fail(ErrorKind::config, "key '" + k.name + "' expects true/false, got '" + v + "'");
      break;
    case ValueType::real_list: parse_list(k.name, v); break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

bool RunConfig::known(const std::string& key) {
  for (const auto& k : keys())
    if (k.name == key) return true;
  return false;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const ConfigKey& k = spec_of(key);
  const std::string v = trim(value);
  check_type(k, v);
  values_[key] = v;
}

void RunConfig::load_string(const std::string& text, const std::string& origin) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      fail(ErrorKind::config, origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("cannot read config: ") + e.what());
  }
  load_string(text, path.string());
}

std::string RunConfig::env_name(const std::string& key) {
  std::string s = "FATLENS_";
  for (char c : key) s += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void RunConfig::apply_environment() {
  for (const auto& k : keys())
    if (const char* v = std::getenv(env_name(k.name).c_str())) {
      try {
        set(k.name, v);
      } catch (const Error& e) {
        fail(ErrorKind::config, env_name(k.name) + ": " + e.what());
      }
    }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::config, "unknown configuration key '" + key + "'");
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const { return parse_int(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_real(key, get(key)); }
bool RunConfig::get_bool(const std::string& key) const {
  const auto b = parse_bool(get(key));
  if (!b) fail(ErrorKind::config, "key '" + key + "' is not a boolean");
  return *b;
}
std::vector<double> RunConfig::get_list(const std::string& key) const {
  return parse_list(key, get(key));
}
std::filesystem::path RunConfig::get_path(const std::string& key) const { return get(key); }

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_) j[k] = k == "llm.api_key" && !v.empty() ? "<redacted>" : v;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  RunConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("config snapshot is not JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::config, "config snapshot must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) fail(ErrorKind::config, "config value for '" + k + "' must be a string");
    if (k == "llm.api_key" && v.get<std::string>() == "<redacted>") continue;
    c.set(k, v.get<std::string>());
  }
  return c;
}

}  // namespace fatlens
