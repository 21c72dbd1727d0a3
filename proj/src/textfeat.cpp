#include "fatlens/textfeat.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

#include "fatlens/common.hpp"
#include "fatlens/fileio.hpp"

namespace fatlens::textfeat {

std::set<std::string> TokenizerOptions::default_abbreviations() {
  return {"dr", "mr", "mrs", "ms", "st", "vs", "etc", "approx", "hx", "pt", "jr", "sr", "prof",
          "dept", "min", "max", "fig", "appt"};
}

namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

struct Scan {
  std::vector<std::vector<std::string>> sentences;  // only sentences holding words
  std::size_t counted_sentences = 0;                // segments with any word or number
  std::size_t numbers = 0;
};

Scan scan(std::string_view text, const TokenizerOptions& opt) {
  Scan out;
  std::vector<std::string> current;
  bool segment_has_content = false;
  std::string last_word_raw;  // letters immediately before the current position

  auto close_segment = [&]() {
    if (segment_has_content) ++out.counted_sentences;
    if (!current.empty()) out.sentences.push_back(std::move(current));
    current.clear();
    segment_has_content = false;
  };

  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (is_alpha(c) || c == '\'') {
      std::size_t j = i;
      while (j < n && (is_alpha(text[j]) || text[j] == '\'')) ++j;
      std::string_view run = text.substr(i, j - i);
      while (!run.empty() && run.front() == '\'') run.remove_prefix(1);
      while (!run.empty() && run.back() == '\'') run.remove_suffix(1);
      if (!run.empty()) {
        std::string tok(run);
        for (char& ch : tok) ch = lower(ch);
        last_word_raw = tok;
        current.push_back(std::move(tok));
        segment_has_content = true;
      } else {
        last_word_raw.clear();
      }
      i = j;
      continue;
    }
    if (is_digit(c)) {
      std::size_t j = i;
      while (j < n && is_digit(text[j])) ++j;
      ++out.numbers;
      segment_has_content = true;
      last_word_raw.clear();
      i = j;
      continue;
    }
    if (c == '.' || c == '!' || c == '?') {
      const bool boundary = (i + 1 == n) || is_space(text[i + 1]);
      bool split = boundary;
      if (split && c == '.' && !last_word_raw.empty() && opt.abbreviations.count(last_word_raw))
        split = false;
      if (split) close_segment();
      last_word_raw.clear();
      ++i;
      continue;
    }
    last_word_raw.clear();
    ++i;
  }
  close_segment();
  return out;
}

}  // namespace

Tokenized tokenize(std::string_view text, const TokenizerOptions& options) {
  Scan s = scan(text, options);
  Tokenized out;
  for (auto& sent : s.sentences)
    for (auto& t : sent) out.tokens.push_back(std::move(t));
  out.sentence_count = std::max<std::size_t>(1, s.counted_sentences);
  out.number_count = s.numbers;
  return out;
}

std::vector<std::vector<std::string>> tokenize_sentences(std::string_view text,
                                                         const TokenizerOptions& options) {
  return scan(text, options).sentences;
}

int count_syllables(std::string_view word) {
  auto vowel = [](char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
  };
  std::string w;
  for (char c : word)
    if (is_alpha(c)) w.push_back(lower(c));
  int groups = 0;
  bool in_group = false;
  for (char c : w) {
    if (vowel(c)) {
      if (!in_group) ++groups;
      in_group = true;
    } else {
      in_group = false;
    }
  }
  const std::size_t len = w.size();
  if (groups > 1 && len >= 2 && w[len - 1] == 'e' && !vowel(w[len - 2])) --groups;
  return std::max(groups, 1);
}

FkResult fk_grade(std::size_t words, std::size_t sentences, std::size_t syllables) {
  if (words == 0) return {0.0, true};
  const double w = static_cast<double>(words);
  const double s = static_cast<double>(std::max<std::size_t>(sentences, 1));
  return {0.39 * w / s + 11.8 * static_cast<double>(syllables) / w - 15.59, false};
}

FkResult fk_grade(const std::vector<std::string>& tokens, std::size_t sentence_count) {
  std::size_t syl = 0;
  for (const auto& t : tokens) syl += static_cast<std::size_t>(count_syllables(t));
  return fk_grade(tokens.size(), sentence_count, syl);
}

// ---- lexicons -------------------------------------------------------------

Lexicon::Lexicon(std::string name, const std::vector<std::string>& entries)
    : name_(std::move(name)) {
  for (std::string e : entries) {
    for (char& c : e) c = lower(c);
    const auto star = e.find('*');
    if (star != std::string::npos && star + 1 != e.size())
      fail(ErrorKind::data, "lexicon '" + name_ + "': wildcard must be final in '" + e + "'");
    if (star != std::string::npos) {
      e.pop_back();
      if (e.empty()) fail(ErrorKind::data, "lexicon '" + name_ + "': bare '*' entry");
      if (std::find(prefixes_.begin(), prefixes_.end(), e) == prefixes_.end())
        prefixes_.push_back(e);
    } else if (!e.empty()) {
      exact_.insert(e);
    }
  }
  std::sort(prefixes_.begin(), prefixes_.end());
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read lexicon " + path.string());
  std::string line;
  std::string name;
  std::vector<std::string> entries;
  bool first = true;
  while (std::getline(in, line)) {
    while (!line.empty() && is_space(line.back())) line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && is_space(line[b])) ++b;
    line.erase(0, b);
    if (first) {
      first = false;
      const std::string tag = "#category ";
      if (line.rfind(tag, 0) != 0)
        fail(ErrorKind::data, path.string() + ": first line must be '#category <name>'");
      name = line.substr(tag.size());
      if (name.empty()) fail(ErrorKind::data, path.string() + ": empty category name");
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    entries.push_back(line);
  }
  if (first) fail(ErrorKind::data, path.string() + ": empty lexicon file");
  return Lexicon(name, entries);
}

bool Lexicon::matches(std::string_view token) const {
  if (exact_.count(std::string(token))) return true;
  for (const auto& p : prefixes_)
    if (token.size() >= p.size() && token.compare(0, p.size(), p) == 0) return true;
  return false;
}

std::vector<std::string> Lexicon::entries() const {
  std::vector<std::string> out(exact_.begin(), exact_.end());
  for (const auto& p : prefixes_) out.push_back(p + "*");
  std::sort(out.begin(), out.end());
  return out;
}

double lexicon_fraction(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  std::size_t hits = 0;
  for (const auto& t : tokens)
    if (lexicon.matches(t)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(1, tokens.size()));
}

const std::array<const char*, kNoteFeatureCount>& feature_names() {
  static const std::array<const char*, kNoteFeatureCount> names = {
      "note_length",     "log_perplexity",   "frac_stopwords", "frac_medical",
      "frac_pronoun",    "frac_fps",         "frac_fpp",       "frac_sp",
      "frac_tps",        "frac_tpp",         "frac_impersonal", "frac_affect",
      "frac_posemo",     "frac_negemo",      "frac_anxiety",   "frac_anger",
      "frac_sadness",    "frac_cog",         "frac_insight",   "frac_causation",
      "frac_discrepancy", "frac_tentative",  "frac_certainty", "frac_inhibition",
      "frac_inclusive",  "frac_exclusive",   "fk_grade"};
  return names;
}

const std::vector<std::string>& required_categories() {
  static const std::vector<std::string> cats = [] {
    std::vector<std::string> v;
    for (const char* n : feature_names()) {
      const std::string s(n);
      if (s.rfind("frac_", 0) == 0) v.push_back(s.substr(5));
    }
    return v;
  }();
  return cats;
}

void LexiconSet::add(Lexicon lexicon) {
  const std::string name = lexicon.name();
  if (by_name_.count(name)) fail(ErrorKind::data, "duplicate lexicon category '" + name + "'");
  by_name_.emplace(name, std::move(lexicon));
}

LexiconSet LexiconSet::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    fail(ErrorKind::io, "lexicon directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  LexiconSet set;
  for (const auto& f : files) set.add(Lexicon::load(f));
  return set;
}

const Lexicon& LexiconSet::get(const std::string& category) const {
  const auto it = by_name_.find(category);
  if (it == by_name_.end()) fail(ErrorKind::data, "missing lexicon category '" + category + "'");
  return it->second;
}

void LexiconSet::require_all() const {
  for (const auto& c : required_categories()) (void)get(c);
}

// ---- perplexity import ----------------------------------------------------

ExternalPerplexity::ExternalPerplexity(std::map<std::string, double> scores)
    : scores_(std::move(scores)) {}

ExternalPerplexity ExternalPerplexity::load(const std::filesystem::path& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "note_id" ||
      rows[0][1] != "log2_perplexity")
    fail(ErrorKind::data, path.string() + ": expected header note_id,log2_perplexity");
  std::map<std::string, double> scores;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 2) fail(ErrorKind::data, path.string() + ": short row " + std::to_string(r + 1));
    double v = 0.0;
    const auto& f = rows[r][1];
    const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (res.ec != std::errc() || !std::isfinite(v))
      fail(ErrorKind::data, path.string() + ": non-finite perplexity for " + rows[r][0]);
    if (!scores.emplace(rows[r][0], v).second)
      fail(ErrorKind::data, path.string() + ": duplicate note_id " + rows[r][0]);
  }
  return ExternalPerplexity(std::move(scores));
}

double ExternalPerplexity::log2_perplexity(const std::string& note_id, std::string_view) const {
  const auto it = scores_.find(note_id);
  if (it == scores_.end())
    fail(ErrorKind::data, "no external perplexity for note '" + note_id + "'");
  return it->second;
}

// ---- features ---------------------------------------------------------------

FeatureVector extract_features(const std::string& note_id, std::string_view text,
                               const std::vector<std::string>& complaints,
                               const FeatureContext& ctx) {
  if (!ctx.lexicons || !ctx.perplexity)
    fail(ErrorKind::invalid_argument, "feature context needs lexicons and a perplexity provider");
  const Tokenized tk = tokenize(text, ctx.tokenizer);
  if (tk.tokens.empty()) fail(ErrorKind::data, "note '" + note_id + "' has no word tokens");
  FeatureVector fv;
  fv.note_id = note_id;
  fv.values.reserve(kNoteFeatureCount + ctx.complaint_vocabulary.size());
  fv.values.push_back(static_cast<double>(tk.tokens.size()));
  fv.values.push_back(ctx.perplexity->log2_perplexity(note_id, text));
  for (const auto& cat : required_categories())
    fv.values.push_back(lexicon_fraction(tk.tokens, ctx.lexicons->get(cat)));
  fv.values.push_back(fk_grade(tk.tokens, tk.sentence_count).grade);
  for (const auto& cc : ctx.complaint_vocabulary)
    fv.values.push_back(std::find(complaints.begin(), complaints.end(), cc) != complaints.end() ? 1.0 : 0.0);
  return fv;
}

std::vector<std::string> full_feature_names(const std::vector<std::string>& vocab) {
  std::vector<std::string> names(feature_names().begin(), feature_names().end());
  for (const auto& cc : vocab) names.push_back("cc_" + cc);
  return names;
}

// ---- standardizer -----------------------------------------------------------

Standardizer::Standardizer(std::vector<double> means, std::vector<double> sds, std::size_t count)
    : means_(std::move(means)), sds_(std::move(sds)), count_(count) {
  if (means_.size() != count_ || sds_.size() != count_)
    fail(ErrorKind::invalid_argument, "standardizer statistics size mismatch");
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows, std::size_t count) {
  if (rows.size() < 2) fail(ErrorKind::invalid_argument, "standardizer needs at least 2 rows");
  std::vector<double> mean(count, 0.0), sd(count, 0.0);
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    if (r.size() < count) fail(ErrorKind::invalid_argument, "row shorter than standardized width");
    for (std::size_t j = 0; j < count; ++j) mean[j] += r[j];
  }
  for (auto& m : mean) m /= n;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < count; ++j) sd[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  for (std::size_t j = 0; j < count; ++j) {
    sd[j] = std::sqrt(sd[j] / (n - 1.0));
    if (!(sd[j] > 1e-12 * std::max(1.0, std::fabs(mean[j])))) sd[j] = 0.0;
  }
  return Standardizer(std::move(mean), std::move(sd), count);
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  if (row.size() < count_) fail(ErrorKind::invalid_argument, "row shorter than standardized width");
  std::vector<double> out = row;
  for (std::size_t j = 0; j < count_; ++j)
    out[j] = sds_[j] == 0.0 ? 0.0 : (row[j] - means_[j]) / sds_[j];
  return out;
}

std::vector<double> Standardizer::invert(const std::vector<double>& row) const {
  if (row.size() < count_) fail(ErrorKind::invalid_argument, "row shorter than standardized width");
  std::vector<double> out = row;
  for (std::size_t j = 0; j < count_; ++j) out[j] = means_[j] + row[j] * sds_[j];
  return out;
}

std::string features_to_csv(const std::vector<FeatureVector>& vectors,
                            const std::vector<std::string>& names) {
  std::vector<std::string> header{"note_id"};
  header.insert(header.end(), names.begin(), names.end());
  CsvWriter w(header);
  for (const auto& v : vectors) {
    if (v.values.size() != names.size())
      fail(ErrorKind::invalid_argument, "feature vector width does not match names");
    std::vector<std::string> row{v.note_id};
    for (double x : v.values) row.push_back(format_double(x));
    w.add_row(std::move(row));
  }
  return w.str();
}

std::vector<FeatureVector> features_from_csv(std::string_view text, std::vector<std::string>* names) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "note_id")
    fail(ErrorKind::data, "features CSV must start with a note_id column");
  if (names) names->assign(rows[0].begin() + 1, rows[0].end());
  std::vector<FeatureVector> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) fail(ErrorKind::data, "ragged features CSV");
    FeatureVector fv;
    fv.note_id = rows[r][0];
    for (std::size_t c = 1; c < rows[r].size(); ++c) {
      double v = 0.0;
      const auto& f = rows[r][c];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc()) fail(ErrorKind::data, "bad number in features CSV: " + f);
      fv.values.push_back(v);
    }
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace fatlens::textfeat
